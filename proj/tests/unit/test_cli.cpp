#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ccsnet/io/binary.hpp"
#include "ccsnet/io/png.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "ccsnet_test_cli";

struct CliRun {
  int code = -1;
  std::string out;
};

// Runs the CLI with stdout and stderr captured together.
CliRun cli(const std::string& args) {
  const auto log = kRoot / "last.log";
  const std::string cmd = std::string(CCSNET_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(log);
  std::stringstream ss;
  ss << is.rdbuf();
  r.out = ss.str();
  return r;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream is(p);
  std::size_t n = 0;
  for (std::string line; std::getline(is, line);) ++n;
  return n;
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

const std::string kGenerate = "generate -n 20 --seed 3 --mesh 12x6 --static --transient --steps 8 --horizon-years 2";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    generated = cli(kGenerate + " -o " + (kRoot / "data").string());
  }
  static fs::path data() { return kRoot / "data"; }
  static inline CliRun generated;
};

}  // namespace

TEST_F(Cli, GenerateReportsCountsAndSplit) {
  ASSERT_EQ(generated.code, 0) << generated.out;
  EXPECT_TRUE(contains(generated.out, "[21/21]")) << generated.out;
  EXPECT_TRUE(contains(generated.out, "wrote 21 samples (19 train, 1 val, 1 test)")) << generated.out;
  for (const char* f : {"manifest.json", "labels_static.bin", "labels_transient.bin", "scaler.json"})
    EXPECT_TRUE(fs::exists(data() / f)) << f;
}

TEST_F(Cli, GenerateRerunIsByteIdentical) {
  ASSERT_EQ(generated.code, 0);
  const auto again = kRoot / "data_again";
  ASSERT_EQ(cli(kGenerate + " -o " + again.string()).code, 0);
  for (const char* f : {"manifest.json", "labels_static.bin", "labels_transient.bin", "scaler.json"})
    EXPECT_EQ(ccsnet::io::read_bytes(data() / f), ccsnet::io::read_bytes(again / f)) << f;
}

TEST_F(Cli, ErrorCategoriesAndExitCodes) {
  auto r = cli("generate --no-such-flag");
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(contains(r.out, "error[argument]")) << r.out;

  r = cli("generate -n 10 -o " + (kRoot / "tiny").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(contains(r.out, "error[dataset]")) << r.out;

  r = cli("generate --mesh 4by2 -o " + (kRoot / "bad_mesh").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(contains(r.out, "error[argument]")) << r.out;

  r = cli("train -d " + (kRoot / "absent").string() + " -o " + (kRoot / "x").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(contains(r.out, "error[path]")) << r.out;

  r = cli("train -m mlp -d " + data().string() + " -o " + (kRoot / "x").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(contains(r.out, "error[config]")) << r.out;

  r = cli("evaluate -c " + (kRoot / "absent.ckpt").string() + " -d " + data().string());
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(contains(r.out, "error[path]")) << r.out;

  std::ofstream(kRoot / "broken.json") << "{ not json";
  r = cli("train --config " + (kRoot / "broken.json").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(contains(r.out, "error[config]")) << r.out;
}

TEST_F(Cli, SequenceTrainingNeedsPretrainedEncoder) {
  ASSERT_EQ(generated.code, 0);
  const auto r = cli("train -m lstm -d " + data().string() + " -o " + (kRoot / "lstm_nopre").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(contains(r.out, "error[dependency]")) << r.out;
}

TEST_F(Cli, TrainEvaluatePredictExport) {
  ASSERT_EQ(generated.code, 0);
  const auto unet = kRoot / "unet";
  auto r = cli("train -m resnet_unet --widths 4,4,8 --epochs 2 --batch 8 --seed 1 -d " + data().string() + " -o " +
               unet.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(contains(r.out, "epoch 2 train_mse")) << r.out;
  EXPECT_EQ(line_count(unet / "history.csv"), 3u);
  EXPECT_TRUE(fs::exists(unet / "model.ckpt"));

  r = cli("evaluate -c " + (unet / "model.ckpt").string() + " -d " + data().string() + " --split test");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(contains(r.out, "(MSE, MAE) = (")) << r.out;

  const auto pred = kRoot / "pred_static";
  r = cli("predict -c " + (unet / "model.ckpt").string() + " -d " + data().string() + " -o " + pred.string() +
          " --width 400 --height 150");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(contains(r.out, "color scale min")) << r.out;
  fs::path png;
  for (const auto& e : fs::directory_iterator(pred))
    if (e.path().filename().string().starts_with("contour_")) png = e.path();
  ASSERT_FALSE(png.empty());
  const auto img = ccsnet::io::read_png(png);
  EXPECT_EQ(img.width, 400);
  EXPECT_EQ(img.height, 150);
  const auto id = png.stem().string().substr(8);
  EXPECT_EQ(line_count(pred / ("prediction_" + id + ".csv")), 26u);

  const auto lstm = kRoot / "lstm";
  r = cli("train -m lstm --epochs 2 --batch 8 -d " + data().string() + " -o " + lstm.string() + " --pretrained " +
          (unet / "model.ckpt").string());
  ASSERT_EQ(r.code, 0) << r.out;

  const auto seq = kRoot / "pred_seq";
  r = cli("predict -c " + (lstm / "model.ckpt").string() + " -d " + data().string() + " -o " + seq.string() +
          " --years 1,2 -s " + id);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(line_count(seq / ("surface_" + id + ".csv")), 81u);

  r = cli("predict -c " + (lstm / "model.ckpt").string() + " -d " + data().string() + " -o " + seq.string() +
          " --years 3");
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(contains(r.out, "error[argument]")) << r.out;

  const auto ex = kRoot / "export";
  r = cli("export -r " + unet.string() + " -d " + data().string() + " -o " + ex.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(line_count(ex / "loss.csv"), 3u);
  EXPECT_TRUE(fs::exists(ex / "loss.png"));
  EXPECT_TRUE(fs::exists(ex / ("geometry_" + id + ".png")));
}
