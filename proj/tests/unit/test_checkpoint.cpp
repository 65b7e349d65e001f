#include <gtest/gtest.h>

#include <filesystem>

#include "ccsnet/io/binary.hpp"
#include "ccsnet/models/factory.hpp"

using namespace ccsnet;
using namespace ccsnet::models;
namespace fs = std::filesystem;
using TF = nn::Tensor<float>;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "ccsnet_test_checkpoint";
  fs::create_directories(dir);
  const auto p = dir / (name + ".ckpt");
  fs::remove(p);
  fs::remove(config_path_for(p));
  return p;
}

ModelConfig unet_config() {
  ModelConfig c;
  c.architecture = Architecture::ResNetUNet;
  c.input_h = 16;
  c.input_w = 32;
  c.output_h = 5;
  c.output_w = 10;
  c.widths = {4, 8, 8};
  c.seed = 21;
  return c;
}

ModelConfig sequence_config(Architecture a) {
  ModelConfig c;
  c.architecture = a;
  c.encoder = std::make_shared<ModelConfig>(unet_config());
  c.series_dim = 6;
  c.lstm_layers = 2;
  c.d_model = 8;
  c.heads = 2;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.ff_width = 16;
  return c;
}

TF images(std::size_t b) {
  Rng rng(3);
  return TF::uniform({b, 3, 16, 32}, rng, 0, 1);
}

// Trains a few steps so the batch-norm buffers move away from their defaults.
void perturb(nn::Module<float>& m) {
  Rng rng(9);
  for (const auto& nt : m.named_tensors()) {
    auto t = nt.tensor;
    for (auto& v : t.values()) v += static_cast<float>(0.01 * rng.normal());
  }
}

}  // namespace

TEST(Checkpoint, RoundTripForwardBitExact) {
  auto m = build_model<float>(unet_config());
  perturb(m.module());
  const auto p = scratch("roundtrip");
  save_model<float>(p, m.module(), m.config);
  auto back = load_model<float>(p);
  const auto x = images(2);
  const nn::Context eval{false, nullptr};
  EXPECT_EQ(m.static_model->forward(x, eval).values(), back.static_model->forward(x, eval).values());
  auto a = m.module().named_tensors(), b = back.module().named_tensors();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].tensor.values(), b[i].tensor.values()) << a[i].name;
  }
}

TEST(Checkpoint, SequenceModelRoundTrip) {
  auto m = build_model<float>(sequence_config(Architecture::Transformer));
  perturb(m.module());
  const auto p = scratch("transformer");
  save_model<float>(p, m.module(), m.config);
  auto back = load_model<float>(p);
  ASSERT_TRUE(back.is_transient());
  Rng rng(4);
  const auto w = TF::uniform({2, 5, 6}, rng, 0, 1);
  const nn::Context eval{false, nullptr};
  EXPECT_EQ(m.transient_model->predict_next_from_images(images(2), w, eval).values(),
            back.transient_model->predict_next_from_images(images(2), w, eval).values());
}

TEST(Checkpoint, SavingTwiceIsByteIdentical) {
  auto m = build_model<float>(unet_config());
  const auto p1 = scratch("twice1"), p2 = scratch("twice2");
  save_model<float>(p1, m.module(), m.config);
  save_model<float>(p2, m.module(), m.config);
  EXPECT_EQ(io::read_bytes(p1), io::read_bytes(p2));
}

TEST(Checkpoint, TruncatedFile) {
  auto m = build_model<float>(unet_config());
  const auto p = scratch("truncated");
  save_model<float>(p, m.module(), m.config);
  fs::resize_file(p, fs::file_size(p) / 2);
  EXPECT_THROW(load_model<float>(p), FormatError);
  fs::resize_file(p, 6);
  EXPECT_THROW(load_model<float>(p), FormatError);
}

TEST(Checkpoint, CrcMismatch) {
  auto m = build_model<float>(unet_config());
  const auto p = scratch("crc");
  save_model<float>(p, m.module(), m.config);
  auto bytes = io::read_bytes(p);
  bytes[bytes.size() / 2] ^= 0x01;
  io::write_bytes(p, bytes.data(), bytes.size());
  try {
    load_model<float>(p);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, VersionMismatch) {
  auto m = build_model<float>(unet_config());
  const auto p = scratch("version");
  save_model<float>(p, m.module(), m.config);
  auto bytes = io::read_bytes(p);
  bytes[8] = 7;  // version field follows the 8-byte magic
  const std::uint32_t crc = io::crc32_bytes(bytes.data(), bytes.size() - 4);
  for (int k = 0; k < 4; ++k) bytes[bytes.size() - 4 + k] = static_cast<unsigned char>(crc >> (8 * k));
  io::write_bytes(p, bytes.data(), bytes.size());
  try {
    load_model<float>(p);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, CrossModelLoadIsShapeTableMismatch) {
  auto lstm = build_model<float>(sequence_config(Architecture::Lstm));
  const auto p = scratch("cross");
  nn::save_checkpoint<float>(p, lstm.module().named_tensors());
  auto tr = build_model<float>(sequence_config(Architecture::Transformer));
  try {
    nn::load_checkpoint<float>(p, tr.module().named_tensors());
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("missing"), std::string::npos) << m;
    EXPECT_NE(m.find("unexpected cells"), std::string::npos) << m;
  }
}

TEST(Checkpoint, MissingFiles) {
  EXPECT_THROW(load_model<float>(scratch("absent")), PathError);
  EXPECT_THROW(load_encoder<float>(scratch("absent")), DependencyError);
  auto lstm = build_model<float>(sequence_config(Architecture::Lstm));
  const auto p = scratch("not_encoder");
  save_model<float>(p, lstm.module(), lstm.config);
  EXPECT_THROW(load_encoder<float>(p), DependencyError);
}
