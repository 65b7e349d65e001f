#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ccsnet/io/figures.hpp"
#include "ccsnet/rng.hpp"

using namespace ccsnet;
using namespace ccsnet::io;
namespace fs = std::filesystem;

namespace {

// The colormap is a polynomial fit, within 5 levels of the published table.
void expect_rgb_near(Rgb c, int r, int g, int b, int tol = 5) {
  EXPECT_NEAR(c.r, r, tol);
  EXPECT_NEAR(c.g, g, tol);
  EXPECT_NEAR(c.b, b, tol);
}

Field ramp(int rows, int cols, double scale) {
  Field f{rows, cols, {}};
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) f.values.push_back(scale * (r * cols + c));
  return f;
}

}  // namespace

TEST(Viridis, ReferenceColours) {
  // Published viridis table entries at 0, 0.5 and 1.
  expect_rgb_near(viridis(0.0), 68, 1, 84);
  expect_rgb_near(viridis(0.5), 33, 145, 140);
  expect_rgb_near(viridis(1.0), 253, 231, 37);
  EXPECT_EQ(viridis(-3.0).g, viridis(0.0).g);
  EXPECT_EQ(viridis(7.0).r, viridis(1.0).r);
}

TEST(Viridis, GreenChannelIncreases) {
  int prev = -1;
  for (int k = 0; k <= 100; ++k) {
    const int g = viridis(k / 100.0).g;
    EXPECT_GE(g, prev);
    prev = g;
  }
}

TEST(ColorScale, SharedAcrossFields) {
  const auto a = ramp(2, 3, 1.0), b = ramp(2, 3, -2.0);
  const auto s = shared_scale({&a, &b});
  EXPECT_EQ(s.lo, -10.0);
  EXPECT_EQ(s.hi, 5.0);
  EXPECT_EQ(s.normalized(-10.0), 0.0);
  EXPECT_EQ(s.normalized(5.0), 1.0);
  EXPECT_EQ((ColorScale{1.0, 1.0}).normalized(1.0), 0.5);
}

TEST(Figures, ContourFigureHasRequestedSize) {
  Field geom{16, 32, std::vector<double>(512, 0.0)};
  for (int c = 0; c < 32; ++c) geom.values[8 * 32 + c] = 1;
  const auto truth = ramp(5, 10, 1e-4), pred = ramp(5, 10, 1.1e-4);
  ColorScale used;
  const auto img = contour_figure(geom, truth, pred, 640, 240, &used);
  EXPECT_EQ(img.width, 640);
  EXPECT_EQ(img.height, 240);
  EXPECT_EQ(img.pixels.size(), 640u * 240u * 3u);
  EXPECT_EQ(used.lo, 0.0);
  EXPECT_DOUBLE_EQ(used.hi, 49 * 1.1e-4);
  EXPECT_THROW(contour_figure(geom, truth, pred, 100, 240), ArgumentError);
}

TEST(Figures, CurveFigureHasRequestedSizeAndDrawsLines) {
  std::vector<Curve> curves{{{0.0, 1.0, 4.0, 9.0}, {255, 0, 0}, false}, {{1.0, 1.0, 1.0, 1.0}, {0, 0, 255}, true}};
  const auto img = curve_figure(curves, 300, 200);
  EXPECT_EQ(img.width, 300);
  EXPECT_EQ(img.height, 200);
  std::size_t red = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (img.at(y, x)[0] == 255 && img.at(y, x)[1] == 0) ++red;
  EXPECT_GT(red, 100u);
  EXPECT_NO_THROW(curve_figure({{{2.0, 2.0}, {0, 0, 0}, false}}, 120, 60));
  EXPECT_THROW(curve_figure(curves, 300, 40), ArgumentError);
}

TEST(Png, RoundTrip) {
  Raster r(7, 5, 3);
  Rng rng(2);
  for (auto& p : r.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  const auto path = fs::temp_directory_path() / "ccsnet_test_figures_roundtrip.png";
  write_png(path, r);
  const auto back = read_png(path);
  EXPECT_EQ(back.width, 7);
  EXPECT_EQ(back.height, 5);
  EXPECT_EQ(back.pixels, r.pixels);
  EXPECT_THROW(read_png(fs::temp_directory_path() / "ccsnet_no_such_file.png"), PathError);
}

TEST(Csv, ExactValuesParseBack) {
  Rng rng(3);
  for (int k = 0; k < 2000; ++k) {
    const double d = rng.normal() * std::pow(10.0, rng.uniform(-12, 6));
    const auto f = static_cast<float>(d);
    EXPECT_EQ(std::strtod(exact(d).c_str(), nullptr), d);
    EXPECT_EQ(std::strtof(exact(f).c_str(), nullptr), f);
  }
}

TEST(Csv, Layout) {
  const auto path = fs::temp_directory_path() / "ccsnet_test_figures.csv";
  write_csv(path, {"year", "x", "u"}, {{"1", "0", exact(1.5f)}, {"2", "5", exact(-0.25)}});
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  EXPECT_EQ(ss.str(), "year,x,u\n1,0,1.5\n2,5,-0.25\n");
}
