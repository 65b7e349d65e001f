#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "ccsnet/error.hpp"
#include "ccsnet/io/png.hpp"

namespace ccsnet::io {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

/// Polynomial fit of the viridis colormap, t in [0, 1].
inline Rgb viridis(double t) {
  static constexpr double c[7][3] = {{0.2777273272234177, 0.005407344544966578, 0.3340998053353061},
                                     {0.1050930431085774, 1.404613529898575, 1.384590162594685},
                                     {-0.3308618287255563, 0.214847559468213, 0.09509516302823659},
                                     {-4.634230498983486, -5.799100973351585, -19.33244095627987},
                                     {6.228269936347081, 14.17993336680509, 56.69055260068105},
                                     {4.776384997670288, -13.74514537774601, -65.35303263337234},
                                     {-5.435455855934631, 4.645852612178535, 26.3124352495832}};
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  double v[3];
  for (int k = 0; k < 3; ++k) {
    double acc = c[6][k];
    for (int i = 5; i >= 0; --i) acc = acc * t + c[i][k];
    v[k] = std::clamp(acc, 0.0, 1.0);
  }
  auto q = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * x)); };
  return {q(v[0]), q(v[1]), q(v[2])};
}

/// Drawing surface over an RGB raster.
class Canvas {
 public:
  Canvas(int w, int h, Rgb bg = {255, 255, 255}) : img_(w, h, 3) { fill(0, 0, w, h, bg); }

  const Raster& raster() const { return img_; }
  int width() const { return img_.width; }
  int height() const { return img_.height; }

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= img_.width || y >= img_.height) return;
    auto* p = img_.at(y, x);
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  void fill(int x0, int y0, int w, int h, Rgb c) {
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) set(x, y, c);
  }
  void line(int x0, int y0, int x1, int y1, Rgb c, int dash = 0) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy, k = 0;
    for (;;) {
      if (dash == 0 || (k / dash) % 2 == 0) set(x0, y0, c);
      ++k;
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
  void frame(int x0, int y0, int w, int h, Rgb c) {
    line(x0, y0, x0 + w - 1, y0, c);
    line(x0, y0 + h - 1, x0 + w - 1, y0 + h - 1, c);
    line(x0, y0, x0, y0 + h - 1, c);
    line(x0 + w - 1, y0, x0 + w - 1, y0 + h - 1, c);
  }

  /// 3x5 bitmap glyphs scaled by `scale`; returns the advance width.
  int text(int x, int y, const std::string& s, Rgb c, int scale = 2) {
    const int x_start = x;
    for (char ch : s) {
      const auto& g = glyph(ch);
      for (int r = 0; r < 5; ++r)
        for (int col = 0; col < 3; ++col)
          if (g[r] & (4 >> col)) fill(x + col * scale, y + r * scale, scale, scale, c);
      x += 4 * scale;
    }
    return x - x_start;
  }
  static int text_width(const std::string& s, int scale = 2) { return static_cast<int>(s.size()) * 4 * scale; }

 private:
  static const std::array<std::uint8_t, 5>& glyph(char ch) {
    static const std::array<std::uint8_t, 5> blank{0, 0, 0, 0, 0};
    static const std::array<std::array<std::uint8_t, 5>, 10> digits{{{7, 5, 5, 5, 7},
                                                                      {2, 6, 2, 2, 7},
                                                                      {7, 1, 7, 4, 7},
                                                                      {7, 1, 7, 1, 7},
                                                                      {5, 5, 7, 1, 1},
                                                                      {7, 4, 7, 1, 7},
                                                                      {7, 4, 7, 5, 7},
                                                                      {7, 1, 1, 1, 1},
                                                                      {7, 5, 7, 5, 7},
                                                                      {7, 5, 7, 1, 7}}};
    static const std::array<std::uint8_t, 5> minus{0, 0, 7, 0, 0}, plus{0, 2, 7, 2, 0}, dot{0, 0, 0, 0, 2},
        e{7, 4, 7, 4, 7}, m{0, 0, 7, 7, 5}, a{0, 6, 3, 5, 7}, x{5, 5, 2, 5, 5}, i{2, 0, 2, 2, 2}, n{0, 0, 6, 5, 5},
        colon{0, 2, 0, 2, 0}, y{5, 5, 7, 1, 7}, r{0, 0, 7, 4, 4}, s{0, 7, 6, 1, 7};
    if (ch >= '0' && ch <= '9') return digits[static_cast<std::size_t>(ch - '0')];
    switch (ch) {
      case '-': return minus;
      case '+': return plus;
      case '.': return dot;
      case 'e': case 'E': return e;
      case 'm': return m;
      case 'a': return a;
      case 'x': return x;
      case 'i': return i;
      case 'n': return n;
      case ':': return colon;
      case 'y': return y;
      case 'r': return r;
      case 's': return s;
      default: return blank;
    }
  }

  Raster img_;
};

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

/// Row-major field (rows x cols) with row 0 at the top.
struct Field {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

struct ColorScale {
  double lo = 0.0;
  double hi = 1.0;
  double normalized(double v) const { return hi > lo ? (v - lo) / (hi - lo) : 0.5; }
};

inline ColorScale shared_scale(const std::vector<const Field*>& fields) {
  ColorScale s{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto* f : fields)
    for (double v : f->values) {
      s.lo = std::min(s.lo, v);
      s.hi = std::max(s.hi, v);
    }
  if (!(s.hi >= s.lo)) s = {0.0, 1.0};
  return s;
}

/// Nearest-neighbour colour map of `f` into the box, with dark iso-lines where
/// the level index (of `levels` bands) changes between neighbouring pixels.
inline void draw_field(Canvas& cv, int x0, int y0, int w, int h, const Field& f, const ColorScale& scale,
                       int levels = 10) {
  std::vector<int> band(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int r = std::min(f.rows - 1, y * f.rows / h), c = std::min(f.cols - 1, x * f.cols / w);
      const double t = scale.normalized(f.at(r, c));
      cv.set(x0 + x, y0 + y, viridis(t));
      band[static_cast<std::size_t>(y) * w + x] = std::min(levels - 1, static_cast<int>(std::floor(t * levels)));
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int b = band[static_cast<std::size_t>(y) * w + x];
      if ((x + 1 < w && band[static_cast<std::size_t>(y) * w + x + 1] != b) ||
          (y + 1 < h && band[static_cast<std::size_t>(y + 1) * w + x] != b))
        cv.set(x0 + x, y0 + y, {20, 20, 20});
    }
  cv.frame(x0, y0, w, h, {0, 0, 0});
}

/// Side-by-side figure: geometry, ground truth, prediction, shared colour
/// scale in meters with a labelled colour bar. Exactly width x height pixels.
inline Raster contour_figure(const Field& geometry_classes, const Field& truth, const Field& prediction, int width,
                             int height, ColorScale* used = nullptr) {
  if (width < 120 || height < 60) throw ArgumentError("figure size must be at least 120 x 60 pixels");
  Canvas cv(width, height);
  const int margin = 6, bar_h = 10, text_h = 10;
  const int panel_w = (width - 4 * margin) / 3;
  const int panel_h = height - 3 * margin - bar_h - text_h;
  const auto scale = shared_scale({&truth, &prediction});
  if (used) *used = scale;
  for (int y = 0; y < panel_h; ++y)
    for (int x = 0; x < panel_w; ++x) {
      const int r = std::min(geometry_classes.rows - 1, y * geometry_classes.rows / panel_h);
      const int c = std::min(geometry_classes.cols - 1, x * geometry_classes.cols / panel_w);
      cv.set(margin + x, margin + y, geometry_classes.at(r, c) == 1 ? Rgb{90, 90, 90} : Rgb{215, 200, 170});
    }
  cv.frame(margin, margin, panel_w, panel_h, {0, 0, 0});
  draw_field(cv, 2 * margin + panel_w, margin, panel_w, panel_h, truth, scale);
  draw_field(cv, 3 * margin + 2 * panel_w, margin, panel_w, panel_h, prediction, scale);

  const int bar_y = 2 * margin + panel_h, bar_x = 2 * margin + panel_w, bar_w = 2 * panel_w + margin;
  for (int x = 0; x < bar_w; ++x)
    cv.fill(bar_x + x, bar_y, 1, bar_h, viridis(bar_w > 1 ? static_cast<double>(x) / (bar_w - 1) : 0.0));
  cv.frame(bar_x, bar_y, bar_w, bar_h, {0, 0, 0});
  const std::string lo = "min " + format_value(scale.lo) + " m", hi = "max " + format_value(scale.hi) + " m";
  const int ty = bar_y + bar_h + 2;
  cv.text(bar_x, ty, lo, {0, 0, 0}, 1);
  cv.text(bar_x + bar_w - Canvas::text_width(hi, 1), ty, hi, {0, 0, 0}, 1);
  return cv.raster();
}

struct Curve {
  std::vector<double> y;
  Rgb color;
  bool dashed = false;
};

/// Line plot of curves sharing x = 0 .. n-1, y range padded by 5%.
inline Raster curve_figure(const std::vector<Curve>& curves, int width, int height) {
  if (width < 120 || height < 60) throw ArgumentError("figure size must be at least 120 x 60 pixels");
  Canvas cv(width, height);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n = 0;
  for (const auto& c : curves) {
    n = std::max(n, c.y.size());
    for (double v : c.y) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) {
    lo = (std::isfinite(lo) ? lo : 0.0) - 1.0;
    hi = lo + 2.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const int left = 8, top = 16, right = 8, bottom = 8;
  const int pw = width - left - right, ph = height - top - bottom;
  cv.frame(left, top, pw, ph, {0, 0, 0});
  cv.text(left, 3, "max " + format_value(hi - pad) + " m", {0, 0, 0}, 1);
  const std::string lo_s = "min " + format_value(lo + pad) + " m";
  cv.text(width - right - Canvas::text_width(lo_s, 1), 3, lo_s, {0, 0, 0}, 1);
  auto px = [&](std::size_t i) { return left + static_cast<int>(std::lround(n > 1 ? double(i) * (pw - 1) / double(n - 1) : 0.0)); };
  auto py = [&](double v) { return top + static_cast<int>(std::lround((hi - v) / (hi - lo) * (ph - 1))); };
  for (const auto& c : curves)
    for (std::size_t i = 1; i < c.y.size(); ++i)
      cv.line(px(i - 1), py(c.y[i - 1]), px(i), py(c.y[i]), c.color, c.dashed ? 3 : 0);
  return cv.raster();
}

/// Writes rows of already-formatted cells, header first.
inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PathError("cannot write " + path.string());
  auto put = [&](const std::vector<std::string>& r) {
    for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << r[k];
    os << "\n";
  };
  put(header);
  for (const auto& r : rows) put(r);
}

/// Decimal text that parses back to the identical value.
inline std::string exact(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}
inline std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace ccsnet::io
