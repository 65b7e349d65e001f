#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ccsnet/error.hpp"

namespace ccsnet::data {

/// Number of (window -> next row) examples in a series of `rows` rows.
inline std::size_t window_count(std::size_t rows, std::size_t window = 5, std::size_t stride = 1) {
  if (window == 0) throw ArgumentError("window length must be positive");
  if (stride == 0) throw ArgumentError("window stride must be positive");
  if (rows <= window)
    throw SeriesTooShortError("series of " + std::to_string(rows) + " rows is too short for a window of " +
                              std::to_string(window) + " plus a target");
  return (rows - window - 1) / stride + 1;
}

/// Start rows of every window: 0, stride, 2 stride, ...
inline std::vector<std::size_t> window_starts(std::size_t rows, std::size_t window = 5, std::size_t stride = 1) {
  const std::size_t n = window_count(rows, window, stride);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i * stride;
  return out;
}

template <class V>
struct Window {
  std::size_t start = 0;
  std::vector<V> input;   // window x dim, rows start .. start + window - 1
  std::vector<V> target;  // dim, row start + window
};

template <class V>
struct ShiftedPair {
  std::size_t start = 0;
  std::vector<V> input;   // rows start .. start + window - 1
  std::vector<V> target;  // rows start + 1 .. start + window
};

/// `series` is rows x dim, row-major.
template <class V>
std::vector<Window<V>> make_windows(const std::vector<V>& series, std::size_t dim, std::size_t window = 5,
                                    std::size_t stride = 1) {
  if (dim == 0 || series.size() % dim != 0) throw DimensionError("series length is not a multiple of the row width");
  std::vector<Window<V>> out;
  for (std::size_t s : window_starts(series.size() / dim, window, stride)) {
    Window<V> w;
    w.start = s;
    w.input.assign(series.begin() + static_cast<std::ptrdiff_t>(s * dim),
                   series.begin() + static_cast<std::ptrdiff_t>((s + window) * dim));
    w.target.assign(series.begin() + static_cast<std::ptrdiff_t>((s + window) * dim),
                    series.begin() + static_cast<std::ptrdiff_t>((s + window + 1) * dim));
    out.push_back(std::move(w));
  }
  return out;
}

template <class V>
std::vector<ShiftedPair<V>> make_shifted_pairs(const std::vector<V>& series, std::size_t dim, std::size_t window = 5,
                                               std::size_t stride = 1) {
  if (dim == 0 || series.size() % dim != 0) throw DimensionError("series length is not a multiple of the row width");
  std::vector<ShiftedPair<V>> out;
  for (std::size_t s : window_starts(series.size() / dim, window, stride)) {
    ShiftedPair<V> p;
    p.start = s;
    p.input.assign(series.begin() + static_cast<std::ptrdiff_t>(s * dim),
                   series.begin() + static_cast<std::ptrdiff_t>((s + window) * dim));
    p.target.assign(series.begin() + static_cast<std::ptrdiff_t>((s + 1) * dim),
                    series.begin() + static_cast<std::ptrdiff_t>((s + window + 1) * dim));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace ccsnet::data
