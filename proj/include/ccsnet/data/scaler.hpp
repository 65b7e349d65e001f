#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "ccsnet/error.hpp"
#include "json.hpp"

namespace ccsnet::data {

/// x -> (x - x_min) / (x_max - x_min). Values outside the fitted range map
/// outside [0, 1] and are never clipped.
struct MinMaxScaler {
  double x_min = 0.0;
  double x_max = 1.0;

  template <class V>
  static MinMaxScaler fit(std::span<const V> values) {
    if (values.empty()) throw ArgumentError("cannot fit a scaler to an empty array");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    MinMaxScaler s{static_cast<double>(*lo), static_cast<double>(*hi)};
    s.check();
    return s;
  }

  void check() const {
    if (!(x_max > x_min))
      throw DegenerateDataError("constant data: min-max scaling needs x_max > x_min (got " + std::to_string(x_min) +
                                ", " + std::to_string(x_max) + ")");
  }

  double range() const { return x_max - x_min; }
  double transform(double x) const { return (x - x_min) / range(); }
  double inverse(double s) const { return x_min + s * range(); }

  template <class V>
  std::vector<V> transform(std::span<const V> xs) const {
    std::vector<V> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = static_cast<V>(transform(static_cast<double>(xs[i])));
    return out;
  }
  template <class V>
  std::vector<V> inverse(std::span<const V> xs) const {
    std::vector<V> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = static_cast<V>(inverse(static_cast<double>(xs[i])));
    return out;
  }
};

template <class V>
std::pair<std::vector<V>, MinMaxScaler> minmax_fit_transform(std::span<const V> values) {
  const auto s = MinMaxScaler::fit(values);
  return {s.transform(values), s};
}

inline nlohmann::json to_json(const MinMaxScaler& s) { return {{"x_min", s.x_min}, {"x_max", s.x_max}, {"units", "m"}}; }

inline MinMaxScaler scaler_from_json(const nlohmann::json& j) {
  MinMaxScaler s{j.at("x_min").get<double>(), j.at("x_max").get<double>()};
  s.check();
  return s;
}

}  // namespace ccsnet::data
