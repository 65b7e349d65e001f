#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ccsnet/nn/tensor.hpp"

namespace ccsnet::nn {

struct GradcheckOptions {
  double step = 1e-6;
  /// Entries checked per input; 0 checks all of them.
  std::size_t samples_per_input = 0;
  /// Denominator floor so that round-off on near-zero gradients does not
  /// dominate the relative error.
  double floor = 1e-3;
  std::uint64_t seed = 0;
};

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::string worst_input;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of a scalar function of `inputs` with
/// central differences. `f` must be deterministic and rebuild its graph on
/// every call.
inline GradcheckResult gradcheck(const std::function<Tensor<double>()>& f,
                                 std::vector<std::pair<std::string, Tensor<double>>> inputs,
                                 const GradcheckOptions& opt = {}) {
  for (auto& [name, t] : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  const auto loss = f();
  backward(loss);
  GradcheckResult r;
  Rng rng(opt.seed);
  for (auto& [name, t] : inputs) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    std::vector<std::size_t> idx(t.numel());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (opt.samples_per_input && opt.samples_per_input < idx.size()) {
      rng.shuffle(idx);
      idx.resize(opt.samples_per_input);
    }
    for (std::size_t i : idx) {
      const double orig = t[i];
      double fp = 0.0, fm = 0.0;
      {
        NoGradGuard ng;
        t[i] = orig + opt.step;
        fp = f().item();
        t[i] = orig - opt.step;
        fm = f().item();
        t[i] = orig;
      }
      const double numeric = (fp - fm) / (2.0 * opt.step);
      const double err =
          std::abs(numeric - analytic[i]) / std::max({std::abs(numeric), std::abs(analytic[i]), opt.floor});
      ++r.checked;
      if (r.worst_input.empty() || err > r.max_relative_error) {
        r.max_relative_error = err;
        r.worst_input = name;
        r.worst_index = i;
        r.worst_analytic = analytic[i];
        r.worst_numeric = numeric;
      }
    }
  }
  return r;
}

}  // namespace ccsnet::nn
