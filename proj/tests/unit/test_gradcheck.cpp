#include <gtest/gtest.h>

#include "ccsnet/verify/gradcheck_suite.hpp"

using namespace ccsnet;

namespace {

bool through_softmax(const std::string& name) {
  return name == "softmax" || name == "softmax_causal" || name.starts_with("attention");
}

}  // namespace

TEST(Gradcheck, EveryOp) {
  const auto cases = verify::op_gradchecks();
  EXPECT_GE(cases.size(), 35u);
  for (const auto& c : cases) {
    const double tol = through_softmax(c.name) ? 1e-4 : 1e-6;
    EXPECT_LT(c.result.max_relative_error, tol)
        << c.name << ": worst " << c.result.worst_input << "[" << c.result.worst_index
        << "] analytic " << c.result.worst_analytic << " numeric " << c.result.worst_numeric;
    EXPECT_GT(c.result.checked, 0u) << c.name;
  }
}

TEST(Gradcheck, EveryModel) {
  const auto cases = verify::model_gradchecks();
  ASSERT_EQ(cases.size(), 5u);
  for (const auto& c : cases)
    EXPECT_LT(c.result.max_relative_error, 1e-4)
        << c.name << ": worst " << c.result.worst_input << "[" << c.result.worst_index
        << "] analytic " << c.result.worst_analytic << " numeric " << c.result.worst_numeric;
}

TEST(Gradcheck, DetectsAWrongGradient) {
  // x * stop(x) has true derivative 2x but the graph only sees one path.
  nn::Tensor<double> x({3}, std::vector<double>{0.5, -1.0, 2.0});
  x.set_requires_grad(true);
  const auto r = nn::gradcheck([&] { return nn::sum(nn::mul(x, x.detach())); }, {{"x", x}});
  EXPECT_GT(r.max_relative_error, 0.1);
}
