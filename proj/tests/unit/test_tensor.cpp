#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>

#include "ccsnet/nn/layers.hpp"

using namespace ccsnet;
using namespace ccsnet::nn;
using TF = Tensor<float>;
using TD = Tensor<double>;

namespace {

double sigm(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Direct cross-correlation with zero padding.
std::vector<double> conv_loops(const TD& x, const TD& w, const TD& b, std::size_t stride, std::size_t pad,
                               std::size_t& oh, std::size_t& ow) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3), f = w.dim(0), k = w.dim(2);
  oh = (h + 2 * pad - k) / stride + 1;
  ow = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> out(n * f * oh * ow);
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t jf = 0; jf < f; ++jf)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t q = 0; q < ow; ++q) {
          double s = b[jf];
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t bb = 0; bb < k; ++bb) {
                const long y = static_cast<long>(r * stride + a) - static_cast<long>(pad);
                const long xx = static_cast<long>(q * stride + bb) - static_cast<long>(pad);
                if (y < 0 || xx < 0 || y >= static_cast<long>(h) || xx >= static_cast<long>(wd)) continue;
                s += w[((jf * c + ic) * k + a) * k + bb] *
                     x[((in * c + ic) * h + static_cast<std::size_t>(y)) * wd + static_cast<std::size_t>(xx)];
              }
          out[((in * f + jf) * oh + r) * ow + q] = s;
        }
  return out;
}

}  // namespace

TEST(Tensor, ShapeAndCount) {
  TF t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_THROW(TF({2, 2}, std::vector<float>(3)), DimensionError);
  EXPECT_THROW(TF({2}).item(), DimensionError);
}

// Reductions must not depend on where the allocator put the buffer.
TEST(Tensor, StorageIsPacketAligned) {
  Rng rng(1);
  for (std::size_t n : {1u, 3u, 17u, 1000u}) {
    const auto a = TF::randn({n}, rng);
    const auto y = linear(a.clone().set_requires_grad(true), TF::randn({2, n}, rng));
    for (const auto* p : {a.values().data(), y.values().data()})
      EXPECT_EQ(reinterpret_cast<std::uintptr_t>(p) % EIGEN_MAX_ALIGN_BYTES, 0u);
  }
}

TEST(Conv2d, IdentityKernel) {
  Rng rng(1);
  auto x = TF::randn({2, 1, 5, 7}, rng);
  TF w({1, 1, 1, 1}, 1.0f);
  const auto y = conv2d<float>(x, w, nullptr);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(y.values(), x.values());
}

TEST(Conv2d, ZeroInput) {
  Rng rng(1);
  auto w = TF::randn({3, 2, 3, 3}, rng);
  TF b({3});
  const auto y = conv2d(TF({1, 2, 5, 5}), w, &b, 1, 1);
  for (float v : y.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2d, MatchesLoopOracle) {
  Rng rng(2);
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}}) {
    auto x = TD::randn({1, 2, 5, 5}, rng), w = TD::randn({3, 2, 3, 3}, rng), b = TD::randn({3}, rng);
    std::size_t oh = 0, ow = 0;
    const auto ref = conv_loops(x, w, b, stride, pad, oh, ow);
    const auto y = conv2d(x, w, &b, stride, pad);
    ASSERT_EQ(y.shape(), (Shape{1, 3, oh, ow}));
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-5);
  }
  // Float path against the same oracle.
  auto x = TD::randn({2, 3, 6, 4}, rng), w = TD::randn({4, 3, 3, 3}, rng), b = TD::randn({4}, rng);
  std::size_t oh = 0, ow = 0;
  const auto ref = conv_loops(x, w, b, 1, 1, oh, ow);
  auto cast = [](const TD& t) { return TF(t.shape(), std::vector<float>(t.values().begin(), t.values().end())); };
  const auto xf = cast(x), wf = cast(w), bf = cast(b);
  const auto y = conv2d(xf, wf, &bf, 1, 1);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-5);
}

TEST(Conv2d, ShapeMismatchNamesShapes) {
  try {
    conv2d<float>(TF({1, 2, 5, 5}), TF({3, 4, 3, 3}), nullptr);
    FAIL();
  } catch (const DimensionError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("3x4x3x3"), std::string::npos) << m;
    EXPECT_NE(m.find("1x2x5x5"), std::string::npos) << m;
  }
}

TEST(BatchNorm, ConstantChannelGivesZero) {
  TF x({2, 1, 3, 3}, 4.0f), g({1}, 1.0f), b({1}), rm({1}), rv({1}, 1.0f);
  const auto y = batch_norm2d(x, g, b, rm, rv, true);
  for (float v : y.values()) EXPECT_EQ(v, 0.0f);
}

TEST(BatchNorm, NormalizesPerChannel) {
  Rng rng(3);
  auto x = TD::randn({4, 3, 5, 6}, rng, 3.0);
  for (auto& v : x.values()) v += 2.0;
  TD g({3}, 1.0), b({3}), rm({3}), rv({3}, 1.0);
  const auto y = batch_norm2d(x, g, b, rm, rv, true);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, s2 = 0, xs = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t k = 0; k < 30; ++k) {
        const double v = y[(i * 3 + c) * 30 + k];
        s += v;
        s2 += v * v;
        xs += x[(i * 3 + c) * 30 + k];
        ++n;
      }
    EXPECT_NEAR(s / n, 0.0, 1e-4);
    EXPECT_NEAR(s2 / n, 1.0, 1e-4);
    // Running mean moves a tenth of the way toward the batch mean.
    EXPECT_NEAR(rm[c], 0.1 * xs / n, 1e-12);
  }
}

TEST(BatchNorm, EvalUsesRunningStats) {
  TD x({2, 1, 1, 2}, std::vector<double>{1, 2, 3, 4});
  TD g({1}, 2.0), b({1}, 0.5), rm({1}, 1.0), rv({1}, 4.0);
  const auto y = batch_norm2d(x, g, b, rm, rv, false);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], (x[i] - 1.0) / std::sqrt(4.0 + 1e-5) * 2.0 + 0.5, 1e-12);
  EXPECT_EQ(rm[0], 1.0);
}

TEST(BatchNorm, SingleSampleTrainingIsDegenerate) {
  TF x({1, 2, 3, 3}), g({2}, 1.0f), b({2}), rm({2}), rv({2}, 1.0f);
  EXPECT_THROW(batch_norm2d(x, g, b, rm, rv, true), DegenerateDataError);
  EXPECT_NO_THROW(batch_norm2d(x, g, b, rm, rv, false));
}

TEST(Lstm, ZeroWeightsZeroState) {
  TD x({2, 3}, 0.7), h({2, 4}), c({2, 4}), wih({16, 3}), whh({16, 4}), b({16});
  auto [h2, c2] = lstm_cell(x, h, c, wih, whh, b);
  for (double v : h2.values()) EXPECT_EQ(v, 0.0);
  for (double v : c2.values()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, ZeroWeightsHalveCell) {
  Rng rng(4);
  TD x({2, 3}, 0.7), h({2, 4}), wih({16, 3}), whh({16, 4}), b({16});
  auto c = TD::randn({2, 4}, rng);
  auto [h2, c2] = lstm_cell(x, h, c, wih, whh, b);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(c2[i], 0.5 * c[i]);
}

TEST(Lstm, ScalarGateOracle) {
  Rng rng(5);
  const std::size_t bsz = 3, in = 5, hid = 4;
  auto x = TD::randn({bsz, in}, rng), h = TD::randn({bsz, hid}, rng), c = TD::randn({bsz, hid}, rng);
  auto wih = TD::randn({4 * hid, in}, rng), whh = TD::randn({4 * hid, hid}, rng), b = TD::randn({4 * hid}, rng);
  auto [h2, c2] = lstm_cell(x, h, c, wih, whh, b);
  for (std::size_t s = 0; s < bsz; ++s)
    for (std::size_t j = 0; j < hid; ++j) {
      double z[4];
      for (std::size_t gate = 0; gate < 4; ++gate) {
        const std::size_t row = gate * hid + j;
        double acc = b[row];
        for (std::size_t k = 0; k < in; ++k) acc += wih[row * in + k] * x[s * in + k];
        for (std::size_t k = 0; k < hid; ++k) acc += whh[row * hid + k] * h[s * hid + k];
        z[gate] = acc;
      }
      const double cn = sigm(z[1]) * c[s * hid + j] + sigm(z[0]) * std::tanh(z[2]);
      EXPECT_NEAR(c2[s * hid + j], cn, 1e-6);
      EXPECT_NEAR(h2[s * hid + j], sigm(z[3]) * std::tanh(cn), 1e-6);
    }
}

TEST(Lstm, ShapeMismatch) {
  TD x({2, 3}), h({2, 4}), c({2, 4}), wih({12, 3}), whh({16, 4}), b({16});
  EXPECT_THROW(lstm_cell(x, h, c, wih, whh, b), DimensionError);
}

TEST(Attention, LengthOneIsProjectedValue) {
  Rng rng(6);
  MultiheadAttention<double> mha(8, 2, rng);
  auto q = TD::randn({3, 1, 8}, rng), mem = TD::randn({3, 1, 8}, rng);
  const auto y = mha.forward(q, mem, false, Context{});
  const auto ref = mha.out.forward(mha.v.forward(mem));
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Attention, WeightRowsSumToOne) {
  Rng rng(7);
  auto q = TD::randn({2, 4, 8}, rng), k = TD::randn({2, 6, 8}, rng), v = TD::randn({2, 6, 8}, rng);
  TD w;
  multi_head_attention(q, k, v, 4, false, 0.0, Context{}, &w);
  ASSERT_EQ(w.shape(), (Shape{8, 4, 6}));
  for (std::size_t r = 0; r < 32; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 6; ++j) s += w[r * 6 + j];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Attention, MatchesPerHeadLoop) {
  Rng rng(8);
  const std::size_t b = 2, l = 4, d = 8, heads = 2, dh = 4;
  auto q = TD::randn({b, l, d}, rng), k = TD::randn({b, l, d}, rng), v = TD::randn({b, l, d}, rng);
  for (bool causal : {false, true}) {
    const auto y = multi_head_attention(q, k, v, heads, causal);
    for (std::size_t s = 0; s < b; ++s)
      for (std::size_t hd = 0; hd < heads; ++hd)
        for (std::size_t i = 0; i < l; ++i) {
          std::vector<double> score(l);
          double mx = -1e300;
          const std::size_t last = causal ? i : l - 1;
          for (std::size_t j = 0; j <= last; ++j) {
            double acc = 0;
            for (std::size_t e = 0; e < dh; ++e)
              acc += q[(s * l + i) * d + hd * dh + e] * k[(s * l + j) * d + hd * dh + e];
            score[j] = acc / std::sqrt(static_cast<double>(dh));
            mx = std::max(mx, score[j]);
          }
          double z = 0;
          for (std::size_t j = 0; j <= last; ++j) z += std::exp(score[j] - mx);
          for (std::size_t e = 0; e < dh; ++e) {
            double acc = 0;
            for (std::size_t j = 0; j <= last; ++j) acc += std::exp(score[j] - mx) / z * v[(s * l + j) * d + hd * dh + e];
            EXPECT_NEAR(y[(s * l + i) * d + hd * dh + e], acc, 1e-5);
          }
        }
  }
}

TEST(Attention, IndivisibleIsConfigError) {
  Rng rng(9);
  EXPECT_THROW(MultiheadAttention<float>(10, 4, rng), ConfigError);
  auto q = TF::randn({1, 2, 6}, rng);
  EXPECT_THROW(multi_head_attention(q, q, q, 4), ConfigError);
}

TEST(PositionalEncoding, KnownValues) {
  const auto pe = positional_encoding<double>(50, 16);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(pe[i], i % 2 == 0 ? 0.0 : 1.0);
  for (std::size_t p = 0; p < 50; ++p) {
    EXPECT_EQ(pe[p * 16], std::sin(static_cast<double>(p)));
    for (std::size_t i = 0; i < 16; ++i) {
      EXPECT_GE(pe[p * 16 + i], -1.0);
      EXPECT_LE(pe[p * 16 + i], 1.0);
    }
  }
  EXPECT_NEAR(pe[3 * 16 + 5], std::cos(3.0 / std::pow(10000.0, 4.0 / 16.0)), 1e-15);
}

TEST(Backward, SumGivesOnes) {
  Rng rng(10);
  auto x = TD::randn({3, 2}, rng).set_requires_grad(true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, FanOutAccumulates) {
  TD x({3}, std::vector<double>{1.0, -2.0, 0.5});
  x.set_requires_grad(true);
  const auto xx = mul(x, x);
  backward(sum(add(xx, xx)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 4.0 * x[i]);
}

TEST(Backward, LeafGradientsAccumulateAcrossCalls) {
  TD x({2}, std::vector<double>{1.0, 3.0});
  x.set_requires_grad(true);
  backward(sum(mul(x, x)));
  backward(sum(mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[1], 12.0);
}

TEST(Backward, NonScalarRootIsContractError) {
  TD x({2}, 1.0);
  x.set_requires_grad(true);
  EXPECT_THROW(backward(mul(x, x)), ContractError);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  TD x({2}, 1.0);
  x.set_requires_grad(true);
  {
    NoGradGuard ng;
    const auto y = mul(x, x);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(mul(x, x).requires_grad());
}

TEST(Loss, Arithmetic) {
  TD a({2}, std::vector<double>{0, 0}), b({2}, std::vector<double>{1, 1});
  EXPECT_EQ(mse_loss(a, b).item(), 1.0);
  EXPECT_EQ(mae_loss(a, b).item(), 1.0);
  TD p({2}, std::vector<double>{1, 3}), t({2}, std::vector<double>{2, 5});
  EXPECT_DOUBLE_EQ(mse_loss(p, t).item(), 2.5);
  EXPECT_DOUBLE_EQ(mae_loss(p, t).item(), 1.5);
  EXPECT_EQ(mse_loss(p, p).item(), 0.0);
  EXPECT_EQ(mae_loss(p, p).item(), 0.0);
  EXPECT_THROW(mse_loss(p, TD({3})), DimensionError);
  EXPECT_THROW(mae_loss(p, TD({1, 2})), DimensionError);
}

TEST(Dropout, EvalIsIdentityAndTrainPreservesMean) {
  Rng rng(11);
  TF x({100000}, 1.0f);
  EXPECT_EQ(dropout(x, 0.3, false, &rng).values(), x.values());
  const auto y = dropout(x, 0.3, true, &rng);
  double s = 0;
  std::size_t zeros = 0;
  for (float v : y.values()) {
    s += v;
    zeros += (v == 0.0f);
  }
  EXPECT_NEAR(s / 100000.0, 1.0, 0.01);
  EXPECT_NEAR(zeros / 100000.0, 0.3, 0.01);
  EXPECT_THROW(dropout(x, 1.0, true, &rng), ArgumentError);
  EXPECT_THROW(dropout(x, 0.3, true, nullptr), ContractError);
}

TEST(Dropout, SeededMasksRepeat) {
  Rng a(12), b(12);
  TF x({64}, 1.0f);
  EXPECT_EQ(dropout(x, 0.3, true, &a).values(), dropout(x, 0.3, true, &b).values());
}

TEST(Ops, SoftmaxAndCausalMask) {
  TD s({1, 3, 3}, std::vector<double>{1, 2, 3, 0, 0, 0, -1, 5, 2});
  const auto p = softmax(s, true);
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], 0.0);
  EXPECT_EQ(p[2], 0.0);
  EXPECT_DOUBLE_EQ(p[3], 0.5);
  EXPECT_EQ(p[5], 0.0);
  EXPECT_NEAR(p[6] + p[7] + p[8], 1.0, 1e-15);
}

TEST(Ops, LayerNormStandardizes) {
  Rng rng(13);
  auto x = TD::randn({4, 16}, rng, 5.0);
  TD g({16}, 1.0), b({16});
  const auto y = layer_norm(x, g, b);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < 16; ++i) {
      s += y[r * 16 + i];
      s2 += y[r * 16 + i] * y[r * 16 + i];
    }
    EXPECT_NEAR(s / 16, 0.0, 1e-9);
    EXPECT_NEAR(s2 / 16, 1.0, 1e-4);
  }
}

TEST(Ops, PoolUpsampleConcat) {
  TD x({1, 1, 2, 4}, std::vector<double>{1, 5, 2, 0, 3, 4, -1, 7});
  const auto p = max_pool2d(x);
  EXPECT_EQ(p.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_EQ(p[0], 5.0);
  EXPECT_EQ(p[1], 7.0);
  const auto u = upsample2x(p);
  EXPECT_EQ(u.shape(), (Shape{1, 1, 2, 4}));
  EXPECT_EQ(u.to_vector(), (std::vector<double>{5, 5, 7, 7, 5, 5, 7, 7}));
  const auto c = concat<double>({x, u}, 1);
  EXPECT_EQ(c.shape(), (Shape{1, 2, 2, 4}));
  EXPECT_EQ(c[8], 5.0);
  EXPECT_THROW(add(x, p), DimensionError);
}

TEST(Ops, MatmulKnown) {
  TD a({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6}), b({3, 2}, std::vector<double>{7, 8, 9, 10, 11, 12});
  EXPECT_EQ(matmul(a, b).to_vector(), (std::vector<double>{58, 64, 139, 154}));
}

TEST(Ops, ActivationsKnown) {
  TD x({3}, std::vector<double>{-1, 0, 2});
  EXPECT_EQ(relu(x).to_vector(), (std::vector<double>{0, 0, 2}));
  EXPECT_DOUBLE_EQ(sigmoid(x)[1], 0.5);
  EXPECT_DOUBLE_EQ(nn::tanh(x)[2], std::tanh(2.0));
}
