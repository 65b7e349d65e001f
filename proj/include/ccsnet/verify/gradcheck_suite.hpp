#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ccsnet/models/factory.hpp"
#include "ccsnet/nn/gradcheck.hpp"

namespace ccsnet::verify {

struct GradcheckCase {
  std::string name;
  nn::GradcheckResult result;
};

namespace detail {

using TD = nn::Tensor<double>;
using Inputs = std::vector<std::pair<std::string, TD>>;

inline Inputs trainable_inputs(const nn::Module<double>& m) {
  Inputs out;
  for (const auto& nt : m.named_tensors())
    if (!nt.buffer && nt.tensor.requires_grad()) out.push_back({nt.name, nt.tensor});
  return out;
}

}  // namespace detail

/// Every differentiable op on small random double inputs.
inline std::vector<GradcheckCase> op_gradchecks(std::uint64_t seed = 1) {
  using namespace nn;
  using detail::TD;
  Rng rng(seed);
  std::vector<GradcheckCase> out;
  auto run = [&](const std::string& name, const std::function<TD()>& f, detail::Inputs in) {
    out.push_back({name, gradcheck(f, in)});
  };

  auto a = TD::randn({3, 4}, rng), b = TD::randn({3, 4}, rng), t = TD::randn({3, 4}, rng);
  run("add", [&] { return mse_loss(add(a, b), t); }, {{"a", a}, {"b", b}});
  run("sub", [&] { return mse_loss(sub(a, b), t); }, {{"a", a}, {"b", b}});
  run("mul", [&] { return mse_loss(mul(a, b), t); }, {{"a", a}, {"b", b}});
  run("scale", [&] { return mse_loss(scale(a, 2.5), t); }, {{"a", a}});
  auto bias = TD::randn({4}, rng);
  run("add_bias", [&] { return mse_loss(add_bias(a, bias), t); }, {{"a", a}, {"bias", bias}});
  run("relu", [&] { return mse_loss(relu(a), t); }, {{"a", a}});
  run("sigmoid", [&] { return mse_loss(sigmoid(a), t); }, {{"a", a}});
  run("tanh", [&] { return mse_loss(nn::tanh(a), t); }, {{"a", a}});
  run("sum", [&] { return sum(mul(a, b)); }, {{"a", a}, {"b", b}});
  run("mean", [&] { return mean(mul(a, a)); }, {{"a", a}});
  run("mse_loss", [&] { return mse_loss(a, b); }, {{"a", a}, {"b", b}});
  run("mae_loss", [&] { return mae_loss(a, b); }, {{"a", a}, {"b", b}});

  auto x4 = TD::randn({2, 3, 6, 4}, rng), t4 = TD::randn({2, 3, 6, 4}, rng);
  run("reshape", [&] { return mse_loss(reshape(x4, {6, 24}), reshape(t4, {6, 24})); }, {{"x", x4}});
  run("flatten", [&] { return mse_loss(flatten(x4), reshape(t4, {2, 72})); }, {{"x", x4}});
  run("permute",
      [&] { return mse_loss(permute(x4, {2, 0, 3, 1}), permute(t4, {2, 0, 3, 1})); }, {{"x", x4}});
  run("slice", [&] { return mean(mul(slice(x4, 2, 1, 3), slice(t4, 2, 0, 3))); }, {{"x", x4}});
  run("concat", [&] { return mean(mul(concat<double>({x4, t4, x4}, 1), concat<double>({t4, x4, x4}, 1))); }, {{"x", x4}});

  auto m1 = TD::randn({3, 5}, rng), m2 = TD::randn({5, 2}, rng), mt = TD::randn({3, 2}, rng);
  run("matmul", [&] { return mse_loss(matmul(m1, m2), mt); }, {{"a", m1}, {"b", m2}});
  auto b1 = TD::randn({2, 3, 5}, rng), b2 = TD::randn({2, 5, 4}, rng), bt = TD::randn({2, 3, 4}, rng);
  run("bmm", [&] { return mse_loss(bmm(b1, b2), bt); }, {{"a", b1}, {"b", b2}});
  auto lw = TD::randn({6, 5}, rng), lb = TD::randn({6}, rng), lt = TD::randn({3, 6}, rng);
  run("linear", [&] { return mse_loss(linear(m1, lw, &lb), lt); }, {{"x", m1}, {"w", lw}, {"b", lb}});
  auto s3 = TD::randn({2, 4, 4}, rng), st = TD::randn({2, 4, 4}, rng);
  run("softmax", [&] { return mse_loss(softmax(s3), st); }, {{"x", s3}});
  run("softmax_causal", [&] { return mse_loss(softmax(s3, true), st); }, {{"x", s3}});
  auto g = TD::randn({4}, rng), be = TD::randn({4}, rng);
  run("layer_norm", [&] { return mse_loss(layer_norm(s3, g, be), st); }, {{"x", s3}, {"gamma", g}, {"beta", be}});
  run("dropout", [&] {
        Rng r(7);  // same mask on every evaluation
        return mse_loss(dropout(s3, 0.3, true, &r), st);
      },
      {{"x", s3}});
  auto pe = positional_encoding<double>(4, 4);
  run("add_positional", [&] { return mse_loss(add_positional(s3, pe), st); }, {{"x", s3}});

  auto x = TD::randn({2, 3, 6, 5}, rng), w = TD::randn({4, 3, 3, 3}, rng), cb = TD::randn({4}, rng);
  auto tc1 = TD::randn({2, 4, 6, 5}, rng), tc2 = TD::randn({2, 4, 3, 3}, rng);
  run("conv2d", [&] { return mse_loss(conv2d(x, w, &cb, 1, 1), tc1); }, {{"x", x}, {"w", w}, {"b", cb}});
  run("conv2d_stride2", [&] { return mse_loss(conv2d(x, w, &cb, 2, 1), tc2); }, {{"x", x}, {"w", w}, {"b", cb}});
  auto bg = TD::randn({3}, rng), bb = TD::randn({3}, rng), tb = TD::randn({2, 3, 6, 5}, rng);
  TD rm({3}), rv({3}, 1.0);
  run("batch_norm_train", [&] { return mse_loss(batch_norm2d(x, bg, bb, rm, rv, true), tb); },
      {{"x", x}, {"gamma", bg}, {"beta", bb}});
  run("batch_norm_eval", [&] { return mse_loss(batch_norm2d(x, bg, bb, rm, rv, false), tb); },
      {{"x", x}, {"gamma", bg}, {"beta", bb}});
  auto tp = TD::randn({2, 3, 3, 2}, rng);
  run("max_pool2d", [&] { return mse_loss(max_pool2d(x), tp); }, {{"x", x}});
  auto tu = TD::randn({2, 3, 12, 10}, rng);
  run("upsample2x", [&] { return mse_loss(upsample2x(x), tu); }, {{"x", x}});
  auto tr = TD::randn({2, 3, 4, 7}, rng);
  run("resize_nearest", [&] { return mse_loss(resize_nearest(x, 4, 7), tr); }, {{"x", x}});
  auto tg = TD::randn({2, 3}, rng);
  run("global_avg_pool", [&] { return mse_loss(global_avg_pool(x), tg); }, {{"x", x}});

  auto q = TD::randn({2, 5, 8}, rng), k = TD::randn({2, 4, 8}, rng), v = TD::randn({2, 4, 8}, rng);
  auto k5 = TD::randn({2, 5, 8}, rng), v5 = TD::randn({2, 5, 8}, rng), tq = TD::randn({2, 5, 8}, rng);
  run("attention", [&] { return mse_loss(multi_head_attention(q, k, v, 4), tq); }, {{"q", q}, {"k", k}, {"v", v}});
  run("attention_causal", [&] { return mse_loss(multi_head_attention(q, k5, v5, 2, true), tq); },
      {{"q", q}, {"k", k5}, {"v", v5}});
  auto xi = TD::randn({3, 5}, rng), h = TD::randn({3, 4}, rng), c = TD::randn({3, 4}, rng);
  auto wih = TD::randn({16, 5}, rng), whh = TD::randn({16, 4}, rng), lstm_b = TD::randn({16}, rng);
  auto th = TD::randn({3, 4}, rng);
  run("lstm_cell",
      [&] {
        auto [h2, c2] = lstm_cell(xi, h, c, wih, whh, lstm_b);
        return add(mse_loss(h2, th), mean(mul(c2, c2)));
      },
      {{"x", xi}, {"h", h}, {"c", c}, {"w_ih", wih}, {"w_hh", whh}, {"b", lstm_b}});
  return out;
}

/// Static output projections start at zero, which would leave every
/// upstream gradient at exactly zero; gradchecks fill them in first.
template <class T>
void randomize_output(models::StaticModel<T>& m, Rng& rng) {
  for (const auto& nt : m.named_tensors())
    if (nt.name == "fc.weight" || nt.name == "head.weight") {
      auto t = nt.tensor;
      for (auto& v : t.values()) v = static_cast<T>(0.3 * rng.normal());
    }
}

/// All five architectures at reduced size (12 x 24 images, 5 x 10 label
/// grid for the sequence encoders), training mode with dropout off.
inline std::vector<GradcheckCase> model_gradchecks(std::uint64_t seed = 5, std::size_t samples_per_input = 4) {
  using namespace models;
  using detail::TD;
  Rng rng(seed);
  nn::GradcheckOptions opt;
  opt.samples_per_input = samples_per_input;
  opt.seed = seed;
  std::vector<GradcheckCase> out;

  ModelConfig base;
  base.input_h = 12;
  base.input_w = 24;
  base.seed = seed;
  auto run_static = [&](Architecture a, std::vector<std::size_t> widths) {
    ModelConfig c = base;
    c.architecture = a;
    c.widths = std::move(widths);
    auto m = make_static_model<double>(c);
    randomize_output(*m, rng);
    auto x = TD::uniform({3, 3, 12, 24}, rng, 0.0, 1.0);
    auto t = TD::randn({3, c.output_size()}, rng, 0.1);
    auto in = detail::trainable_inputs(*m);
    in.push_back({"images", x});
    out.push_back({to_string(a), nn::gradcheck([&] { return nn::mse_loss(m->forward(x, Context{true, nullptr}), t); },
                                               in, opt)});
  };
  run_static(Architecture::Cnn, {4, 8});
  run_static(Architecture::ResNet, {4, 8, 8, 8});
  run_static(Architecture::ResNetUNet, {4, 8, 8});

  auto enc_cfg = std::make_shared<ModelConfig>(base);
  enc_cfg->architecture = Architecture::ResNetUNet;
  enc_cfg->widths = {4, 8, 8};
  enc_cfg->output_h = 5;
  enc_cfg->output_w = 10;
  auto run_seq = [&](Architecture a) {
    ModelConfig c = base;
    c.architecture = a;
    c.encoder = enc_cfg;
    c.series_dim = 6;
    c.window = 3;
    c.lstm_hidden = 4;
    c.lstm_layers = 2;
    c.d_model = 8;
    c.heads = 2;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    c.ff_width = 16;
    c.dropout = 0.0;
    auto enc = std::make_shared<ResNetUNet<double>>(*enc_cfg);
    randomize_output(*enc, rng);
    auto m = make_transient_model<double>(c, enc);
    // A zero output head would hide upstream gradients.
    if (auto* l = dynamic_cast<LstmPredictor<double>*>(m.get()))
      for (auto& v : l->out_head->weight.values()) v = 0.5 * rng.normal();
    if (auto* t = dynamic_cast<TransformerPredictor<double>*>(m.get()))
      for (auto& v : t->out_head->weight.values()) v = 0.5 * rng.normal();
    const auto feats = m->features(TD::uniform({3, 3, 12, 24}, rng, 0.0, 1.0));
    auto w = TD::uniform({3, c.window + 1, c.series_dim}, rng, 0.0, 1.0);
    auto in = detail::trainable_inputs(*m);
    in.push_back({"window", w});
    out.push_back({to_string(a), nn::gradcheck([&] { return m->loss(feats, w, Context{true, nullptr}); }, in, opt)});
  };
  run_seq(Architecture::Lstm);
  run_seq(Architecture::Transformer);
  return out;
}

}  // namespace ccsnet::verify
