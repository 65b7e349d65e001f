#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ccsnet/error.hpp"
#include "json.hpp"

namespace ccsnet::models {

enum class Architecture { Cnn, ResNet, ResNetUNet, Lstm, Transformer };

inline std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::Cnn: return "cnn";
    case Architecture::ResNet: return "resnet";
    case Architecture::ResNetUNet: return "resnet_unet";
    case Architecture::Lstm: return "lstm";
    case Architecture::Transformer: return "transformer";
  }
  return "?";
}

inline Architecture parse_architecture(const std::string& s) {
  for (auto a : {Architecture::Cnn, Architecture::ResNet, Architecture::ResNetUNet, Architecture::Lstm,
                 Architecture::Transformer})
    if (to_string(a) == s) return a;
  throw ConfigError("unknown architecture '" + s + "' (expected cnn, resnet, resnet_unet, lstm or transformer)");
}

inline bool is_transient(Architecture a) { return a == Architecture::Lstm || a == Architecture::Transformer; }

inline std::vector<std::size_t> default_widths(Architecture a) {
  switch (a) {
    case Architecture::Cnn: return {16, 32, 64, 64};
    case Architecture::ResNet: return {64, 128, 256, 512};
    case Architecture::ResNetUNet: return {16, 32, 64, 128, 128};
    default: return {};
  }
}

struct ModelConfig {
  Architecture architecture = Architecture::ResNetUNet;
  std::uint64_t seed = 0;

  // Static image-to-field models.
  std::size_t input_channels = 3;
  std::size_t input_h = 48;
  std::size_t input_w = 96;
  std::size_t output_h = 25;
  std::size_t output_w = 50;
  /// Per-stage channel widths; empty selects the architecture default.
  std::vector<std::size_t> widths;

  // Sequence models.
  std::size_t series_dim = 40;  // surface points per time step
  std::size_t window = 5;
  std::size_t lstm_hidden = 4;
  std::size_t lstm_layers = 4;
  std::size_t d_model = 16;
  std::size_t heads = 8;
  std::size_t encoder_layers = 4;
  std::size_t decoder_layers = 4;
  std::size_t ff_width = 2048;
  double dropout = 0.3;
  /// Configuration of the frozen image encoder used by sequence models.
  std::shared_ptr<ModelConfig> encoder;

  std::size_t output_size() const { return output_h * output_w; }
  std::vector<std::size_t> resolved_widths() const { return widths.empty() ? default_widths(architecture) : widths; }

  void validate() const {
    const auto w = resolved_widths();
    if (!is_transient(architecture)) {
      if (w.empty()) throw ConfigError(to_string(architecture) + ": at least one stage width required");
      for (auto v : w)
        if (v == 0) throw ConfigError("stage widths must be positive");
      if (input_h == 0 || input_w == 0 || output_h == 0 || output_w == 0 || input_channels == 0)
        throw ConfigError("image and label sizes must be positive");
      if (architecture == Architecture::ResNet && w.size() != 4)
        throw ConfigError("resnet needs exactly 4 stage widths");
    } else {
      if (!encoder) throw ConfigError(to_string(architecture) + ": missing encoder configuration");
      if (encoder->architecture != Architecture::ResNetUNet)
        throw ConfigError("sequence models use a resnet_unet encoder");
      encoder->validate();
      if (series_dim == 0 || window == 0) throw ConfigError("series dimension and window must be positive");
      if (architecture == Architecture::Lstm && (lstm_hidden == 0 || lstm_layers == 0))
        throw ConfigError("lstm hidden size and layer count must be positive");
      if (architecture == Architecture::Transformer) {
        if (heads == 0 || d_model % heads != 0)
          throw ConfigError("model dimension " + std::to_string(d_model) + " is not divisible by " +
                            std::to_string(heads) + " heads");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
        if (ff_width == 0 || encoder_layers == 0 || decoder_layers == 0)
          throw ConfigError("transformer sizes must be positive");
      }
    }
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["architecture"] = to_string(c.architecture);
  j["seed"] = c.seed;
  if (!is_transient(c.architecture)) {
    j["input"] = {c.input_channels, c.input_h, c.input_w};
    j["output"] = {c.output_h, c.output_w};
    j["widths"] = c.resolved_widths();
  } else {
    j["series_dim"] = c.series_dim;
    j["window"] = c.window;
    if (c.architecture == Architecture::Lstm) {
      j["hidden"] = c.lstm_hidden;
      j["layers"] = c.lstm_layers;
    } else {
      j["d_model"] = c.d_model;
      j["heads"] = c.heads;
      j["encoder_layers"] = c.encoder_layers;
      j["decoder_layers"] = c.decoder_layers;
      j["ff_width"] = c.ff_width;
      j["dropout"] = c.dropout;
    }
    if (c.encoder) j["encoder"] = to_json(*c.encoder);
  }
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.architecture = parse_architecture(j.at("architecture").get<std::string>());
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("input")) {
      const auto in = j.at("input").get<std::vector<std::size_t>>();
      if (in.size() != 3) throw ConfigError("model input must be [channels, height, width]");
      c.input_channels = in[0];
      c.input_h = in[1];
      c.input_w = in[2];
    }
    if (j.contains("output")) {
      const auto out = j.at("output").get<std::vector<std::size_t>>();
      if (out.size() != 2) throw ConfigError("model output must be [height, width]");
      c.output_h = out[0];
      c.output_w = out[1];
    }
    if (j.contains("widths")) c.widths = j.at("widths").get<std::vector<std::size_t>>();
    c.series_dim = j.value("series_dim", c.series_dim);
    c.window = j.value("window", c.window);
    c.lstm_hidden = j.value("hidden", c.lstm_hidden);
    c.lstm_layers = j.value("layers", c.lstm_layers);
    c.d_model = j.value("d_model", c.d_model);
    c.heads = j.value("heads", c.heads);
    c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
    c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
    c.ff_width = j.value("ff_width", c.ff_width);
    c.dropout = j.value("dropout", c.dropout);
    if (j.contains("encoder")) c.encoder = std::make_shared<ModelConfig>(model_config_from_json(j.at("encoder")));
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model configuration: ") + e.what());
  }
}

}  // namespace ccsnet::models
