#pragma once

#include <filesystem>
#include <fstream>
#include <memory>

#include "ccsnet/models/transient_models.hpp"
#include "ccsnet/nn/checkpoint.hpp"

namespace ccsnet::models {

template <class T>
std::unique_ptr<StaticModel<T>> make_static_model(const ModelConfig& c) {
  switch (c.architecture) {
    case Architecture::Cnn: return std::make_unique<CnnBaseline<T>>(c);
    case Architecture::ResNet: return std::make_unique<ResNetBaseline<T>>(c);
    case Architecture::ResNetUNet: return std::make_unique<ResNetUNet<T>>(c);
    default: throw ConfigError(to_string(c.architecture) + " is not an image-to-field model");
  }
}

template <class T>
std::unique_ptr<TransientModel<T>> make_transient_model(const ModelConfig& c, std::shared_ptr<ResNetUNet<T>> encoder) {
  switch (c.architecture) {
    case Architecture::Lstm: return std::make_unique<LstmPredictor<T>>(c, std::move(encoder));
    case Architecture::Transformer: return std::make_unique<TransformerPredictor<T>>(c, std::move(encoder));
    default: throw ConfigError(to_string(c.architecture) + " is not a sequence model");
  }
}

/// Either kind of model together with its configuration.
template <class T>
struct AnyModel {
  ModelConfig config;
  std::unique_ptr<StaticModel<T>> static_model;
  std::unique_ptr<TransientModel<T>> transient_model;

  nn::Module<T>& module() {
    if (static_model) return *static_model;
    return *transient_model;
  }
  bool is_transient() const { return static_cast<bool>(transient_model); }
};

/// Freshly initialized model; sequence models get a randomly initialized
/// encoder that callers are expected to overwrite.
template <class T>
AnyModel<T> build_model(const ModelConfig& c) {
  c.validate();
  AnyModel<T> m;
  m.config = c;
  if (is_transient(c.architecture))
    m.transient_model = make_transient_model<T>(c, std::make_shared<ResNetUNet<T>>(*c.encoder));
  else
    m.static_model = make_static_model<T>(c);
  return m;
}

inline std::filesystem::path config_path_for(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p.replace_extension(".json");
  return p;
}

/// Writes the checkpoint and its configuration beside it (same stem, .json).
template <class T>
void save_model(const std::filesystem::path& checkpoint, nn::Module<T>& module, const ModelConfig& c) {
  nn::save_checkpoint<T>(checkpoint, module.named_tensors());
  std::ofstream os(config_path_for(checkpoint));
  if (!os) throw PathError("cannot write model configuration beside " + checkpoint.string());
  os << to_json(c).dump(2) << "\n";
}

inline ModelConfig read_model_config(const std::filesystem::path& checkpoint) {
  const auto cp = config_path_for(checkpoint);
  std::ifstream is(cp);
  if (!is) throw PathError("missing model configuration " + cp.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed model configuration " + cp.string() + ": " + e.what());
  }
  return model_config_from_json(j);
}

template <class T>
AnyModel<T> load_model(const std::filesystem::path& checkpoint) {
  if (!std::filesystem::exists(checkpoint)) throw PathError("missing checkpoint " + checkpoint.string());
  auto m = build_model<T>(read_model_config(checkpoint));
  nn::load_checkpoint<T>(checkpoint, m.module().named_tensors());
  return m;
}

/// Loads a trained image model to serve as a frozen encoder.
template <class T>
std::shared_ptr<ResNetUNet<T>> load_encoder(const std::filesystem::path& checkpoint) {
  if (!std::filesystem::exists(checkpoint))
    throw DependencyError("pretrained resnet_unet checkpoint not found: " + checkpoint.string());
  const auto c = read_model_config(checkpoint);
  if (c.architecture != Architecture::ResNetUNet)
    throw DependencyError("encoder checkpoint " + checkpoint.string() + " holds a " + to_string(c.architecture) +
                          ", not a resnet_unet");
  auto enc = std::make_shared<ResNetUNet<T>>(c);
  nn::load_checkpoint<T>(checkpoint, enc->named_tensors());
  enc->set_trainable(false);
  return enc;
}

}  // namespace ccsnet::models
