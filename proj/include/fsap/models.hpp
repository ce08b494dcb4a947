#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "fsap/autodiff.hpp"
#include "fsap/feature_map.hpp"
#include "fsap/losses.hpp"
#include "fsap/tensor.hpp"

namespace fsap {

struct NamedParam {
  std::string name;
  Var var;
};

uint64_t params_checksum(const std::vector<NamedParam>& params);

struct ModelConfig {
  int in_h = 64;
  int in_w = 64;
  int in_ch = 3;
  int num_classes = 5;
  int split = 4;  // 0 = pixel level, k = after encoder block k
  std::vector<int> block_channels = {16, 32, 64, 64};
  int head_hidden = 32;
  double leak = 0.1;
};

// Encoder G (stride-2 conv blocks) plus classifier head F (1x1 convolutions
// to class logits, bilinear upsample to input resolution, softmax). The
// configured split point divides extract_features from classify.
class SegmentationModel {
 public:
  SegmentationModel(ModelConfig cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  int num_blocks() const { return static_cast<int>(cfg_.block_channels.size()); }

  // Shape of the activation at the configured split point.
  std::vector<int> feature_shape() const;

  FeatureMap extract_features(const Tensor& x, Origin origin) const;
  Var features_var(Var x) const;

  // Runs the remaining encoder blocks and the head; full-resolution softmax.
  Var classify_var(Var f) const;
  SoftmaxMap classify(const FeatureMap& f) const;
  SoftmaxMap forward_full(const Tensor& x) const;

  void set_frozen(bool frozen) { frozen_g_ = frozen; }
  bool frozen() const { return frozen_g_; }

  std::vector<NamedParam> params() const;  // G then F, stable order
  std::vector<NamedParam> g_params() const;
  std::vector<NamedParam> f_params() const;
  std::vector<NamedParam> trainable_params() const;  // honors the G freeze

  uint64_t g_checksum() const { return params_checksum(g_params()); }
  uint64_t checksum() const { return params_checksum(params()); }

 private:
  struct ConvParam {
    Var w;  // KH x KW x Cin x Cout
    Var b;  // Cout
  };

  Var run_blocks(Var x, int first_block) const;
  Var run_head(Var f) const;

  ModelConfig cfg_;
  std::vector<ConvParam> blocks_;
  ConvParam head1_;
  ConvParam head2_;
  bool frozen_g_ = false;
};

struct DiscriminatorConfig {
  int in_h = 64;
  int in_w = 64;
  int in_ch = 5;  // class count of the softmax maps it judges
  std::vector<int> channels = {8, 16, 32};
  double leak = 0.2;
};

// Strided conv stack with leaky-ReLU activations and no normalization,
// ending in a 1-channel sigmoid map: probability the input is source.
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig cfg, uint64_t seed);

  const DiscriminatorConfig& config() const { return cfg_; }
  std::vector<int> output_shape() const;

  Var discriminate_var(Var p) const;
  DomainMap discriminate(const SoftmaxMap& p) const;

  std::vector<NamedParam> params() const;
  uint64_t checksum() const { return params_checksum(params()); }

 private:
  struct ConvParam {
    Var w;
    Var b;
  };

  DiscriminatorConfig cfg_;
  std::vector<ConvParam> layers_;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DiscriminatorConfig& cfg);
DiscriminatorConfig disc_config_from_json(const nlohmann::json& j);

}  // namespace fsap
