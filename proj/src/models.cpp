#include "fsap/models.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace fsap {
namespace {

// Fan-in-scaled normal init; biases start at zero.
Var init_conv_weight(std::vector<int> shape, uint64_t seed) {
  Tensor w(shape);
  int fan_in = shape[0] * shape[1] * shape[2];
  double stddev = std::sqrt(2.0 / fan_in);
  Rng rng(seed);
  for (int i = 0; i < w.size(); ++i) w[i] = rng.normal() * stddev;
  return Var::leaf(std::move(w), true);
}

Var init_conv_bias(int count) { return Var::leaf(Tensor({count}, 0.0), true); }

}  // namespace

uint64_t params_checksum(const std::vector<NamedParam>& params) {
  uint64_t h = 1469598103934665603ull;
  for (const auto& p : params) {
    h = fnv1a64(p.name.data(), p.name.size(), h);
    uint64_t t = p.var.value().bit_checksum();
    h = fnv1a64(reinterpret_cast<const unsigned char*>(&t), sizeof(t), h);
  }
  return h;
}

SegmentationModel::SegmentationModel(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.block_channels.empty()) throw std::invalid_argument("model: no encoder blocks");
  if (cfg_.split < 0 || cfg_.split > num_blocks())
    throw std::invalid_argument("model: split point outside [0, " +
                                std::to_string(num_blocks()) + "]");
  int spatial = 1 << num_blocks();
  if (cfg_.in_h % spatial != 0 || cfg_.in_w % spatial != 0)
    throw std::invalid_argument("model: input size must divide by " + std::to_string(spatial));

  int cin = cfg_.in_ch;
  for (size_t k = 0; k < cfg_.block_channels.size(); ++k) {
    int cout = cfg_.block_channels[k];
    // Seed names stay split-independent so the split knob moves the G/F
    // boundary without touching initialization.
    std::string name = "block" + std::to_string(k + 1);
    blocks_.push_back({init_conv_weight({3, 3, cin, cout}, mix_seed(seed, fnv1a64_str(name + ".w"))),
                       init_conv_bias(cout)});
    cin = cout;
  }
  head1_ = {init_conv_weight({1, 1, cin, cfg_.head_hidden}, mix_seed(seed, fnv1a64_str("f.conv1.w"))),
            init_conv_bias(cfg_.head_hidden)};
  head2_ = {init_conv_weight({1, 1, cfg_.head_hidden, cfg_.num_classes},
                             mix_seed(seed, fnv1a64_str("f.conv2.w"))),
            init_conv_bias(cfg_.num_classes)};
}

std::vector<int> SegmentationModel::feature_shape() const {
  if (cfg_.split == 0) return {cfg_.in_h, cfg_.in_w, cfg_.in_ch};
  return {cfg_.in_h >> cfg_.split, cfg_.in_w >> cfg_.split,
          cfg_.block_channels[static_cast<size_t>(cfg_.split - 1)]};
}

Var SegmentationModel::run_blocks(Var x, int first_block) const {
  for (size_t k = static_cast<size_t>(first_block); k < blocks_.size(); ++k)
    x = leaky_relu(conv2d(std::move(x), blocks_[k].w, blocks_[k].b, 2, 1), cfg_.leak);
  return x;
}

Var SegmentationModel::run_head(Var f) const {
  Var h = leaky_relu(conv2d(std::move(f), head1_.w, head1_.b, 1, 0), cfg_.leak);
  Var logits = conv2d(std::move(h), head2_.w, head2_.b, 1, 0);
  return softmax_channels(upsample_bilinear(std::move(logits), cfg_.in_h, cfg_.in_w));
}

FeatureMap SegmentationModel::extract_features(const Tensor& x, Origin origin) const {
  if (x.shape() != std::vector<int>{cfg_.in_h, cfg_.in_w, cfg_.in_ch})
    throw std::invalid_argument("extract_features: expected " + std::to_string(cfg_.in_h) + "x" +
                                std::to_string(cfg_.in_w) + "x" + std::to_string(cfg_.in_ch) +
                                " input, got " + x.shape_str());
  if (cfg_.split == 0) return {x, origin, 0};
  return {features_var(Var::leaf(x)).value(), origin, cfg_.split};
}

Var SegmentationModel::features_var(Var x) const {
  if (x.shape() != std::vector<int>{cfg_.in_h, cfg_.in_w, cfg_.in_ch})
    throw std::invalid_argument("features_var: input shape mismatch");
  for (int k = 0; k < cfg_.split; ++k)
    x = leaky_relu(conv2d(std::move(x), blocks_[static_cast<size_t>(k)].w,
                          blocks_[static_cast<size_t>(k)].b, 2, 1),
                   cfg_.leak);
  return x;
}

Var SegmentationModel::classify_var(Var f) const {
  if (f.shape() != feature_shape())
    throw std::invalid_argument("classify: feature shape " + f.value().shape_str() +
                                " does not match split point");
  return run_head(run_blocks(std::move(f), cfg_.split));
}

SoftmaxMap SegmentationModel::classify(const FeatureMap& f) const {
  if (f.layer != cfg_.split)
    throw std::invalid_argument("classify: feature layer tag " + layer_name(f.layer) +
                                " does not match configured split " + layer_name(cfg_.split));
  return {classify_var(Var::leaf(f.values)).value()};
}

SoftmaxMap SegmentationModel::forward_full(const Tensor& x) const {
  return {classify_var(features_var(Var::leaf(x))).value()};
}

// The split point owns the parameter grouping: blocks up to the split are the
// feature extractor, blocks after it belong to the classifier side.
std::vector<NamedParam> SegmentationModel::g_params() const {
  std::vector<NamedParam> out;
  for (size_t k = 0; k < static_cast<size_t>(cfg_.split); ++k) {
    std::string base = "g.block" + std::to_string(k + 1);
    out.push_back({base + ".w", blocks_[k].w});
    out.push_back({base + ".b", blocks_[k].b});
  }
  return out;
}

std::vector<NamedParam> SegmentationModel::f_params() const {
  std::vector<NamedParam> out;
  for (size_t k = static_cast<size_t>(cfg_.split); k < blocks_.size(); ++k) {
    std::string base = "f.block" + std::to_string(k + 1);
    out.push_back({base + ".w", blocks_[k].w});
    out.push_back({base + ".b", blocks_[k].b});
  }
  out.push_back({"f.conv1.w", head1_.w});
  out.push_back({"f.conv1.b", head1_.b});
  out.push_back({"f.conv2.w", head2_.w});
  out.push_back({"f.conv2.b", head2_.b});
  return out;
}

std::vector<NamedParam> SegmentationModel::params() const {
  std::vector<NamedParam> out = g_params();
  for (auto& p : f_params()) out.push_back(std::move(p));
  return out;
}

std::vector<NamedParam> SegmentationModel::trainable_params() const {
  return frozen_g_ ? f_params() : params();
}

Discriminator::Discriminator(DiscriminatorConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  int cin = cfg_.in_ch;
  std::vector<int> chans = cfg_.channels;
  chans.push_back(1);  // final 1-channel probability map
  for (size_t k = 0; k < chans.size(); ++k) {
    std::string name = "d.conv" + std::to_string(k + 1);
    layers_.push_back(
        {init_conv_weight({4, 4, cin, chans[k]}, mix_seed(seed, fnv1a64_str(name + ".w"))),
         init_conv_bias(chans[k])});
    cin = chans[k];
  }
  int depth = static_cast<int>(layers_.size());
  int spatial = 1 << depth;
  if (cfg_.in_h % spatial != 0 || cfg_.in_w % spatial != 0)
    throw std::invalid_argument("discriminator: input size must divide by " +
                                std::to_string(spatial));
}

std::vector<int> Discriminator::output_shape() const {
  int depth = static_cast<int>(layers_.size());
  return {cfg_.in_h >> depth, cfg_.in_w >> depth};
}

Var Discriminator::discriminate_var(Var p) const {
  if (p.shape() != std::vector<int>{cfg_.in_h, cfg_.in_w, cfg_.in_ch})
    throw std::invalid_argument("discriminate: expected shape " + std::to_string(cfg_.in_h) +
                                "x" + std::to_string(cfg_.in_w) + "x" + std::to_string(cfg_.in_ch) +
                                ", got " + p.value().shape_str());
  for (size_t k = 0; k < layers_.size(); ++k) {
    p = conv2d(std::move(p), layers_[k].w, layers_[k].b, 2, 1);
    if (k + 1 < layers_.size()) p = leaky_relu(std::move(p), cfg_.leak);
  }
  return reshape(sigmoid(std::move(p)), output_shape());
}

DomainMap Discriminator::discriminate(const SoftmaxMap& p) const {
  return {discriminate_var(Var::leaf(p.values)).value()};
}

std::vector<NamedParam> Discriminator::params() const {
  std::vector<NamedParam> out;
  for (size_t k = 0; k < layers_.size(); ++k) {
    std::string base = "d.conv" + std::to_string(k + 1);
    out.push_back({base + ".w", layers_[k].w});
    out.push_back({base + ".b", layers_[k].b});
  }
  return out;
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"in_h", cfg.in_h},
          {"in_w", cfg.in_w},
          {"in_ch", cfg.in_ch},
          {"num_classes", cfg.num_classes},
          {"split", cfg.split},
          {"block_channels", cfg.block_channels},
          {"head_hidden", cfg.head_hidden},
          {"leak", cfg.leak}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.in_h = j.at("in_h").get<int>();
  cfg.in_w = j.at("in_w").get<int>();
  cfg.in_ch = j.at("in_ch").get<int>();
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.split = j.at("split").get<int>();
  cfg.block_channels = j.at("block_channels").get<std::vector<int>>();
  cfg.head_hidden = j.at("head_hidden").get<int>();
  cfg.leak = j.at("leak").get<double>();
  return cfg;
}

nlohmann::json to_json(const DiscriminatorConfig& cfg) {
  return {{"in_h", cfg.in_h},
          {"in_w", cfg.in_w},
          {"in_ch", cfg.in_ch},
          {"channels", cfg.channels},
          {"leak", cfg.leak}};
}

DiscriminatorConfig disc_config_from_json(const nlohmann::json& j) {
  DiscriminatorConfig cfg;
  cfg.in_h = j.at("in_h").get<int>();
  cfg.in_w = j.at("in_w").get<int>();
  cfg.in_ch = j.at("in_ch").get<int>();
  cfg.channels = j.at("channels").get<std::vector<int>>();
  cfg.leak = j.at("leak").get<double>();
  return cfg;
}

}  // namespace fsap
