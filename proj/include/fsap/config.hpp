#pragma once

#include <string>
#include <vector>

#include "fsap/data.hpp"
#include "fsap/train.hpp"

namespace fsap {

struct DataConfig {
  DomainSpec source;
  DomainSpec target;
  int train_count = 48;
  int eval_count = 24;
};

struct EvalConfig {
  std::vector<std::string> tail_class_names{"marker", "sign"};
};

// The whole experiment in one tree, sections: data, model, perturb, train,
// eval. Every stream of randomness derives from the single top-level seed.
struct RunConfig {
  uint64_t seed = 1;
  std::string output_dir = "run";
  DataConfig data;
  TrainConfig train;  // embeds the model, discriminator, and attack configs
  EvalConfig eval;
};

RunConfig default_run_config();

nlohmann::json to_json(const RunConfig& rc);
RunConfig run_config_from_json(const nlohmann::json& j);
uint64_t run_config_hash(const RunConfig& rc);

// Overlays user keys onto a default tree; a key the defaults do not have is
// rejected by name, never silently ignored.
void overlay_config(nlohmann::json& base, const nlohmann::json& user,
                    const std::string& prefix = "");

// "section.key=value" applied to a config tree; the path must exist.
void apply_override(nlohmann::json& tree, const std::string& assignment);

// Default tree + file overlay + overrides, in that order.
RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides = {});
RunConfig make_run_config(const std::vector<std::string>& overrides);

void save_run_config(const RunConfig& rc, const std::string& path);

}  // namespace fsap
