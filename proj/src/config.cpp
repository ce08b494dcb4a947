#include "fsap/config.hpp"

#include <fstream>
#include <stdexcept>

namespace fsap {
namespace {

nlohmann::json spec_tree(const DomainSpec& spec) {
  nlohmann::json j = spec.to_json();
  j.erase("seed");  // domain seeds derive from the top-level seed
  return j;
}

DomainSpec spec_from_tree(const nlohmann::json& j, uint64_t seed) {
  nlohmann::json full = j;
  full["seed"] = seed;
  return DomainSpec::from_json(full);
}

}  // namespace

RunConfig default_run_config() {
  RunConfig rc;
  rc.data.source = default_source_spec(0);
  rc.data.target = default_target_spec(0);
  return rc;
}

nlohmann::json to_json(const RunConfig& rc) {
  nlohmann::json j;
  j["seed"] = rc.seed;
  j["output_dir"] = rc.output_dir;
  j["data"] = {{"source", spec_tree(rc.data.source)},
               {"target", spec_tree(rc.data.target)},
               {"train_count", rc.data.train_count},
               {"eval_count", rc.data.eval_count}};
  nlohmann::json model = to_json(rc.train.model);
  model["disc"] = to_json(rc.train.disc);
  j["model"] = model;
  j["perturb"] = to_json(rc.train.perturb);
  nlohmann::json train = to_json(rc.train);
  train.erase("model");
  train.erase("disc");
  train.erase("perturb");
  train.erase("seed");
  j["train"] = train;
  j["eval"] = {{"tail_class_names", rc.eval.tail_class_names}};
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig rc;
  rc.seed = j.at("seed").get<uint64_t>();
  rc.output_dir = j.at("output_dir").get<std::string>();

  const auto& d = j.at("data");
  rc.data.source = spec_from_tree(d.at("source"), mix_seed(rc.seed, fnv1a64_str("source_data")));
  rc.data.target = spec_from_tree(d.at("target"), mix_seed(rc.seed, fnv1a64_str("target_data")));
  rc.data.train_count = d.at("train_count").get<int>();
  rc.data.eval_count = d.at("eval_count").get<int>();
  if (rc.data.train_count <= 0 || rc.data.eval_count <= 0)
    throw std::invalid_argument("config: dataset counts must be positive");

  nlohmann::json model = j.at("model");
  nlohmann::json disc = model.at("disc");
  model.erase("disc");

  nlohmann::json train = j.at("train");
  train["model"] = model;
  train["disc"] = disc;
  train["perturb"] = j.at("perturb");
  train["seed"] = rc.seed;
  rc.train = train_config_from_json(train);

  rc.eval.tail_class_names = j.at("eval").at("tail_class_names").get<std::vector<std::string>>();
  return rc;
}

uint64_t run_config_hash(const RunConfig& rc) { return fnv1a64_str(to_json(rc).dump()); }

void overlay_config(nlohmann::json& base, const nlohmann::json& user, const std::string& prefix) {
  if (!user.is_object())
    throw std::invalid_argument("config: " + (prefix.empty() ? std::string("top level") : prefix) +
                                " must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key()))
      throw std::invalid_argument("unknown config key: " + key);
    nlohmann::json& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object()) {
      overlay_config(slot, it.value(), key);
    } else if (slot.is_object() != it.value().is_object()) {
      throw std::invalid_argument("config key " + key +
                                  (slot.is_object() ? " expects an object" : " expects a value"));
    } else {
      slot = it.value();
    }
  }
}

void apply_override(nlohmann::json& tree, const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override must look like section.key=value: " + assignment);
  std::string path = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);

  nlohmann::json* cur = &tree;
  size_t start = 0;
  std::string walked;
  while (true) {
    size_t dot = path.find('.', start);
    std::string seg = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    walked = walked.empty() ? seg : walked + "." + seg;
    if (!cur->is_object() || !cur->contains(seg))
      throw std::invalid_argument("unknown config key: " + walked);
    cur = &(*cur)[seg];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;  // bare words are strings
  if (cur->is_object())
    throw std::invalid_argument("config key " + path + " is a section, not a value");
  *cur = std::move(value);
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file: " + path);
  nlohmann::json user = nlohmann::json::parse(in, nullptr, false);
  if (user.is_discarded()) throw std::runtime_error("config file is not valid JSON: " + path);
  nlohmann::json tree = to_json(default_run_config());
  overlay_config(tree, user);
  for (const auto& o : overrides) apply_override(tree, o);
  return run_config_from_json(tree);
}

RunConfig make_run_config(const std::vector<std::string>& overrides) {
  nlohmann::json tree = to_json(default_run_config());
  for (const auto& o : overrides) apply_override(tree, o);
  return run_config_from_json(tree);
}

void save_run_config(const RunConfig& rc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_json(rc).dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace fsap
