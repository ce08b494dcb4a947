#include "fsap/feature_map.hpp"

#include <stdexcept>

namespace fsap {

const char* origin_name(Origin o) {
  return o == Origin::source ? "source" : "target";
}

Origin origin_from_name(const std::string& name) {
  if (name == "source") return Origin::source;
  if (name == "target") return Origin::target;
  throw std::invalid_argument("unknown origin: " + name);
}

std::string layer_name(int layer) {
  if (layer < 0) throw std::invalid_argument("negative layer tag");
  if (layer == 0) return "pixel";
  return "after-block-" + std::to_string(layer);
}

int layer_from_name(const std::string& name) {
  if (name == "pixel") return 0;
  const std::string prefix = "after-block-";
  if (name.rfind(prefix, 0) == 0) {
    int k = std::stoi(name.substr(prefix.size()));
    if (k >= 1) return k;
  }
  throw std::invalid_argument("unknown layer tag: " + name);
}

}  // namespace fsap
