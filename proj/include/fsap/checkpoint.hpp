#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fsap/tensor.hpp"

namespace fsap {

// Versioned binary container: a JSON header describing named tensors plus
// their raw little-endian double payloads, and a free-form meta object for
// iteration counters, RNG state, config hashes and the like.
struct Checkpoint {
  int version = 1;
  std::vector<std::pair<std::string, Tensor>> tensors;  // ordered, names unique
  nlohmann::json meta = nlohmann::json::object();

  const Tensor* find(const std::string& name) const;
  const Tensor& require(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fsap
