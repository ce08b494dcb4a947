#pragma once

#include <string>

#include "fsap/tensor.hpp"

namespace fsap {

// Domain an activation was computed from. Perturbation never changes it.
enum class Origin { source, target };

const char* origin_name(Origin o);
Origin origin_from_name(const std::string& name);

// Split-point tags: 0 is the pixel level (the raw image), k in [1, B] is the
// activation after encoder block k.
std::string layer_name(int layer);
int layer_from_name(const std::string& name);

// Intermediate activation at a split point, carrying its domain of origin.
struct FeatureMap {
  Tensor values;
  Origin origin = Origin::source;
  int layer = 0;
};

}  // namespace fsap
