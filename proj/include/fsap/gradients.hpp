#pragma once

#include <string>

#include "fsap/tensor.hpp"

namespace fsap {

// Attack objectives whose gradients drive feature perturbation.
enum class Objective { seg, adv, l2 };

const char* objective_name(Objective o);
Objective objective_from_name(const std::string& name);

// Gradient of one attack objective w.r.t. a feature map.
struct GradientMap {
  std::string target;  // identity of the feature map differentiated
  Objective objective = Objective::adv;
  Tensor values;
};

// log10(|g|_1 + 1e-30); the intensity diagnostic for generation traces.
double log_intensity(const Tensor& g);
inline double log_intensity(const GradientMap& g) { return log_intensity(g.values); }

}  // namespace fsap
