#include "fsap/gradients.hpp"

#include <cmath>
#include <stdexcept>

namespace fsap {

const char* objective_name(Objective o) {
  switch (o) {
    case Objective::seg: return "seg";
    case Objective::adv: return "adv";
    case Objective::l2: return "l2";
  }
  return "?";
}

Objective objective_from_name(const std::string& name) {
  if (name == "seg") return Objective::seg;
  if (name == "adv") return Objective::adv;
  if (name == "l2") return Objective::l2;
  throw std::invalid_argument("unknown objective: " + name);
}

double log_intensity(const Tensor& g) {
  return std::log10(g.l1_norm() + 1e-30);
}

}  // namespace fsap
