#pragma once

#include <string>
#include <vector>

#include "fsap/checkpoint.hpp"
#include "fsap/models.hpp"

namespace fsap {

// Momentum SGD with decoupled-from-nothing classic weight decay (decay is
// added to the gradient, as the reference implementations do). Parameters
// whose grad is unset this step are skipped; grads are cleared after use.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<NamedParam> params, double momentum, double weight_decay);

  void step(double lr);

  // Velocity buffers, prefixed for checkpoint embedding.
  void save_state(Checkpoint& ckpt, const std::string& prefix) const;
  void load_state(const Checkpoint& ckpt, const std::string& prefix);

 private:
  std::vector<NamedParam> params_;
  std::vector<Tensor> velocity_;
  double momentum_;
  double weight_decay_;
};

// Adam with bias correction; weight decay intentionally absent.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<NamedParam> params, double beta1, double beta2, double eps);

  void step(double lr);

  void save_state(Checkpoint& ckpt, const std::string& prefix) const;
  void load_state(const Checkpoint& ckpt, const std::string& prefix);

 private:
  std::vector<NamedParam> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long long t_ = 0;
  double beta1_;
  double beta2_;
  double eps_;
};

}  // namespace fsap
