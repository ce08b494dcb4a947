#include "fsap/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace fsap {

SgdOptimizer::SgdOptimizer(std::vector<NamedParam> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.var.shape(), 0.0);
}

void SgdOptimizer::step(double lr) {
  for (size_t i = 0; i < params_.size(); ++i) {
    auto node = params_[i].var.node();
    if (node->grad.empty()) continue;
    Tensor& w = node->value;
    Tensor& g = node->grad;
    Tensor& buf = velocity_[i];
    for (int k = 0; k < w.size(); ++k) {
      double grad = g[k] + weight_decay_ * w[k];
      buf[k] = momentum_ * buf[k] + grad;
      w[k] -= lr * buf[k];
    }
    node->grad = Tensor();
  }
}

void SgdOptimizer::save_state(Checkpoint& ckpt, const std::string& prefix) const {
  for (size_t i = 0; i < params_.size(); ++i)
    ckpt.tensors.emplace_back(prefix + params_[i].name + ".velocity", velocity_[i]);
}

void SgdOptimizer::load_state(const Checkpoint& ckpt, const std::string& prefix) {
  for (size_t i = 0; i < params_.size(); ++i) {
    const Tensor& t = ckpt.require(prefix + params_[i].name + ".velocity");
    if (!t.same_shape(velocity_[i]))
      throw std::runtime_error("optimizer state shape mismatch for " + params_[i].name);
    velocity_[i] = t;
  }
}

AdamOptimizer::AdamOptimizer(std::vector<NamedParam> params, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape(), 0.0);
    v_.emplace_back(p.var.shape(), 0.0);
  }
}

void AdamOptimizer::step(double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto node = params_[i].var.node();
    if (node->grad.empty()) continue;
    Tensor& w = node->value;
    Tensor& g = node->grad;
    for (int k = 0; k < w.size(); ++k) {
      m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g[k];
      v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g[k] * g[k];
      double mhat = m_[i][k] / bc1;
      double vhat = v_[i][k] / bc2;
      w[k] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
    node->grad = Tensor();
  }
}

void AdamOptimizer::save_state(Checkpoint& ckpt, const std::string& prefix) const {
  for (size_t i = 0; i < params_.size(); ++i) {
    ckpt.tensors.emplace_back(prefix + params_[i].name + ".m", m_[i]);
    ckpt.tensors.emplace_back(prefix + params_[i].name + ".v", v_[i]);
  }
  ckpt.tensors.emplace_back(prefix + "t", Tensor::scalar(static_cast<double>(t_)));
}

void AdamOptimizer::load_state(const Checkpoint& ckpt, const std::string& prefix) {
  for (size_t i = 0; i < params_.size(); ++i) {
    const Tensor& tm = ckpt.require(prefix + params_[i].name + ".m");
    const Tensor& tv = ckpt.require(prefix + params_[i].name + ".v");
    if (!tm.same_shape(m_[i]) || !tv.same_shape(v_[i]))
      throw std::runtime_error("optimizer state shape mismatch for " + params_[i].name);
    m_[i] = tm;
    v_[i] = tv;
  }
  t_ = static_cast<long long>(ckpt.require(prefix + "t")[0]);
}

}  // namespace fsap
