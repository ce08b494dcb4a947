#include "fsap/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace fsap {

int shape_size(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor shape extents must be positive");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_size(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, double fill) : Tensor(std::move(shape)) {
  this->fill(fill);
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
  Tensor t;
  if (static_cast<int>(values.size()) != shape_size(shape))
    throw std::invalid_argument("tensor value count does not match shape");
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

void Tensor::set_shape(std::vector<int> shape) {
  if (shape_size(shape) != size())
    throw std::invalid_argument("set_shape: element count mismatch");
  shape_ = std::move(shape);
}

double Tensor::l1_norm() const {
  double s = 0;
  for (double v : data_) s += std::fabs(v);
  return s;
}

double Tensor::l2_norm() const {
  double s = 0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

double Tensor::linf_norm() const {
  double m = 0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

double Tensor::sum() const {
  double s = 0;
  for (double v : data_) s += v;
  return s;
}

Tensor Tensor::sign(const Tensor& t) {
  Tensor out(t.shape_);
  for (int i = 0; i < t.size(); ++i) {
    double v = t[i];
    out[i] = v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
  }
  return out;
}

uint64_t Tensor::bit_checksum() const {
  uint64_t h = fnv1a64(data_.data(), data_.size() * sizeof(double));
  return fnv1a64(shape_.data(), shape_.size() * sizeof(int), h);
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << "]";
  return os.str();
}

uint64_t mix_seed(uint64_t base, uint64_t salt) {
  uint64_t z = base + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h) {
  const unsigned char* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t fnv1a64_str(const std::string& s) { return fnv1a64(s.data(), s.size()); }

int Rng::uniform_int(int n) {
  if (n <= 0) throw std::invalid_argument("uniform_int needs n > 0");
  // Lemire reduction; deterministic and unbiased enough for sampling.
  return static_cast<int>((static_cast<__uint128_t>(gen_()) * static_cast<uint64_t>(n)) >> 64);
}

double Rng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  while (u1 <= 1e-300) u1 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << gen_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> gen_;
  if (!is) throw std::runtime_error("invalid rng state string");
}

}  // namespace fsap
