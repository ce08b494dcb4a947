#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace fsap {

// Dense row-major tensor of doubles. Image-like data uses H x W x C layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, double fill);
  static Tensor from(std::vector<int> shape, std::vector<double> values);
  static Tensor scalar(double v);

  const std::vector<int>& shape() const { return shape_; }
  int size() const { return static_cast<int>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int i) const { return data_[static_cast<size_t>(i)]; }

  // Index helper for 3-d tensors (H x W x C).
  int idx3(int y, int x, int c) const {
    return (y * shape_[1] + x) * shape_[2] + c;
  }
  double& at3(int y, int x, int c) { return data_[static_cast<size_t>(idx3(y, x, c))]; }
  double at3(int y, int x, int c) const { return data_[static_cast<size_t>(idx3(y, x, c))]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool is_scalar() const { return data_.size() == 1; }
  bool all_finite() const;

  void fill(double v);
  void set_shape(std::vector<int> shape);  // element count must be unchanged
  double l1_norm() const;
  double l2_norm() const;
  double linf_norm() const;
  double sum() const;

  // Elementwise -1/0/+1 with sign(0) = 0.
  static Tensor sign(const Tensor& t);

  // FNV-1a over the raw byte representation; bitwise-equality fingerprint.
  uint64_t bit_checksum() const;

  std::string shape_str() const;

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

int shape_size(const std::vector<int>& shape);

// splitmix64 step; used to derive independent sub-seeds.
uint64_t mix_seed(uint64_t base, uint64_t salt);

uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 1469598103934665603ull);
uint64_t fnv1a64_str(const std::string& s);

// Deterministic RNG with portable uniform/normal draws. The standard
// distributions are implementation-defined, so draws are derived from
// raw mt19937_64 output directly.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // [0, n)
  int uniform_int(int n);

  // Box-Muller without cached spare so the state is fully captured by gen_.
  double normal();

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 gen_;
};

}  // namespace fsap
