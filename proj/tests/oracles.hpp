#pragma once

// Test-side oracles, written independently of the library's computation
// paths: central finite differences, set-counted Jaccard, and the prefix
// interpolation form of the Lovász extension.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "fsap/losses.hpp"

namespace oracles {

// Central difference of a pure scalar function at one coordinate.
inline double fd_derivative(const std::function<double(const fsap::Tensor&)>& f, fsap::Tensor x,
                            size_t i, double h = 1e-6) {
  double orig = x[i];
  x[i] = orig + h;
  double up = f(x);
  x[i] = orig - h;
  double dn = f(x);
  return (up - dn) / (2.0 * h);
}

inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

// Analytic gradient (reverse mode) of loss_of at every coordinate of x.
inline fsap::Tensor ad_gradient(const std::function<fsap::Var(fsap::Var)>& loss_of,
                                const fsap::Tensor& x) {
  fsap::Var leaf = fsap::Var::leaf(x, true);
  fsap::Var loss = loss_of(leaf);
  fsap::backward(loss);
  return leaf.grad();
}

// Checks d loss/d x against central differences at the given coordinates.
// Returns the worst relative error seen.
inline double max_fd_error(const std::function<fsap::Var(fsap::Var)>& loss_of,
                           const fsap::Tensor& x, const std::vector<size_t>& coords,
                           double h = 1e-6) {
  fsap::Tensor g = ad_gradient(loss_of, x);
  auto value = [&](const fsap::Tensor& t) {
    return loss_of(fsap::Var::leaf(t)).value()[0];
  };
  double worst = 0.0;
  for (size_t i : coords) worst = std::max(worst, rel_err(g[i], fd_derivative(value, x, i, h)));
  return worst;
}

// Jaccard index of two binary masks by direct set counting.
inline double jaccard(const std::vector<int>& gt_mask, const std::vector<int>& pred_mask) {
  int inter = 0, uni = 0;
  for (size_t i = 0; i < gt_mask.size(); ++i) {
    inter += gt_mask[i] && pred_mask[i];
    uni += gt_mask[i] || pred_mask[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

// Jaccard loss of an error set: 1 - TP/union, counted from scratch.
inline double jaccard_loss_of_errors(const std::vector<int>& gt_mask,
                                     const std::vector<int>& in_error) {
  int tp = 0, uni = 0;
  for (size_t i = 0; i < gt_mask.size(); ++i) {
    tp += gt_mask[i] && !in_error[i];
    uni += gt_mask[i] || in_error[i];
  }
  return uni == 0 ? 0.0 : 1.0 - static_cast<double>(tp) / uni;
}

// Lovász extension of the Jaccard loss at error vector m, via the standard
// prefix interpolation: sort m descending, walk prefixes of the sorted
// order, weight each element by the set-function increment.
inline double lovasz_extension_bruteforce(const std::vector<int>& gt_mask,
                                          const std::vector<double>& m) {
  size_t n = m.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return m[a] > m[b]; });
  std::vector<int> in_error(n, 0);
  double prev = jaccard_loss_of_errors(gt_mask, in_error);
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    in_error[order[i]] = 1;
    double cur = jaccard_loss_of_errors(gt_mask, in_error);
    total += m[order[i]] * (cur - prev);
    prev = cur;
  }
  return total;
}

// Uniform Dirichlet sample bounded away from the simplex boundary, so logs
// and sorting margins stay finite-difference friendly.
inline fsap::SoftmaxMap random_softmax_map(fsap::Rng& rng, int h, int w, int c,
                                           double floor = 0.15) {
  fsap::Tensor t({h, w, c});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      std::vector<double> g(static_cast<size_t>(c));
      for (int k = 0; k < c; ++k) {
        g[static_cast<size_t>(k)] = -std::log(1.0 - rng.uniform()) + floor;
        sum += g[static_cast<size_t>(k)];
      }
      for (int k = 0; k < c; ++k) t.at3(y, x, k) = g[static_cast<size_t>(k)] / sum;
    }
  return {t};
}

inline fsap::LabelMap random_label_map(fsap::Rng& rng, int h, int w, int c,
                                       double ignore_prob = 0.0) {
  fsap::LabelMap y;
  y.h = h;
  y.w = w;
  y.values.resize(static_cast<size_t>(h) * static_cast<size_t>(w));
  for (auto& v : y.values)
    v = rng.uniform() < ignore_prob ? fsap::kIgnoreLabel : rng.uniform_int(c);
  return y;
}

// Smallest gap between adjacent sorted per-class errors; lovasz FD checks
// need this above the FD step so the sort permutation is locally constant.
inline double min_sort_margin(const fsap::SoftmaxMap& p, const fsap::LabelMap& y) {
  const auto& shape = p.values.shape();
  int h = shape[0], w = shape[1], c = shape[2];
  double margin = 1e9;
  for (int k = 0; k < c; ++k) {
    std::vector<double> errors;
    bool present = false;
    for (int i = 0; i < h * w; ++i) {
      int g = y.values[static_cast<size_t>(i)];
      if (g == fsap::kIgnoreLabel) continue;
      double pk = p.values[static_cast<size_t>(i * c + k)];
      errors.push_back(g == k ? 1.0 - pk : pk);
      present = present || g == k;
    }
    if (!present || errors.size() < 2) continue;
    std::sort(errors.begin(), errors.end());
    for (size_t i = 1; i < errors.size(); ++i)
      margin = std::min(margin, errors[i] - errors[i - 1]);
  }
  return margin;
}

}  // namespace oracles
