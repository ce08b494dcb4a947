#include "fsap/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fsap {
namespace {

constexpr double kDomainEps = 1e-7;   // keeps discriminator logs finite
constexpr double kProbFloor = 1e-30;  // keeps label-prob logs finite

void require_prob_map(const Var& p, const char* who) {
  if (p.shape().size() != 3)
    throw std::invalid_argument(std::string(who) + ": expected an H x W x C map");
}

void require_matching_labels(const Var& p, const LabelMap& y, const char* who) {
  require_prob_map(p, who);
  if (p.shape()[0] != y.h || p.shape()[1] != y.w)
    throw std::invalid_argument(std::string(who) + ": label map shape mismatch");
}

// Flat indices into p of each valid pixel's true-class probability.
std::vector<int> valid_label_indices(const Var& p, const LabelMap& y, const char* who) {
  int c = p.shape()[2];
  std::vector<int> idx;
  idx.reserve(y.values.size());
  for (size_t i = 0; i < y.values.size(); ++i) {
    int label = y.values[i];
    if (label == kIgnoreLabel) continue;
    if (label < 0 || label >= c)
      throw std::invalid_argument(std::string(who) + ": label " + std::to_string(label) +
                                  " outside [0, " + std::to_string(c) + ")");
    idx.push_back(static_cast<int>(i) * c + label);
  }
  return idx;
}

Var neg_mean_log_clamped(Var d) {
  return scale(vmean(vlog(clamp(std::move(d), kDomainEps, 1.0 - kDomainEps))), -1.0);
}

}  // namespace

int LabelMap::num_valid() const {
  int n = 0;
  for (int v : values)
    if (v != kIgnoreLabel) ++n;
  return n;
}

void validate_softmax_map(const Tensor& p) {
  if (p.shape().size() != 3)
    throw std::invalid_argument("softmax map: expected an H x W x C tensor");
  int h = p.shape()[0], w = p.shape()[1], c = p.shape()[2];
  for (int pix = 0; pix < h * w; ++pix) {
    double sum = 0.0;
    for (int k = 0; k < c; ++k) {
      double v = p[pix * c + k];
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("softmax map: entry outside [0, 1] at pixel " +
                                    std::to_string(pix));
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-5)
      throw std::invalid_argument("softmax map: pixel " + std::to_string(pix) +
                                  " sums to " + std::to_string(sum));
  }
}

void validate_label_map(const LabelMap& y, int num_classes) {
  if (y.h <= 0 || y.w <= 0 || y.values.size() != static_cast<size_t>(y.h) * y.w)
    throw std::invalid_argument("label map: shape does not match value count");
  for (size_t i = 0; i < y.values.size(); ++i) {
    int v = y.values[i];
    if (v == kIgnoreLabel) continue;
    if (v < 0 || v >= num_classes)
      throw std::invalid_argument("label map: value " + std::to_string(v) + " at index " +
                                  std::to_string(i) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
  }
}

void validate_domain_map(const Tensor& d) {
  if (d.shape().size() != 2)
    throw std::invalid_argument("domain map: expected an h x w tensor");
  for (int i = 0; i < d.size(); ++i)
    if (!(d[i] >= 0.0 && d[i] <= 1.0))
      throw std::invalid_argument("domain map: entry outside [0, 1] at index " +
                                  std::to_string(i));
}

std::vector<double> lovasz_grad(const std::vector<double>& gt_sorted) {
  size_t n = gt_sorted.size();
  if (n == 0) throw std::invalid_argument("lovasz_grad: empty ground-truth vector");
  double gts = std::accumulate(gt_sorted.begin(), gt_sorted.end(), 0.0);
  std::vector<double> g(n);
  double cum_gt = 0.0, cum_bg = 0.0, prev_j = 0.0;
  for (size_t i = 0; i < n; ++i) {
    cum_gt += gt_sorted[i];
    cum_bg += 1.0 - gt_sorted[i];
    double intersection = gts - cum_gt;
    double uni = gts + cum_bg;
    double j = 1.0 - intersection / uni;
    g[i] = j - prev_j;
    prev_j = j;
  }
  return g;
}

std::vector<double> inverse_frequency_weights(const std::vector<std::int64_t>& class_counts) {
  double total = 0.0;
  int present = 0;
  for (std::int64_t c : class_counts) {
    if (c < 0) throw std::invalid_argument("inverse_frequency_weights: negative count");
    if (c > 0) {
      total += static_cast<double>(c);
      ++present;
    }
  }
  std::vector<double> w(class_counts.size(), 1.0);
  if (present == 0) return w;
  double raw_sum = 0.0;
  for (size_t i = 0; i < class_counts.size(); ++i)
    if (class_counts[i] > 0) raw_sum += total / static_cast<double>(class_counts[i]);
  double norm = raw_sum / present;  // rescales present-class weights to mean 1
  for (size_t i = 0; i < class_counts.size(); ++i)
    if (class_counts[i] > 0)
      w[i] = total / static_cast<double>(class_counts[i]) / norm;
  return w;
}

Var cross_entropy(Var p, const LabelMap& y) {
  require_matching_labels(p, y, "cross_entropy");
  std::vector<int> idx = valid_label_indices(p, y, "cross_entropy");
  if (idx.empty()) return Var::leaf(Tensor::scalar(0.0));
  double inv_n = 1.0 / static_cast<double>(idx.size());
  Var logs = vlog(clamp(gather(std::move(p), std::move(idx)), kProbFloor, 1.0));
  return scale(vsum(std::move(logs)), -inv_n);
}

Var weighted_cross_entropy(Var p, const LabelMap& y, const std::vector<double>& class_weights) {
  require_matching_labels(p, y, "weighted_cross_entropy");
  int c = p.shape()[2];
  if (class_weights.size() != static_cast<size_t>(c))
    throw std::invalid_argument("weighted_cross_entropy: expected one weight per class");
  for (double w : class_weights)
    if (!(w > 0.0)) throw std::invalid_argument("weighted_cross_entropy: non-positive weight");
  std::vector<int> idx = valid_label_indices(p, y, "weighted_cross_entropy");
  if (idx.empty()) return Var::leaf(Tensor::scalar(0.0));
  Tensor wt({static_cast<int>(idx.size())});
  for (size_t i = 0; i < idx.size(); ++i) wt[static_cast<int>(i)] = class_weights[idx[i] % c];
  double inv_n = 1.0 / static_cast<double>(idx.size());
  Var logs = vlog(clamp(gather(std::move(p), std::move(idx)), kProbFloor, 1.0));
  return scale(vsum(mul_const(std::move(logs), wt)), -inv_n);
}

Var lovasz_softmax_class(Var p, const LabelMap& y, int cls) {
  require_matching_labels(p, y, "lovasz_softmax");
  int c = p.shape()[2];
  if (cls < 0 || cls >= c) throw std::invalid_argument("lovasz_softmax: class out of range");

  std::vector<int> idx;
  std::vector<double> gt;
  for (size_t i = 0; i < y.values.size(); ++i) {
    int label = y.values[i];
    if (label == kIgnoreLabel) continue;
    idx.push_back(static_cast<int>(i) * c + cls);
    gt.push_back(label == cls ? 1.0 : 0.0);
  }
  if (idx.empty()) return Var::leaf(Tensor::scalar(0.0));
  int n = static_cast<int>(idx.size());

  // errors: 1 - p for foreground pixels, p for background pixels
  Tensor sgn({n}), shift({n});
  for (int i = 0; i < n; ++i) {
    sgn[i] = gt[static_cast<size_t>(i)] > 0.5 ? -1.0 : 1.0;
    shift[i] = gt[static_cast<size_t>(i)] > 0.5 ? 1.0 : 0.0;
  }
  Var errors = add(mul_const(gather(std::move(p), std::move(idx)), sgn), Var::leaf(shift));

  // Descending-error order; ties keep original pixel order for determinism.
  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  const Tensor& ev = errors.value();
  std::stable_sort(perm.begin(), perm.end(), [&ev](int a, int b) { return ev[a] > ev[b]; });

  std::vector<double> gt_sorted(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) gt_sorted[static_cast<size_t>(i)] = gt[static_cast<size_t>(perm[i])];
  std::vector<double> g = lovasz_grad(gt_sorted);
  Tensor gw = Tensor::from({n}, std::move(g));
  return vsum(mul_const(gather(std::move(errors), std::move(perm)), gw));
}

Var lovasz_softmax(Var p, const LabelMap& y) {
  require_matching_labels(p, y, "lovasz_softmax");
  int c = p.shape()[2];
  std::vector<bool> present(static_cast<size_t>(c), false);
  for (size_t i = 0; i < y.values.size(); ++i) {
    int label = y.values[i];
    if (label == kIgnoreLabel) continue;
    if (label < 0 || label >= c)
      throw std::invalid_argument("lovasz_softmax: label outside [0, " + std::to_string(c) + ")");
    present[static_cast<size_t>(label)] = true;
  }
  Var total = Var::leaf(Tensor::scalar(0.0));
  int n_present = 0;
  for (int cls = 0; cls < c; ++cls) {
    if (!present[static_cast<size_t>(cls)]) continue;
    total = add(std::move(total), lovasz_softmax_class(p, y, cls));
    ++n_present;
  }
  if (n_present == 0) return Var::leaf(Tensor::scalar(0.0));
  return scale(std::move(total), 1.0 / n_present);
}

Var adversarial_loss(Var d_source, Var d_target) {
  Tensor ones(d_target.shape(), 1.0);
  Var one_minus = sub(Var::leaf(ones), std::move(d_target));
  return add(neg_mean_log_clamped(std::move(d_source)), neg_mean_log_clamped(std::move(one_minus)));
}

Var feature_l2(Var f_star, Var f) {
  if (f_star.shape() != f.shape())
    throw std::invalid_argument("feature_l2: shape mismatch");
  Var diff = sub(std::move(f_star), std::move(f));
  Var diff2 = mul(diff, diff);
  return sqrt_guarded(vsum(std::move(diff2)));
}

Var consistency_loss(Var p_t, Var p_t_star) {
  require_prob_map(p_t, "consistency_loss");
  if (p_t.shape() != p_t_star.shape())
    throw std::invalid_argument("consistency_loss: shape mismatch");
  Var diff = sub(std::move(p_t), std::move(p_t_star));
  Var diff2 = mul(diff, diff);
  return vmean(sqrt_guarded(channel_sum(std::move(diff2))));
}

Var entropy_loss(Var p) {
  require_prob_map(p, "entropy_loss");
  int h = p.shape()[0], w = p.shape()[1], c = p.shape()[2];
  if (c < 2) throw std::invalid_argument("entropy_loss: need at least two classes");
  Var logs = vlog(clamp(p, 1e-12, 1.0));  // 0 log 0 evaluates to 0 via the floor
  Var plogp = mul(std::move(p), std::move(logs));
  return scale(vsum(std::move(plogp)), -1.0 / (std::log(static_cast<double>(c)) * h * w));
}

Var discriminator_loss(Var d_s, Var d_t, Var d_s_star, Var d_t_star) {
  return add(adversarial_loss(std::move(d_s), std::move(d_t)),
             adversarial_loss(std::move(d_s_star), std::move(d_t_star)));
}

ClassifierLossParts classifier_loss_parts(Var p_s, Var p_s_star, const LabelMap& y_s,
                                          Var p_t, Var p_t_star,
                                          double alpha1, double alpha2, double alpha3) {
  ClassifierLossParts parts{
      Var::leaf(Tensor::scalar(0.0)),
      lovasz_softmax(std::move(p_s_star), y_s),
      lovasz_softmax(std::move(p_s), y_s),
      consistency_loss(p_t, p_t_star),
      entropy_loss(std::move(p_t)),
      entropy_loss(std::move(p_t_star)),
  };
  parts.total = add(add(parts.seg_star, parts.seg),
                    add(add(scale(parts.consistency, alpha1), scale(parts.entropy_t, alpha2)),
                        scale(parts.entropy_t_star, alpha3)));
  return parts;
}

Var classifier_loss(Var p_s, Var p_s_star, const LabelMap& y_s,
                    Var p_t, Var p_t_star,
                    double alpha1, double alpha2, double alpha3) {
  return classifier_loss_parts(std::move(p_s), std::move(p_s_star), y_s,
                               std::move(p_t), std::move(p_t_star), alpha1, alpha2, alpha3)
      .total;
}

double cross_entropy(const SoftmaxMap& p, const LabelMap& y) {
  return cross_entropy(Var::leaf(p.values), y).value()[0];
}

double weighted_cross_entropy(const SoftmaxMap& p, const LabelMap& y,
                              const std::vector<double>& class_weights) {
  return weighted_cross_entropy(Var::leaf(p.values), y, class_weights).value()[0];
}

double lovasz_softmax(const SoftmaxMap& p, const LabelMap& y) {
  return lovasz_softmax(Var::leaf(p.values), y).value()[0];
}

double adversarial_loss(const DomainMap& d_source, const DomainMap& d_target) {
  return adversarial_loss(Var::leaf(d_source.values), Var::leaf(d_target.values)).value()[0];
}

double feature_l2(const Tensor& f_star, const Tensor& f) {
  return feature_l2(Var::leaf(f_star), Var::leaf(f)).value()[0];
}

double consistency_loss(const SoftmaxMap& p_t, const SoftmaxMap& p_t_star) {
  return consistency_loss(Var::leaf(p_t.values), Var::leaf(p_t_star.values)).value()[0];
}

double entropy_loss(const SoftmaxMap& p) {
  return entropy_loss(Var::leaf(p.values)).value()[0];
}

double discriminator_loss(const DomainMap& d_s, const DomainMap& d_t,
                          const DomainMap& d_s_star, const DomainMap& d_t_star) {
  return discriminator_loss(Var::leaf(d_s.values), Var::leaf(d_t.values),
                            Var::leaf(d_s_star.values), Var::leaf(d_t_star.values))
      .value()[0];
}

}  // namespace fsap
