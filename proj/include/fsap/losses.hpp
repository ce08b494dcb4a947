#pragma once

#include <cstdint>
#include <vector>

#include "fsap/autodiff.hpp"
#include "fsap/tensor.hpp"

namespace fsap {

// Label value marking pixels excluded from every loss and metric.
inline constexpr int kIgnoreLabel = 255;

// Per-pixel class probabilities, H x W x C. Each pixel's class vector sums
// to 1 within 1e-5 and every entry lies in [0, 1].
struct SoftmaxMap {
  Tensor values;
};

// Integer class labels, row-major H x W. Entries are either a class id in
// [0, C) or kIgnoreLabel.
struct LabelMap {
  int h = 0;
  int w = 0;
  std::vector<int> values;

  int at(int y, int x) const { return values[y * w + x]; }
  int& at(int y, int x) { return values[y * w + x]; }
  int num_valid() const;
};

// Discriminator output: probability that the input came from the source
// domain, h_D x w_D. Values are clamped to [1e-7, 1 - 1e-7] before any log.
struct DomainMap {
  Tensor values;
};

void validate_softmax_map(const Tensor& p);
void validate_label_map(const LabelMap& y, int num_classes);
void validate_domain_map(const Tensor& d);

// Lovasz-extension gradient of the Jaccard loss for a binary ground-truth
// vector given in descending-error order. Throws on empty input.
std::vector<double> lovasz_grad(const std::vector<double>& gt_sorted);

// Inverse-frequency class weights from per-class pixel counts, normalized to
// mean 1 over the classes that appear; absent classes get weight 1.
std::vector<double> inverse_frequency_weights(const std::vector<std::int64_t>& class_counts);

// Graph-building losses. p arguments are H x W x C probability maps, d
// arguments are discriminator outputs. Every result is a scalar Var.
Var cross_entropy(Var p, const LabelMap& y);
Var weighted_cross_entropy(Var p, const LabelMap& y, const std::vector<double>& class_weights);
Var lovasz_softmax_class(Var p, const LabelMap& y, int cls);
Var lovasz_softmax(Var p, const LabelMap& y);
Var adversarial_loss(Var d_source, Var d_target);
Var feature_l2(Var f_star, Var f);
Var consistency_loss(Var p_t, Var p_t_star);
Var entropy_loss(Var p);
Var discriminator_loss(Var d_s, Var d_t, Var d_s_star, Var d_t_star);

// Classifier objective: both source segmentation terms plus the consistency
// and entropy regularizers weighted by (alpha1, alpha2, alpha3).
struct ClassifierLossParts {
  Var total;
  Var seg_star;
  Var seg;
  Var consistency;
  Var entropy_t;
  Var entropy_t_star;
};
ClassifierLossParts classifier_loss_parts(Var p_s, Var p_s_star, const LabelMap& y_s,
                                          Var p_t, Var p_t_star,
                                          double alpha1, double alpha2, double alpha3);
Var classifier_loss(Var p_s, Var p_s_star, const LabelMap& y_s,
                    Var p_t, Var p_t_star,
                    double alpha1, double alpha2, double alpha3);

// Value-only conveniences over the typed maps.
double cross_entropy(const SoftmaxMap& p, const LabelMap& y);
double weighted_cross_entropy(const SoftmaxMap& p, const LabelMap& y,
                              const std::vector<double>& class_weights);
double lovasz_softmax(const SoftmaxMap& p, const LabelMap& y);
double adversarial_loss(const DomainMap& d_source, const DomainMap& d_target);
double feature_l2(const Tensor& f_star, const Tensor& f);
double consistency_loss(const SoftmaxMap& p_t, const SoftmaxMap& p_t_star);
double entropy_loss(const SoftmaxMap& p);
double discriminator_loss(const DomainMap& d_s, const DomainMap& d_t,
                          const DomainMap& d_s_star, const DomainMap& d_t_star);

}  // namespace fsap
