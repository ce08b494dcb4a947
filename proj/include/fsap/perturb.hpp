#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "fsap/feature_map.hpp"
#include "fsap/gradients.hpp"
#include "fsap/losses.hpp"
#include "fsap/models.hpp"

namespace fsap {

enum class AttackMethod { none, fgspm, i_fgsm, mi_fgspm, i_fgspm };

const char* attack_method_name(AttackMethod m);
AttackMethod attack_method_from_name(const std::string& name);

struct PerturbConfig {
  AttackMethod method = AttackMethod::i_fgspm;
  int k = 3;            // attack iterations
  double eps1 = 0.01;   // adversarial-confusion step intensity
  double eps2 = 0.002;  // L2-proximity step intensity
  double eps3 = 0.011;  // segmentation-degradation step intensity (source only)
  double beta1 = 1.0;   // pre-sign trade-offs for the summed-gradient method
  double beta2 = 1.0;
  double beta3 = 1.0;
  double mu = 1.0;  // momentum decay for the momentum variant
  int layer = 4;    // split point the features come from; 0 = pixel level
};

// One row of the per-iteration gradient-magnitude diagnostic.
struct GradientIntensityRecord {
  int iter = 0;  // outer training iteration, stamped by the caller
  int k = 0;     // attack iteration, 1-based
  Objective objective = Objective::adv;
  double log10_l1_norm = 0.0;
};

// Models the attack differentiates through; parameters are read, never
// written. labels must be set for source-origin maps and null for target.
struct AttackContext {
  const SegmentationModel* model = nullptr;
  const Discriminator* discriminator = nullptr;
  const LabelMap* labels = nullptr;
  int iter = 0;
};

// Gradients of each attack objective w.r.t. f_star at its current value:
// the origin's adversarial-confusion term, the L2 distance to f, and for
// source-origin maps the segmentation loss against y_s.
std::vector<GradientMap> attack_gradients(const FeatureMap& f_star, const FeatureMap& f,
                                          const SegmentationModel& model,
                                          const Discriminator& discriminator,
                                          const LabelMap* y_s);

// Summed-gradient baseline: K iterations of a single sign over the weighted
// gradient sum, shared step eps1+eps2+eps3.
FeatureMap i_fgsm_generate(const FeatureMap& f, const PerturbConfig& cfg,
                           const AttackContext& ctx,
                           std::vector<GradientIntensityRecord>* records = nullptr);

// Sign-preposed single steps: each objective contributes its own signed step
// before any weighting, so no objective's magnitude can mask another's.
FeatureMap i_fgspm_step_target(const FeatureMap& f_k, const FeatureMap& f,
                               const PerturbConfig& cfg, const AttackContext& ctx);
FeatureMap i_fgspm_step_source(const FeatureMap& f_k, const FeatureMap& f, const LabelMap& y_s,
                               const PerturbConfig& cfg, const AttackContext& ctx);

struct AdversarialResult {
  FeatureMap feature;
  std::vector<GradientIntensityRecord> records;
};

// Dispatches on cfg.method and emits the per-iteration diagnostic records.
AdversarialResult generate_adversarial(const FeatureMap& f, const PerturbConfig& cfg,
                                       const AttackContext& ctx);

nlohmann::json to_json(const PerturbConfig& cfg);
PerturbConfig perturb_config_from_json(const nlohmann::json& j);

void write_gradient_intensity_csv(const std::vector<GradientIntensityRecord>& records,
                                  const std::string& path);
std::vector<GradientIntensityRecord> read_gradient_intensity_csv(const std::string& path);

}  // namespace fsap
