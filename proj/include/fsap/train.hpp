#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fsap/checkpoint.hpp"
#include "fsap/data.hpp"
#include "fsap/models.hpp"
#include "fsap/optim.hpp"
#include "fsap/perturb.hpp"

namespace fsap {

struct TrainConfig {
  ModelConfig model;
  DiscriminatorConfig disc;

  double alpha1 = 0.2;    // consistency weight
  double alpha2 = 0.002;  // target entropy weight
  double alpha3 = 0.0005; // perturbed-target entropy weight

  double lr_task = 2.5e-4;  // SGD for the segmentation nets
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_disc = 1e-4;  // Adam for the discriminator
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double poly_power = 0.9;

  int max_iter = 5000;
  int pretrain_iter = 800;  // supervised step-1 iterations
  int batch_size = 4;
  uint64_t seed = 1;

  PerturbConfig perturb;

  // Component toggles for the adaptation phase.
  bool perturbation = true;
  bool lovasz = true;   // segmentation terms use the IoU surrogate instead of CE
  bool entropy = true;  // target entropy regularizers

  bool pretrain_lovasz = false;  // add the IoU surrogate during pretraining

  // Baseline selector: none | source_only | asn | asn_weighted_ce | asn_lovasz
  std::string baseline = "none";
  double asn_lambda_adv = 0.001;  // confusion weight of the alignment baseline
};

// One (iteration, name, value) row per logged quantity.
struct MetricRow {
  int iter = 0;
  std::string name;
  double value = 0.0;
};

struct MetricsLog {
  std::vector<MetricRow> rows;

  void add(int iter, const std::string& name, double value) { rows.push_back({iter, name, value}); }
  void write_csv(const std::string& path) const;
  static MetricsLog read_csv(const std::string& path);
};

// Everything a phase needs to continue: models, optimizer state, iteration
// counter, RNG streams, and the logs produced so far.
struct TrainState {
  std::unique_ptr<SegmentationModel> model;
  std::unique_ptr<Discriminator> disc;  // created on first use
  std::unique_ptr<SgdOptimizer> task_opt;
  std::unique_ptr<AdamOptimizer> disc_opt;
  std::string phase = "init";  // pretrain | adapt | asn
  int iteration = 0;           // completed iterations within the phase
  std::string batch_rng_s;     // serialized RNG stream states
  std::string batch_rng_t;
  MetricsLog metrics;
  std::vector<GradientIntensityRecord> grad_records;
};

double poly_lr(double base, int iter, int max_iter, double power);

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
uint64_t train_config_hash(const TrainConfig& cfg);

// Step 1: supervised training of G and F on the source domain. The result
// evaluated as-is is the source-only baseline. Passing a loaded state of the
// same phase resumes where it stopped. stop_iter > 0 interrupts the run at
// that iteration while the lr schedule keeps its cfg.max_iter horizon, so a
// later resume reproduces the uninterrupted run bit-for-bit.
TrainState pretrain_source(const Dataset& ds_s, const TrainConfig& cfg,
                           std::optional<TrainState> resume = std::nullopt, int stop_iter = 0);

// Steps 2+3 alternation: per batch, generate adversarial features, update F
// on the combined objective, then update D on origin-labeled maps. G must
// stay frozen while perturbation is on; G parameters never change here. A
// state in another phase starts adaptation fresh; a mid-adapt state resumes.
TrainState adapt(TrainState state, const Dataset& ds_s, const Dataset& ds_t,
                 const TrainConfig& cfg, int stop_iter = 0);

// Output-space alignment baseline: G+F trained on source segmentation plus a
// discriminator-confusion term on target maps; D adversarially in step.
TrainState train_asn_baseline(const Dataset& ds_s, const Dataset& ds_t, const TrainConfig& cfg,
                              std::optional<TrainState> resume = std::nullopt, int stop_iter = 0);

// Full-state serialization: parameters, optimizer buffers, RNG streams, and
// phase bookkeeping. Pass an empty phase to keep the state's own tag.
Checkpoint pack_train_state(const TrainState& state, const TrainConfig& cfg,
                            const std::string& phase = "");
TrainState unpack_train_state(const Checkpoint& ck, const TrainConfig& cfg,
                              const std::string& expected_phase = "");
void save_train_state(const TrainState& state, const TrainConfig& cfg, const std::string& phase,
                      const std::string& path);
TrainState load_train_state(const std::string& path, const TrainConfig& cfg,
                            const std::string& expected_phase = "");

}  // namespace fsap
