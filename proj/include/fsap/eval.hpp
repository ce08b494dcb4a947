#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsap/train.hpp"

namespace fsap {

// Rows index ground truth, columns prediction; ignore pixels never counted.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::int64_t> counts;  // row-major C x C

  explicit ConfusionMatrix(int c);
  std::int64_t& at(int gt, int pred) { return counts[static_cast<size_t>(gt * num_classes + pred)]; }
  std::int64_t at(int gt, int pred) const {
    return counts[static_cast<size_t>(gt * num_classes + pred)];
  }
  std::int64_t total() const;
  void merge(const ConfusionMatrix& other);
};

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int num_classes);

// Classes with zero union carry no evidence and are excluded from the mean.
struct IouReport {
  std::vector<double> per_class;  // 0 for non-evaluable classes
  std::vector<bool> evaluable;
  double miou = 0.0;
};

IouReport iou(const ConfusionMatrix& cm);

// Channel argmax; ties resolve to the lowest class index.
LabelMap predict(const SegmentationModel& model, const Tensor& image);

ConfusionMatrix evaluate_confusion(const SegmentationModel& model, const Dataset& ds);
IouReport evaluate_dataset(const SegmentationModel& model, const Dataset& ds);

double tail_mean_iou(const IouReport& rep, const std::vector<int>& tail_classes);

// One trained-and-scored configuration of the component/attack/layer grid.
struct AblationConfig {
  std::string name;
  TrainConfig train;
  int pretrain_iters = 0;  // supervised step-1 iterations before adaptation
};

struct AblationResult {
  std::string name;
  bool ok = false;
  std::string error;
  std::vector<double> per_class;
  std::vector<bool> evaluable;
  double miou = 0.0;
  double tail_mean = 0.0;
};

// Trains and scores every config against the same datasets. A config failure
// is recorded in its row; the run continues. Pretrained starting points are
// shared between rows whose supervised phase is identical.
std::vector<AblationResult> ablation_run(const std::vector<AblationConfig>& grid,
                                         const Dataset& train_s, const Dataset& train_t,
                                         const Dataset& eval_t,
                                         const std::vector<int>& tail_classes);

// The 8-row component grid: every on/off combination of perturbation,
// IoU-surrogate segmentation terms, and entropy regularizers.
std::vector<AblationConfig> component_grid(const TrainConfig& base, int pretrain_iters);

// One row per attack method, all components on.
std::vector<AblationConfig> attack_method_grid(const TrainConfig& base, int pretrain_iters);

// One row per perturbed layer; the model split moves with it.
std::vector<AblationConfig> split_layer_grid(const TrainConfig& base, int pretrain_iters,
                                             const std::vector<int>& layers);

std::string format_ablation_table(const std::vector<AblationResult>& results,
                                  const std::vector<std::string>& class_names);
void write_ablation_csv(const std::string& path, const std::vector<AblationResult>& results,
                        const std::vector<std::string>& class_names);

// Per-tail-class IoU with deltas against the first (reference) result.
struct TailRow {
  std::string config;
  std::vector<double> tail_iou;
  std::vector<double> tail_delta;
  double tail_mean = 0.0;
  double tail_mean_delta = 0.0;
};

std::vector<TailRow> tail_report(const std::vector<AblationResult>& results,
                                 const std::vector<std::string>& class_names,
                                 const std::vector<std::string>& tail_class_names);
std::string format_tail_report(const std::vector<TailRow>& rows,
                               const std::vector<std::string>& tail_class_names);

// Per-objective log10 intensity curves over generation steps, written as an
// SVG chart plus the underlying CSV.
void plot_gradient_intensity(const std::vector<GradientIntensityRecord>& records,
                             const std::string& image_path, const std::string& csv_path);

}  // namespace fsap
