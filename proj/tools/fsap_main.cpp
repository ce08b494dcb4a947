#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fsap/config.hpp"
#include "fsap/eval.hpp"

namespace fs = std::filesystem;
using namespace fsap;

namespace {

// One run per output directory; a leftover lock from a crashed run must be
// removed by hand.
struct RunLock {
  fs::path path;

  explicit RunLock(const fs::path& dir) : path(dir / ".lock") {
    std::FILE* f = std::fopen(path.string().c_str(), "wx");
    if (!f)
      throw std::runtime_error("output directory " + dir.string() +
                               " is locked by another run (remove " + path.string() +
                               " if stale)");
    std::fclose(f);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path, ec);
  }
};

fs::path resolve_output_dir(const RunConfig& rc) {
  fs::path od = rc.output_dir;
  if (od.is_absolute()) return od;
  const char* root = std::getenv("FSAP_OUTPUT_ROOT");
  return (root && *root) ? fs::path(root) / od : od;
}

fs::path prepare_output(const RunConfig& rc) {
  fs::path out = resolve_output_dir(rc);
  fs::create_directories(out);
  return out;
}

void dump_effective_config(const RunConfig& rc, const fs::path& out) {
  save_run_config(rc, (out / "effective_config.json").string());
}

Dataset need_dataset(const fs::path& out, const std::string& name) {
  fs::path dir = out / "data" / name;
  if (!fs::exists(dir / "manifest.json"))
    throw std::runtime_error("missing dataset: " + dir.string() + " (run gen-data first)");
  return load_dataset(dir.string());
}

std::vector<int> tail_indices(const RunConfig& rc, const std::vector<std::string>& class_names) {
  std::vector<int> idx;
  for (const auto& tn : rc.eval.tail_class_names) {
    auto it = std::find(class_names.begin(), class_names.end(), tn);
    if (it == class_names.end())
      throw std::runtime_error("unknown tail class name in config: " + tn);
    idx.push_back(static_cast<int>(it - class_names.begin()));
  }
  return idx;
}

void print_distribution(const char* label, const Dataset& ds) {
  std::vector<double> dist = category_distribution(ds);
  std::printf("%s:", label);
  for (size_t k = 0; k < dist.size(); ++k)
    std::printf(" %s=%.4f", ds.class_names[k].c_str(), dist[k]);
  std::printf("\n");
}

int cmd_gen_data(const RunConfig& rc) {
  fs::path out = prepare_output(rc);
  RunLock lock(out);
  dump_effective_config(rc, out);
  Dataset src_train = generate_dataset(rc.data.source, 0, rc.data.train_count);
  Dataset src_eval = generate_dataset(rc.data.source, rc.data.train_count, rc.data.eval_count);
  Dataset tgt_train = generate_dataset(rc.data.target, 0, rc.data.train_count);
  Dataset tgt_eval = generate_dataset(rc.data.target, rc.data.train_count, rc.data.eval_count);
  save_dataset(src_train, (out / "data/source_train").string());
  save_dataset(src_eval, (out / "data/source_eval").string());
  save_dataset(tgt_train, (out / "data/target_train").string());
  save_dataset(tgt_eval, (out / "data/target_eval").string());
  print_distribution("source_train", src_train);
  print_distribution("target_train", tgt_train);
  std::printf("wrote 4 datasets under %s\n", (out / "data").string().c_str());
  return 0;
}

int cmd_pretrain(const RunConfig& rc) {
  fs::path out = prepare_output(rc);
  RunLock lock(out);
  dump_effective_config(rc, out);
  Dataset ds = need_dataset(out, "source_train");
  TrainConfig cfg = rc.train;
  cfg.max_iter = cfg.pretrain_iter;
  TrainState st = pretrain_source(ds, cfg);
  fs::create_directories(out / "checkpoints");
  save_train_state(st, cfg, "pretrain", (out / "checkpoints/pretrain.ckpt").string());
  st.metrics.write_csv((out / "metrics_pretrain.csv").string());
  std::printf("pretrained %d iterations; checkpoint at %s\n", cfg.max_iter,
              (out / "checkpoints/pretrain.ckpt").string().c_str());
  return 0;
}

int cmd_adapt(const RunConfig& rc, bool resume) {
  fs::path out = prepare_output(rc);
  RunLock lock(out);
  dump_effective_config(rc, out);
  Dataset ds_s = need_dataset(out, "source_train");
  Dataset ds_t = need_dataset(out, "target_train");

  TrainState st;
  if (resume) {
    fs::path ck = out / "checkpoints/adapt.ckpt";
    if (!fs::exists(ck)) throw std::runtime_error("missing checkpoint: " + ck.string());
    st = load_train_state(ck.string(), rc.train, "adapt");
  } else {
    fs::path ck = out / "checkpoints/pretrain.ckpt";
    if (!fs::exists(ck))
      throw std::runtime_error("missing checkpoint: " + ck.string() + " (run pretrain first)");
    st = load_train_state(ck.string(), rc.train, "pretrain");
    st.model->set_frozen(true);
  }

  st = adapt(std::move(st), ds_s, ds_t, rc.train);
  fs::create_directories(out / "checkpoints");
  save_train_state(st, rc.train, "", (out / "checkpoints/adapt.ckpt").string());
  st.metrics.write_csv((out / "metrics_adapt.csv").string());
  if (!st.grad_records.empty())
    write_gradient_intensity_csv(st.grad_records, (out / "grad_intensity.csv").string());
  std::printf("adapted to iteration %d; checkpoint at %s\n", st.iteration,
              (out / "checkpoints/adapt.ckpt").string().c_str());
  return 0;
}

int cmd_baseline(const RunConfig& rc) {
  fs::path out = prepare_output(rc);
  RunLock lock(out);
  dump_effective_config(rc, out);
  Dataset ds_s = need_dataset(out, "source_train");
  std::string variant = rc.train.baseline == "none" ? "asn" : rc.train.baseline;

  TrainState st;
  TrainConfig cfg = rc.train;
  if (variant == "source_only") {
    cfg.max_iter = cfg.pretrain_iter;
    st = pretrain_source(ds_s, cfg);
  } else {
    Dataset ds_t = need_dataset(out, "target_train");
    cfg.baseline = variant;
    st = train_asn_baseline(ds_s, ds_t, cfg);
  }
  fs::create_directories(out / "checkpoints");
  fs::path ck = out / ("checkpoints/baseline_" + variant + ".ckpt");
  save_train_state(st, cfg, "", ck.string());
  st.metrics.write_csv((out / ("metrics_baseline_" + variant + ".csv")).string());
  std::printf("baseline %s done; checkpoint at %s\n", variant.c_str(), ck.string().c_str());
  return 0;
}

int cmd_eval(const RunConfig& rc, std::string checkpoint) {
  fs::path out = prepare_output(rc);
  RunLock lock(out);
  dump_effective_config(rc, out);
  Dataset ds = need_dataset(out, "target_eval");

  fs::path ck = checkpoint.empty() ? out / "checkpoints/adapt.ckpt" : fs::path(checkpoint);
  if (!fs::exists(ck)) throw std::runtime_error("missing checkpoint: " + ck.string());
  TrainState st = load_train_state(ck.string(), rc.train);

  IouReport rep = evaluate_dataset(*st.model, ds);
  std::vector<int> tails = tail_indices(rc, ds.class_names);

  std::ofstream csv((out / "iou_report.csv").string());
  if (!csv) throw std::runtime_error("cannot open iou_report.csv for writing");
  csv << "metric,value\n";
  char buf[64];
  for (size_t k = 0; k < ds.class_names.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g", rep.per_class[k]);
    csv << "iou_" << ds.class_names[k] << "," << (rep.evaluable[k] ? buf : "") << "\n";
  }
  std::snprintf(buf, sizeof(buf), "%.17g", rep.miou);
  csv << "miou," << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", tail_mean_iou(rep, tails));
  csv << "tail_mean," << buf << "\n";
  if (!csv) throw std::runtime_error("write failed for iou_report.csv");

  std::printf("checkpoint %s on target_eval:\n", ck.string().c_str());
  for (size_t k = 0; k < ds.class_names.size(); ++k)
    std::printf("  %-10s %s\n", ds.class_names[k].c_str(),
                rep.evaluable[k] ? (std::snprintf(buf, sizeof(buf), "%.4f", rep.per_class[k]), buf)
                                 : "-");
  std::printf("  %-10s %.4f\n", "mIoU", rep.miou);
  std::printf("  %-10s %.4f\n", "tail_mean", tail_mean_iou(rep, tails));
  return 0;
}

int cmd_ablate(const RunConfig& rc, const std::string& grid_name) {
  fs::path out = prepare_output(rc);
  RunLock lock(out);
  dump_effective_config(rc, out);
  Dataset ds_s = need_dataset(out, "source_train");
  Dataset ds_t = need_dataset(out, "target_train");
  Dataset ds_e = need_dataset(out, "target_eval");
  std::vector<int> tails = tail_indices(rc, ds_e.class_names);

  std::vector<AblationConfig> grid;
  if (grid_name == "component")
    grid = component_grid(rc.train, rc.train.pretrain_iter);
  else if (grid_name == "attack")
    grid = attack_method_grid(rc.train, rc.train.pretrain_iter);
  else if (grid_name == "layer")
    grid = split_layer_grid(rc.train, rc.train.pretrain_iter, {1, 2, 3, 4});
  else
    throw std::runtime_error("unknown ablation grid: " + grid_name +
                             " (component | attack | layer)");

  std::vector<AblationResult> results = ablation_run(grid, ds_s, ds_t, ds_e, tails);
  write_ablation_csv((out / ("ablation_" + grid_name + ".csv")).string(), results,
                     ds_e.class_names);
  std::string table = format_ablation_table(results, ds_e.class_names);
  std::ofstream txt((out / ("ablation_" + grid_name + ".txt")).string());
  txt << table;
  std::fputs(table.c_str(), stdout);

  bool all_ok = true;
  for (const auto& r : results) all_ok = all_ok && r.ok;
  if (all_ok) {
    std::vector<TailRow> tr = tail_report(results, ds_e.class_names, rc.eval.tail_class_names);
    std::string trt = format_tail_report(tr, rc.eval.tail_class_names);
    std::ofstream ttxt((out / ("tail_report_" + grid_name + ".txt")).string());
    ttxt << trt;
    std::fputs(trt.c_str(), stdout);
  }
  return all_ok ? 0 : 1;
}

int cmd_plot(const RunConfig& rc, std::string records_path) {
  fs::path out = prepare_output(rc);
  RunLock lock(out);
  dump_effective_config(rc, out);
  fs::path in = records_path.empty() ? out / "grad_intensity.csv" : fs::path(records_path);
  if (!fs::exists(in))
    throw std::runtime_error("missing gradient records: " + in.string() + " (run adapt first)");
  std::vector<GradientIntensityRecord> records = read_gradient_intensity_csv(in.string());
  plot_gradient_intensity(records, (out / "grad_intensity.svg").string(),
                          (out / "grad_intensity_plot.csv").string());
  std::printf("wrote %s\n", (out / "grad_intensity.svg").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature-space adversarial training for segmentation domain adaptation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  app.add_option("-c,--config", config_path, "config file (JSON); defaults fill missing keys");
  app.add_option("--set", overrides, "override, e.g. --set perturb.method=I-FGSM");
  app.add_option("-o,--output", output_dir, "output directory (overrides config)");

  auto* gen = app.add_subcommand("gen-data", "generate the two-domain benchmark datasets");
  auto* pre = app.add_subcommand("pretrain", "supervised training on the source domain");
  auto* ada = app.add_subcommand("adapt", "adversarial-feature adaptation from a pretrain checkpoint");
  bool resume = false;
  ada->add_flag("--resume", resume, "continue from checkpoints/adapt.ckpt");
  auto* bas = app.add_subcommand("baseline", "train a comparison baseline (train.baseline selects)");
  auto* eva = app.add_subcommand("eval", "score a checkpoint on the target evaluation split");
  std::string checkpoint;
  eva->add_option("--checkpoint", checkpoint, "checkpoint to score (default adapt.ckpt)");
  auto* abl = app.add_subcommand("ablate", "train and score a config grid");
  std::string grid_name = "component";
  abl->add_option("--grid", grid_name, "component | attack | layer");
  auto* plo = app.add_subcommand("plot", "gradient-intensity chart from logged records");
  std::string records_path;
  plo->add_option("--records", records_path, "records CSV (default grad_intensity.csv)");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig rc = config_path.empty() ? make_run_config(overrides)
                                       : load_run_config(config_path, overrides);
    if (!output_dir.empty()) rc.output_dir = output_dir;

    if (gen->parsed()) return cmd_gen_data(rc);
    if (pre->parsed()) return cmd_pretrain(rc);
    if (ada->parsed()) return cmd_adapt(rc, resume);
    if (bas->parsed()) return cmd_baseline(rc);
    if (eva->parsed()) return cmd_eval(rc, checkpoint);
    if (abl->parsed()) return cmd_ablate(rc, grid_name);
    if (plo->parsed()) return cmd_plot(rc, records_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
