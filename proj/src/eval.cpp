#include "fsap/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace fsap {
namespace {

std::string fmt(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string pad(std::string s, size_t width) {
  while (s.size() < width) s.push_back(' ');
  return s;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(int c) : num_classes(c) {
  if (c <= 0) throw std::invalid_argument("confusion matrix needs at least one class");
  counts.assign(static_cast<size_t>(c) * static_cast<size_t>(c), 0);
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (std::int64_t v : counts) t += v;
  return t;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes != num_classes)
    throw std::invalid_argument("confusion merge: class count mismatch");
  for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int num_classes) {
  if (pred.h != gt.h || pred.w != gt.w)
    throw std::invalid_argument("confusion: prediction and ground truth shapes differ");
  ConfusionMatrix cm(num_classes);
  for (size_t i = 0; i < gt.values.size(); ++i) {
    int g = gt.values[i];
    if (g == kIgnoreLabel) continue;
    int p = pred.values[i];
    if (g < 0 || g >= num_classes)
      throw std::invalid_argument("confusion: ground-truth label " + std::to_string(g) +
                                  " out of range");
    if (p < 0 || p >= num_classes)
      throw std::invalid_argument("confusion: predicted label " + std::to_string(p) +
                                  " out of range");
    ++cm.at(g, p);
  }
  return cm;
}

IouReport iou(const ConfusionMatrix& cm) {
  int c = cm.num_classes;
  IouReport rep;
  rep.per_class.assign(static_cast<size_t>(c), 0.0);
  rep.evaluable.assign(static_cast<size_t>(c), false);
  double sum = 0.0;
  int evaluable = 0;
  for (int k = 0; k < c; ++k) {
    std::int64_t tp = cm.at(k, k);
    std::int64_t fn = 0, fp = 0;
    for (int j = 0; j < c; ++j) {
      if (j == k) continue;
      fn += cm.at(k, j);
      fp += cm.at(j, k);
    }
    std::int64_t un = tp + fp + fn;
    if (un == 0) continue;
    rep.per_class[static_cast<size_t>(k)] = static_cast<double>(tp) / static_cast<double>(un);
    rep.evaluable[static_cast<size_t>(k)] = true;
    sum += rep.per_class[static_cast<size_t>(k)];
    ++evaluable;
  }
  if (evaluable == 0) throw std::runtime_error("iou: no evaluable classes");
  rep.miou = sum / evaluable;
  return rep;
}

LabelMap predict(const SegmentationModel& model, const Tensor& image) {
  SoftmaxMap p = model.forward_full(image);
  const auto& shape = p.values.shape();
  int h = shape[0], w = shape[1], c = shape[2];
  LabelMap out;
  out.h = h;
  out.w = w;
  out.values.assign(static_cast<size_t>(h) * static_cast<size_t>(w), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int best = 0;
      double best_v = p.values.at3(y, x, 0);
      for (int k = 1; k < c; ++k) {
        double v = p.values.at3(y, x, k);
        if (v > best_v) {
          best_v = v;
          best = k;
        }
      }
      out.values[static_cast<size_t>(y * w + x)] = best;
    }
  return out;
}

ConfusionMatrix evaluate_confusion(const SegmentationModel& model, const Dataset& ds) {
  if (ds.samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
  ConfusionMatrix cm(ds.num_classes);
  for (const auto& s : ds.samples)
    cm.merge(confusion(predict(model, s.image), s.labels, ds.num_classes));
  return cm;
}

IouReport evaluate_dataset(const SegmentationModel& model, const Dataset& ds) {
  return iou(evaluate_confusion(model, ds));
}

double tail_mean_iou(const IouReport& rep, const std::vector<int>& tail_classes) {
  if (tail_classes.empty()) throw std::invalid_argument("tail_mean_iou: no tail classes");
  double sum = 0.0;
  int n = 0;
  for (int k : tail_classes) {
    if (k < 0 || k >= static_cast<int>(rep.per_class.size()))
      throw std::invalid_argument("tail_mean_iou: class index " + std::to_string(k) +
                                  " out of range");
    if (!rep.evaluable[static_cast<size_t>(k)]) continue;
    sum += rep.per_class[static_cast<size_t>(k)];
    ++n;
  }
  if (n == 0) throw std::runtime_error("tail_mean_iou: no evaluable tail classes");
  return sum / n;
}

namespace {

// Supervised step-1 behavior depends on none of the adaptation knobs, so
// rows sharing everything else reuse one pretrained starting point.
TrainConfig pretrain_config(const TrainConfig& row, int iters) {
  TrainConfig pc = row;
  pc.max_iter = iters;
  pc.pretrain_iter = iters;
  pc.perturbation = false;
  pc.lovasz = false;
  pc.entropy = false;
  pc.perturb = PerturbConfig{};
  pc.baseline = "none";
  pc.asn_lambda_adv = 0.0;
  pc.disc = DiscriminatorConfig{};
  return pc;
}

AblationResult score(const std::string& name, const SegmentationModel& model,
                     const Dataset& eval_t, const std::vector<int>& tail_classes) {
  IouReport rep = evaluate_dataset(model, eval_t);
  AblationResult r;
  r.name = name;
  r.ok = true;
  r.per_class = rep.per_class;
  r.evaluable = rep.evaluable;
  r.miou = rep.miou;
  r.tail_mean = tail_mean_iou(rep, tail_classes);
  return r;
}

}  // namespace

std::vector<AblationResult> ablation_run(const std::vector<AblationConfig>& grid,
                                         const Dataset& train_s, const Dataset& train_t,
                                         const Dataset& eval_t,
                                         const std::vector<int>& tail_classes) {
  std::vector<AblationResult> out;
  std::map<uint64_t, Checkpoint> pretrain_cache;
  for (const auto& ac : grid) {
    try {
      if (ac.train.baseline == "source_only") {
        TrainConfig pc = pretrain_config(ac.train, ac.pretrain_iters);
        TrainState st = pretrain_source(train_s, pc);
        out.push_back(score(ac.name, *st.model, eval_t, tail_classes));
        continue;
      }
      if (ac.train.baseline.rfind("asn", 0) == 0) {
        TrainState st = train_asn_baseline(train_s, train_t, ac.train);
        out.push_back(score(ac.name, *st.model, eval_t, tail_classes));
        continue;
      }
      TrainConfig pc = pretrain_config(ac.train, ac.pretrain_iters);
      uint64_t key = train_config_hash(pc);
      auto it = pretrain_cache.find(key);
      if (it == pretrain_cache.end()) {
        TrainState st = pretrain_source(train_s, pc);
        it = pretrain_cache.emplace(key, pack_train_state(st, pc)).first;
      }
      TrainState st = unpack_train_state(it->second, pc, "pretrain");
      st.model->set_frozen(true);
      st = adapt(std::move(st), train_s, train_t, ac.train);
      out.push_back(score(ac.name, *st.model, eval_t, tail_classes));
    } catch (const std::exception& e) {
      AblationResult r;
      r.name = ac.name;
      r.ok = false;
      r.error = e.what();
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<AblationConfig> component_grid(const TrainConfig& base, int pretrain_iters) {
  std::vector<AblationConfig> grid;
  for (int bits = 0; bits < 8; ++bits) {
    bool pert = (bits & 4) != 0;
    bool lov = (bits & 2) != 0;
    bool ent = (bits & 1) != 0;
    AblationConfig ac;
    ac.name = std::string("pert=") + (pert ? "on" : "off") + ",lovasz=" + (lov ? "on" : "off") +
              ",entropy=" + (ent ? "on" : "off");
    ac.train = base;
    ac.train.baseline = "none";
    ac.train.perturbation = pert;
    ac.train.lovasz = lov;
    ac.train.entropy = ent;
    ac.pretrain_iters = pretrain_iters;
    grid.push_back(std::move(ac));
  }
  return grid;
}

std::vector<AblationConfig> attack_method_grid(const TrainConfig& base, int pretrain_iters) {
  std::vector<AblationConfig> grid;
  for (AttackMethod m : {AttackMethod::none, AttackMethod::fgspm, AttackMethod::i_fgsm,
                         AttackMethod::mi_fgspm, AttackMethod::i_fgspm}) {
    AblationConfig ac;
    ac.name = std::string("method=") + attack_method_name(m);
    ac.train = base;
    ac.train.baseline = "none";
    ac.train.perturbation = true;
    ac.train.perturb.method = m;
    ac.pretrain_iters = pretrain_iters;
    grid.push_back(std::move(ac));
  }
  return grid;
}

std::vector<AblationConfig> split_layer_grid(const TrainConfig& base, int pretrain_iters,
                                             const std::vector<int>& layers) {
  if (layers.empty()) throw std::invalid_argument("split_layer_grid: no layers");
  std::vector<AblationConfig> grid;
  for (int layer : layers) {
    AblationConfig ac;
    ac.name = std::string("layer=") + layer_name(layer);
    ac.train = base;
    ac.train.baseline = "none";
    ac.train.model.split = layer;
    ac.train.perturb.layer = layer;
    ac.pretrain_iters = pretrain_iters;
    grid.push_back(std::move(ac));
  }
  return grid;
}

std::string format_ablation_table(const std::vector<AblationResult>& results,
                                  const std::vector<std::string>& class_names) {
  size_t name_w = 6;
  for (const auto& r : results) name_w = std::max(name_w, r.name.size());
  std::string s = pad("config", name_w + 2);
  for (const auto& cn : class_names) s += pad(cn, std::max<size_t>(cn.size(), 7) + 2);
  s += pad("mIoU", 9) + "tail\n";
  for (const auto& r : results) {
    s += pad(r.name, name_w + 2);
    if (!r.ok) {
      s += "FAILED: " + r.error + "\n";
      continue;
    }
    for (size_t k = 0; k < class_names.size(); ++k) {
      std::string cell = r.evaluable[k] ? fmt(r.per_class[k]) : std::string("-");
      s += pad(cell, std::max<size_t>(class_names[k].size(), 7) + 2);
    }
    s += pad(fmt(r.miou), 9) + fmt(r.tail_mean) + "\n";
  }
  return s;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationResult>& results,
                        const std::vector<std::string>& class_names) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "config,status";
  for (const auto& cn : class_names) out << ",iou_" << cn;
  out << ",miou,tail_mean\n";
  for (const auto& r : results) {
    out << r.name << "," << (r.ok ? "ok" : "failed");
    if (r.ok) {
      for (size_t k = 0; k < class_names.size(); ++k)
        out << "," << (r.evaluable[k] ? fmt(r.per_class[k], "%.17g") : std::string(""));
      out << "," << fmt(r.miou, "%.17g") << "," << fmt(r.tail_mean, "%.17g") << "\n";
    } else {
      for (size_t k = 0; k < class_names.size() + 2; ++k) out << ",";
      out << "\n";
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<TailRow> tail_report(const std::vector<AblationResult>& results,
                                 const std::vector<std::string>& class_names,
                                 const std::vector<std::string>& tail_class_names) {
  if (results.empty()) throw std::invalid_argument("tail_report: no results");
  std::vector<int> idx;
  for (const auto& tn : tail_class_names) {
    auto it = std::find(class_names.begin(), class_names.end(), tn);
    if (it == class_names.end())
      throw std::invalid_argument("tail_report: unknown class name " + tn);
    idx.push_back(static_cast<int>(it - class_names.begin()));
  }
  if (idx.empty()) throw std::invalid_argument("tail_report: no tail classes");
  for (const auto& r : results)
    if (!r.ok)
      throw std::invalid_argument("tail_report: config " + r.name + " has no scores: " + r.error);

  const AblationResult& ref = results[0];
  std::vector<TailRow> rows;
  for (const auto& r : results) {
    TailRow row;
    row.config = r.name;
    double sum = 0.0, ref_sum = 0.0;
    for (int k : idx) {
      double v = r.per_class[static_cast<size_t>(k)];
      double rv = ref.per_class[static_cast<size_t>(k)];
      row.tail_iou.push_back(v);
      row.tail_delta.push_back(v - rv);
      sum += v;
      ref_sum += rv;
    }
    row.tail_mean = sum / static_cast<double>(idx.size());
    row.tail_mean_delta = (sum - ref_sum) / static_cast<double>(idx.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_tail_report(const std::vector<TailRow>& rows,
                               const std::vector<std::string>& tail_class_names) {
  size_t name_w = 6;
  for (const auto& r : rows) name_w = std::max(name_w, r.config.size());
  std::string s = pad("config", name_w + 2);
  for (const auto& tn : tail_class_names) {
    s += pad(tn, std::max<size_t>(tn.size(), 7) + 2);
    s += pad("d_" + tn, std::max<size_t>(tn.size() + 2, 8) + 2);
  }
  s += pad("tail_mean", 11) + "delta\n";
  for (const auto& r : rows) {
    s += pad(r.config, name_w + 2);
    for (size_t k = 0; k < tail_class_names.size(); ++k) {
      s += pad(fmt(r.tail_iou[k]), std::max<size_t>(tail_class_names[k].size(), 7) + 2);
      s += pad(fmt(r.tail_delta[k], "%+.4f"),
               std::max<size_t>(tail_class_names[k].size() + 2, 8) + 2);
    }
    s += pad(fmt(r.tail_mean), 11) + fmt(r.tail_mean_delta, "%+.4f") + "\n";
  }
  return s;
}

void plot_gradient_intensity(const std::vector<GradientIntensityRecord>& records,
                             const std::string& image_path, const std::string& csv_path) {
  if (records.empty()) throw std::invalid_argument("plot_gradient_intensity: no records");
  write_gradient_intensity_csv(records, csv_path);

  // One series per objective, x = ordinal generation step of that objective.
  std::map<Objective, std::vector<double>> series;
  for (const auto& r : records) series[r.objective].push_back(r.log10_l1_norm);

  double lo = records[0].log10_l1_norm, hi = lo;
  size_t longest = 0;
  for (const auto& [obj, ys] : series) {
    longest = std::max(longest, ys.size());
    for (double y : ys) {
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  }
  if (hi - lo < 1e-9) {
    hi += 0.5;
    lo -= 0.5;
  }
  double pad_y = 0.05 * (hi - lo);
  lo -= pad_y;
  hi += pad_y;

  const double W = 800, H = 480, ml = 70, mr = 160, mt = 30, mb = 50;
  auto sx = [&](double i) {
    double span = longest > 1 ? static_cast<double>(longest - 1) : 1.0;
    return ml + (W - ml - mr) * (i / span);
  };
  auto sy = [&](double v) { return mt + (H - mt - mb) * (1.0 - (v - lo) / (hi - lo)); };

  std::ofstream out(image_path);
  if (!out) throw std::runtime_error("cannot open " + image_path + " for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
      << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
      << H - mb << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    double v = lo + (hi - lo) * t / 4.0;
    double y = sy(v);
    out << "<line x1=\"" << ml - 4 << "\" y1=\"" << y << "\" x2=\"" << ml << "\" y2=\"" << y
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-size=\"12\" font-family=\"sans-serif\">" << fmt(v, "%.1f")
        << "</text>\n";
  }
  out << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">generation step"
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << (mt + H - mb) / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" transform=\"rotate(-90 "
      << "16 " << (mt + H - mb) / 2 << ")\">log10 gradient L1</text>\n";

  const std::map<Objective, const char*> color = {{Objective::seg, "#2ca02c"},
                                                  {Objective::adv, "#d62728"},
                                                  {Objective::l2, "#1f77b4"}};
  double ly = mt + 10;
  for (const auto& [obj, ys] : series) {
    out << "<polyline fill=\"none\" stroke=\"" << color.at(obj) << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < ys.size(); ++i) {
      if (i) out << " ";
      out << fmt(sx(static_cast<double>(i)), "%.2f") << "," << fmt(sy(ys[i]), "%.2f");
    }
    out << "\"/>\n";
    out << "<rect x=\"" << W - mr + 14 << "\" y=\"" << ly - 9 << "\" width=\"14\" height=\"3\" fill=\""
        << color.at(obj) << "\"/>\n";
    out << "<text x=\"" << W - mr + 34 << "\" y=\"" << ly - 3
        << "\" font-size=\"13\" font-family=\"sans-serif\">" << objective_name(obj) << "</text>\n";
    ly += 22;
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write failed for " + image_path);
}

}  // namespace fsap
