#include "fsap/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <utility>

namespace fsap {
namespace {

std::string hash_hex(uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<int> sample_batch(Rng& rng, int n, int batch) {
  std::vector<int> idx(static_cast<size_t>(batch));
  for (int i = 0; i < batch; ++i) idx[static_cast<size_t>(i)] = rng.uniform_int(n);
  return idx;
}

Var mean_of(const std::vector<Var>& terms) {
  if (terms.empty()) return Var::leaf(Tensor::scalar(0.0));
  Var total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) total = add(std::move(total), terms[i]);
  return scale(std::move(total), 1.0 / static_cast<double>(terms.size()));
}

Var seg_term(Var p, const LabelMap& y, bool use_lovasz) {
  return use_lovasz ? lovasz_softmax(std::move(p), y) : cross_entropy(std::move(p), y);
}

// The generator-side confusion objective: drive D's verdict on target maps
// toward "source".
Var confusion_term(Var d) {
  return scale(vmean(vlog(clamp(std::move(d), 1e-7, 1.0 - 1e-7))), -1.0);
}

void check_dataset(const Dataset& ds, const ModelConfig& mc, const char* who) {
  if (ds.samples.empty()) throw std::invalid_argument(std::string(who) + ": empty dataset");
  if (ds.num_classes != mc.num_classes)
    throw std::invalid_argument(std::string(who) + ": dataset has " +
                                std::to_string(ds.num_classes) + " classes, model expects " +
                                std::to_string(mc.num_classes));
  const Tensor& img = ds.samples[0].image;
  if (img.shape() != std::vector<int>{mc.in_h, mc.in_w, mc.in_ch})
    throw std::invalid_argument(std::string(who) + ": image shape " + img.shape_str() +
                                " does not match model input");
}

void check_disc_config(const TrainConfig& cfg) {
  if (cfg.disc.in_h != cfg.model.in_h || cfg.disc.in_w != cfg.model.in_w ||
      cfg.disc.in_ch != cfg.model.num_classes)
    throw std::invalid_argument(
        "train: discriminator input shape must match the softmax maps it judges");
}

std::vector<FeatureMap> cache_features(const SegmentationModel& model, const Dataset& ds,
                                       Origin origin) {
  std::vector<FeatureMap> out;
  out.reserve(ds.samples.size());
  for (const auto& s : ds.samples) out.push_back(model.extract_features(s.image, origin));
  return out;
}

}  // namespace

void MetricsLog::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "iter,metric_name,value\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.value);
    out << r.iter << "," << r.name << "," << buf << "\n";
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

MetricsLog MetricsLog::read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "iter,metric_name,value")
    throw std::runtime_error("bad metrics header in " + path);
  MetricsLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t a = line.find(',');
    size_t b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos)
      throw std::runtime_error("bad metrics row in " + path + ": " + line);
    MetricRow r;
    r.iter = std::stoi(line.substr(0, a));
    r.name = line.substr(a + 1, b - a - 1);
    r.value = std::stod(line.substr(b + 1));
    log.rows.push_back(std::move(r));
  }
  return log;
}

double poly_lr(double base, int iter, int max_iter, double power) {
  if (iter < 0) throw std::invalid_argument("poly_lr: negative iteration");
  if (max_iter <= 0) return base;
  double frac = 1.0 - static_cast<double>(iter) / max_iter;
  if (frac <= 0.0) return 0.0;
  return base * std::pow(frac, power);
}

nlohmann::json to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["model"] = to_json(cfg.model);
  j["disc"] = to_json(cfg.disc);
  j["alpha1"] = cfg.alpha1;
  j["alpha2"] = cfg.alpha2;
  j["alpha3"] = cfg.alpha3;
  j["lr_task"] = cfg.lr_task;
  j["sgd_momentum"] = cfg.sgd_momentum;
  j["weight_decay"] = cfg.weight_decay;
  j["lr_disc"] = cfg.lr_disc;
  j["adam_beta1"] = cfg.adam_beta1;
  j["adam_beta2"] = cfg.adam_beta2;
  j["adam_eps"] = cfg.adam_eps;
  j["poly_power"] = cfg.poly_power;
  j["max_iter"] = cfg.max_iter;
  j["pretrain_iter"] = cfg.pretrain_iter;
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  j["perturb"] = to_json(cfg.perturb);
  j["perturbation"] = cfg.perturbation;
  j["lovasz"] = cfg.lovasz;
  j["entropy"] = cfg.entropy;
  j["pretrain_lovasz"] = cfg.pretrain_lovasz;
  j["baseline"] = cfg.baseline;
  j["asn_lambda_adv"] = cfg.asn_lambda_adv;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.model = model_config_from_json(j.at("model"));
  cfg.disc = disc_config_from_json(j.at("disc"));
  cfg.alpha1 = j.at("alpha1").get<double>();
  cfg.alpha2 = j.at("alpha2").get<double>();
  cfg.alpha3 = j.at("alpha3").get<double>();
  cfg.lr_task = j.at("lr_task").get<double>();
  cfg.sgd_momentum = j.at("sgd_momentum").get<double>();
  cfg.weight_decay = j.at("weight_decay").get<double>();
  cfg.lr_disc = j.at("lr_disc").get<double>();
  cfg.adam_beta1 = j.at("adam_beta1").get<double>();
  cfg.adam_beta2 = j.at("adam_beta2").get<double>();
  cfg.adam_eps = j.at("adam_eps").get<double>();
  cfg.poly_power = j.at("poly_power").get<double>();
  cfg.max_iter = j.at("max_iter").get<int>();
  cfg.pretrain_iter = j.at("pretrain_iter").get<int>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.perturb = perturb_config_from_json(j.at("perturb"));
  cfg.perturbation = j.at("perturbation").get<bool>();
  cfg.lovasz = j.at("lovasz").get<bool>();
  cfg.entropy = j.at("entropy").get<bool>();
  cfg.pretrain_lovasz = j.at("pretrain_lovasz").get<bool>();
  cfg.baseline = j.at("baseline").get<std::string>();
  cfg.asn_lambda_adv = j.at("asn_lambda_adv").get<double>();
  return cfg;
}

uint64_t train_config_hash(const TrainConfig& cfg) { return fnv1a64_str(to_json(cfg).dump()); }

TrainState pretrain_source(const Dataset& ds_s, const TrainConfig& cfg,
                           std::optional<TrainState> resume, int stop_iter) {
  check_dataset(ds_s, cfg.model, "pretrain_source");
  if (cfg.batch_size <= 0) throw std::invalid_argument("pretrain_source: batch size must be > 0");

  TrainState st;
  if (resume) {
    st = std::move(*resume);
    if (st.phase != "pretrain")
      throw std::invalid_argument("pretrain_source: checkpoint phase is " + st.phase);
  } else {
    st.phase = "pretrain";
    st.model =
        std::make_unique<SegmentationModel>(cfg.model, mix_seed(cfg.seed, fnv1a64_str("model")));
    st.task_opt = std::make_unique<SgdOptimizer>(st.model->params(), cfg.sgd_momentum,
                                                 cfg.weight_decay);
    st.batch_rng_s = Rng(mix_seed(cfg.seed, fnv1a64_str("batch_s"))).state();
    st.batch_rng_t = Rng(mix_seed(cfg.seed, fnv1a64_str("batch_t"))).state();
  }

  Rng rng_s(1);
  rng_s.set_state(st.batch_rng_s);
  int n = ds_s.size();

  // The lr horizon is always cfg.max_iter; an early stop only pauses the run.
  int until = stop_iter > 0 ? std::min(stop_iter, cfg.max_iter) : cfg.max_iter;
  for (; st.iteration < until; ++st.iteration) {
    int iter = st.iteration;
    double lr = poly_lr(cfg.lr_task, iter, cfg.max_iter, cfg.poly_power);
    std::vector<Var> terms;
    for (int idx : sample_batch(rng_s, n, cfg.batch_size)) {
      const Sample& s = ds_s.samples[static_cast<size_t>(idx)];
      Var p = st.model->classify_var(st.model->features_var(Var::leaf(s.image)));
      Var l = cross_entropy(p, s.labels);
      if (cfg.pretrain_lovasz) l = add(std::move(l), lovasz_softmax(p, s.labels));
      terms.push_back(std::move(l));
    }
    Var total = mean_of(terms);
    backward(total);
    st.task_opt->step(lr);
    st.metrics.add(iter, "loss_pretrain", total.value()[0]);
    st.metrics.add(iter, "lr_task", lr);
  }
  st.batch_rng_s = rng_s.state();
  return st;
}

TrainState adapt(TrainState state, const Dataset& ds_s, const Dataset& ds_t,
                 const TrainConfig& cfg, int stop_iter) {
  if (!state.model) throw std::invalid_argument("adapt: state has no model");
  check_dataset(ds_s, cfg.model, "adapt");
  check_dataset(ds_t, cfg.model, "adapt");
  if (cfg.batch_size <= 0) throw std::invalid_argument("adapt: batch size must be > 0");

  // All components off: nothing to optimize; the state passes through
  // untouched and evaluation equals the incoming baseline.
  if (!cfg.perturbation && !cfg.lovasz && !cfg.entropy) return state;

  if (cfg.perturbation && !state.model->frozen())
    throw std::logic_error(
        "adapt: perturbation requires the feature extractor to be frozen first");

  bool fresh = state.phase != "adapt";
  if (fresh) {
    state.phase = "adapt";
    state.iteration = 0;
    state.metrics = {};
    state.grad_records.clear();
    state.batch_rng_s = Rng(mix_seed(cfg.seed, fnv1a64_str("adapt_batch_s"))).state();
    state.batch_rng_t = Rng(mix_seed(cfg.seed, fnv1a64_str("adapt_batch_t"))).state();
    state.task_opt = std::make_unique<SgdOptimizer>(state.model->f_params(), cfg.sgd_momentum,
                                                    cfg.weight_decay);
    state.disc_opt.reset();
  }
  if (cfg.perturbation) {
    check_disc_config(cfg);
    if (!state.disc)
      state.disc =
          std::make_unique<Discriminator>(cfg.disc, mix_seed(cfg.seed, fnv1a64_str("disc")));
    if (!state.disc_opt)
      state.disc_opt = std::make_unique<AdamOptimizer>(state.disc->params(), cfg.adam_beta1,
                                                       cfg.adam_beta2, cfg.adam_eps);
  }

  // The split prefix of the network never changes in this phase, so per-image
  // features are computed once.
  std::vector<FeatureMap> feat_s = cache_features(*state.model, ds_s, Origin::source);
  std::vector<FeatureMap> feat_t = cache_features(*state.model, ds_t, Origin::target);

  Rng rng_s(1), rng_t(1);
  rng_s.set_state(state.batch_rng_s);
  rng_t.set_state(state.batch_rng_t);

  int until = stop_iter > 0 ? std::min(stop_iter, cfg.max_iter) : cfg.max_iter;
  for (; state.iteration < until; ++state.iteration) {
    int iter = state.iteration;
    double lr_f = poly_lr(cfg.lr_task, iter, cfg.max_iter, cfg.poly_power);
    double lr_d = poly_lr(cfg.lr_disc, iter, cfg.max_iter, cfg.poly_power);

    std::vector<int> bs = sample_batch(rng_s, ds_s.size(), cfg.batch_size);
    std::vector<int> bt = sample_batch(rng_t, ds_t.size(), cfg.batch_size);

    // Step 2: adversarial feature generation against the current F and D.
    std::vector<FeatureMap> fs_star, ft_star;
    if (cfg.perturbation) {
      for (int idx : bs) {
        AttackContext ctx{state.model.get(), state.disc.get(),
                          &ds_s.samples[static_cast<size_t>(idx)].labels, iter};
        AdversarialResult r =
            generate_adversarial(feat_s[static_cast<size_t>(idx)], cfg.perturb, ctx);
        fs_star.push_back(std::move(r.feature));
        state.grad_records.insert(state.grad_records.end(), r.records.begin(), r.records.end());
      }
      for (int idx : bt) {
        AttackContext ctx{state.model.get(), state.disc.get(), nullptr, iter};
        AdversarialResult r =
            generate_adversarial(feat_t[static_cast<size_t>(idx)], cfg.perturb, ctx);
        ft_star.push_back(std::move(r.feature));
        state.grad_records.insert(state.grad_records.end(), r.records.begin(), r.records.end());
      }
    }

    // Step 3a: classifier update on the combined objective.
    std::vector<Var> seg_star_terms, seg_terms, cst_terms, ent_t_terms, ent_t_star_terms;
    for (size_t i = 0; i < bs.size(); ++i) {
      const Sample& s = ds_s.samples[static_cast<size_t>(bs[i])];
      Var p_s = state.model->classify_var(Var::leaf(feat_s[static_cast<size_t>(bs[i])].values));
      seg_terms.push_back(seg_term(p_s, s.labels, cfg.lovasz));
      if (cfg.perturbation) {
        Var p_s_star = state.model->classify_var(Var::leaf(fs_star[i].values));
        seg_star_terms.push_back(seg_term(p_s_star, s.labels, cfg.lovasz));
      }
    }
    for (size_t i = 0; i < bt.size(); ++i) {
      Var p_t = state.model->classify_var(Var::leaf(feat_t[static_cast<size_t>(bt[i])].values));
      if (cfg.entropy) ent_t_terms.push_back(entropy_loss(p_t));
      if (cfg.perturbation) {
        Var p_t_star = state.model->classify_var(Var::leaf(ft_star[i].values));
        cst_terms.push_back(consistency_loss(p_t, p_t_star));
        if (cfg.entropy) ent_t_star_terms.push_back(entropy_loss(p_t_star));
      }
    }

    Var seg_star = mean_of(seg_star_terms);
    Var seg = mean_of(seg_terms);
    Var cst = mean_of(cst_terms);
    Var ent_t = mean_of(ent_t_terms);
    Var ent_t_star = mean_of(ent_t_star_terms);
    Var total = add(add(seg_star, seg),
                    add(add(scale(cst, cfg.alpha1), scale(ent_t, cfg.alpha2)),
                        scale(ent_t_star, cfg.alpha3)));
    backward(total);
    state.task_opt->step(lr_f);

    state.metrics.add(iter, "loss_cls_total", total.value()[0]);
    state.metrics.add(iter, "loss_cls_seg_star", seg_star.value()[0]);
    state.metrics.add(iter, "loss_cls_seg", seg.value()[0]);
    state.metrics.add(iter, "loss_cls_cst", cst.value()[0]);
    state.metrics.add(iter, "loss_cls_ent_t", ent_t.value()[0]);
    state.metrics.add(iter, "loss_cls_ent_t_star", ent_t_star.value()[0]);
    state.metrics.add(iter, "lr_task", lr_f);

    // Step 3b: discriminator update on maps recomputed from the updated F,
    // detached from the classifier graph; perturbed maps keep origin labels.
    if (cfg.perturbation) {
      std::vector<Var> d_terms;
      for (size_t i = 0; i < bs.size(); ++i) {
        SoftmaxMap p_s = state.model->classify(feat_s[static_cast<size_t>(bs[i])]);
        SoftmaxMap p_s_star = state.model->classify(fs_star[i]);
        SoftmaxMap p_t = state.model->classify(feat_t[static_cast<size_t>(bt[i])]);
        SoftmaxMap p_t_star = state.model->classify(ft_star[i]);
        Var d_s = state.disc->discriminate_var(Var::leaf(p_s.values));
        Var d_t = state.disc->discriminate_var(Var::leaf(p_t.values));
        Var d_s_star = state.disc->discriminate_var(Var::leaf(p_s_star.values));
        Var d_t_star = state.disc->discriminate_var(Var::leaf(p_t_star.values));
        d_terms.push_back(discriminator_loss(d_s, d_t, d_s_star, d_t_star));
      }
      Var d_total = mean_of(d_terms);
      backward(d_total);
      state.disc_opt->step(lr_d);
      state.metrics.add(iter, "loss_disc", d_total.value()[0]);
      state.metrics.add(iter, "lr_disc", lr_d);
    }
  }

  state.batch_rng_s = rng_s.state();
  state.batch_rng_t = rng_t.state();
  return state;
}

TrainState train_asn_baseline(const Dataset& ds_s, const Dataset& ds_t, const TrainConfig& cfg,
                              std::optional<TrainState> resume, int stop_iter) {
  check_dataset(ds_s, cfg.model, "train_asn_baseline");
  check_dataset(ds_t, cfg.model, "train_asn_baseline");
  check_disc_config(cfg);
  if (cfg.batch_size <= 0)
    throw std::invalid_argument("train_asn_baseline: batch size must be > 0");
  std::string variant = cfg.baseline == "none" ? "asn" : cfg.baseline;
  if (variant != "asn" && variant != "asn_weighted_ce" && variant != "asn_lovasz")
    throw std::invalid_argument("train_asn_baseline: unsupported baseline " + cfg.baseline);

  TrainState st;
  if (resume) {
    st = std::move(*resume);
    if (st.phase != "asn")
      throw std::invalid_argument("train_asn_baseline: checkpoint phase is " + st.phase);
  } else {
    st.phase = "asn";
    st.model =
        std::make_unique<SegmentationModel>(cfg.model, mix_seed(cfg.seed, fnv1a64_str("model")));
    st.disc =
        std::make_unique<Discriminator>(cfg.disc, mix_seed(cfg.seed, fnv1a64_str("disc")));
    st.task_opt = std::make_unique<SgdOptimizer>(st.model->params(), cfg.sgd_momentum,
                                                 cfg.weight_decay);
    st.disc_opt = std::make_unique<AdamOptimizer>(st.disc->params(), cfg.adam_beta1,
                                                  cfg.adam_beta2, cfg.adam_eps);
    st.batch_rng_s = Rng(mix_seed(cfg.seed, fnv1a64_str("batch_s"))).state();
    st.batch_rng_t = Rng(mix_seed(cfg.seed, fnv1a64_str("batch_t"))).state();
  }

  std::vector<double> class_weights;
  if (variant == "asn_weighted_ce") {
    std::vector<std::int64_t> counts(static_cast<size_t>(ds_s.num_classes), 0);
    for (const auto& s : ds_s.samples)
      for (int v : s.labels.values)
        if (v != kIgnoreLabel) ++counts[static_cast<size_t>(v)];
    class_weights = inverse_frequency_weights(counts);
  }

  Rng rng_s(1), rng_t(1);
  rng_s.set_state(st.batch_rng_s);
  rng_t.set_state(st.batch_rng_t);

  int until = stop_iter > 0 ? std::min(stop_iter, cfg.max_iter) : cfg.max_iter;
  for (; st.iteration < until; ++st.iteration) {
    int iter = st.iteration;
    double lr_f = poly_lr(cfg.lr_task, iter, cfg.max_iter, cfg.poly_power);
    double lr_d = poly_lr(cfg.lr_disc, iter, cfg.max_iter, cfg.poly_power);

    std::vector<int> bs = sample_batch(rng_s, ds_s.size(), cfg.batch_size);
    std::vector<int> bt = sample_batch(rng_t, ds_t.size(), cfg.batch_size);

    // Generator side: source segmentation plus the confusion term on target.
    std::vector<Var> seg_terms, conf_terms;
    std::vector<SoftmaxMap> p_s_detached, p_t_detached;
    for (int idx : bs) {
      const Sample& s = ds_s.samples[static_cast<size_t>(idx)];
      Var p = st.model->classify_var(st.model->features_var(Var::leaf(s.image)));
      Var l;
      if (variant == "asn_weighted_ce")
        l = weighted_cross_entropy(p, s.labels, class_weights);
      else if (variant == "asn_lovasz")
        l = add(cross_entropy(p, s.labels), lovasz_softmax(p, s.labels));
      else
        l = cross_entropy(p, s.labels);
      seg_terms.push_back(std::move(l));
      p_s_detached.push_back({p.value()});
    }
    for (int idx : bt) {
      const Sample& s = ds_t.samples[static_cast<size_t>(idx)];
      Var p = st.model->classify_var(st.model->features_var(Var::leaf(s.image)));
      if (cfg.asn_lambda_adv != 0.0)
        conf_terms.push_back(confusion_term(st.disc->discriminate_var(p)));
      p_t_detached.push_back({p.value()});
    }

    Var seg = mean_of(seg_terms);
    Var conf = mean_of(conf_terms);
    Var total = cfg.asn_lambda_adv != 0.0
                    ? add(seg, scale(conf, cfg.asn_lambda_adv))
                    : seg;
    backward(total);
    st.task_opt->step(lr_f);

    // Discriminator side on detached maps.
    std::vector<Var> d_terms;
    for (size_t i = 0; i < p_s_detached.size(); ++i) {
      Var d_s = st.disc->discriminate_var(Var::leaf(p_s_detached[i].values));
      Var d_t = st.disc->discriminate_var(Var::leaf(p_t_detached[i].values));
      d_terms.push_back(adversarial_loss(d_s, d_t));
    }
    Var d_total = mean_of(d_terms);
    backward(d_total);
    st.disc_opt->step(lr_d);

    st.metrics.add(iter, "loss_seg", seg.value()[0]);
    st.metrics.add(iter, "loss_confusion", conf.value()[0]);
    st.metrics.add(iter, "loss_disc", d_total.value()[0]);
    st.metrics.add(iter, "lr_task", lr_f);
    st.metrics.add(iter, "lr_disc", lr_d);
  }

  st.batch_rng_s = rng_s.state();
  st.batch_rng_t = rng_t.state();
  return st;
}

Checkpoint pack_train_state(const TrainState& state, const TrainConfig& cfg,
                            const std::string& phase) {
  if (!state.model) throw std::invalid_argument("pack_train_state: state has no model");
  Checkpoint ck;
  ck.meta["phase"] = phase.empty() ? state.phase : phase;
  ck.meta["iteration"] = state.iteration;
  ck.meta["config_hash"] = hash_hex(train_config_hash(cfg));
  ck.meta["frozen_g"] = state.model->frozen();
  ck.meta["has_disc"] = static_cast<bool>(state.disc);
  ck.meta["rng_s"] = state.batch_rng_s;
  ck.meta["rng_t"] = state.batch_rng_t;
  ck.meta["has_task_opt"] = static_cast<bool>(state.task_opt);
  ck.meta["has_disc_opt"] = static_cast<bool>(state.disc_opt);
  nlohmann::json metrics = nlohmann::json::array();
  for (const auto& r : state.metrics.rows) metrics.push_back({r.iter, r.name, r.value});
  ck.meta["metrics"] = std::move(metrics);
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : state.grad_records)
    records.push_back({r.iter, r.k, objective_name(r.objective), r.log10_l1_norm});
  ck.meta["grad_records"] = std::move(records);
  for (const auto& p : state.model->params())
    ck.tensors.emplace_back("model." + p.name, p.var.value());
  if (state.disc)
    for (const auto& p : state.disc->params())
      ck.tensors.emplace_back("disc." + p.name, p.var.value());
  if (state.task_opt) state.task_opt->save_state(ck, "opt.task.");
  if (state.disc_opt) state.disc_opt->save_state(ck, "opt.disc.");
  return ck;
}

TrainState unpack_train_state(const Checkpoint& ck, const TrainConfig& cfg,
                              const std::string& expected_phase) {
  TrainState st;
  st.phase = ck.meta.at("phase").get<std::string>();
  if (!expected_phase.empty() && st.phase != expected_phase)
    throw std::runtime_error("checkpoint holds phase " + st.phase + ", expected " +
                             expected_phase);
  st.iteration = ck.meta.at("iteration").get<int>();
  st.batch_rng_s = ck.meta.at("rng_s").get<std::string>();
  st.batch_rng_t = ck.meta.at("rng_t").get<std::string>();
  for (const auto& r : ck.meta.at("metrics"))
    st.metrics.add(r.at(0).get<int>(), r.at(1).get<std::string>(), r.at(2).get<double>());
  for (const auto& r : ck.meta.at("grad_records"))
    st.grad_records.push_back({r.at(0).get<int>(), r.at(1).get<int>(),
                               objective_from_name(r.at(2).get<std::string>()),
                               r.at(3).get<double>()});

  st.model =
      std::make_unique<SegmentationModel>(cfg.model, mix_seed(cfg.seed, fnv1a64_str("model")));
  for (const auto& p : st.model->params())
    p.var.node()->value = ck.require("model." + p.name);
  st.model->set_frozen(ck.meta.at("frozen_g").get<bool>());

  if (ck.meta.at("has_disc").get<bool>()) {
    st.disc =
        std::make_unique<Discriminator>(cfg.disc, mix_seed(cfg.seed, fnv1a64_str("disc")));
    for (const auto& p : st.disc->params())
      p.var.node()->value = ck.require("disc." + p.name);
  }

  // Optimizers are rebuilt over the parameter set the saved phase trained:
  // adaptation touches only the classifier head, other phases the full model.
  if (ck.meta.at("has_task_opt").get<bool>()) {
    auto params = st.phase == "adapt" ? st.model->f_params() : st.model->params();
    st.task_opt = std::make_unique<SgdOptimizer>(std::move(params), cfg.sgd_momentum,
                                                 cfg.weight_decay);
    st.task_opt->load_state(ck, "opt.task.");
  }
  if (ck.meta.at("has_disc_opt").get<bool>()) {
    if (!st.disc) throw std::runtime_error("checkpoint has disc optimizer but no disc");
    st.disc_opt = std::make_unique<AdamOptimizer>(st.disc->params(), cfg.adam_beta1,
                                                  cfg.adam_beta2, cfg.adam_eps);
    st.disc_opt->load_state(ck, "opt.disc.");
  }
  return st;
}

void save_train_state(const TrainState& state, const TrainConfig& cfg, const std::string& phase,
                      const std::string& path) {
  save_checkpoint(path, pack_train_state(state, cfg, phase));
}

TrainState load_train_state(const std::string& path, const TrainConfig& cfg,
                            const std::string& expected_phase) {
  return unpack_train_state(load_checkpoint(path), cfg, expected_phase);
}

}  // namespace fsap
