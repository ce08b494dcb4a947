#include "fsap/perturb.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <utility>

namespace fsap {
namespace {

constexpr double kDomainEps = 1e-7;

void require_context(const AttackContext& ctx, const char* who) {
  if (!ctx.model || !ctx.discriminator)
    throw std::invalid_argument(std::string(who) + ": attack context missing models");
}

void require_labels(const FeatureMap& f, const LabelMap* y_s, const char* who) {
  if (f.origin == Origin::source && !y_s)
    throw std::invalid_argument(std::string(who) + ": source-origin map needs labels");
  if (f.origin == Origin::target && y_s)
    throw std::invalid_argument(std::string(who) + ": labels provided for a target-origin map");
}

std::string map_identity(const FeatureMap& f) {
  return std::string(origin_name(f.origin)) + "/" + layer_name(f.layer);
}

// The origin's summand of the discriminator-confusion objective: ascending
// it pushes the discriminator's verdict toward the opposite domain.
Var confusion_term(Var d, Origin origin) {
  if (origin == Origin::target) {
    Tensor ones(d.shape(), 1.0);
    d = sub(Var::leaf(ones), std::move(d));
  }
  return scale(vmean(vlog(clamp(std::move(d), kDomainEps, 1.0 - kDomainEps))), -1.0);
}

struct ObjectiveGrads {
  Tensor adv;
  Tensor l2;
  Tensor seg;  // empty unless source origin
};

ObjectiveGrads objective_grads(const FeatureMap& f_star, const FeatureMap& f,
                               const SegmentationModel& model,
                               const Discriminator& discriminator, const LabelMap* y_s) {
  if (!f_star.values.same_shape(f.values))
    throw std::invalid_argument("attack_gradients: feature shape mismatch");
  if (f_star.origin != f.origin)
    throw std::invalid_argument("attack_gradients: origin mismatch");
  require_labels(f_star, y_s, "attack_gradients");

  Var leaf = Var::leaf(f_star.values, true);
  Var p = model.classify_var(leaf);
  Var adv = confusion_term(discriminator.discriminate_var(p), f_star.origin);
  Var l2 = feature_l2(leaf, Var::leaf(f.values));

  ObjectiveGrads g;
  g.adv = grad_of(adv, leaf);
  g.l2 = grad_of(l2, leaf);
  if (y_s) g.seg = grad_of(lovasz_softmax(p, *y_s), leaf);
  return g;
}

void record_intensities(std::vector<GradientIntensityRecord>* records, int iter, int k,
                        const ObjectiveGrads& g) {
  if (!records) return;
  records->push_back({iter, k, Objective::adv, log_intensity(g.adv)});
  records->push_back({iter, k, Objective::l2, log_intensity(g.l2)});
  if (!g.seg.empty()) records->push_back({iter, k, Objective::seg, log_intensity(g.seg)});
}

// f_k plus the per-objective signed steps; absent objectives pass zero coefficient.
Tensor signed_update(const Tensor& f_k, const Tensor& s_adv, double c_adv, const Tensor& s_l2,
                     double c_l2, const Tensor* s_seg, double c_seg) {
  Tensor out = f_k;
  for (int i = 0; i < out.size(); ++i) {
    double step = c_adv * s_adv[i] + c_l2 * s_l2[i];
    if (s_seg) step += c_seg * (*s_seg)[i];
    out[i] += step;
  }
  return out;
}

FeatureMap preposed_step(const FeatureMap& f_k, const FeatureMap& f, const PerturbConfig& cfg,
                         const AttackContext& ctx, int k,
                         std::vector<GradientIntensityRecord>* records) {
  ObjectiveGrads g = objective_grads(f_k, f, *ctx.model, *ctx.discriminator, ctx.labels);
  record_intensities(records, ctx.iter, k, g);
  Tensor s_adv = Tensor::sign(g.adv);
  Tensor s_l2 = Tensor::sign(g.l2);
  if (g.seg.empty())
    return {signed_update(f_k.values, s_adv, cfg.eps1, s_l2, -cfg.eps2, nullptr, 0.0),
            f_k.origin, f_k.layer};
  Tensor s_seg = Tensor::sign(g.seg);
  return {signed_update(f_k.values, s_adv, cfg.eps1, s_l2, -cfg.eps2, &s_seg, cfg.eps3),
          f_k.origin, f_k.layer};
}

void require_layer(const FeatureMap& f, const PerturbConfig& cfg, const AttackContext& ctx,
                   const char* who) {
  if (f.layer != cfg.layer)
    throw std::invalid_argument(std::string(who) + ": feature layer " + layer_name(f.layer) +
                                " does not match configured " + layer_name(cfg.layer));
  if (ctx.model && ctx.model->config().split != f.layer)
    throw std::invalid_argument(std::string(who) + ": model split point " +
                                layer_name(ctx.model->config().split) +
                                " does not match feature layer " + layer_name(f.layer));
}

}  // namespace

const char* attack_method_name(AttackMethod m) {
  switch (m) {
    case AttackMethod::none: return "none";
    case AttackMethod::fgspm: return "fgspm";
    case AttackMethod::i_fgsm: return "i-fgsm";
    case AttackMethod::mi_fgspm: return "mi-fgspm";
    case AttackMethod::i_fgspm: return "i-fgspm";
  }
  return "?";
}

AttackMethod attack_method_from_name(const std::string& name) {
  std::string low;
  low.reserve(name.size());
  for (char c : name) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (low == "none") return AttackMethod::none;
  if (low == "fgspm") return AttackMethod::fgspm;
  if (low == "i-fgsm") return AttackMethod::i_fgsm;
  if (low == "mi-fgspm") return AttackMethod::mi_fgspm;
  if (low == "i-fgspm") return AttackMethod::i_fgspm;
  throw std::invalid_argument("unknown attack method: " + name);
}

std::vector<GradientMap> attack_gradients(const FeatureMap& f_star, const FeatureMap& f,
                                          const SegmentationModel& model,
                                          const Discriminator& discriminator,
                                          const LabelMap* y_s) {
  ObjectiveGrads g = objective_grads(f_star, f, model, discriminator, y_s);
  std::string id = map_identity(f_star);
  std::vector<GradientMap> out;
  out.push_back({id, Objective::adv, std::move(g.adv)});
  out.push_back({id, Objective::l2, std::move(g.l2)});
  if (!g.seg.empty()) out.push_back({id, Objective::seg, std::move(g.seg)});
  return out;
}

FeatureMap i_fgsm_generate(const FeatureMap& f, const PerturbConfig& cfg,
                           const AttackContext& ctx,
                           std::vector<GradientIntensityRecord>* records) {
  require_context(ctx, "i_fgsm_generate");
  require_layer(f, cfg, ctx, "i_fgsm_generate");
  require_labels(f, ctx.labels, "i_fgsm_generate");
  double eps = cfg.eps1 + cfg.eps2 + cfg.eps3;
  FeatureMap cur = f;
  for (int k = 1; k <= cfg.k; ++k) {
    ObjectiveGrads g = objective_grads(cur, f, *ctx.model, *ctx.discriminator, ctx.labels);
    record_intensities(records, ctx.iter, k, g);
    // single sign over the weighted gradient sum
    Tensor combined(g.adv.shape());
    for (int i = 0; i < combined.size(); ++i) {
      double v = cfg.beta3 * g.adv[i] - cfg.beta2 * g.l2[i];
      if (!g.seg.empty()) v += cfg.beta1 * g.seg[i];
      combined[i] = v;
    }
    Tensor s = Tensor::sign(combined);
    for (int i = 0; i < combined.size(); ++i) cur.values[i] += eps * s[i];
  }
  return cur;
}

FeatureMap i_fgspm_step_target(const FeatureMap& f_k, const FeatureMap& f,
                               const PerturbConfig& cfg, const AttackContext& ctx) {
  require_context(ctx, "i_fgspm_step_target");
  if (f_k.origin != Origin::target)
    throw std::invalid_argument("i_fgspm_step_target: map origin is not target");
  AttackContext step_ctx = ctx;
  step_ctx.labels = nullptr;
  return preposed_step(f_k, f, cfg, step_ctx, 1, nullptr);
}

FeatureMap i_fgspm_step_source(const FeatureMap& f_k, const FeatureMap& f, const LabelMap& y_s,
                               const PerturbConfig& cfg, const AttackContext& ctx) {
  require_context(ctx, "i_fgspm_step_source");
  if (f_k.origin != Origin::source)
    throw std::invalid_argument("i_fgspm_step_source: map origin is not source");
  AttackContext step_ctx = ctx;
  step_ctx.labels = &y_s;
  return preposed_step(f_k, f, cfg, step_ctx, 1, nullptr);
}

AdversarialResult generate_adversarial(const FeatureMap& f, const PerturbConfig& cfg,
                                       const AttackContext& ctx) {
  if (cfg.k < 0) throw std::invalid_argument("generate_adversarial: negative iteration count");
  if (cfg.eps1 < 0 || cfg.eps2 < 0 || cfg.eps3 < 0)
    throw std::invalid_argument("generate_adversarial: negative step intensity");

  AdversarialResult out;
  if (cfg.method == AttackMethod::none) {
    out.feature = f;
    return out;
  }
  require_context(ctx, "generate_adversarial");
  require_layer(f, cfg, ctx, "generate_adversarial");
  require_labels(f, ctx.labels, "generate_adversarial");

  switch (cfg.method) {
    case AttackMethod::fgspm: {
      out.feature = preposed_step(f, f, cfg, ctx, 1, &out.records);
      return out;
    }
    case AttackMethod::i_fgspm: {
      FeatureMap cur = f;
      for (int k = 1; k <= cfg.k; ++k) cur = preposed_step(cur, f, cfg, ctx, k, &out.records);
      out.feature = std::move(cur);
      return out;
    }
    case AttackMethod::i_fgsm: {
      out.feature = i_fgsm_generate(f, cfg, ctx, &out.records);
      return out;
    }
    case AttackMethod::mi_fgspm: {
      // per-objective momentum over L1-normalized gradients, then the
      // sign-preposed combination
      FeatureMap cur = f;
      Tensor m_adv(f.values.shape(), 0.0);
      Tensor m_l2(f.values.shape(), 0.0);
      Tensor m_seg(f.values.shape(), 0.0);
      for (int k = 1; k <= cfg.k; ++k) {
        ObjectiveGrads g = objective_grads(cur, f, *ctx.model, *ctx.discriminator, ctx.labels);
        record_intensities(&out.records, ctx.iter, k, g);
        auto accumulate = [&](Tensor& m, const Tensor& grad) {
          double n = grad.l1_norm();
          if (n > 0.0)
            for (int i = 0; i < m.size(); ++i) m[i] = cfg.mu * m[i] + grad[i] / n;
          else
            for (int i = 0; i < m.size(); ++i) m[i] = cfg.mu * m[i];
        };
        accumulate(m_adv, g.adv);
        accumulate(m_l2, g.l2);
        bool has_seg = !g.seg.empty();
        if (has_seg) accumulate(m_seg, g.seg);
        Tensor s_adv = Tensor::sign(m_adv);
        Tensor s_l2 = Tensor::sign(m_l2);
        if (has_seg) {
          Tensor s_seg = Tensor::sign(m_seg);
          cur.values = signed_update(cur.values, s_adv, cfg.eps1, s_l2, -cfg.eps2, &s_seg, cfg.eps3);
        } else {
          cur.values = signed_update(cur.values, s_adv, cfg.eps1, s_l2, -cfg.eps2, nullptr, 0.0);
        }
      }
      out.feature = std::move(cur);
      return out;
    }
    default:
      throw std::invalid_argument("generate_adversarial: unknown attack method");
  }
}

nlohmann::json to_json(const PerturbConfig& cfg) {
  return {{"method", attack_method_name(cfg.method)},
          {"k", cfg.k},
          {"eps1", cfg.eps1},
          {"eps2", cfg.eps2},
          {"eps3", cfg.eps3},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"beta3", cfg.beta3},
          {"mu", cfg.mu},
          {"layer", layer_name(cfg.layer)}};
}

PerturbConfig perturb_config_from_json(const nlohmann::json& j) {
  PerturbConfig cfg;
  cfg.method = attack_method_from_name(j.at("method").get<std::string>());
  cfg.k = j.at("k").get<int>();
  cfg.eps1 = j.at("eps1").get<double>();
  cfg.eps2 = j.at("eps2").get<double>();
  cfg.eps3 = j.at("eps3").get<double>();
  cfg.beta1 = j.at("beta1").get<double>();
  cfg.beta2 = j.at("beta2").get<double>();
  cfg.beta3 = j.at("beta3").get<double>();
  cfg.mu = j.at("mu").get<double>();
  cfg.layer = layer_from_name(j.at("layer").get<std::string>());
  return cfg;
}

void write_gradient_intensity_csv(const std::vector<GradientIntensityRecord>& records,
                                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "iter,k,objective,log10_l1_norm\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.log10_l1_norm);
    out << r.iter << "," << r.k << "," << objective_name(r.objective) << "," << buf << "\n";
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<GradientIntensityRecord> read_gradient_intensity_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "iter,k,objective,log10_l1_norm")
    throw std::runtime_error("bad gradient-intensity header in " + path);
  std::vector<GradientIntensityRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t a = line.find(',');
    size_t b = line.find(',', a + 1);
    size_t c = line.find(',', b + 1);
    if (a == std::string::npos || b == std::string::npos || c == std::string::npos)
      throw std::runtime_error("bad gradient-intensity row in " + path + ": " + line);
    GradientIntensityRecord r;
    r.iter = std::stoi(line.substr(0, a));
    r.k = std::stoi(line.substr(a + 1, b - a - 1));
    r.objective = objective_from_name(line.substr(b + 1, c - b - 1));
    r.log10_l1_norm = std::stod(line.substr(c + 1));
    out.push_back(r);
  }
  return out;
}

}  // namespace fsap
