#include "doctest.h"
#include "fsap/eval.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace fsap;
namespace fs = std::filesystem;

namespace {

LabelMap make_labels(int h, int w, std::vector<int> v) {
  LabelMap m;
  m.h = h;
  m.w = w;
  m.values = std::move(v);
  return m;
}

AblationResult ok_result(const std::string& name, std::vector<double> per_class, double miou,
                         double tail_mean) {
  AblationResult r;
  r.name = name;
  r.ok = true;
  r.per_class = std::move(per_class);
  r.evaluable.assign(r.per_class.size(), true);
  r.miou = miou;
  r.tail_mean = tail_mean;
  return r;
}

struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove(path);
  }
  ~TempFile() { fs::remove(path); }
  std::string str() const { return path.string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("confusion counts pairs and skips ignore pixels") {
  LabelMap gt = make_labels(2, 2, {0, 0, 1, 1});
  LabelMap pred = make_labels(2, 2, {0, 1, 1, 1});
  ConfusionMatrix cm = confusion(pred, gt, 2);
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(1, 0) == 0);
  CHECK(cm.at(1, 1) == 2);
  CHECK(cm.total() == 4);

  gt.values[1] = kIgnoreLabel;
  ConfusionMatrix cm2 = confusion(pred, gt, 2);
  CHECK(cm2.at(0, 1) == 0);
  CHECK(cm2.total() == 3);
}

TEST_CASE("confusion validates shapes and label ranges") {
  LabelMap gt = make_labels(2, 2, {0, 0, 1, 1});
  LabelMap small = make_labels(1, 2, {0, 0});
  CHECK_THROWS_AS(confusion(small, gt, 2), std::invalid_argument);

  LabelMap bad_gt = make_labels(2, 2, {0, 0, 2, 1});
  LabelMap pred = make_labels(2, 2, {0, 1, 1, 1});
  CHECK_THROWS_WITH_AS(confusion(pred, bad_gt, 2), doctest::Contains("ground-truth label 2"),
                       std::invalid_argument);

  LabelMap bad_pred = make_labels(2, 2, {0, 1, 1, 5});
  CHECK_THROWS_WITH_AS(confusion(bad_pred, gt, 2), doctest::Contains("predicted label 5"),
                       std::invalid_argument);

  CHECK_THROWS_AS(ConfusionMatrix(0), std::invalid_argument);
}

TEST_CASE("intersection over union from hand-counted matrix") {
  LabelMap gt = make_labels(2, 2, {0, 0, 1, 1});
  LabelMap pred = make_labels(2, 2, {0, 1, 1, 1});
  IouReport rep = iou(confusion(pred, gt, 2));
  CHECK(rep.per_class[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rep.per_class[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(rep.miou == doctest::Approx(7.0 / 12.0).epsilon(1e-12));
  CHECK(rep.evaluable[0]);
  CHECK(rep.evaluable[1]);
}

TEST_CASE("classes with zero union stay out of the mean") {
  LabelMap gt = make_labels(2, 2, {0, 0, 1, 1});
  LabelMap pred = make_labels(2, 2, {0, 1, 1, 1});
  IouReport rep = iou(confusion(pred, gt, 3));
  CHECK_FALSE(rep.evaluable[2]);
  CHECK(rep.per_class[2] == 0.0);
  CHECK(rep.miou == doctest::Approx(7.0 / 12.0).epsilon(1e-12));

  ConfusionMatrix empty(2);
  CHECK_THROWS_WITH_AS(iou(empty), doctest::Contains("no evaluable classes"), std::runtime_error);
}

TEST_CASE("iou is equivariant under class relabeling") {
  Rng rng(515);
  const int n = 36, c = 4;
  std::vector<int> gv(n), pv(n);
  for (int i = 0; i < n; ++i) {
    gv[static_cast<size_t>(i)] = rng.uniform_int(c);
    pv[static_cast<size_t>(i)] = rng.uniform_int(c);
  }
  LabelMap gt = make_labels(6, 6, gv);
  LabelMap pred = make_labels(6, 6, pv);
  IouReport base = iou(confusion(pred, gt, c));

  const int perm[c] = {2, 0, 3, 1};
  auto relabel = [&](const LabelMap& m) {
    LabelMap out = m;
    for (auto& v : out.values) v = perm[v];
    return out;
  };
  IouReport mapped = iou(confusion(relabel(pred), relabel(gt), c));
  for (int k = 0; k < c; ++k) {
    CHECK(mapped.per_class[static_cast<size_t>(perm[k])] == base.per_class[static_cast<size_t>(k)]);
    CHECK(mapped.evaluable[static_cast<size_t>(perm[k])] == base.evaluable[static_cast<size_t>(k)]);
  }
  CHECK(mapped.miou == doctest::Approx(base.miou).epsilon(1e-12));
}

TEST_CASE("merging matrices equals counting the concatenated pixels") {
  LabelMap gt1 = make_labels(2, 2, {0, 1, 1, 2});
  LabelMap p1 = make_labels(2, 2, {0, 1, 2, 2});
  LabelMap gt2 = make_labels(2, 2, {2, 2, 0, 0});
  LabelMap p2 = make_labels(2, 2, {2, 1, 0, 1});

  ConfusionMatrix merged = confusion(p1, gt1, 3);
  merged.merge(confusion(p2, gt2, 3));

  LabelMap gt_all = make_labels(4, 2, {0, 1, 1, 2, 2, 2, 0, 0});
  LabelMap p_all = make_labels(4, 2, {0, 1, 2, 2, 2, 1, 0, 1});
  ConfusionMatrix whole = confusion(p_all, gt_all, 3);
  for (int g = 0; g < 3; ++g)
    for (int p = 0; p < 3; ++p) CHECK(merged.at(g, p) == whole.at(g, p));

  ConfusionMatrix other(2);
  CHECK_THROWS_AS(merged.merge(other), std::invalid_argument);
}

TEST_CASE("prediction takes the channel argmax with ties to the lowest class") {
  ModelConfig mc;
  mc.in_h = 16;
  mc.in_w = 16;
  mc.in_ch = 3;
  mc.num_classes = 4;
  mc.split = 2;
  mc.block_channels = {6, 8, 8, 8};
  mc.head_hidden = 8;
  SegmentationModel model(mc, 77);

  Rng rng(9);
  Tensor img({16, 16, 3});
  for (int i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  LabelMap pred = predict(model, img);
  CHECK(pred.h == 16);
  CHECK(pred.w == 16);
  for (int v : pred.values) {
    CHECK(v >= 0);
    CHECK(v < 4);
  }

  // Zeroing the last head layer makes every logit equal; the tie must resolve
  // to class 0 everywhere.
  for (auto& p : model.params())
    if (p.name == "f.conv2.w" || p.name == "f.conv2.b")
      p.var.node()->value = Tensor(p.var.value().shape(), 0.0);
  LabelMap tied = predict(model, img);
  for (int v : tied.values) CHECK(v == 0);
}

TEST_CASE("dataset evaluation merges per-image matrices") {
  DomainSpec spec = default_source_spec(3);
  spec.height = 16;
  spec.width = 16;
  Dataset ds = generate_dataset(spec, 3);

  ModelConfig mc;
  mc.in_h = 16;
  mc.in_w = 16;
  mc.in_ch = 3;
  mc.num_classes = 5;
  mc.split = 2;
  mc.block_channels = {6, 8, 8, 8};
  mc.head_hidden = 8;
  SegmentationModel model(mc, 31);

  ConfusionMatrix cm = evaluate_confusion(model, ds);
  ConfusionMatrix manual(5);
  for (const auto& s : ds.samples) manual.merge(confusion(predict(model, s.image), s.labels, 5));
  for (int g = 0; g < 5; ++g)
    for (int p = 0; p < 5; ++p) CHECK(cm.at(g, p) == manual.at(g, p));
  CHECK(cm.total() == 3 * 16 * 16);

  IouReport rep = evaluate_dataset(model, ds);
  CHECK(rep.miou == iou(cm).miou);

  Dataset empty;
  empty.num_classes = 5;
  CHECK_THROWS_WITH_AS(evaluate_confusion(model, empty), doctest::Contains("empty dataset"),
                       std::invalid_argument);
}

TEST_CASE("tail mean averages only evaluable tail classes") {
  IouReport rep;
  rep.per_class = {0.5, 2.0 / 3.0, 0.25};
  rep.evaluable = {true, true, false};
  rep.miou = 0.0;
  CHECK(tail_mean_iou(rep, {1}) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(tail_mean_iou(rep, {0, 1}) == doctest::Approx(7.0 / 12.0).epsilon(1e-12));
  CHECK(tail_mean_iou(rep, {1, 2}) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(tail_mean_iou(rep, {}), std::invalid_argument);
  CHECK_THROWS_WITH_AS(tail_mean_iou(rep, {7}), doctest::Contains("out of range"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(tail_mean_iou(rep, {2}), doctest::Contains("no evaluable tail classes"),
                       std::runtime_error);
}

TEST_CASE("tail report computes deltas against the first row") {
  std::vector<std::string> names = {"a", "b", "c"};
  std::vector<AblationResult> results;
  results.push_back(ok_result("ref", {0.9, 0.20, 0.10}, 0.4, 0.15));
  results.push_back(ok_result("new", {0.8, 0.30, 0.16}, 0.42, 0.23));

  std::vector<TailRow> rows = tail_report(results, names, {"b", "c"});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].config == "ref");
  CHECK(rows[0].tail_delta[0] == 0.0);
  CHECK(rows[0].tail_delta[1] == 0.0);
  CHECK(rows[0].tail_mean == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(rows[0].tail_mean_delta == 0.0);
  CHECK(rows[1].tail_iou[0] == doctest::Approx(0.30).epsilon(1e-12));
  CHECK(rows[1].tail_delta[0] == doctest::Approx(0.10).epsilon(1e-12));
  CHECK(rows[1].tail_delta[1] == doctest::Approx(0.06).epsilon(1e-12));
  CHECK(rows[1].tail_mean_delta == doctest::Approx((0.30 + 0.16 - 0.20 - 0.10) / 2).epsilon(1e-12));

  CHECK_THROWS_WITH_AS(tail_report(results, names, {"zebra"}),
                       doctest::Contains("unknown class name zebra"), std::invalid_argument);
  CHECK_THROWS_AS(tail_report({}, names, {"b"}), std::invalid_argument);

  AblationResult bad;
  bad.name = "broken";
  bad.ok = false;
  bad.error = "boom";
  results.push_back(bad);
  CHECK_THROWS_WITH_AS(tail_report(results, names, {"b"}), doctest::Contains("broken"),
                       std::invalid_argument);

  std::string table = format_tail_report(rows, {"b", "c"});
  CHECK(table.find("ref") != std::string::npos);
  CHECK(table.find("tail_mean") != std::string::npos);
}

TEST_CASE("ablation grids enumerate the intended configurations") {
  TrainConfig base;
  auto comp = component_grid(base, 10);
  REQUIRE(comp.size() == 8);
  for (size_t i = 0; i < comp.size(); ++i) {
    CHECK(comp[i].pretrain_iters == 10);
    CHECK(comp[i].train.baseline == "none");
    for (size_t j = i + 1; j < comp.size(); ++j) CHECK(comp[i].name != comp[j].name);
  }
  int pert_on = 0;
  for (const auto& ac : comp) pert_on += ac.train.perturbation ? 1 : 0;
  CHECK(pert_on == 4);

  auto attacks = attack_method_grid(base, 10);
  REQUIRE(attacks.size() == 5);
  CHECK(attacks[0].name == "method=none");
  CHECK(attacks[4].name == "method=i-fgspm");
  CHECK(attacks[4].train.perturb.method == AttackMethod::i_fgspm);

  auto layers = split_layer_grid(base, 10, {2, 4});
  REQUIRE(layers.size() == 2);
  CHECK(layers[0].name == "layer=after-block-2");
  CHECK(layers[0].train.model.split == 2);
  CHECK(layers[0].train.perturb.layer == 2);
  CHECK_THROWS_AS(split_layer_grid(base, 10, {}), std::invalid_argument);
}

TEST_CASE("ablation run scores identical configs identically and survives failures") {
  DomainSpec sspec = default_source_spec(21);
  sspec.height = 32;
  sspec.width = 32;
  DomainSpec tspec = default_target_spec(21);
  tspec.height = 32;
  tspec.width = 32;
  Dataset ds_s = generate_dataset(sspec, 3);
  Dataset ds_t = generate_dataset(tspec, 3);

  TrainConfig base;
  base.model.in_h = 32;
  base.model.in_w = 32;
  base.model.num_classes = 5;
  base.model.split = 2;
  base.model.block_channels = {6, 8, 8, 8};
  base.model.head_hidden = 8;
  base.max_iter = 2;
  base.batch_size = 2;
  base.seed = 5;
  base.baseline = "source_only";

  AblationConfig a{"first", base, 2};
  AblationConfig b{"second", base, 2};
  AblationConfig broken{"broken", base, 2};
  broken.train.batch_size = 0;

  auto results = ablation_run({a, broken, b}, ds_s, ds_t, ds_t, {3, 4});
  REQUIRE(results.size() == 3);
  CHECK(results[0].ok);
  CHECK_FALSE(results[1].ok);
  CHECK_FALSE(results[1].error.empty());
  CHECK(results[2].ok);
  CHECK(results[0].miou == results[2].miou);
  CHECK(results[0].per_class == results[2].per_class);
  CHECK(results[0].tail_mean == results[2].tail_mean);

  std::string table = format_ablation_table(results, ds_s.class_names);
  CHECK(table.find("first") != std::string::npos);
  CHECK(table.find("FAILED") != std::string::npos);

  TempFile csv("fsap_test_ablation.csv");
  write_ablation_csv(csv.str(), results, ds_s.class_names);
  std::string body = slurp(csv.str());
  CHECK(body.rfind("config,status,iou_sky", 0) == 0);
  CHECK(body.find("broken,failed") != std::string::npos);
}

TEST_CASE("gradient intensity plot writes the csv and an svg chart") {
  std::vector<GradientIntensityRecord> records;
  for (int iter = 0; iter < 2; ++iter)
    for (int k = 1; k <= 3; ++k) {
      records.push_back({iter, k, Objective::adv, -1.0 - k});
      records.push_back({iter, k, Objective::l2, 2.0 - k});
    }

  TempFile svg("fsap_test_intensity.svg");
  TempFile csv("fsap_test_intensity.csv");
  plot_gradient_intensity(records, svg.str(), csv.str());

  std::string chart = slurp(svg.str());
  CHECK(chart.rfind("<svg", 0) == 0);
  CHECK(chart.find("</svg>") != std::string::npos);

  auto back = read_gradient_intensity_csv(csv.str());
  REQUIRE(back.size() == records.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].iter == records[i].iter);
    CHECK(back[i].k == records[i].k);
    CHECK(back[i].objective == records[i].objective);
    CHECK(back[i].log10_l1_norm == records[i].log10_l1_norm);
  }

  CHECK_THROWS_WITH_AS(plot_gradient_intensity({}, svg.str(), csv.str()),
                       doctest::Contains("no records"), std::invalid_argument);
}
