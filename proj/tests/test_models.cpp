#include "doctest.h"
#include "fsap/models.hpp"
#include "oracles.hpp"

#include <vector>

using namespace fsap;

namespace {

ModelConfig small_model_config(int split) {
  ModelConfig m;
  m.in_h = 16;
  m.in_w = 16;
  m.in_ch = 3;
  m.num_classes = 4;
  m.split = split;
  m.block_channels = {6, 8, 8, 8};
  m.head_hidden = 8;
  return m;
}

DiscriminatorConfig small_disc_config() {
  DiscriminatorConfig d;
  d.in_h = 16;
  d.in_w = 16;
  d.in_ch = 4;
  d.channels = {4, 8};
  return d;
}

Tensor random_image(Rng& rng, int h, int w, int c) {
  Tensor x({h, w, c});
  for (int i = 0; i < x.size(); ++i) x[i] = rng.uniform();
  return x;
}

const Tensor* find_param(const std::vector<NamedParam>& params, const std::string& name) {
  for (const auto& p : params)
    if (p.name == name) return &p.var.value();
  return nullptr;
}

}  // namespace

TEST_CASE("feature shape follows the split point") {
  CHECK(SegmentationModel(small_model_config(0), 1).feature_shape() ==
        std::vector<int>{16, 16, 3});
  CHECK(SegmentationModel(small_model_config(1), 1).feature_shape() ==
        std::vector<int>{8, 8, 6});
  CHECK(SegmentationModel(small_model_config(2), 1).feature_shape() ==
        std::vector<int>{4, 4, 8});
  CHECK(SegmentationModel(small_model_config(4), 1).feature_shape() ==
        std::vector<int>{1, 1, 8});
}

TEST_CASE("model construction rejects invalid configs") {
  ModelConfig bad = small_model_config(2);
  bad.split = 5;
  CHECK_THROWS(SegmentationModel(bad, 1));
  bad = small_model_config(2);
  bad.in_h = 20;  // not divisible by 2^blocks
  CHECK_THROWS(SegmentationModel(bad, 1));
  bad = small_model_config(2);
  bad.block_channels = {};
  CHECK_THROWS(SegmentationModel(bad, 1));
}

TEST_CASE("extract_features tags origin and layer and validates input") {
  SegmentationModel model(small_model_config(2), 7);
  Rng rng(1);
  Tensor x = random_image(rng, 16, 16, 3);

  FeatureMap f = model.extract_features(x, Origin::target);
  CHECK(f.origin == Origin::target);
  CHECK(f.layer == 2);
  CHECK(f.values.shape() == model.feature_shape());

  CHECK_THROWS(model.extract_features(random_image(rng, 8, 8, 3), Origin::source));

  // Pixel-level split hands the image through untouched.
  SegmentationModel pixel(small_model_config(0), 7);
  FeatureMap fp = pixel.extract_features(x, Origin::source);
  CHECK(fp.layer == 0);
  CHECK(fp.values == x);
}

TEST_CASE("classify produces a valid softmax map at input resolution") {
  SegmentationModel model(small_model_config(2), 7);
  Rng rng(2);
  Tensor x = random_image(rng, 16, 16, 3);
  FeatureMap f = model.extract_features(x, Origin::source);

  SoftmaxMap p = model.classify(f);
  CHECK(p.values.shape() == std::vector<int>{16, 16, 4});
  CHECK_NOTHROW(validate_softmax_map(p.values));

  // Tag mismatch against the configured split is rejected.
  FeatureMap mislabeled = f;
  mislabeled.layer = 3;
  CHECK_THROWS(model.classify(mislabeled));
}

TEST_CASE("forward_full equals extract then classify") {
  SegmentationModel model(small_model_config(3), 9);
  Rng rng(3);
  Tensor x = random_image(rng, 16, 16, 3);
  SoftmaxMap direct = model.forward_full(x);
  SoftmaxMap staged = model.classify(model.extract_features(x, Origin::source));
  CHECK(direct.values == staged.values);
}

TEST_CASE("initialization is seed-deterministic") {
  SegmentationModel a(small_model_config(2), 42);
  SegmentationModel b(small_model_config(2), 42);
  SegmentationModel c(small_model_config(2), 43);
  CHECK(a.checksum() == b.checksum());
  CHECK(a.checksum() != c.checksum());

  Discriminator da(small_disc_config(), 42);
  Discriminator db(small_disc_config(), 42);
  Discriminator dc(small_disc_config(), 43);
  CHECK(da.checksum() == db.checksum());
  CHECK(da.checksum() != dc.checksum());
}

TEST_CASE("the split knob moves the parameter boundary without reinitializing") {
  SegmentationModel two(small_model_config(2), 42);
  SegmentationModel three(small_model_config(3), 42);

  // Same underlying block weights, assigned to different sides.
  const Tensor* in_f = find_param(two.f_params(), "f.block3.w");
  const Tensor* in_g = find_param(three.g_params(), "g.block3.w");
  REQUIRE(in_f != nullptr);
  REQUIRE(in_g != nullptr);
  CHECK(*in_f == *in_g);

  CHECK(two.g_params().size() == 4);   // 2 blocks x (w, b)
  CHECK(three.g_params().size() == 6);
  CHECK(two.f_params().size() == 8);   // 2 blocks + 2 head convs
  CHECK(three.f_params().size() == 6);
  CHECK(two.params().size() == 12);
  CHECK(two.params().size() == two.g_params().size() + two.f_params().size());
}

TEST_CASE("pixel-level split leaves the extractor empty") {
  SegmentationModel model(small_model_config(0), 5);
  CHECK(model.g_params().empty());
  CHECK(model.f_params().size() == model.params().size());
}

TEST_CASE("freezing the extractor removes its parameters from training") {
  SegmentationModel model(small_model_config(2), 11);
  CHECK_FALSE(model.frozen());
  CHECK(model.trainable_params().size() == model.params().size());

  model.set_frozen(true);
  CHECK(model.frozen());
  CHECK(model.trainable_params().size() == model.f_params().size());
  for (const auto& p : model.trainable_params())
    CHECK(p.name.rfind("f.", 0) == 0);

  model.set_frozen(false);
  CHECK(model.trainable_params().size() == model.params().size());
}

TEST_CASE("discriminator output is a probability map of the strided shape") {
  Discriminator disc(small_disc_config(), 13);
  CHECK(disc.output_shape() == std::vector<int>{2, 2});  // 16 / 2^3

  Rng rng(4);
  Tensor p({16, 16, 4});
  for (int pix = 0; pix < 16 * 16; ++pix) {
    double sum = 0.0;
    for (int c = 0; c < 4; ++c) {
      p[pix * 4 + c] = rng.uniform() + 0.1;
      sum += p[pix * 4 + c];
    }
    for (int c = 0; c < 4; ++c) p[pix * 4 + c] /= sum;
  }
  DomainMap d = disc.discriminate(SoftmaxMap{p});
  CHECK(d.values.shape() == std::vector<int>{2, 2});
  for (int i = 0; i < d.values.size(); ++i) {
    CHECK(d.values[i] > 0.0);
    CHECK(d.values[i] < 1.0);
  }

  CHECK_THROWS(disc.discriminate_var(Var::leaf(Tensor({8, 8, 4}))));
}

TEST_CASE("discriminator rejects input sizes its stride cannot divide") {
  DiscriminatorConfig d = small_disc_config();
  d.in_h = 12;
  CHECK_THROWS(Discriminator(d, 1));
}

TEST_CASE("params_checksum is order- and name-sensitive") {
  SegmentationModel model(small_model_config(2), 17);
  auto params = model.params();
  uint64_t base = params_checksum(params);
  std::swap(params[0], params[1]);
  CHECK(params_checksum(params) != base);
}

TEST_CASE("model and discriminator configs round-trip through json") {
  ModelConfig m = small_model_config(3);
  m.leak = 0.07;
  ModelConfig mb = model_config_from_json(to_json(m));
  CHECK(mb.in_h == m.in_h);
  CHECK(mb.in_w == m.in_w);
  CHECK(mb.in_ch == m.in_ch);
  CHECK(mb.num_classes == m.num_classes);
  CHECK(mb.split == m.split);
  CHECK(mb.block_channels == m.block_channels);
  CHECK(mb.head_hidden == m.head_hidden);
  CHECK(mb.leak == m.leak);

  DiscriminatorConfig d = small_disc_config();
  d.leak = 0.3;
  DiscriminatorConfig db = disc_config_from_json(to_json(d));
  CHECK(db.in_h == d.in_h);
  CHECK(db.in_w == d.in_w);
  CHECK(db.in_ch == d.in_ch);
  CHECK(db.channels == d.channels);
  CHECK(db.leak == d.leak);
}

TEST_CASE("classification reacts to feature changes") {
  SegmentationModel model(small_model_config(2), 19);
  Rng rng(5);
  Tensor x = random_image(rng, 16, 16, 3);
  FeatureMap f = model.extract_features(x, Origin::target);
  SoftmaxMap p0 = model.classify(f);
  FeatureMap shifted = f;
  for (int i = 0; i < shifted.values.size(); ++i) shifted.values[i] += 0.25;
  SoftmaxMap p1 = model.classify(shifted);
  CHECK_FALSE(p0.values == p1.values);
}
