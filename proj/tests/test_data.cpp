#include "doctest.h"
#include "fsap/data.hpp"
#include "fsap/png_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

using namespace fsap;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

bool samples_equal(const Sample& a, const Sample& b) {
  return a.image == b.image && a.labels.h == b.labels.h && a.labels.w == b.labels.w &&
         a.labels.values == b.labels.values;
}

}  // namespace

TEST_CASE("domain spec validation") {
  DomainSpec s = default_source_spec(1);
  CHECK_NOTHROW(s.validate());

  DomainSpec bad = s;
  bad.class_frequency_targets[0] += 0.1;  // no longer sums to 1
  CHECK_THROWS(bad.validate());

  bad = s;
  bad.tail_classes.clear();
  CHECK_THROWS(bad.validate());

  bad = s;
  bad.class_frequency_targets = {0.25, 0.25, 0.25, 0.05, 0.20};  // tail >= 2%
  CHECK_THROWS(bad.validate());

  bad = s;
  bad.shift.object_scale = 0.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("domain spec json round-trip and hash sensitivity") {
  DomainSpec s = default_target_spec(11);
  DomainSpec back = DomainSpec::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
  CHECK(back.hash() == s.hash());

  DomainSpec other = s;
  other.shift.hue_offset += 0.01;
  CHECK(other.hash() != s.hash());
  other = s;
  other.seed += 1;
  CHECK(other.hash() != s.hash());
}

TEST_CASE("scene generation is deterministic in seed and index") {
  DomainSpec s = default_source_spec(5);
  Sample a = generate_scene(s, 7);
  Sample b = generate_scene(s, 7);
  CHECK(samples_equal(a, b));

  Sample c = generate_scene(s, 8);
  CHECK_FALSE(samples_equal(a, c));

  DomainSpec s2 = default_source_spec(6);
  Sample d = generate_scene(s2, 7);
  CHECK_FALSE(samples_equal(a, d));
}

TEST_CASE("generated images are quantized to 8-bit levels and labels are valid") {
  DomainSpec s = default_target_spec(9);
  for (int i = 0; i < 4; ++i) {
    Sample sm = generate_scene(s, i);
    CHECK(sm.image.shape() == std::vector<int>{64, 64, 3});
    for (int k = 0; k < sm.image.size(); ++k) {
      double v = sm.image[k];
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      double level = v * 255.0;
      CHECK(std::fabs(level - std::round(level)) < 1e-9);
    }
    CHECK_NOTHROW(validate_label_map(sm.labels, s.num_classes));
    for (int v : sm.labels.values) CHECK(v != kIgnoreLabel);
  }
}

TEST_CASE("appearance-only shift keeps the label layout, layout bias moves it") {
  DomainSpec src = default_source_spec(21);
  DomainSpec appearance = src;
  appearance.shift.hue_offset = 0.2;
  appearance.shift.noise_scale = 3.0;

  Sample a = generate_scene(src, 3);
  Sample b = generate_scene(appearance, 3);
  CHECK(a.labels.values == b.labels.values);
  CHECK_FALSE(a.image == b.image);

  DomainSpec biased = src;
  biased.shift.layout_bias = 0.3;
  bool any_label_moved = false;
  for (int i = 0; i < 5 && !any_label_moved; ++i)
    any_label_moved = generate_scene(src, i).labels.values !=
                      generate_scene(biased, i).labels.values;
  CHECK(any_label_moved);
}

TEST_CASE("tail-class pixel ratios land within half of their targets over 200 scenes") {
  for (uint64_t seed : {static_cast<uint64_t>(31), static_cast<uint64_t>(32)}) {
    DomainSpec s = default_source_spec(seed);
    Dataset ds = generate_dataset(s, 200);
    std::vector<double> dist = category_distribution(ds);
    for (int cls : s.tail_classes) {
      double target = s.class_frequency_targets[static_cast<size_t>(cls)];
      CHECK(dist[static_cast<size_t>(cls)] >= 0.5 * target);
      CHECK(dist[static_cast<size_t>(cls)] <= 1.5 * target);
      CHECK(dist[static_cast<size_t>(cls)] < 0.02);
    }
  }

  // The shrunken-object target domain still shows both tail classes.
  Dataset tgt = generate_dataset(default_target_spec(31), 200);
  std::vector<double> dist = category_distribution(tgt);
  DomainSpec ts = default_target_spec(31);
  for (int cls : ts.tail_classes) {
    CHECK(dist[static_cast<size_t>(cls)] > 0.0);
    CHECK(dist[static_cast<size_t>(cls)] < 0.02);
  }
}

TEST_CASE("category distribution matches direct pixel counting") {
  DomainSpec s = default_source_spec(41);
  Dataset ds = generate_dataset(s, 5);
  std::vector<double> dist = category_distribution(ds);
  REQUIRE(dist.size() == static_cast<size_t>(s.num_classes));

  std::vector<long> counts(static_cast<size_t>(s.num_classes), 0);
  long total = 0;
  for (const auto& sm : ds.samples)
    for (int v : sm.labels.values) {
      if (v == kIgnoreLabel) continue;
      ++counts[static_cast<size_t>(v)];
      ++total;
    }
  double sum = 0.0;
  for (int c = 0; c < s.num_classes; ++c) {
    CHECK(dist[static_cast<size_t>(c)] ==
          doctest::Approx(static_cast<double>(counts[static_cast<size_t>(c)]) / total)
              .epsilon(1e-12));
    sum += dist[static_cast<size_t>(c)];
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("category distribution of a single-class dataset is a point mass") {
  Dataset ds;
  ds.num_classes = 3;
  ds.class_names = {"a", "b", "c"};
  Sample s;
  s.image = Tensor({4, 4, 3}, 0.5);
  s.labels.h = 4;
  s.labels.w = 4;
  s.labels.values.assign(16, 0);
  ds.samples.push_back(std::move(s));

  std::vector<double> dist = category_distribution(ds);
  CHECK(dist == std::vector<double>{1.0, 0.0, 0.0});

  Dataset empty;
  empty.num_classes = 3;
  CHECK_THROWS(category_distribution(empty));
}

TEST_CASE("index ranges compose into the same scenes") {
  DomainSpec s = default_source_spec(51);
  Dataset whole = generate_dataset(s, 0, 8);
  Dataset tail_half = generate_dataset(s, 4, 4);
  for (int i = 0; i < 4; ++i)
    CHECK(samples_equal(whole.samples[static_cast<size_t>(4 + i)],
                        tail_half.samples[static_cast<size_t>(i)]));
  CHECK_THROWS(generate_dataset(s, -1, 4));
  CHECK_THROWS(generate_dataset(s, 0, 0));
}

TEST_CASE("dataset round-trips through disk bit-exactly") {
  TempDir dir("fsap_test_roundtrip");
  DomainSpec s = default_source_spec(61);
  Dataset ds = generate_dataset(s, 10);
  save_dataset(ds, dir.str());
  Dataset back = load_dataset(dir.str());

  CHECK(back.num_classes == ds.num_classes);
  CHECK(back.class_names == ds.class_names);
  CHECK(back.spec_hash == ds.spec_hash);
  REQUIRE(back.size() == ds.size());
  for (int i = 0; i < ds.size(); ++i)
    CHECK(samples_equal(back.samples[static_cast<size_t>(i)],
                        ds.samples[static_cast<size_t>(i)]));
}

TEST_CASE("loading reports missing manifests and corrupted labels by file") {
  TempDir dir("fsap_test_badload");
  CHECK_THROWS_WITH_AS(load_dataset(dir.str()),
                       doctest::Contains("missing manifest"), std::runtime_error);

  DomainSpec s = default_source_spec(71);
  Dataset ds = generate_dataset(s, 2);
  save_dataset(ds, dir.str());

  // Poison one label file with an out-of-range class id.
  std::string bad = (dir.path / "labels" / "000001.png").string();
  PngImage lab = read_png(bad);
  lab.pixels[5] = 250;
  write_png(bad, lab);
  CHECK_THROWS_WITH_AS(load_dataset(dir.str()), doctest::Contains("000001.png"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(load_dataset(dir.str()), doctest::Contains("250"),
                       std::runtime_error);
}

TEST_CASE("loading rejects a manifest whose class count disagrees") {
  TempDir dir("fsap_test_badmanifest");
  DomainSpec s = default_source_spec(81);
  save_dataset(generate_dataset(s, 1), dir.str());

  std::ifstream in(dir.path / "manifest.json");
  nlohmann::json manifest = nlohmann::json::parse(in);
  in.close();
  manifest["C"] = 3;  // five class names remain
  std::ofstream out(dir.path / "manifest.json");
  out << manifest.dump(2) << "\n";
  out.close();

  CHECK_THROWS_WITH_AS(load_dataset(dir.str()), doctest::Contains("class count"),
                       std::runtime_error);
}

TEST_CASE("default domains differ only in their shift block") {
  DomainSpec src = default_source_spec(3);
  DomainSpec tgt = default_target_spec(3);
  CHECK(src.class_names == tgt.class_names);
  CHECK(src.class_frequency_targets == tgt.class_frequency_targets);
  CHECK(src.tail_classes == tgt.tail_classes);
  CHECK(tgt.shift.hue_offset == 0.15);
  CHECK(tgt.shift.noise_scale == 2.0);
  CHECK(tgt.shift.object_scale == 0.8);
  CHECK(tgt.shift.layout_bias == 0.0);
  CHECK(src.shift.hue_offset == 0.0);

  // Both name two sub-2% tail classes.
  REQUIRE(src.tail_classes.size() == 2);
  for (int cls : src.tail_classes)
    CHECK(src.class_frequency_targets[static_cast<size_t>(cls)] < 0.02);
}
