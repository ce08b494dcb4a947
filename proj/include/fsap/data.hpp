#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "fsap/losses.hpp"
#include "fsap/tensor.hpp"

namespace fsap {

// Appearance and placement differences between the two domains. Hue and
// noise change pixel values only; object scale and layout bias also move or
// resize the labeled shapes.
struct ShiftSpec {
  double hue_offset = 0.0;
  double noise_scale = 1.0;
  double object_scale = 1.0;
  double layout_bias = 0.0;
};

struct DomainSpec {
  int num_classes = 5;
  int height = 64;
  int width = 64;
  std::vector<std::string> class_names;
  std::vector<double> class_frequency_targets;       // sums to 1
  std::vector<std::array<double, 3>> palette;        // base RGB per class
  std::vector<int> tail_classes;                     // frequency target < 2%
  ShiftSpec shift;
  uint64_t seed = 1;

  void validate() const;
  uint64_t hash() const;
  nlohmann::json to_json() const;
  static DomainSpec from_json(const nlohmann::json& j);
};

// Shipped benchmark domains: three background bands (head classes) plus
// small discs and diamonds (tail classes); the target domain shifts hue,
// doubles texture noise, and shrinks the tail objects.
DomainSpec default_source_spec(uint64_t seed);
DomainSpec default_target_spec(uint64_t seed);

struct Sample {
  Tensor image;  // H x W x 3, values in [0,1], quantized to k/255
  LabelMap labels;
};

struct Dataset {
  int num_classes = 0;
  std::vector<std::string> class_names;
  uint64_t spec_hash = 0;
  std::vector<Sample> samples;

  int size() const { return static_cast<int>(samples.size()); }
};

// Pure function of (spec, index): same inputs, identical output.
Sample generate_scene(const DomainSpec& spec, int index);
Dataset generate_dataset(const DomainSpec& spec, int count);
// Scenes [first_index, first_index + count); disjoint splits come from
// disjoint index ranges of the same spec.
Dataset generate_dataset(const DomainSpec& spec, int first_index, int count);

// Per-class pixel ratios over the whole dataset, ignore pixels excluded.
std::vector<double> category_distribution(const Dataset& ds);

// Directory layout: images/%06d.png (8-bit RGB), labels/%06d.png (8-bit
// gray, value = class id, 255 = ignore), manifest.json.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace fsap
