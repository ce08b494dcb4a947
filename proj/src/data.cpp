#include "fsap/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "fsap/png_io.hpp"

namespace fsap {
namespace {

namespace fs = std::filesystem;

std::string index_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d.png", i);
  return buf;
}

std::array<double, 3> rgb_to_hsv(const std::array<double, 3>& rgb) {
  double r = rgb[0], g = rgb[1], b = rgb[2];
  double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  double d = mx - mn;
  double h = 0.0;
  if (d > 0.0) {
    if (mx == r)
      h = std::fmod((g - b) / d, 6.0);
    else if (mx == g)
      h = (b - r) / d + 2.0;
    else
      h = (r - g) / d + 4.0;
    h /= 6.0;
    if (h < 0.0) h += 1.0;
  }
  double s = mx > 0.0 ? d / mx : 0.0;
  return {h, s, mx};
}

std::array<double, 3> hsv_to_rgb(const std::array<double, 3>& hsv) {
  double h = hsv[0] * 6.0, s = hsv[1], v = hsv[2];
  int i = static_cast<int>(std::floor(h)) % 6;
  if (i < 0) i += 6;
  double f = h - std::floor(h);
  double p = v * (1.0 - s);
  double q = v * (1.0 - s * f);
  double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

void paint_disc(LabelMap& lbl, double cx, double cy, double r, int cls) {
  int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
  int y1 = std::min(lbl.h - 1, static_cast<int>(std::ceil(cy + r)));
  int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
  int x1 = std::min(lbl.w - 1, static_cast<int>(std::ceil(cx + r)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r * r) lbl.at(y, x) = cls;
    }
}

void paint_diamond(LabelMap& lbl, double cx, double cy, double d, int cls) {
  int y0 = std::max(0, static_cast<int>(std::floor(cy - d)));
  int y1 = std::min(lbl.h - 1, static_cast<int>(std::ceil(cy + d)));
  int x0 = std::max(0, static_cast<int>(std::floor(cx - d)));
  int x1 = std::min(lbl.w - 1, static_cast<int>(std::ceil(cx + d)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (std::abs(x - cx) + std::abs(y - cy) <= d) lbl.at(y, x) = cls;
}

int clamp_int(int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); }

}  // namespace

void DomainSpec::validate() const {
  size_t c = static_cast<size_t>(num_classes);
  if (num_classes < 2) throw std::invalid_argument("domain spec: need at least two classes");
  if (height <= 0 || width <= 0) throw std::invalid_argument("domain spec: empty image size");
  if (class_names.size() != c || class_frequency_targets.size() != c || palette.size() != c)
    throw std::invalid_argument("domain spec: per-class field lengths must equal class count");
  double sum = 0.0;
  for (double f : class_frequency_targets) {
    if (f < 0.0) throw std::invalid_argument("domain spec: negative frequency target");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("domain spec: frequency targets sum to " + std::to_string(sum));
  if (tail_classes.empty())
    throw std::invalid_argument("domain spec: needs at least one tail class");
  for (int t : tail_classes) {
    if (t < 0 || t >= num_classes) throw std::invalid_argument("domain spec: tail class out of range");
    if (class_frequency_targets[static_cast<size_t>(t)] >= 0.02)
      throw std::invalid_argument("domain spec: tail class " + std::to_string(t) +
                                  " has frequency target >= 2%");
  }
  if (shift.noise_scale < 0.0 || shift.object_scale <= 0.0)
    throw std::invalid_argument("domain spec: invalid shift scales");
}

nlohmann::json DomainSpec::to_json() const {
  nlohmann::json j;
  j["num_classes"] = num_classes;
  j["height"] = height;
  j["width"] = width;
  j["class_names"] = class_names;
  j["class_frequency_targets"] = class_frequency_targets;
  nlohmann::json pal = nlohmann::json::array();
  for (const auto& p : palette) pal.push_back({p[0], p[1], p[2]});
  j["palette"] = pal;
  j["tail_classes"] = tail_classes;
  j["shift"] = {{"hue_offset", shift.hue_offset},
                {"noise_scale", shift.noise_scale},
                {"object_scale", shift.object_scale},
                {"layout_bias", shift.layout_bias}};
  j["seed"] = seed;
  return j;
}

DomainSpec DomainSpec::from_json(const nlohmann::json& j) {
  DomainSpec s;
  s.num_classes = j.at("num_classes").get<int>();
  s.height = j.at("height").get<int>();
  s.width = j.at("width").get<int>();
  s.class_names = j.at("class_names").get<std::vector<std::string>>();
  s.class_frequency_targets = j.at("class_frequency_targets").get<std::vector<double>>();
  s.palette.clear();
  for (const auto& p : j.at("palette"))
    s.palette.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
  s.tail_classes = j.at("tail_classes").get<std::vector<int>>();
  const auto& sh = j.at("shift");
  s.shift.hue_offset = sh.at("hue_offset").get<double>();
  s.shift.noise_scale = sh.at("noise_scale").get<double>();
  s.shift.object_scale = sh.at("object_scale").get<double>();
  s.shift.layout_bias = sh.at("layout_bias").get<double>();
  s.seed = j.at("seed").get<uint64_t>();
  return s;
}

uint64_t DomainSpec::hash() const { return fnv1a64_str(to_json().dump()); }

DomainSpec default_source_spec(uint64_t seed) {
  DomainSpec s;
  s.num_classes = 5;
  s.height = 64;
  s.width = 64;
  s.class_names = {"sky", "road", "ground", "marker", "sign"};
  s.class_frequency_targets = {0.30, 0.32, 0.35, 0.018, 0.012};
  s.palette = {{0.35, 0.55, 0.85},
               {0.50, 0.50, 0.52},
               {0.45, 0.35, 0.20},
               {0.85, 0.25, 0.20},
               {0.90, 0.80, 0.20}};
  s.tail_classes = {3, 4};
  s.shift = {};  // canonical appearance
  s.seed = seed;
  return s;
}

DomainSpec default_target_spec(uint64_t seed) {
  DomainSpec s = default_source_spec(seed);
  s.shift.hue_offset = 0.15;
  s.shift.noise_scale = 2.0;
  s.shift.object_scale = 0.8;
  s.shift.layout_bias = 0.0;
  return s;
}

Sample generate_scene(const DomainSpec& spec, int index) {
  spec.validate();
  int h = spec.height, w = spec.width;
  Rng layout(mix_seed(mix_seed(spec.seed, fnv1a64_str("layout")), static_cast<uint64_t>(index)));
  Rng appearance(
      mix_seed(mix_seed(spec.seed, fnv1a64_str("appearance")), static_cast<uint64_t>(index)));

  LabelMap lbl{h, w, std::vector<int>(static_cast<size_t>(h) * w, 0)};

  // Head classes form horizontal bands, heights proportional to their
  // renormalized frequency targets, boundaries jittered and wiggled.
  std::vector<int> heads;
  for (int c = 0; c < spec.num_classes; ++c)
    if (std::find(spec.tail_classes.begin(), spec.tail_classes.end(), c) ==
        spec.tail_classes.end())
      heads.push_back(c);
  if (heads.empty()) throw std::invalid_argument("generate_scene: no head classes");

  double head_total = 0.0;
  for (int c : heads) head_total += spec.class_frequency_targets[static_cast<size_t>(c)];
  std::vector<double> fracs;  // cumulative boundary fractions, one per interior boundary
  double acc = 0.0;
  for (size_t k = 0; k + 1 < heads.size(); ++k) {
    acc += spec.class_frequency_targets[static_cast<size_t>(heads[k])] / head_total;
    fracs.push_back(acc + 0.04 * (2.0 * layout.uniform() - 1.0));
  }
  struct Wiggle {
    double amp, cycles, phase;
  };
  std::vector<Wiggle> wiggles;
  for (size_t k = 0; k < fracs.size(); ++k)
    wiggles.push_back({1.0 + 1.5 * layout.uniform(), 1.0 + 2.0 * layout.uniform(),
                       2.0 * M_PI * layout.uniform()});

  for (int x = 0; x < w; ++x) {
    std::vector<int> bounds;
    for (size_t k = 0; k < fracs.size(); ++k) {
      double b = fracs[k] * h +
                 wiggles[k].amp * std::sin(2.0 * M_PI * wiggles[k].cycles * x / w + wiggles[k].phase);
      bounds.push_back(clamp_int(static_cast<int>(std::lround(b)), 0, h));
    }
    std::sort(bounds.begin(), bounds.end());
    size_t band = 0;
    for (int y = 0; y < h; ++y) {
      while (band < bounds.size() && y >= bounds[band]) ++band;
      lbl.at(y, x) = heads[band];
    }
  }

  // Tail classes are small shapes painted on top: even positions in the tail
  // list use discs, odd use diamonds. Sizes hit the class's target pixel
  // ratio, scaled by the domain's object-scale factor.
  for (size_t ti = 0; ti < spec.tail_classes.size(); ++ti) {
    int cls = spec.tail_classes[ti];
    double area_target = spec.class_frequency_targets[static_cast<size_t>(cls)] * h * w;
    bool disc = ti % 2 == 0;
    int count = disc ? 2 : 1;
    for (int k = 0; k < count; ++k) {
      double size_jitter = 0.85 + 0.3 * layout.uniform();
      double sz;
      if (disc)
        sz = std::sqrt(area_target / (count * M_PI)) * size_jitter * spec.shift.object_scale;
      else
        sz = std::sqrt(area_target / (count * 2.0)) * size_jitter * spec.shift.object_scale;
      int margin = static_cast<int>(std::ceil(sz)) + 1;
      int cy = h / 2, cx = w / 2;
      if (h - 2 * margin > 0) cy = margin + layout.uniform_int(h - 2 * margin);
      if (w - 2 * margin > 0) cx = margin + layout.uniform_int(w - 2 * margin);
      cx = clamp_int(cx + static_cast<int>(std::lround(spec.shift.layout_bias * w)), 0, w - 1);
      if (disc)
        paint_disc(lbl, cx, cy, sz, cls);
      else
        paint_diamond(lbl, cx, cy, sz, cls);
    }
  }

  // Appearance: per-class color jitter, hue shift, vertical shading, then
  // per-pixel noise; quantized to 8-bit levels so PNG round-trips bit-exactly.
  std::vector<std::array<double, 3>> colors(static_cast<size_t>(spec.num_classes));
  for (int c = 0; c < spec.num_classes; ++c) {
    std::array<double, 3> col = spec.palette[static_cast<size_t>(c)];
    for (int ch = 0; ch < 3; ++ch)
      col[static_cast<size_t>(ch)] = std::clamp(
          col[static_cast<size_t>(ch)] + 0.03 * (2.0 * appearance.uniform() - 1.0), 0.0, 1.0);
    if (spec.shift.hue_offset != 0.0) {
      std::array<double, 3> hsv = rgb_to_hsv(col);
      hsv[0] = hsv[0] + spec.shift.hue_offset;
      hsv[0] -= std::floor(hsv[0]);
      col = hsv_to_rgb(hsv);
    }
    colors[static_cast<size_t>(c)] = col;
  }
  double shading = 0.10 + 0.10 * appearance.uniform();
  double sigma = 0.03 * spec.shift.noise_scale;

  Tensor img({h, w, 3});
  for (int y = 0; y < h; ++y) {
    double shade = 1.0 - shading * y / h;
    for (int x = 0; x < w; ++x) {
      const auto& col = colors[static_cast<size_t>(lbl.at(y, x))];
      for (int c = 0; c < 3; ++c) {
        double v = col[static_cast<size_t>(c)] * shade + sigma * appearance.normal();
        v = std::clamp(v, 0.0, 1.0);
        img.at3(y, x, c) = std::round(v * 255.0) / 255.0;
      }
    }
  }
  return {std::move(img), std::move(lbl)};
}

Dataset generate_dataset(const DomainSpec& spec, int count) {
  return generate_dataset(spec, 0, count);
}

Dataset generate_dataset(const DomainSpec& spec, int first_index, int count) {
  if (count <= 0) throw std::invalid_argument("generate_dataset: need a positive count");
  if (first_index < 0) throw std::invalid_argument("generate_dataset: negative start index");
  Dataset ds;
  ds.num_classes = spec.num_classes;
  ds.class_names = spec.class_names;
  ds.spec_hash = spec.hash();
  ds.samples.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) ds.samples.push_back(generate_scene(spec, first_index + i));
  return ds;
}

std::vector<double> category_distribution(const Dataset& ds) {
  if (ds.samples.empty()) throw std::invalid_argument("category_distribution: empty dataset");
  std::vector<double> counts(static_cast<size_t>(ds.num_classes), 0.0);
  double total = 0.0;
  for (const auto& s : ds.samples)
    for (int v : s.labels.values) {
      if (v == kIgnoreLabel) continue;
      counts[static_cast<size_t>(v)] += 1.0;
      total += 1.0;
    }
  if (total == 0.0) throw std::invalid_argument("category_distribution: no valid pixels");
  for (double& c : counts) c /= total;
  return counts;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "labels");
  for (int i = 0; i < ds.size(); ++i) {
    const Sample& s = ds.samples[static_cast<size_t>(i)];
    int h = s.labels.h, w = s.labels.w;
    PngImage img;
    img.height = h;
    img.width = w;
    img.channels = 3;
    img.pixels.resize(static_cast<size_t>(h) * w * 3);
    for (int k = 0; k < h * w * 3; ++k)
      img.pixels[static_cast<size_t>(k)] =
          static_cast<uint8_t>(std::lround(s.image[k] * 255.0));
    write_png((fs::path(dir) / "images" / index_name(i)).string(), img);

    PngImage lab;
    lab.height = h;
    lab.width = w;
    lab.channels = 1;
    lab.pixels.resize(static_cast<size_t>(h) * w);
    for (int k = 0; k < h * w; ++k)
      lab.pixels[static_cast<size_t>(k)] = static_cast<uint8_t>(s.labels.values[static_cast<size_t>(k)]);
    write_png((fs::path(dir) / "labels" / index_name(i)).string(), lab);
  }

  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(ds.spec_hash));
  nlohmann::json manifest = {{"version", 1},
                             {"C", ds.num_classes},
                             {"class_names", ds.class_names},
                             {"n", ds.size()},
                             {"spec_hash", hash_hex}};
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw std::runtime_error("save_dataset: cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("load_dataset: missing manifest " + manifest_path.string());
  nlohmann::json manifest = nlohmann::json::parse(in);

  Dataset ds;
  ds.num_classes = manifest.at("C").get<int>();
  ds.class_names = manifest.at("class_names").get<std::vector<std::string>>();
  if (ds.class_names.size() != static_cast<size_t>(ds.num_classes))
    throw std::runtime_error("load_dataset: manifest class count " +
                             std::to_string(ds.num_classes) + " does not match " +
                             std::to_string(ds.class_names.size()) + " class names");
  ds.spec_hash = std::stoull(manifest.at("spec_hash").get<std::string>(), nullptr, 16);
  int n = manifest.at("n").get<int>();

  for (int i = 0; i < n; ++i) {
    fs::path img_path = fs::path(dir) / "images" / index_name(i);
    fs::path lab_path = fs::path(dir) / "labels" / index_name(i);
    PngImage img = read_png(img_path.string());
    if (img.channels != 3)
      throw std::runtime_error("load_dataset: " + img_path.string() + " is not RGB");
    PngImage lab = read_png(lab_path.string());
    if (lab.channels != 1)
      throw std::runtime_error("load_dataset: " + lab_path.string() + " is not single-channel");
    if (lab.height != img.height || lab.width != img.width)
      throw std::runtime_error("load_dataset: size mismatch between " + img_path.string() +
                               " and " + lab_path.string());

    Sample s;
    s.image = Tensor({img.height, img.width, 3});
    for (int k = 0; k < img.height * img.width * 3; ++k)
      s.image[k] = img.pixels[static_cast<size_t>(k)] / 255.0;
    s.labels.h = lab.height;
    s.labels.w = lab.width;
    s.labels.values.resize(static_cast<size_t>(lab.height) * lab.width);
    for (size_t k = 0; k < s.labels.values.size(); ++k) {
      int v = lab.pixels[k];
      if (v != kIgnoreLabel && v >= ds.num_classes)
        throw std::runtime_error("load_dataset: label value " + std::to_string(v) + " in " +
                                 lab_path.string() + " exceeds class count " +
                                 std::to_string(ds.num_classes));
      s.labels.values[k] = v;
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace fsap
