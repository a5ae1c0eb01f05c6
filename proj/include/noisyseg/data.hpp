#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "noisyseg/core.hpp"
#include "noisyseg/fusion.hpp"
#include "noisyseg/png_io.hpp"
#include "noisyseg/rng.hpp"

namespace noisyseg {

// ------------------------------------------------------------------------
// geometric transforms shared by augmentation and the CLI

inline ImageTensor flip_horizontal(const ImageTensor& img) {
  std::vector<double> out(img.values().size());
  const int c_n = img.channels(), h = img.height(), w = img.width();
  for (int c = 0; c < c_n; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out[(static_cast<std::size_t>(c) * h + y) * w + x] = img.at(c, y, w - 1 - x);
  return ImageTensor(c_n, h, w, std::move(out));
}

inline LabelMap flip_horizontal(const LabelMap& labels) {
  std::vector<int> out(labels.values().size());
  const int h = labels.height(), w = labels.width();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[static_cast<std::size_t>(y) * w + x] = labels.at(y, w - 1 - x);
  return LabelMap(h, w, labels.num_classes(), std::move(out));
}

// Clockwise quarter turn; output is W x H.
inline ImageTensor rotate90cw(const ImageTensor& img) {
  const int c_n = img.channels(), h = img.height(), w = img.width();
  std::vector<double> out(img.values().size());
  for (int c = 0; c < c_n; ++c)
    for (int y = 0; y < w; ++y)
      for (int x = 0; x < h; ++x)
        out[(static_cast<std::size_t>(c) * w + y) * h + x] = img.at(c, h - 1 - x, y);
  return ImageTensor(c_n, w, h, std::move(out));
}

inline LabelMap rotate90cw(const LabelMap& labels) {
  const int h = labels.height(), w = labels.width();
  std::vector<int> out(labels.values().size());
  for (int y = 0; y < w; ++y)
    for (int x = 0; x < h; ++x)
      out[static_cast<std::size_t>(y) * h + x] = labels.at(h - 1 - x, y);
  return LabelMap(w, h, labels.num_classes(), std::move(out));
}

namespace detail {

struct ResizeTap {
  int lo;
  double frac;
};

inline ResizeTap resize_tap(int out_i, int out_n, int in_n) {
  const double src = (out_i + 0.5) * static_cast<double>(in_n) / out_n - 0.5;
  double lo = std::floor(src);
  double frac = src - lo;
  int ilo = static_cast<int>(lo);
  if (ilo < 0) { ilo = 0; frac = 0.0; }
  if (ilo >= in_n - 1) { ilo = in_n - 1; frac = 0.0; }
  return {ilo, frac};
}

inline int nearest_index(int out_i, int out_n, int in_n) {
  const int i = static_cast<int>((out_i + 0.5) * static_cast<double>(in_n) / out_n);
  return std::min(i, in_n - 1);
}

}  // namespace detail

inline ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w) {
  detail::require(out_h >= 1 && out_w >= 1, "resize_bilinear: target size must be >= 1");
  const int c_n = img.channels(), h = img.height(), w = img.width();
  std::vector<double> out(static_cast<std::size_t>(c_n) * out_h * out_w);
  for (int y = 0; y < out_h; ++y) {
    const auto ty = detail::resize_tap(y, out_h, h);
    const int y1 = std::min(ty.lo + 1, h - 1);
    for (int x = 0; x < out_w; ++x) {
      const auto tx = detail::resize_tap(x, out_w, w);
      const int x1 = std::min(tx.lo + 1, w - 1);
      for (int c = 0; c < c_n; ++c) {
        const double top = (1 - tx.frac) * img.at(c, ty.lo, tx.lo) + tx.frac * img.at(c, ty.lo, x1);
        const double bot = (1 - tx.frac) * img.at(c, y1, tx.lo) + tx.frac * img.at(c, y1, x1);
        out[(static_cast<std::size_t>(c) * out_h + y) * out_w + x] =
            (1 - ty.frac) * top + ty.frac * bot;
      }
    }
  }
  return ImageTensor(c_n, out_h, out_w, std::move(out));
}

// Nearest-neighbor so class ids stay integral.
inline LabelMap resize_nearest(const LabelMap& labels, int out_h, int out_w) {
  detail::require(out_h >= 1 && out_w >= 1, "resize_nearest: target size must be >= 1");
  const int h = labels.height(), w = labels.width();
  std::vector<int> out(static_cast<std::size_t>(out_h) * out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = detail::nearest_index(y, out_h, h);
    for (int x = 0; x < out_w; ++x)
      out[static_cast<std::size_t>(y) * out_w + x] = labels.at(sy, detail::nearest_index(x, out_w, w));
  }
  return LabelMap(out_h, out_w, labels.num_classes(), std::move(out));
}

// ------------------------------------------------------------------------
// synthetic scenes and annotator simulation

struct SyntheticSceneConfig {
  int height = 64;
  int width = 64;
  int num_classes = 4;
  int blobs_per_class = 2;
  // high-frequency noise amplitude inside each class region; empty means
  // the default ramp that makes higher classes rougher
  std::vector<double> roughness;
  std::uint64_t seed = 0;

  ValidationReport check() const {
    if (num_classes < 2) return ValidationReport::fail("SyntheticSceneConfig: K must be >= 2");
    if (height < 16 || width < 16)
      return ValidationReport::fail("SyntheticSceneConfig: H and W must be >= 16");
    if (blobs_per_class < 1)
      return ValidationReport::fail("SyntheticSceneConfig: blobs_per_class must be >= 1");
    if (!roughness.empty() && static_cast<int>(roughness.size()) != num_classes)
      return ValidationReport::fail("SyntheticSceneConfig: roughness length must equal K");
    for (double r : roughness)
      if (r < 0.0) return ValidationReport::fail("SyntheticSceneConfig: roughness must be >= 0");
    return ValidationReport::pass();
  }

  double roughness_for(int k) const {
    if (!roughness.empty()) return roughness[k];
    if (num_classes == 1) return 0.0;
    return 0.02 + 0.28 * static_cast<double>(k) / (num_classes - 1);
  }
};

struct AnnotatorProfile {
  // confusion[i][j] = probability the expert reports class j when the
  // (morphed) truth is class i; rows sum to 1
  std::vector<std::vector<double>> confusion;
  // >0 max-filter (labels spill outward), <0 min-filter (labels shrink)
  int boundary_radius = 0;
  std::uint64_t seed = 0;

  ValidationReport check(int num_classes) const {
    if (static_cast<int>(confusion.size()) != num_classes)
      return ValidationReport::fail("AnnotatorProfile: confusion must be K x K");
    for (int i = 0; i < num_classes; ++i) {
      if (static_cast<int>(confusion[i].size()) != num_classes)
        return ValidationReport::fail("AnnotatorProfile: confusion row " + std::to_string(i) +
                                      " has wrong length");
      double sum = 0.0;
      for (double v : confusion[i]) {
        if (v < 0.0)
          return ValidationReport::fail("AnnotatorProfile: negative confusion entry in row " +
                                        std::to_string(i));
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        return ValidationReport::fail("AnnotatorProfile: confusion row " + std::to_string(i) +
                                      " sums to " + std::to_string(sum));
    }
    return ValidationReport::pass();
  }

  static AnnotatorProfile identity(int num_classes, std::uint64_t seed = 0) {
    AnnotatorProfile p;
    p.confusion.assign(num_classes, std::vector<double>(num_classes, 0.0));
    for (int k = 0; k < num_classes; ++k) p.confusion[k][k] = 1.0;
    p.seed = seed;
    return p;
  }

  // identity diluted by a uniform flip rate
  static AnnotatorProfile uniform_noise(int num_classes, double flip_rate,
                                        std::uint64_t seed = 0) {
    AnnotatorProfile p = identity(num_classes, seed);
    for (int i = 0; i < num_classes; ++i)
      for (int j = 0; j < num_classes; ++j)
        p.confusion[i][j] = i == j ? 1.0 - flip_rate : flip_rate / (num_classes - 1);
    return p;
  }
};

// Textured blob scene with exact ground truth. Regions are piecewise
// constant plus class-dependent speckle, so the roughness heatmap of a
// zero-roughness scene is flat away from region boundaries.
inline std::pair<ImageTensor, LabelMap> generate_scene(const SyntheticSceneConfig& cfg) {
  detail::enforce(cfg.check());
  Rng rng = Rng::keyed(cfg.seed, 0x5ce7e);
  const int h = cfg.height, w = cfg.width;

  std::vector<int> labels(static_cast<std::size_t>(h) * w, 0);
  const double base_axis = 0.22 * std::min(h, w);
  for (int k = 1; k < cfg.num_classes; ++k) {
    // higher classes form smaller lesions
    const double shrink = 1.0 / (1.0 + 0.45 * (k - 1));
    for (int b = 0; b < cfg.blobs_per_class; ++b) {
      const double cy = rng.uniform(0.18, 0.82) * h;
      const double cx = rng.uniform(0.18, 0.82) * w;
      const double ay = std::max(3.0, rng.uniform(0.5, 1.0) * base_axis * shrink);
      const double ax = std::max(3.0, rng.uniform(0.5, 1.0) * base_axis * shrink);
      const double theta = rng.uniform(0.0, 3.14159265358979323846);
      const double ct = std::cos(theta), st = std::sin(theta);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double dy = y - cy, dx = x - cx;
          const double u = (dx * ct + dy * st) / ax;
          const double v = (-dx * st + dy * ct) / ay;
          if (u * u + v * v <= 1.0) labels[static_cast<std::size_t>(y) * w + x] = k;
        }
    }
  }

  // H&E-ish palette: benign pale, grades progressively darker purple
  static const double palette[][3] = {
      {0.86, 0.80, 0.84}, {0.76, 0.55, 0.66}, {0.58, 0.42, 0.62}, {0.40, 0.28, 0.52},
      {0.30, 0.20, 0.38}, {0.22, 0.14, 0.28}, {0.16, 0.10, 0.20}, {0.10, 0.06, 0.14}};
  const int palette_n = 8;

  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> img(3 * plane);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      const int k = labels[p];
      const double noise = cfg.roughness_for(k) * rng.uniform(-1.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double v = palette[k % palette_n][c] + noise;
        img[c * plane + p] = std::min(1.0, std::max(0.0, v));
      }
    }

  return {ImageTensor(3, h, w, std::move(img)),
          LabelMap(h, w, cfg.num_classes, std::move(labels))};
}

namespace detail {

inline LabelMap morph_filter(const LabelMap& labels, int radius, bool take_max) {
  const int h = labels.height(), w = labels.width();
  std::vector<int> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int v = labels.at(y, x);
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          const int u = labels.at(yy, xx);
          v = take_max ? std::max(v, u) : std::min(v, u);
        }
      }
      out[static_cast<std::size_t>(y) * w + x] = v;
    }
  return LabelMap(h, w, labels.num_classes(), std::move(out));
}

}  // namespace detail

// One simulated annotator: boundary morphology first, then per-pixel class
// confusion sampling. Fully reproducible from profile.seed.
inline LabelMap simulate_expert(const LabelMap& gt, const AnnotatorProfile& profile) {
  detail::enforce(profile.check(gt.num_classes()));
  LabelMap morphed = profile.boundary_radius == 0
                         ? gt
                         : detail::morph_filter(gt, std::abs(profile.boundary_radius),
                                                profile.boundary_radius > 0);

  Rng rng = Rng::keyed(profile.seed, 0xa11071);
  const int h = gt.height(), w = gt.width();
  std::vector<int> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::vector<double>& row = profile.confusion[morphed.at(y, x)];
      const double u = rng.next_double();
      double cum = 0.0;
      int chosen = gt.num_classes() - 1;
      for (int j = 0; j < gt.num_classes(); ++j) {
        cum += row[j];
        if (u < cum) {
          chosen = j;
          break;
        }
      }
      out[static_cast<std::size_t>(y) * w + x] = chosen;
    }
  return LabelMap(h, w, gt.num_classes(), std::move(out));
}

// Gleason 2019 annotation values: 0, 1, 6 are benign; 3, 4, 5 are grades
// 3, 4, 5. Anything else is a schema violation.
inline LabelMap remap_gleason(const LabelMap& raw) {
  const int h = raw.height(), w = raw.width();
  std::vector<int> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int v = raw.at(y, x);
      int mapped;
      switch (v) {
        case 0: case 1: case 6: mapped = 0; break;
        case 3: mapped = 1; break;
        case 4: mapped = 2; break;
        case 5: mapped = 3; break;
        default:
          throw ValidationError("remap_gleason: unexpected label " + std::to_string(v) +
                                " at (y=" + std::to_string(y) + ",x=" + std::to_string(x) + ")");
      }
      out[static_cast<std::size_t>(y) * w + x] = mapped;
    }
  return LabelMap(h, w, 4, std::move(out));
}

// Flip + quarter-turn rotation with probability 0.5, then a random resize
// in [0.9, 1.1]. The same geometric transform hits the image and every
// label map.
inline std::pair<ImageTensor, std::vector<LabelMap>> augment(const ImageTensor& img,
                                                             const std::vector<LabelMap>& labels,
                                                             std::uint64_t seed) {
  for (const LabelMap& m : labels)
    detail::require(m.height() == img.height() && m.width() == img.width(),
                    "augment: label shape disagrees with image");

  Rng rng = Rng::keyed(seed, 0xa76);
  ImageTensor out_img = img;
  std::vector<LabelMap> out_labels = labels;

  if (rng.coin(0.5)) {
    out_img = flip_horizontal(out_img);
    for (LabelMap& m : out_labels) m = flip_horizontal(m);
    const int quarter_turns = rng.uniform_int(1, 3);  // 90, 180 or 270 degrees
    for (int t = 0; t < quarter_turns; ++t) {
      out_img = rotate90cw(out_img);
      for (LabelMap& m : out_labels) m = rotate90cw(m);
    }
  }

  const double scale = rng.uniform(0.9, 1.1);
  const int out_h = std::max(1, static_cast<int>(std::lround(out_img.height() * scale)));
  const int out_w = std::max(1, static_cast<int>(std::lround(out_img.width() * scale)));
  if (out_h != out_img.height() || out_w != out_img.width()) {
    out_img = resize_bilinear(out_img, out_h, out_w);
    for (LabelMap& m : out_labels) m = resize_nearest(m, out_h, out_w);
  }
  return {std::move(out_img), std::move(out_labels)};
}

// ------------------------------------------------------------------------
// dataset manifests

struct ManifestEntry {
  std::string id;
  std::string image;                                         // path relative to the dataset dir
  std::optional<std::string> gt;                             // synthetic only
  std::vector<std::pair<std::string, std::string>> experts;  // (expert_id, relative path)
  std::string split;                                         // train | val | test
};

struct DatasetManifest {
  int num_classes = 0;
  std::vector<std::string> expert_ids;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split_entries(const std::string& split) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
      if (e.split == split) out.push_back(&e);
    return out;
  }
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["num_classes"] = m.num_classes;
  j["expert_ids"] = m.expert_ids;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json je;
    je["id"] = e.id;
    je["image"] = e.image;
    if (e.gt) je["gt"] = *e.gt;
    nlohmann::json jx = nlohmann::json::object();
    for (const auto& [id, path] : e.experts) jx[id] = path;
    je["experts"] = jx;
    je["split"] = e.split;
    j["entries"].push_back(je);
  }
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.num_classes = j.at("num_classes").get<int>();
  m.expert_ids = j.at("expert_ids").get<std::vector<std::string>>();
  for (const auto& je : j.at("entries")) {
    ManifestEntry e;
    e.id = je.at("id").get<std::string>();
    e.image = je.at("image").get<std::string>();
    if (je.contains("gt")) e.gt = je.at("gt").get<std::string>();
    for (const std::string& id : m.expert_ids)
      if (je.at("experts").contains(id))
        e.experts.emplace_back(id, je.at("experts").at(id).get<std::string>());
    e.split = je.value("split", "");
    m.entries.push_back(std::move(e));
  }
  return m;
}

// Checks the manifest invariants: every referenced file exists and the
// expert id set is consistent within each split.
inline void validate_manifest(const DatasetManifest& m, const std::filesystem::path& root) {
  detail::require(m.num_classes >= 2, "manifest: num_classes must be >= 2");
  detail::require(!m.entries.empty(), "manifest: no entries");
  std::vector<std::string> split_names;
  std::vector<std::vector<std::string>> split_expert_ids;
  for (const auto& e : m.entries) {
    detail::require(std::filesystem::exists(root / e.image),
                    "manifest: missing image file for entry " + e.id + ": " + e.image);
    if (e.gt)
      detail::require(std::filesystem::exists(root / *e.gt),
                      "manifest: missing ground-truth file for entry " + e.id);
    detail::require(!e.experts.empty(), "manifest: entry " + e.id + " has no expert labels");
    std::vector<std::string> ids;
    for (const auto& [id, path] : e.experts) {
      detail::require(std::filesystem::exists(root / path),
                      "manifest: missing expert file for entry " + e.id + ": " + path);
      ids.push_back(id);
    }
    auto it = std::find(split_names.begin(), split_names.end(), e.split);
    if (it == split_names.end()) {
      split_names.push_back(e.split);
      split_expert_ids.push_back(ids);
    } else {
      detail::require(split_expert_ids[it - split_names.begin()] == ids,
                      "manifest: expert ids inconsistent within split '" + e.split +
                          "' at entry " + e.id);
    }
  }
}

// 80/10/10 assignment in entry order; every split must end up non-empty.
inline DatasetManifest assign_splits_synthetic(DatasetManifest m) {
  const int n = static_cast<int>(m.entries.size());
  detail::require(n >= 3, "assign_splits_synthetic: need at least 3 entries");
  const int n_val = std::max(1, static_cast<int>(std::lround(0.1 * n)));
  const int n_test = std::max(1, static_cast<int>(std::lround(0.1 * n)));
  const int n_train = n - n_val - n_test;
  detail::require(n_train >= 1, "assign_splits_synthetic: empty train split");
  for (int i = 0; i < n; ++i)
    m.entries[i].split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
  return m;
}

// Gleason protocol: entries covered by all six pathologists become the test
// set; entries covered by pathologists 1, 3 and 4 are divided into train and
// validation. Other coverage patterns are dropped.
inline DatasetManifest assign_splits_gleason(DatasetManifest m, double val_fraction = 0.1) {
  detail::require(val_fraction > 0.0 && val_fraction < 1.0,
                  "assign_splits_gleason: val_fraction must be in (0,1)");
  static const std::vector<std::string> kAllSix = {"1", "2", "3", "4", "5", "6"};
  static const std::vector<std::string> kTrainTrio = {"1", "3", "4"};

  auto has_ids = [](const ManifestEntry& e, const std::vector<std::string>& wanted) {
    for (const auto& id : wanted) {
      bool found = false;
      for (const auto& [eid, path] : e.experts) found |= eid == id;
      if (!found) return false;
    }
    return true;
  };

  DatasetManifest out;
  out.num_classes = m.num_classes;
  out.expert_ids = m.expert_ids;
  std::vector<ManifestEntry> trainable;
  for (auto& e : m.entries) {
    if (has_ids(e, kAllSix)) {
      e.split = "test";
      out.entries.push_back(e);
    } else if (has_ids(e, kTrainTrio)) {
      // keep only the trio so expert ids stay consistent within the split
      std::vector<std::pair<std::string, std::string>> kept;
      for (const auto& ex : e.experts)
        if (std::find(kTrainTrio.begin(), kTrainTrio.end(), ex.first) != kTrainTrio.end())
          kept.push_back(ex);
      e.experts = std::move(kept);
      trainable.push_back(e);
    }
  }
  const int n_val = std::max(1, static_cast<int>(std::lround(val_fraction * trainable.size())));
  detail::require(static_cast<int>(trainable.size()) > n_val,
                  "assign_splits_gleason: empty train split");
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    trainable[i].split = i + static_cast<std::size_t>(n_val) < trainable.size() ? "train" : "val";
    out.entries.push_back(trainable[i]);
  }
  detail::require(!out.split_entries("test").empty(), "assign_splits_gleason: empty test split");
  return out;
}

// ------------------------------------------------------------------------
// on-disk datasets

// The default annotator pool: expert 0 is near-perfect, the rest carry
// systematic biases (boundary habits plus grade-specific confusions) so the
// reliability signal is learnable.
inline std::vector<AnnotatorProfile> default_profiles(int num_classes, int num_experts,
                                                      std::uint64_t seed) {
  std::vector<AnnotatorProfile> profiles;
  for (int n = 0; n < num_experts; ++n) {
    AnnotatorProfile p = AnnotatorProfile::uniform_noise(num_classes, n == 0 ? 0.02 : 0.05,
                                                         Rng::keyed(seed, 0xe0 + n).next_u64());
    if (n > 0) {
      // alternate over- and under-callers of the highest grade
      const int top = num_classes - 1;
      p.boundary_radius = n % 2 == 1 ? 1 : -1;
      for (int j = 0; j < num_classes; ++j) p.confusion[top][j] = 0.0;
      p.confusion[top][top] = 0.6;
      p.confusion[top][std::max(0, top - 1)] += 0.4;
    }
    profiles.push_back(std::move(p));
  }
  return profiles;
}

struct SynthDatasetConfig {
  std::filesystem::path out_dir;
  int scenes = 40;
  int height = 64;
  int width = 64;
  int num_classes = 4;
  int num_experts = 3;
  int blobs_per_class = 2;
  std::uint64_t seed = 0;
  std::vector<AnnotatorProfile> profiles;  // empty -> default_profiles
};

// Generates scenes, simulates every annotator, writes PNGs + manifest.json
// under out_dir and returns the manifest.
inline DatasetManifest generate_synthetic_dataset(const SynthDatasetConfig& cfg) {
  namespace fs = std::filesystem;
  detail::require(cfg.scenes >= 3, "generate_synthetic_dataset: need at least 3 scenes");
  detail::require(cfg.num_experts >= 1, "generate_synthetic_dataset: need at least 1 expert");

  std::vector<AnnotatorProfile> profiles =
      cfg.profiles.empty() ? default_profiles(cfg.num_classes, cfg.num_experts, cfg.seed)
                           : cfg.profiles;
  detail::require(static_cast<int>(profiles.size()) == cfg.num_experts,
                  "generate_synthetic_dataset: profile count does not match num_experts");

  DatasetManifest manifest;
  manifest.num_classes = cfg.num_classes;
  for (int n = 0; n < cfg.num_experts; ++n) manifest.expert_ids.push_back("e" + std::to_string(n));

  fs::create_directories(cfg.out_dir / "images");
  fs::create_directories(cfg.out_dir / "gt");
  for (const auto& id : manifest.expert_ids) fs::create_directories(cfg.out_dir / "experts" / id);

  char name[32];
  for (int i = 0; i < cfg.scenes; ++i) {
    std::snprintf(name, sizeof(name), "scene_%03d", i);
    SyntheticSceneConfig scene_cfg;
    scene_cfg.height = cfg.height;
    scene_cfg.width = cfg.width;
    scene_cfg.num_classes = cfg.num_classes;
    scene_cfg.blobs_per_class = cfg.blobs_per_class;
    scene_cfg.seed = Rng::keyed(cfg.seed, 0x100000 + i).next_u64();
    auto [image, gt] = generate_scene(scene_cfg);

    ManifestEntry entry;
    entry.id = name;
    entry.image = std::string("images/") + name + ".png";
    entry.gt = std::string("gt/") + name + ".png";
    write_image_png((cfg.out_dir / entry.image).string(), image);
    write_label_png((cfg.out_dir / *entry.gt).string(), gt);

    for (int n = 0; n < cfg.num_experts; ++n) {
      AnnotatorProfile p = profiles[n];
      p.seed = Rng::keyed(p.seed, 0x200000 + i).next_u64();
      const LabelMap noisy = simulate_expert(gt, p);
      const std::string rel =
          "experts/" + manifest.expert_ids[n] + "/" + name + ".png";
      write_label_png((cfg.out_dir / rel).string(), noisy);
      entry.experts.emplace_back(manifest.expert_ids[n], rel);
    }
    manifest.entries.push_back(std::move(entry));
  }

  manifest = assign_splits_synthetic(std::move(manifest));
  std::ofstream out(cfg.out_dir / "manifest.json");
  out << manifest_to_json(manifest).dump(2) << "\n";
  detail::require(out.good(), "generate_synthetic_dataset: failed to write manifest.json");
  return manifest;
}

// A dataset loaded into memory, images normalized and experts grouped.
struct DatasetEntry {
  std::string id;
  std::string split;
  ImageTensor image;
  std::optional<LabelMap> gt;
  ExpertSet experts;
};

struct Dataset {
  int num_classes = 0;
  std::vector<std::string> expert_ids;
  std::vector<DatasetEntry> entries;

  std::vector<int> split_indices(const std::string& split) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].split == split) out.push_back(static_cast<int>(i));
    return out;
  }

  // Evaluation reference: exact ground truth when present, otherwise the
  // majority vote over the entry's annotators.
  LabelMap reference(int index, TieRule rule) const {
    const DatasetEntry& e = entries[index];
    return e.gt ? *e.gt : major_vote(e.experts, rule);
  }
};

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  detail::require(std::filesystem::exists(manifest_path),
                  "load_dataset: no manifest.json under " + dir.string());
  std::ifstream in(manifest_path);
  nlohmann::json j;
  in >> j;
  const DatasetManifest manifest = manifest_from_json(j);
  validate_manifest(manifest, dir);

  Dataset ds;
  ds.num_classes = manifest.num_classes;
  ds.expert_ids = manifest.expert_ids;
  for (const auto& e : manifest.entries) {
    ImageTensor image = read_image_png((dir / e.image).string());
    std::optional<LabelMap> gt;
    if (e.gt) gt = read_label_png((dir / *e.gt).string(), manifest.num_classes);

    std::vector<LabelMap> labels;
    std::vector<std::string> ids;
    for (const auto& [id, path] : e.experts) {
      labels.push_back(read_label_png((dir / path).string(), manifest.num_classes));
      ids.push_back(id);
    }
    ds.entries.push_back(DatasetEntry{e.id, e.split, std::move(image), std::move(gt),
                                      ExpertSet(std::move(labels), std::move(ids))});
  }
  return ds;
}

}  // namespace noisyseg
