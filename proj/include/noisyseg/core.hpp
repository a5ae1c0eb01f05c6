#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace noisyseg {

// Thrown when data or configuration violates a documented invariant.
// The CLI maps it to exit code 2.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Result of checking a tensor against its invariants. `message` names the
// first violated invariant together with the offending index.
struct ValidationReport {
  bool ok = true;
  std::string message;

  static ValidationReport pass() { return {}; }
  static ValidationReport fail(std::string msg) { return {false, std::move(msg)}; }
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

inline void enforce(const ValidationReport& report) {
  if (!report.ok) throw ValidationError(report.message);
}

inline bool is_finite(double v) { return std::isfinite(v); }

}  // namespace detail

// C x H x W image with intensities normalized to [0, 1]. 8-bit sources are
// divided by 255 at ingestion so the roughness prior sees a fixed scale.
class ImageTensor {
public:
  ImageTensor(int channels, int height, int width, std::vector<double> data)
      : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
    detail::enforce(check(channels_, height_, width_, data_));
  }

  static ValidationReport check(int channels, int height, int width,
                                const std::vector<double>& data) {
    if (channels != 1 && channels != 3)
      return ValidationReport::fail("ImageTensor: channels must be 1 or 3, got " +
                                    std::to_string(channels));
    if (height < 1 || width < 1)
      return ValidationReport::fail("ImageTensor: H and W must be >= 1");
    if (data.size() != static_cast<std::size_t>(channels) * height * width)
      return ValidationReport::fail("ImageTensor: data size does not match C*H*W");
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!detail::is_finite(data[i]) || data[i] < 0.0 || data[i] > 1.0) {
        const int c = static_cast<int>(i) / (height * width);
        const int rem = static_cast<int>(i) % (height * width);
        return ValidationReport::fail(
            "ImageTensor: intensity outside [0,1] at (c=" + std::to_string(c) +
            ",y=" + std::to_string(rem / width) + ",x=" + std::to_string(rem % width) + ")");
      }
    }
    return ValidationReport::pass();
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  std::span<const double> values() const { return data_; }

private:
  int channels_, height_, width_;
  std::vector<double> data_;
};

// H x W map of integer class ids in [0, num_classes).
class LabelMap {
public:
  LabelMap(int height, int width, int num_classes, std::vector<int> data)
      : height_(height), width_(width), num_classes_(num_classes), data_(std::move(data)) {
    detail::enforce(check(height_, width_, num_classes_, data_));
  }

  static ValidationReport check(int height, int width, int num_classes,
                                const std::vector<int>& data) {
    if (num_classes < 2)
      return ValidationReport::fail("LabelMap: num_classes must be >= 2");
    if (height < 1 || width < 1)
      return ValidationReport::fail("LabelMap: H and W must be >= 1");
    if (data.size() != static_cast<std::size_t>(height) * width)
      return ValidationReport::fail("LabelMap: data size does not match H*W");
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data[i] < 0 || data[i] >= num_classes) {
        return ValidationReport::fail(
            "LabelMap: class id out of range: value " + std::to_string(data[i]) + " at (y=" +
            std::to_string(i / width) + ",x=" + std::to_string(i % width) + "), K=" +
            std::to_string(num_classes));
      }
    }
    return ValidationReport::pass();
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int num_classes() const { return num_classes_; }
  int at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const int> values() const { return data_; }

private:
  int height_, width_, num_classes_;
  std::vector<int> data_;
};

// K x H x W per-pixel class distribution; every pixel sums to 1.
class ProbMap {
public:
  static constexpr double kSumTolerance = 1e-6;

  ProbMap(int num_classes, int height, int width, std::vector<double> data)
      : num_classes_(num_classes), height_(height), width_(width), data_(std::move(data)) {
    detail::enforce(check(num_classes_, height_, width_, data_));
  }

  static ValidationReport check(int num_classes, int height, int width,
                                const std::vector<double>& data) {
    if (num_classes < 2)
      return ValidationReport::fail("ProbMap: num_classes must be >= 2");
    if (height < 1 || width < 1)
      return ValidationReport::fail("ProbMap: H and W must be >= 1");
    if (data.size() != static_cast<std::size_t>(num_classes) * height * width)
      return ValidationReport::fail("ProbMap: data size does not match K*H*W");
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    for (std::size_t p = 0; p < plane; ++p) {
      double sum = 0.0;
      for (int k = 0; k < num_classes; ++k) {
        const double v = data[k * plane + p];
        if (!detail::is_finite(v) || v < 0.0 || v > 1.0) {
          return ValidationReport::fail(
              "ProbMap: probability outside [0,1] at (k=" + std::to_string(k) + ",y=" +
              std::to_string(p / width) + ",x=" + std::to_string(p % width) + ")");
        }
        sum += v;
      }
      if (std::abs(sum - 1.0) > kSumTolerance) {
        return ValidationReport::fail(
            "ProbMap: per-pixel sum " + std::to_string(sum) + " != 1 at (y=" +
            std::to_string(p / width) + ",x=" + std::to_string(p % width) + ")");
      }
    }
    return ValidationReport::pass();
  }

  int num_classes() const { return num_classes_; }
  int height() const { return height_; }
  int width() const { return width_; }
  double at(int k, int y, int x) const {
    return data_[(static_cast<std::size_t>(k) * height_ + y) * width_ + x];
  }
  std::span<const double> values() const { return data_; }

private:
  int num_classes_, height_, width_;
  std::vector<double> data_;
};

// N x H x W per-expert weights; every pixel is a distribution over experts.
class WeightHeatmap {
public:
  static constexpr double kSumTolerance = 1e-6;

  WeightHeatmap(int num_experts, int height, int width, std::vector<double> data)
      : num_experts_(num_experts), height_(height), width_(width), data_(std::move(data)) {
    detail::enforce(check(num_experts_, height_, width_, data_));
  }

  static ValidationReport check(int num_experts, int height, int width,
                                const std::vector<double>& data) {
    if (num_experts < 1)
      return ValidationReport::fail("WeightHeatmap: num_experts must be >= 1");
    if (height < 1 || width < 1)
      return ValidationReport::fail("WeightHeatmap: H and W must be >= 1");
    if (data.size() != static_cast<std::size_t>(num_experts) * height * width)
      return ValidationReport::fail("WeightHeatmap: data size does not match N*H*W");
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    for (std::size_t p = 0; p < plane; ++p) {
      double sum = 0.0;
      for (int n = 0; n < num_experts; ++n) {
        const double v = data[n * plane + p];
        if (!detail::is_finite(v) || v < 0.0 || v > 1.0) {
          return ValidationReport::fail(
              "WeightHeatmap: weight outside [0,1] at (n=" + std::to_string(n) + ",y=" +
              std::to_string(p / width) + ",x=" + std::to_string(p % width) + ")");
        }
        sum += v;
      }
      if (std::abs(sum - 1.0) > kSumTolerance) {
        return ValidationReport::fail(
            "WeightHeatmap: per-pixel sum " + std::to_string(sum) + " != 1 at (y=" +
            std::to_string(p / width) + ",x=" + std::to_string(p % width) + ")");
      }
    }
    return ValidationReport::pass();
  }

  int num_experts() const { return num_experts_; }
  int height() const { return height_; }
  int width() const { return width_; }
  double at(int n, int y, int x) const {
    return data_[(static_cast<std::size_t>(n) * height_ + y) * width_ + x];
  }
  std::span<const double> values() const { return data_; }

private:
  int num_experts_, height_, width_;
  std::vector<double> data_;
};

// H x W nonnegative attention values. The roughness operation guarantees a
// lower bound of lambda_b; the type itself only demands finite >= 0.
class AttentionMap {
public:
  AttentionMap(int height, int width, std::vector<double> data)
      : height_(height), width_(width), data_(std::move(data)) {
    detail::enforce(check(height_, width_, data_));
  }

  static ValidationReport check(int height, int width, const std::vector<double>& data) {
    if (height < 1 || width < 1)
      return ValidationReport::fail("AttentionMap: H and W must be >= 1");
    if (data.size() != static_cast<std::size_t>(height) * width)
      return ValidationReport::fail("AttentionMap: data size does not match H*W");
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!detail::is_finite(data[i]) || data[i] < 0.0) {
        return ValidationReport::fail(
            "AttentionMap: negative or non-finite value at (y=" + std::to_string(i / width) +
            ",x=" + std::to_string(i % width) + ")");
      }
    }
    return ValidationReport::pass();
  }

  int height() const { return height_; }
  int width() const { return width_; }
  double at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const double> values() const { return data_; }

private:
  int height_, width_;
  std::vector<double> data_;
};

// H x W map of nonnegative per-pixel loss values.
class LossMap {
public:
  LossMap(int height, int width, std::vector<double> data)
      : height_(height), width_(width), data_(std::move(data)) {
    detail::enforce(check(height_, width_, data_));
  }

  static ValidationReport check(int height, int width, const std::vector<double>& data) {
    if (height < 1 || width < 1)
      return ValidationReport::fail("LossMap: H and W must be >= 1");
    if (data.size() != static_cast<std::size_t>(height) * width)
      return ValidationReport::fail("LossMap: data size does not match H*W");
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!detail::is_finite(data[i]) || data[i] < 0.0) {
        return ValidationReport::fail(
            "LossMap: negative or non-finite value at (y=" + std::to_string(i / width) +
            ",x=" + std::to_string(i % width) + ")");
      }
    }
    return ValidationReport::pass();
  }

  int height() const { return height_; }
  int width() const { return width_; }
  double at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const double> values() const { return data_; }

  double mean() const {
    double sum = 0.0;
    for (double v : data_) sum += v;
    return sum / static_cast<double>(data_.size());
  }

private:
  int height_, width_;
  std::vector<double> data_;
};

// Ordered collection of one label map per annotator, all on the same grid.
class ExpertSet {
public:
  ExpertSet(std::vector<LabelMap> labels, std::vector<std::string> expert_ids)
      : labels_(std::move(labels)), expert_ids_(std::move(expert_ids)) {
    detail::enforce(check(labels_, expert_ids_));
  }

  static ValidationReport check(const std::vector<LabelMap>& labels,
                                const std::vector<std::string>& expert_ids) {
    if (labels.empty()) return ValidationReport::fail("ExpertSet: no annotators");
    if (expert_ids.size() != labels.size())
      return ValidationReport::fail("ExpertSet: expert_ids count does not match label count");
    for (std::size_t n = 1; n < labels.size(); ++n) {
      if (labels[n].height() != labels[0].height() || labels[n].width() != labels[0].width())
        return ValidationReport::fail("ExpertSet: shape mismatch at expert " + std::to_string(n));
      if (labels[n].num_classes() != labels[0].num_classes())
        return ValidationReport::fail("ExpertSet: num_classes mismatch at expert " +
                                      std::to_string(n));
    }
    return ValidationReport::pass();
  }

  int size() const { return static_cast<int>(labels_.size()); }
  int height() const { return labels_[0].height(); }
  int width() const { return labels_[0].width(); }
  int num_classes() const { return labels_[0].num_classes(); }
  const LabelMap& label(int n) const { return labels_[n]; }
  const std::string& expert_id(int n) const { return expert_ids_[n]; }
  const std::vector<LabelMap>& labels() const { return labels_; }

private:
  std::vector<LabelMap> labels_;
  std::vector<std::string> expert_ids_;
};

// Re-checks a live object against its invariants. Pure: same input, same
// report. Constructors already enforce these, so for objects built through
// the public API this returns ok.
inline ValidationReport validate(const ImageTensor& t) {
  return ImageTensor::check(t.channels(), t.height(), t.width(),
                            {t.values().begin(), t.values().end()});
}
inline ValidationReport validate(const LabelMap& t) {
  return LabelMap::check(t.height(), t.width(), t.num_classes(),
                         {t.values().begin(), t.values().end()});
}
inline ValidationReport validate(const ProbMap& t) {
  return ProbMap::check(t.num_classes(), t.height(), t.width(),
                        {t.values().begin(), t.values().end()});
}
inline ValidationReport validate(const WeightHeatmap& t) {
  return WeightHeatmap::check(t.num_experts(), t.height(), t.width(),
                              {t.values().begin(), t.values().end()});
}
inline ValidationReport validate(const AttentionMap& t) {
  return AttentionMap::check(t.height(), t.width(), {t.values().begin(), t.values().end()});
}
inline ValidationReport validate(const LossMap& t) {
  return LossMap::check(t.height(), t.width(), {t.values().begin(), t.values().end()});
}
inline ValidationReport validate(const ExpertSet& t) {
  std::vector<std::string> ids;
  for (int n = 0; n < t.size(); ++n) ids.push_back(t.expert_id(n));
  return ExpertSet::check(t.labels(), ids);
}

}  // namespace noisyseg
