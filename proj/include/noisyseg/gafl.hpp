#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "noisyseg/core.hpp"

namespace noisyseg {

// The printed loss in the source material omits the logarithm of the usual
// focal loss. log_form is the standard -alpha*(1-p)^gamma*ln(p) and is the
// default; paper_literal keeps the polynomial alpha*(1-p)^gamma*p as a
// nonnegative penalty for fidelity experiments.
enum class FocalVariant { log_form, paper_literal };

inline const char* to_string(FocalVariant v) {
  return v == FocalVariant::log_form ? "log_form" : "paper_literal";
}

inline FocalVariant focal_variant_from_string(const std::string& s) {
  if (s == "log_form") return FocalVariant::log_form;
  if (s == "paper_literal") return FocalVariant::paper_literal;
  throw ValidationError("unknown focal variant: " + s);
}

struct GaflConfig {
  int radius = 5;
  double sigma = 3.0;
  double lambda_a = 50.0;
  double lambda_b = 1.0;
  double gamma = 2.0;
  std::vector<double> alpha;  // per-class weights; empty means all ones
  FocalVariant focal_variant = FocalVariant::log_form;

  // Probabilities are clamped to [eps, 1-eps] before logarithms so
  // degenerate predictions still yield finite losses.
  static constexpr double kProbEps = 1e-7;

  ValidationReport check() const {
    if (radius < 1) return ValidationReport::fail("GaflConfig: radius must be >= 1");
    if (!(sigma > 0.0)) return ValidationReport::fail("GaflConfig: sigma must be > 0");
    if (lambda_a < 0.0) return ValidationReport::fail("GaflConfig: lambda_a must be >= 0");
    if (!(lambda_b > 0.0)) return ValidationReport::fail("GaflConfig: lambda_b must be > 0");
    if (gamma < 0.0) return ValidationReport::fail("GaflConfig: gamma must be >= 0");
    for (std::size_t k = 0; k < alpha.size(); ++k)
      if (!(alpha[k] > 0.0))
        return ValidationReport::fail("GaflConfig: alpha must be > 0 at class " +
                                      std::to_string(k));
    return ValidationReport::pass();
  }

  double alpha_for(int k) const { return alpha.empty() ? 1.0 : alpha[k]; }
};

// Normalized 1-D truncated Gaussian taps for offsets -radius..radius.
// The 2-D kernel is their outer product, which is exactly the normalized
// 2-D truncated Gaussian.
inline std::vector<double> gaussian_kernel_1d(int radius, double sigma) {
  detail::require(radius >= 1, "gaussian_kernel_1d: radius must be >= 1");
  detail::require(sigma > 0.0, "gaussian_kernel_1d: sigma must be > 0");
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int d = -radius; d <= radius; ++d) {
    const double v = std::exp(-(static_cast<double>(d) * d) / (2.0 * sigma * sigma));
    taps[d + radius] = v;
    sum += v;
  }
  for (double& v : taps) v /= sum;
  return taps;
}

namespace detail {

// Symmetric reflection: index -1 maps to 0, index n maps to n-1. The modular
// fold handles radii larger than the image.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace detail

// Per-channel convolution with the normalized truncated Gaussian kernel,
// reflection padding at the borders. Separable passes. Each window is
// accumulated as center + sum taps*(neighbor - center), which is the same
// convolution for a normalized kernel but reproduces constant regions
// bit-exactly, so flat images yield a roughness of exactly zero.
inline ImageTensor gaussian_filter(const ImageTensor& img, int radius, double sigma) {
  const std::vector<double> taps = gaussian_kernel_1d(radius, sigma);
  const int channels = img.channels();
  const int height = img.height();
  const int width = img.width();
  const std::size_t plane = static_cast<std::size_t>(height) * width;

  std::vector<double> horizontal(static_cast<std::size_t>(channels) * plane);
  std::span<const double> src = img.values();
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < height; ++y) {
      const std::size_t row = c * plane + static_cast<std::size_t>(y) * width;
      for (int x = 0; x < width; ++x) {
        const double center = src[row + x];
        double acc = 0.0;
        for (int d = -radius; d <= radius; ++d)
          acc += taps[d + radius] * (src[row + detail::reflect_index(x + d, width)] - center);
        horizontal[row + x] = center + acc;
      }
    }
  }

  std::vector<double> out(horizontal.size());
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const std::size_t col = c * plane + x;
        const double center = horizontal[col + static_cast<std::size_t>(y) * width];
        double acc = 0.0;
        for (int d = -radius; d <= radius; ++d) {
          const int yy = detail::reflect_index(y + d, height);
          acc += taps[d + radius] * (horizontal[col + static_cast<std::size_t>(yy) * width] - center);
        }
        out[col + static_cast<std::size_t>(y) * width] = center + acc;
      }
    }
  }
  // Rounding can push a filtered value a hair outside [0,1]; snap it back.
  for (double& v : out) v = std::min(1.0, std::max(0.0, v));
  return ImageTensor(channels, height, width, std::move(out));
}

// W_heat = lambda_a * |I - Gauss(I)| + lambda_b, with the channel dimension
// reduced by the per-pixel mean of absolute differences. Every output is
// >= lambda_b.
inline AttentionMap roughness_heatmap(const ImageTensor& img, const GaflConfig& cfg) {
  detail::enforce(cfg.check());
  const ImageTensor smoothed = gaussian_filter(img, cfg.radius, cfg.sigma);
  const int channels = img.channels();
  const int height = img.height();
  const int width = img.width();

  std::vector<double> heat(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double diff = 0.0;
      for (int c = 0; c < channels; ++c) diff += std::abs(img.at(c, y, x) - smoothed.at(c, y, x));
      diff /= static_cast<double>(channels);
      heat[static_cast<std::size_t>(y) * width + x] = cfg.lambda_a * diff + cfg.lambda_b;
    }
  }
  return AttentionMap(height, width, std::move(heat));
}

// An attention map of ones; the GAF loss degenerates to the plain focal
// loss under it (the use_gafl=false ablation).
inline AttentionMap flat_attention(int height, int width) {
  return AttentionMap(height, width,
                      std::vector<double>(static_cast<std::size_t>(height) * width, 1.0));
}

namespace detail {

inline double clamp_prob(double p) {
  return std::min(1.0 - GaflConfig::kProbEps, std::max(GaflConfig::kProbEps, p));
}

// Focal penalty at one pixel given the clamped true-class probability.
inline double focal_point(double p, double alpha, double gamma, FocalVariant variant) {
  if (variant == FocalVariant::log_form)
    return -(alpha * std::pow(1.0 - p, gamma) * std::log(p));
  return alpha * std::pow(1.0 - p, gamma) * p;
}

// d focal_point / d p on the open clamp interval; 0 where the clamp is
// active (the loss is constant there).
inline double focal_point_grad(double p_raw, double alpha, double gamma, FocalVariant variant) {
  if (p_raw <= GaflConfig::kProbEps || p_raw >= 1.0 - GaflConfig::kProbEps) return 0.0;
  const double p = p_raw;
  if (variant == FocalVariant::log_form) {
    double g = -alpha * std::pow(1.0 - p, gamma) / p;
    if (gamma > 0.0) g += alpha * gamma * std::pow(1.0 - p, gamma - 1.0) * std::log(p);
    return g;
  }
  double g = alpha * std::pow(1.0 - p, gamma);
  if (gamma > 0.0) g -= alpha * gamma * std::pow(1.0 - p, gamma - 1.0) * p;
  return g;
}

inline void check_pred_target(const ProbMap& pred, const LabelMap& target,
                              const GaflConfig& cfg) {
  require(pred.height() == target.height() && pred.width() == target.width(),
          "focal_loss_map: prediction and target shapes disagree");
  require(pred.num_classes() == target.num_classes(),
          "focal_loss_map: prediction and target num_classes disagree");
  require(cfg.alpha.empty() || static_cast<int>(cfg.alpha.size()) == pred.num_classes(),
          "focal_loss_map: alpha length does not match num_classes");
}

}  // namespace detail

// Per-pixel focal loss of the prediction against one label map.
inline LossMap focal_loss_map(const ProbMap& pred, const LabelMap& target,
                              const GaflConfig& cfg) {
  detail::enforce(cfg.check());
  detail::check_pred_target(pred, target, cfg);
  const int height = pred.height();
  const int width = pred.width();

  std::vector<double> loss(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int k = target.at(y, x);
      const double p = detail::clamp_prob(pred.at(k, y, x));
      loss[static_cast<std::size_t>(y) * width + x] =
          detail::focal_point(p, cfg.alpha_for(k), cfg.gamma, cfg.focal_variant);
    }
  }
  return LossMap(height, width, std::move(loss));
}

// GAF loss map: the attention map multiplied elementwise with the focal
// loss map.
inline LossMap gaf_loss_map(const ProbMap& pred, const LabelMap& target,
                            const AttentionMap& heat, const GaflConfig& cfg) {
  detail::require(heat.height() == pred.height() && heat.width() == pred.width(),
                  "gaf_loss_map: attention map shape disagrees with prediction");
  const LossMap focal = focal_loss_map(pred, target, cfg);
  const int height = focal.height();
  const int width = focal.width();
  std::vector<double> out(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      out[static_cast<std::size_t>(y) * width + x] = heat.at(y, x) * focal.at(y, x);
  return LossMap(height, width, std::move(out));
}

}  // namespace noisyseg
