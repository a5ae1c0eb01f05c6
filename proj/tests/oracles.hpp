// Independent reference implementations used to pin expected values.
// Everything here is deliberately written against plain vectors with naive
// loops, sharing no code with the library under test.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

// per-pixel plurality with an explicit histogram and tie scan
enum class Tie { lowest, highest, first_expert };

inline int vote_pixel(const std::vector<int>& labels, int num_classes, Tie tie) {
  std::vector<int> counts(num_classes, 0);
  for (int v : labels) ++counts[v];
  int best = 0;
  for (int k = 0; k < num_classes; ++k)
    if (counts[k] > best) best = counts[k];
  std::vector<int> tied;
  for (int k = 0; k < num_classes; ++k)
    if (counts[k] == best) tied.push_back(k);
  if (tie == Tie::lowest) return tied.front();
  if (tie == Tie::highest) return tied.back();
  for (int v : labels) {
    for (int t : tied)
      if (v == t) return v;
  }
  return tied.front();
}

// symmetric reflection, written out longhand
inline int reflect(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

// dense O(H*W*k^2) convolution with an explicitly normalized 2-D kernel
inline std::vector<double> dense_gaussian(const std::vector<double>& img, int h, int w,
                                          int radius, double sigma) {
  const int k = 2 * radius + 1;
  std::vector<double> kernel(static_cast<std::size_t>(k) * k);
  double total = 0.0;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      kernel[(dy + radius) * k + (dx + radius)] = v;
      total += v;
    }
  for (double& v : kernel) v /= total;

  std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
          acc += kernel[(dy + radius) * k + (dx + radius)] *
                 img[static_cast<std::size_t>(reflect(y + dy, h)) * w + reflect(x + dx, w)];
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  return out;
}

// roughness map from a C-channel image: lambda_a * mean_c |I - Gauss(I)| + lambda_b
inline std::vector<double> roughness(const std::vector<double>& img, int channels, int h, int w,
                                     int radius, double sigma, double lambda_a, double lambda_b) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> heat(plane, 0.0);
  for (int c = 0; c < channels; ++c) {
    std::vector<double> ch(img.begin() + c * plane, img.begin() + (c + 1) * plane);
    const std::vector<double> blurred = dense_gaussian(ch, h, w, radius, sigma);
    for (std::size_t p = 0; p < plane; ++p) heat[p] += std::abs(ch[p] - blurred[p]);
  }
  for (std::size_t p = 0; p < plane; ++p) heat[p] = lambda_a * (heat[p] / channels) + lambda_b;
  return heat;
}

inline double clamp_prob(double p) {
  const double eps = 1e-7;
  return std::min(1.0 - eps, std::max(eps, p));
}

inline double focal_log(double p, double alpha, double gamma) {
  return -(alpha * std::pow(1.0 - p, gamma) * std::log(p));
}

// Straight-line scalar recomputation of the composite loss: vote, roughness
// heatmap, focal values, expert weighting, tanh schedule. pred is K*H*W,
// experts is N label maps of H*W, weights is N*H*W, img is C*H*W.
struct TotalLoss {
  double vote_loss = 0.0;
  double weighted_loss = 0.0;
  double lambda1 = 1.0;
  double lambda2 = 0.0;
  double total = 0.0;
};

inline TotalLoss total_loss(const std::vector<double>& pred, int num_classes,
                            const std::vector<std::vector<int>>& experts,
                            const std::vector<double>& weights, const std::vector<double>& img,
                            int channels, int h, int w, int radius, double sigma, double lambda_a,
                            double lambda_b, double gamma, const std::vector<double>& alpha,
                            Tie tie, long long n, bool flat_heat) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const int n_experts = static_cast<int>(experts.size());

  std::vector<double> heat;
  if (flat_heat) heat.assign(plane, 1.0);
  else heat = roughness(img, channels, h, w, radius, sigma, lambda_a, lambda_b);

  TotalLoss out;
  double vote_sum = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    std::vector<int> at_pixel;
    for (const auto& e : experts) at_pixel.push_back(e[p]);
    const int k = vote_pixel(at_pixel, num_classes, tie);
    const double pt = clamp_prob(pred[k * plane + p]);
    vote_sum += heat[p] * focal_log(pt, alpha.empty() ? 1.0 : alpha[k], gamma);
  }
  out.vote_loss = vote_sum / static_cast<double>(plane);

  double weighted_sum = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    double pixel = 0.0;
    for (int e = 0; e < n_experts; ++e) {
      const int k = experts[e][p];
      const double pt = clamp_prob(pred[k * plane + p]);
      pixel += heat[p] * focal_log(pt, alpha.empty() ? 1.0 : alpha[k], gamma) *
               weights[e * plane + p];
    }
    weighted_sum += pixel / static_cast<double>(n_experts);
  }
  out.weighted_loss = weighted_sum / static_cast<double>(plane);

  const double t = std::tanh(static_cast<double>(n));
  out.lambda1 = 1.0 / (1.0 + t);
  out.lambda2 = t / (1.0 + t);
  out.total = out.lambda1 * out.vote_loss + out.lambda2 * out.weighted_loss;
  return out;
}

}  // namespace oracle
