#pragma once

#include <cmath>
#include <tuple>
#include <utility>
#include <vector>

#include "noisyseg/core.hpp"
#include "noisyseg/fusion.hpp"
#include "noisyseg/gafl.hpp"

namespace noisyseg {

// Position on the tanh schedule. n starts at 0 and advances by one every
// step_iters training iterations.
struct ScheduleState {
  long long n = 0;
  long long step_iters = 1000;

  static ScheduleState at_iteration(long long iteration, long long step_iters) {
    detail::require(step_iters >= 1, "ScheduleState: step_iters must be >= 1");
    detail::require(iteration >= 0, "ScheduleState: iteration must be >= 0");
    return {iteration / step_iters, step_iters};
  }
};

// lambda1 = 1/(1+tanh n), lambda2 = tanh n/(1+tanh n). They sum to 1 and
// shift loss mass from the voting branch to the weighted branch as n grows.
inline std::pair<double, double> lambdas(const ScheduleState& state) {
  detail::require(state.n >= 0, "lambdas: n must be >= 0");
  const double t = std::tanh(static_cast<double>(state.n));
  return {1.0 / (1.0 + t), t / (1.0 + t)};
}

struct LossBreakdown {
  double vote_loss = 0.0;
  double weighted_loss = 0.0;
  std::vector<double> per_expert_losses;  // spatial mean of each l_n
  double lambda1 = 1.0;
  double lambda2 = 0.0;
  double total = 0.0;
};

// One GAF loss map per expert: l_n = gaf_loss_map(pred, P_n, heat, cfg).
inline std::vector<LossMap> per_expert_loss_maps(const ProbMap& pred, const ExpertSet& experts,
                                                 const AttentionMap& heat,
                                                 const GaflConfig& cfg) {
  std::vector<LossMap> maps;
  maps.reserve(experts.size());
  for (int n = 0; n < experts.size(); ++n)
    maps.push_back(gaf_loss_map(pred, experts.label(n), heat, cfg));
  return maps;
}

// Spatial mean of (1/N) * sum_n l_n (*) w_n. The 1/N factor is kept even
// though the weights already sum to 1 per pixel; it is absorbed into the
// effective scale of lambda2.
inline double weighted_loss(const std::vector<LossMap>& loss_maps, const WeightHeatmap& weights) {
  const int n_experts = static_cast<int>(loss_maps.size());
  detail::require(n_experts >= 1, "weighted_loss: no loss maps");
  detail::require(weights.num_experts() == n_experts,
                  "weighted_loss: expert count mismatch between loss maps and weights");
  const int height = weights.height();
  const int width = weights.width();
  for (const LossMap& m : loss_maps)
    detail::require(m.height() == height && m.width() == width,
                    "weighted_loss: loss map shape disagrees with weights");

  double sum = 0.0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double pixel = 0.0;
      for (int n = 0; n < n_experts; ++n) pixel += loss_maps[n].at(y, x) * weights.at(n, y, x);
      sum += pixel / static_cast<double>(n_experts);
    }
  return sum / (static_cast<double>(height) * width);
}

// Full composite loss: roughness heatmap from the image, majority vote over
// the experts, GAF voting loss, expert-weighted loss, and the scheduled
// combination of the two.
inline LossBreakdown total_loss(const ProbMap& pred, const ExpertSet& experts,
                                const WeightHeatmap& weights, const ImageTensor& img,
                                const GaflConfig& cfg, TieRule rule,
                                const ScheduleState& state) {
  detail::require(img.height() == pred.height() && img.width() == pred.width(),
                  "total_loss: image shape disagrees with prediction");
  detail::require(experts.size() == weights.num_experts(),
                  "total_loss: expert count disagrees with weight heatmap");

  const AttentionMap heat = roughness_heatmap(img, cfg);
  const LabelMap vote = major_vote(experts, rule);
  const LossMap vote_map = gaf_loss_map(pred, vote, heat, cfg);
  const std::vector<LossMap> expert_maps = per_expert_loss_maps(pred, experts, heat, cfg);

  LossBreakdown out;
  out.vote_loss = vote_map.mean();
  out.weighted_loss = weighted_loss(expert_maps, weights);
  out.per_expert_losses.reserve(expert_maps.size());
  for (const LossMap& m : expert_maps) out.per_expert_losses.push_back(m.mean());
  std::tie(out.lambda1, out.lambda2) = lambdas(state);
  out.total = out.lambda1 * out.vote_loss + out.lambda2 * out.weighted_loss;
  return out;
}

// Loss value plus the gradients the two networks need: d total / d pred
// (K x H x W, flattened) and d total / d weights (N x H x W, flattened).
// The attention map is a fixed prior, so no gradient flows through it.
struct TotalLossGrad {
  LossBreakdown breakdown;
  std::vector<double> d_pred;
  std::vector<double> d_weights;
};

inline TotalLossGrad total_loss_with_grad(const ProbMap& pred, const ExpertSet& experts,
                                          const WeightHeatmap& weights, const AttentionMap& heat,
                                          const GaflConfig& cfg, TieRule rule,
                                          const ScheduleState& state) {
  detail::enforce(cfg.check());
  detail::require(experts.size() == weights.num_experts(),
                  "total_loss_with_grad: expert count disagrees with weight heatmap");
  detail::require(heat.height() == pred.height() && heat.width() == pred.width(),
                  "total_loss_with_grad: attention map shape disagrees with prediction");

  const int num_classes = pred.num_classes();
  const int n_experts = experts.size();
  const int height = pred.height();
  const int width = pred.width();
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const double inv_pixels = 1.0 / static_cast<double>(plane);

  const LabelMap vote = major_vote(experts, rule);
  const LossMap vote_map = gaf_loss_map(pred, vote, heat, cfg);
  const std::vector<LossMap> expert_maps = per_expert_loss_maps(pred, experts, heat, cfg);

  TotalLossGrad out;
  out.breakdown.vote_loss = vote_map.mean();
  out.breakdown.weighted_loss = weighted_loss(expert_maps, weights);
  for (const LossMap& m : expert_maps) out.breakdown.per_expert_losses.push_back(m.mean());
  std::tie(out.breakdown.lambda1, out.breakdown.lambda2) = lambdas(state);
  out.breakdown.total = out.breakdown.lambda1 * out.breakdown.vote_loss +
                        out.breakdown.lambda2 * out.breakdown.weighted_loss;

  const double lambda1 = out.breakdown.lambda1;
  const double lambda2 = out.breakdown.lambda2;
  out.d_pred.assign(static_cast<std::size_t>(num_classes) * plane, 0.0);
  out.d_weights.assign(static_cast<std::size_t>(n_experts) * plane, 0.0);

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * width + x;
      const double h = heat.at(y, x);

      // voting branch: d(mean gaf)/d pred hits only the voted class
      {
        const int k = vote.at(y, x);
        const double g =
            detail::focal_point_grad(pred.at(k, y, x), cfg.alpha_for(k), cfg.gamma,
                                     cfg.focal_variant);
        out.d_pred[k * plane + p] += lambda1 * inv_pixels * h * g;
      }

      // weighted branch: each expert's label class and its weight channel
      for (int n = 0; n < n_experts; ++n) {
        const double scale = lambda2 * inv_pixels / static_cast<double>(n_experts);
        const int k = experts.label(n).at(y, x);
        const double g =
            detail::focal_point_grad(pred.at(k, y, x), cfg.alpha_for(k), cfg.gamma,
                                     cfg.focal_variant);
        out.d_pred[k * plane + p] += scale * weights.at(n, y, x) * h * g;
        out.d_weights[n * plane + p] = scale * expert_maps[n].at(y, x);
      }
    }
  }
  return out;
}

}  // namespace noisyseg
