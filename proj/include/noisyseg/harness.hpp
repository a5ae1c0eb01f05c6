#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisyseg/core.hpp"
#include "noisyseg/data.hpp"
#include "noisyseg/gafl.hpp"
#include "noisyseg/metrics.hpp"
#include "noisyseg/nets.hpp"
#include "noisyseg/reweighting.hpp"

namespace noisyseg {

struct RunConfig {
  std::string dataset_dir;
  GaflConfig gafl;
  TieRule tie_rule = TieRule::lowest_class;
  SegNetConfig seg_net;        // num_classes / in_channels are filled from the dataset
  WeightNetConfig weight_net;  // num_experts likewise
  double learning_rate = 0.01;
  double momentum = 0.0;
  long long total_iters = 2000;
  long long checkpoint_every = 100;
  long long step_iters = 100;
  bool use_gafl = true;
  bool use_reweighting = true;
  DiceAggregation aggregation = DiceAggregation::micro;
  std::uint64_t seed = 0;

  ValidationReport check() const {
    if (dataset_dir.empty()) return ValidationReport::fail("RunConfig: dataset_dir is empty");
    if (checkpoint_every < 1)
      return ValidationReport::fail("RunConfig: checkpoint_every must be >= 1");
    if (total_iters < checkpoint_every)
      return ValidationReport::fail("RunConfig: total_iters must be >= checkpoint_every");
    if (step_iters < 1) return ValidationReport::fail("RunConfig: step_iters must be >= 1");
    if (!(learning_rate > 0.0)) return ValidationReport::fail("RunConfig: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
      return ValidationReport::fail("RunConfig: momentum must be in [0,1)");
    return gafl.check();
  }
};

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["dataset"] = c.dataset_dir;
  j["gafl"] = {{"radius", c.gafl.radius},
               {"sigma", c.gafl.sigma},
               {"lambda_a", c.gafl.lambda_a},
               {"lambda_b", c.gafl.lambda_b},
               {"gamma", c.gafl.gamma},
               {"alpha", c.gafl.alpha},
               {"focal_variant", to_string(c.gafl.focal_variant)}};
  j["tie_rule"] = to_string(c.tie_rule);
  j["seg_net"] = {{"channels", c.seg_net.channels}, {"kernel_size", c.seg_net.kernel_size}};
  j["weight_net"] = {{"channels", c.weight_net.channels},
                     {"downsample_factor", c.weight_net.downsample_factor}};
  j["learning_rate"] = c.learning_rate;
  j["momentum"] = c.momentum;
  j["total_iters"] = c.total_iters;
  j["checkpoint_every"] = c.checkpoint_every;
  j["step_iters"] = c.step_iters;
  j["use_gafl"] = c.use_gafl;
  j["use_reweighting"] = c.use_reweighting;
  j["aggregation"] = to_string(c.aggregation);
  j["seed"] = c.seed;
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  c.dataset_dir = j.at("dataset").get<std::string>();
  if (j.contains("gafl")) {
    const auto& g = j.at("gafl");
    c.gafl.radius = g.value("radius", c.gafl.radius);
    c.gafl.sigma = g.value("sigma", c.gafl.sigma);
    c.gafl.lambda_a = g.value("lambda_a", c.gafl.lambda_a);
    c.gafl.lambda_b = g.value("lambda_b", c.gafl.lambda_b);
    c.gafl.gamma = g.value("gamma", c.gafl.gamma);
    if (g.contains("alpha")) c.gafl.alpha = g.at("alpha").get<std::vector<double>>();
    if (g.contains("focal_variant"))
      c.gafl.focal_variant = focal_variant_from_string(g.at("focal_variant").get<std::string>());
  }
  if (j.contains("tie_rule")) c.tie_rule = tie_rule_from_string(j.at("tie_rule").get<std::string>());
  if (j.contains("seg_net")) {
    const auto& s = j.at("seg_net");
    if (s.contains("channels")) c.seg_net.channels = s.at("channels").get<std::vector<int>>();
    c.seg_net.kernel_size = s.value("kernel_size", c.seg_net.kernel_size);
  }
  if (j.contains("weight_net")) {
    const auto& w = j.at("weight_net");
    if (w.contains("channels")) c.weight_net.channels = w.at("channels").get<std::vector<int>>();
    c.weight_net.downsample_factor =
        w.value("downsample_factor", c.weight_net.downsample_factor);
  }
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.total_iters = j.value("total_iters", c.total_iters);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.step_iters = j.value("step_iters", c.step_iters);
  c.use_gafl = j.value("use_gafl", c.use_gafl);
  c.use_reweighting = j.value("use_reweighting", c.use_reweighting);
  if (j.contains("aggregation"))
    c.aggregation = j.at("aggregation").get<std::string>() == "macro" ? DiceAggregation::macro
                                                                      : DiceAggregation::micro;
  c.seed = j.value("seed", c.seed);
  return c;
}

// Canonical serialized form; nlohmann objects dump with sorted keys, so the
// digest is stable.
inline std::string run_config_canonical(const RunConfig& c) {
  return run_config_to_json(c).dump();
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

// ------------------------------------------------------------------------
// checkpoints

// Binary archive of everything needed to continue a run bit-exactly:
// both parameter vectors, optimizer velocities, the iteration counter and
// the config (embedded verbatim, digest-checked on load).
struct Checkpoint {
  std::string config_json;
  long long iteration = 0;
  std::vector<double> seg_params;
  std::vector<double> weight_params;
  std::vector<double> seg_velocity;
  std::vector<double> weight_velocity;
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'N', 'S', 'G', 'C', 'K', 'P', 'T', '1'};

inline void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  write_u64(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}
inline std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
inline std::vector<double> read_doubles(std::ifstream& in) {
  const std::uint64_t n = read_u64(in);
  if (!in || n > (1ull << 32)) throw ValidationError("checkpoint: corrupt vector length");
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  detail::require(out.good(), "save_checkpoint: cannot open " + path.string());
  out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  detail::write_u64(out, fnv1a64(ckpt.config_json));
  detail::write_u64(out, static_cast<std::uint64_t>(ckpt.iteration));
  detail::write_u64(out, ckpt.config_json.size());
  out.write(ckpt.config_json.data(), static_cast<std::streamsize>(ckpt.config_json.size()));
  detail::write_doubles(out, ckpt.seg_params);
  detail::write_doubles(out, ckpt.weight_params);
  detail::write_doubles(out, ckpt.seg_velocity);
  detail::write_doubles(out, ckpt.weight_velocity);
  detail::require(out.good(), "save_checkpoint: write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  detail::require(in.good(), "load_checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, detail::kCheckpointMagic))
    throw ValidationError("load_checkpoint: bad magic in " + path.string());
  const std::uint64_t digest = detail::read_u64(in);
  Checkpoint ckpt;
  ckpt.iteration = static_cast<long long>(detail::read_u64(in));
  const std::uint64_t config_len = detail::read_u64(in);
  if (!in || config_len > (1ull << 24))
    throw ValidationError("load_checkpoint: corrupt header in " + path.string());
  ckpt.config_json.resize(config_len);
  in.read(ckpt.config_json.data(), static_cast<std::streamsize>(config_len));
  ckpt.seg_params = detail::read_doubles(in);
  ckpt.weight_params = detail::read_doubles(in);
  ckpt.seg_velocity = detail::read_doubles(in);
  ckpt.weight_velocity = detail::read_doubles(in);
  if (!in) throw ValidationError("load_checkpoint: truncated file " + path.string());
  if (fnv1a64(ckpt.config_json) != digest)
    throw ValidationError("load_checkpoint: config fingerprint mismatch in " + path.string());
  return ckpt;
}

// ------------------------------------------------------------------------
// training and evaluation

struct ValidationPoint {
  long long iteration = 0;
  std::string checkpoint;  // relative to the run directory
  double mean_dice = 0.0;
  DiceReport report;
};

struct RunRecord {
  RunConfig config;
  std::vector<ValidationPoint> validation;
  std::string best_checkpoint;
  long long best_iteration = 0;
  double best_mean_dice = 0.0;
  DiceReport final_test;
};

inline nlohmann::json dice_report_to_json(const DiceReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  nlohmann::json counts = nlohmann::json::object();
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const std::string key = "class_" + std::to_string(k);
    per_class[key] = r.per_class[k] ? nlohmann::json(*r.per_class[k]) : nlohmann::json(nullptr);
    counts[key] = r.pixel_counts[k];
  }
  return {{"per_class", per_class},
          {"mean", r.mean},
          {"aggregation", to_string(r.aggregation)},
          {"pixel_counts", counts}};
}

namespace detail {

inline LabelMap argmax_labels(const ProbMap& probs) {
  const int num_classes = probs.num_classes(), h = probs.height(), w = probs.width();
  std::vector<int> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int best = 0;
      double best_p = probs.at(0, y, x);
      for (int k = 1; k < num_classes; ++k)
        if (probs.at(k, y, x) > best_p) {
          best_p = probs.at(k, y, x);
          best = k;
        }
      out[static_cast<std::size_t>(y) * w + x] = best;
    }
  return LabelMap(h, w, num_classes, std::move(out));
}

inline WeightHeatmap uniform_weights(int num_experts, int h, int w) {
  return WeightHeatmap(
      num_experts, h, w,
      std::vector<double>(static_cast<std::size_t>(num_experts) * h * w, 1.0 / num_experts));
}

struct SgdState {
  std::vector<double> velocity;

  void step(TrainableFunction& net, double lr, double momentum) {
    if (velocity.empty()) velocity.assign(net.parameter_count(), 0.0);
    std::span<const double> params = net.parameters();
    std::span<const double> grads = net.gradients();
    std::vector<double> updated(params.begin(), params.end());
    for (std::size_t i = 0; i < updated.size(); ++i) {
      velocity[i] = momentum * velocity[i] - lr * grads[i];
      updated[i] += velocity[i];
    }
    net.set_parameters(updated);
  }
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void fill_net_configs_from_dataset(RunConfig& cfg, const Dataset& ds) {
  cfg.seg_net.num_classes = ds.num_classes;
  cfg.seg_net.in_channels = 3;
  cfg.seg_net.seed = Rng::keyed(cfg.seed, 0x5e6).next_u64();
  cfg.weight_net.num_experts = static_cast<int>(ds.expert_ids.size());
  cfg.weight_net.in_channels = 3;
  cfg.weight_net.seed = Rng::keyed(cfg.seed, 0x3e1647).next_u64();
}

}  // namespace detail

// Mean validation Dice of the given segmentation network over one split.
inline DiceReport evaluate_net(SegNet& seg, const Dataset& ds, const std::string& split,
                               TieRule rule, DiceAggregation aggregation) {
  const std::vector<int> indices = ds.split_indices(split);
  detail::require(!indices.empty(), "evaluate: split '" + split + "' is empty");
  std::vector<LabelMap> preds, refs;
  for (int i : indices) {
    preds.push_back(detail::argmax_labels(seg.forward(ds.entries[i].image)));
    refs.push_back(ds.reference(i, rule));
  }
  return dice_report(preds, refs, ds.num_classes, aggregation);
}

// Rebuilds the networks recorded in a checkpoint and scores the requested
// split. The dataset location defaults to the one in the embedded config.
inline DiceReport evaluate(const std::filesystem::path& checkpoint_path, const std::string& split,
                           const std::string& dataset_override = "") {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  RunConfig cfg = run_config_from_json(nlohmann::json::parse(ckpt.config_json));
  const Dataset ds = load_dataset(dataset_override.empty() ? cfg.dataset_dir : dataset_override);
  detail::fill_net_configs_from_dataset(cfg, ds);
  SegNet seg(cfg.seg_net);
  detail::require(ckpt.seg_params.size() == seg.parameter_count(),
                  "evaluate: checkpoint does not match network architecture");
  seg.set_parameters(ckpt.seg_params);
  return evaluate_net(seg, ds, split, cfg.tie_rule, cfg.aggregation);
}

// Runs the training loop: sample, augment, forward both networks, composite
// loss, backprop, SGD step; checkpoints + validates on the configured
// cadence and selects the best checkpoint by validation mean Dice.
//
// All randomness is keyed by (seed, iteration), so resuming from a
// checkpoint continues the identical trajectory.
inline RunRecord train(const RunConfig& config, const std::filesystem::path& out_dir,
                       const std::filesystem::path& resume_from = {}) {
  detail::enforce(config.check());
  const Dataset ds = load_dataset(config.dataset_dir);
  RunConfig cfg = config;
  detail::fill_net_configs_from_dataset(cfg, ds);

  const std::vector<int> train_indices = ds.split_indices("train");
  detail::require(!train_indices.empty(), "train: no training entries");
  detail::require(!ds.split_indices("val").empty(), "train: no validation entries");
  detail::require(cfg.gafl.alpha.empty() ||
                      static_cast<int>(cfg.gafl.alpha.size()) == ds.num_classes,
                  "train: gafl.alpha length does not match dataset num_classes");
  const int num_experts = static_cast<int>(ds.expert_ids.size());

  SegNet seg(cfg.seg_net);
  WeightNet weight_net(cfg.weight_net);
  detail::SgdState seg_opt, weight_opt;
  seg_opt.velocity.assign(seg.parameter_count(), 0.0);
  weight_opt.velocity.assign(weight_net.parameter_count(), 0.0);

  const std::string config_json = run_config_canonical(cfg);
  long long start_iter = 0;
  if (!resume_from.empty()) {
    const Checkpoint ckpt = load_checkpoint(resume_from);
    detail::require(ckpt.config_json == config_json,
                    "train: resume checkpoint config fingerprint mismatch");
    seg.set_parameters(ckpt.seg_params);
    weight_net.set_parameters(ckpt.weight_params);
    seg_opt.velocity = ckpt.seg_velocity;
    weight_opt.velocity = ckpt.weight_velocity;
    start_iter = ckpt.iteration;
  }

  std::filesystem::create_directories(out_dir / "checkpoints");
  std::ofstream log(out_dir / "log.jsonl",
                    start_iter == 0 ? std::ios::trunc : std::ios::app);
  detail::require(log.good(), "train: cannot open log file");

  RunRecord record;
  record.config = cfg;

  for (long long iter = start_iter; iter < cfg.total_iters; ++iter) {
    Rng iter_rng = Rng::keyed(cfg.seed, 0x17e40000ull + static_cast<std::uint64_t>(iter));
    const int pick = train_indices[iter_rng.uniform_int(0, static_cast<int>(train_indices.size()) - 1)];
    const DatasetEntry& entry = ds.entries[pick];

    auto [img, labels] = augment(entry.image, entry.experts.labels(), iter_rng.next_u64());
    std::vector<std::string> ids;
    for (int n = 0; n < num_experts; ++n) ids.push_back(ds.expert_ids[n]);
    const ExpertSet experts(std::move(labels), std::move(ids));

    const ProbMap pred = seg.forward(img);
    const WeightHeatmap weights = cfg.use_reweighting
                                      ? weight_net.forward(img)
                                      : detail::uniform_weights(num_experts, img.height(), img.width());
    const AttentionMap heat = cfg.use_gafl ? roughness_heatmap(img, cfg.gafl)
                                           : flat_attention(img.height(), img.width());
    const ScheduleState state =
        cfg.use_reweighting ? ScheduleState::at_iteration(iter, cfg.step_iters)
                            : ScheduleState{0, cfg.step_iters};

    const TotalLossGrad res =
        total_loss_with_grad(pred, experts, weights, heat, cfg.gafl, cfg.tie_rule, state);

    seg.zero_gradients();
    seg.backward(res.d_pred);
    seg_opt.step(seg, cfg.learning_rate, cfg.momentum);
    if (cfg.use_reweighting) {
      weight_net.zero_gradients();
      weight_net.backward(res.d_weights);
      weight_opt.step(weight_net, cfg.learning_rate, cfg.momentum);
    }

    log << "{\"iter\":" << iter << ",\"lambda1\":" << detail::format_double(res.breakdown.lambda1)
        << ",\"lambda2\":" << detail::format_double(res.breakdown.lambda2)
        << ",\"vote_loss\":" << detail::format_double(res.breakdown.vote_loss)
        << ",\"weighted_loss\":" << detail::format_double(res.breakdown.weighted_loss)
        << ",\"total\":" << detail::format_double(res.breakdown.total) << "}\n";

    if ((iter + 1) % cfg.checkpoint_every == 0) {
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoints/ckpt_%06lld.bin", iter + 1);
      Checkpoint ckpt;
      ckpt.config_json = config_json;
      ckpt.iteration = iter + 1;
      ckpt.seg_params.assign(seg.parameters().begin(), seg.parameters().end());
      ckpt.weight_params.assign(weight_net.parameters().begin(), weight_net.parameters().end());
      ckpt.seg_velocity = seg_opt.velocity;
      ckpt.weight_velocity = weight_opt.velocity;
      save_checkpoint(out_dir / name, ckpt);

      const DiceReport val = evaluate_net(seg, ds, "val", cfg.tie_rule, cfg.aggregation);
      record.validation.push_back({iter + 1, name, val.mean, val});
    }
  }
  log.flush();

  // best checkpoint = argmax validation mean dice, earliest on ties
  detail::require(!record.validation.empty(), "train: no checkpoints were saved");
  std::size_t best = 0;
  for (std::size_t i = 1; i < record.validation.size(); ++i)
    if (record.validation[i].mean_dice > record.validation[best].mean_dice) best = i;
  record.best_checkpoint = record.validation[best].checkpoint;
  record.best_iteration = record.validation[best].iteration;
  record.best_mean_dice = record.validation[best].mean_dice;

  record.final_test = evaluate(out_dir / record.best_checkpoint, "test");

  nlohmann::json j;
  j["config"] = run_config_to_json(cfg);
  j["validation"] = nlohmann::json::array();
  for (const auto& v : record.validation)
    j["validation"].push_back({{"iteration", v.iteration},
                               {"checkpoint", v.checkpoint},
                               {"mean_dice", v.mean_dice},
                               {"report", dice_report_to_json(v.report)}});
  j["best_checkpoint"] = record.best_checkpoint;
  j["best_iteration"] = record.best_iteration;
  j["best_mean_dice"] = record.best_mean_dice;
  j["final_test"] = dice_report_to_json(record.final_test);
  std::ofstream run_json(out_dir / "run.json");
  run_json << j.dump(2) << "\n";
  detail::require(run_json.good(), "train: failed to write run.json");
  return record;
}

}  // namespace noisyseg
