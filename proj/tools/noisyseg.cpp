// Command-line front end: synthetic dataset generation, training,
// evaluation, label fusion, roughness heatmaps and plotting.
//
// Exit codes: 0 success, 1 usage error, 2 data/config validation error,
// 3 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "noisyseg/data.hpp"
#include "noisyseg/fusion.hpp"
#include "noisyseg/gafl.hpp"
#include "noisyseg/harness.hpp"
#include "noisyseg/plot.hpp"
#include "noisyseg/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::pair<int, int> parse_size(const std::string& s) {
  const auto sep = s.find('x');
  if (sep == std::string::npos)
    throw noisyseg::ValidationError("size must look like 64x64, got: " + s);
  return {std::stoi(s.substr(0, sep)), std::stoi(s.substr(sep + 1))};
}

std::vector<noisyseg::AnnotatorProfile> load_profiles(const std::string& path, int num_classes) {
  std::ifstream in(path);
  if (!in.good()) throw noisyseg::ValidationError("cannot open profiles file: " + path);
  json j;
  in >> j;
  std::vector<noisyseg::AnnotatorProfile> profiles;
  for (const auto& jp : j) {
    noisyseg::AnnotatorProfile p;
    p.confusion = jp.at("confusion").get<std::vector<std::vector<double>>>();
    p.boundary_radius = jp.value("boundary_radius", 0);
    p.seed = jp.value("seed", 0ull);
    noisyseg::detail::enforce(p.check(num_classes));
    profiles.push_back(std::move(p));
  }
  return profiles;
}

int cmd_gen_synth(const std::string& out, int scenes, const std::string& size, int classes,
                  int experts, int blobs, std::uint64_t seed, const std::string& profiles_file) {
  noisyseg::SynthDatasetConfig cfg;
  cfg.out_dir = out;
  cfg.scenes = scenes;
  std::tie(cfg.height, cfg.width) = parse_size(size);
  cfg.num_classes = classes;
  cfg.num_experts = experts;
  cfg.blobs_per_class = blobs;
  cfg.seed = seed;
  if (!profiles_file.empty()) cfg.profiles = load_profiles(profiles_file, classes);
  const auto manifest = noisyseg::generate_synthetic_dataset(cfg);
  std::printf("wrote %zu scenes (%d train / %d val / %d test) to %s\n", manifest.entries.size(),
              static_cast<int>(manifest.split_entries("train").size()),
              static_cast<int>(manifest.split_entries("val").size()),
              static_cast<int>(manifest.split_entries("test").size()), out.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out,
              const std::string& resume) {
  std::ifstream in(config_path);
  if (!in.good()) throw noisyseg::ValidationError("cannot open config file: " + config_path);
  json j;
  in >> j;
  const noisyseg::RunConfig cfg = noisyseg::run_config_from_json(j);
  const noisyseg::RunRecord record =
      noisyseg::train(cfg, out, resume.empty() ? fs::path{} : fs::path(resume));
  std::printf("best checkpoint %s (val mean dice %.4f), test mean dice %.4f\n",
              record.best_checkpoint.c_str(), record.best_mean_dice, record.final_test.mean);
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& split, const std::string& report,
             const std::string& dataset) {
  const noisyseg::DiceReport r = noisyseg::evaluate(checkpoint, split, dataset);
  const json j = noisyseg::dice_report_to_json(r);
  if (!report.empty()) {
    std::ofstream out(report);
    out << j.dump(2) << "\n";
    if (!out.good()) throw std::runtime_error("failed to write report: " + report);
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_vote(const std::vector<std::string>& label_files, const std::string& tie,
             const std::string& out, int classes) {
  // class count defaults to 1 + the largest id seen across the inputs
  std::vector<noisyseg::LabelMap> raw;
  int max_label = 1;
  for (const auto& f : label_files) {
    raw.push_back(noisyseg::read_label_png(f, 256));
    for (int v : raw.back().values()) max_label = std::max(max_label, v);
  }
  const int num_classes = classes > 0 ? classes : max_label + 1;
  std::vector<noisyseg::LabelMap> labels;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    labels.emplace_back(raw[i].height(), raw[i].width(), num_classes,
                        std::vector<int>(raw[i].values().begin(), raw[i].values().end()));
    ids.push_back("expert_" + std::to_string(i));
  }
  const noisyseg::LabelMap voted = noisyseg::major_vote(
      noisyseg::ExpertSet(std::move(labels), std::move(ids)), noisyseg::tie_rule_from_string(tie));
  noisyseg::write_label_png(out, voted);
  std::printf("voted %zu annotations -> %s\n", label_files.size(), out.c_str());
  return 0;
}

int cmd_heatmap(const std::string& image_file, const std::string& out, int radius, double sigma,
                double lambda_a, double lambda_b) {
  const noisyseg::ImageTensor img = noisyseg::read_image_png(image_file);
  noisyseg::GaflConfig cfg;
  cfg.radius = radius;
  cfg.sigma = sigma;
  cfg.lambda_a = lambda_a;
  cfg.lambda_b = lambda_b;
  const noisyseg::AttentionMap heat = noisyseg::roughness_heatmap(img, cfg);

  // 16-bit encoding relative to the largest representable value
  const double full_scale = lambda_a + lambda_b;
  std::vector<std::uint16_t> encoded(heat.values().size());
  double mn = heat.at(0, 0), mx = heat.at(0, 0), sum = 0.0;
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    const double v = heat.values()[i];
    encoded[i] = static_cast<std::uint16_t>(std::lround(v / full_scale * 65535.0));
    mn = std::min(mn, v);
    mx = std::max(mx, v);
    sum += v;
  }
  noisyseg::write_gray16_png(out, heat.height(), heat.width(), encoded);

  const json sidecar = {{"min", mn},
                        {"max", mx},
                        {"mean", sum / static_cast<double>(encoded.size())},
                        {"full_scale", full_scale},
                        {"radius", radius},
                        {"sigma", sigma},
                        {"lambda_a", lambda_a},
                        {"lambda_b", lambda_b}};
  std::ofstream side(out + ".json");
  side << sidecar.dump(2) << "\n";
  if (!side.good()) throw std::runtime_error("failed to write sidecar for " + out);
  std::printf("heatmap %s (min %.4f max %.4f)\n", out.c_str(), mn, mx);
  return 0;
}

int cmd_plot(const std::vector<std::string>& runs, const std::string& out) {
  std::vector<fs::path> dirs(runs.begin(), runs.end());
  const auto written = noisyseg::plot_runs(dirs, out);
  for (const auto& f : written) std::printf("wrote %s\n", f.c_str());
  return 0;
}

// Converts a raw Gleason-format tree (images/ + maps/<pathologist>/) into
// the dataset layout, remapping annotation values to the 4-class scheme and
// assigning splits by annotator coverage.
int cmd_ingest_gleason(const std::string& in_dir, const std::string& out_dir,
                       double val_fraction) {
  static const std::vector<std::string> kPathologists = {"1", "2", "3", "4", "5", "6"};
  noisyseg::DatasetManifest manifest;
  manifest.num_classes = 4;
  manifest.expert_ids = kPathologists;

  fs::create_directories(fs::path(out_dir) / "images");
  for (const auto& id : kPathologists)
    fs::create_directories(fs::path(out_dir) / "experts" / id);

  for (const auto& entry : fs::directory_iterator(fs::path(in_dir) / "images")) {
    if (entry.path().extension() != ".png") continue;
    const std::string stem = entry.path().stem().string();
    noisyseg::ManifestEntry me;
    me.id = stem;
    me.image = "images/" + stem + ".png";
    fs::copy_file(entry.path(), fs::path(out_dir) / me.image,
                  fs::copy_options::overwrite_existing);
    for (const auto& id : kPathologists) {
      const fs::path raw_path = fs::path(in_dir) / "maps" / id / (stem + ".png");
      if (!fs::exists(raw_path)) continue;
      const noisyseg::LabelMap raw = noisyseg::read_label_png(raw_path.string(), 256);
      const noisyseg::LabelMap remapped = noisyseg::remap_gleason(raw);
      const std::string rel = "experts/" + id + "/" + stem + ".png";
      noisyseg::write_label_png((fs::path(out_dir) / rel).string(), remapped);
      me.experts.emplace_back(id, rel);
    }
    if (!me.experts.empty()) manifest.entries.push_back(std::move(me));
  }

  manifest = noisyseg::assign_splits_gleason(std::move(manifest), val_fraction);
  std::ofstream out(fs::path(out_dir) / "manifest.json");
  out << noisyseg::manifest_to_json(manifest).dump(2) << "\n";
  if (!out.good()) throw std::runtime_error("failed to write manifest.json");
  std::printf("ingested %zu entries (%zu test)\n", manifest.entries.size(),
              manifest.split_entries("test").size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-annotator segmentation with label re-weighting and roughness attention"};
  app.require_subcommand(1);

  // gen-synth
  std::string gs_out, gs_size = "64x64", gs_profiles;
  int gs_scenes = 40, gs_classes = 4, gs_experts = 3, gs_blobs = 2;
  std::uint64_t gs_seed = 0;
  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic multi-annotator dataset");
  gen->add_option("--out", gs_out, "output dataset directory")->required();
  gen->add_option("--scenes", gs_scenes, "number of scenes");
  gen->add_option("--size", gs_size, "scene size HxW");
  gen->add_option("--classes", gs_classes, "number of classes");
  gen->add_option("--experts", gs_experts, "number of simulated annotators");
  gen->add_option("--blobs", gs_blobs, "blobs per class");
  gen->add_option("--seed", gs_seed, "random seed");
  gen->add_option("--profiles", gs_profiles, "JSON file with annotator profiles");

  // train
  std::string tr_config, tr_out, tr_resume;
  auto* tr = app.add_subcommand("train", "train on a dataset");
  tr->add_option("--config", tr_config, "run config JSON")->required();
  tr->add_option("--out", tr_out, "run output directory")->required();
  tr->add_option("--resume", tr_resume, "checkpoint to resume from");

  // eval
  std::string ev_ckpt, ev_split = "test", ev_report, ev_dataset;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--split", ev_split, "dataset split (train/val/test)");
  ev->add_option("--report", ev_report, "write the JSON report here");
  ev->add_option("--dataset", ev_dataset, "override the dataset directory");

  // vote
  std::vector<std::string> vt_labels;
  std::string vt_tie = "lowest_class", vt_out;
  int vt_classes = 0;
  auto* vt = app.add_subcommand("vote", "majority-vote several label maps");
  vt->add_option("--labels", vt_labels, "label PNG files")->required()->expected(-1);
  vt->add_option("--tie", vt_tie, "tie rule: lowest_class | highest_class | first_expert");
  vt->add_option("--out", vt_out, "output label PNG")->required();
  vt->add_option("--classes", vt_classes, "number of classes (default: inferred)");

  // heatmap
  std::string hm_image, hm_out;
  int hm_radius = 5;
  double hm_sigma = 3.0, hm_lambda_a = 50.0, hm_lambda_b = 1.0;
  auto* hm = app.add_subcommand("heatmap", "emit the roughness attention map of an image");
  hm->add_option("--image", hm_image, "input image PNG")->required();
  hm->add_option("--out", hm_out, "output 16-bit grayscale PNG")->required();
  hm->add_option("--radius", hm_radius, "Gaussian kernel radius");
  hm->add_option("--sigma", hm_sigma, "Gaussian standard deviation");
  hm->add_option("--lambda-a", hm_lambda_a, "roughness gain");
  hm->add_option("--lambda-b", hm_lambda_b, "additive floor");

  // plot
  std::vector<std::string> pl_runs;
  std::string pl_out;
  auto* pl = app.add_subcommand("plot", "render charts for finished runs");
  pl->add_option("--runs", pl_runs, "run directories")->required()->expected(-1);
  pl->add_option("--out", pl_out, "output directory")->required();

  // ingest-gleason
  std::string ig_in, ig_out;
  double ig_val_fraction = 0.1;
  auto* ig = app.add_subcommand("ingest-gleason",
                                "convert a Gleason-format tree into a dataset directory");
  ig->add_option("--in", ig_in, "raw tree with images/ and maps/<pathologist>/")->required();
  ig->add_option("--out", ig_out, "output dataset directory")->required();
  ig->add_option("--val-fraction", ig_val_fraction, "fraction of trainable entries used for validation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed())
      return cmd_gen_synth(gs_out, gs_scenes, gs_size, gs_classes, gs_experts, gs_blobs, gs_seed,
                           gs_profiles);
    if (tr->parsed()) return cmd_train(tr_config, tr_out, tr_resume);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_split, ev_report, ev_dataset);
    if (vt->parsed()) return cmd_vote(vt_labels, vt_tie, vt_out, vt_classes);
    if (hm->parsed())
      return cmd_heatmap(hm_image, hm_out, hm_radius, hm_sigma, hm_lambda_a, hm_lambda_b);
    if (pl->parsed()) return cmd_plot(pl_runs, pl_out);
    if (ig->parsed()) return cmd_ingest_gleason(ig_in, ig_out, ig_val_fraction);
  } catch (const noisyseg::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
