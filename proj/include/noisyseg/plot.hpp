#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisyseg/core.hpp"
#include "noisyseg/harness.hpp"
#include "noisyseg/png_io.hpp"

namespace noisyseg {

using Color = std::array<std::uint8_t, 3>;

// Fig.4 palette convention: grade 3 red, grade 4 green, grade 5 blue;
// benign dark. Classes beyond 4 get deterministic extra hues.
inline Color class_color(int k) {
  static const Color table[] = {{30, 30, 30},   {220, 60, 50},  {70, 180, 70},
                                {70, 90, 220},  {220, 180, 40}, {180, 70, 200},
                                {60, 200, 200}, {240, 140, 60}};
  return table[k % 8];
}

inline Color run_color(int i) {
  static const Color table[] = {{40, 90, 200}, {210, 90, 40}, {60, 160, 80},
                                {160, 60, 160}, {200, 170, 40}, {80, 80, 80}};
  return table[i % 6];
}

// Minimal RGB raster surface for the emitted charts.
class Canvas {
public:
  Canvas(int width, int height, Color bg = {255, 255, 255})
      : width_(width), height_(height), rgb_(static_cast<std::size_t>(width) * height * 3) {
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) set(x, y, bg);
  }

  int width() const { return width_; }
  int height() const { return height_; }

  void set(int x, int y, Color c) {
    if (x < 0 || x >= width_ || y < 0 || y >= height_) return;
    const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
    rgb_[i] = c[0];
    rgb_[i + 1] = c[1];
    rgb_[i + 2] = c[2];
  }

  void fill_rect(int x0, int y0, int x1, int y1, Color c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
  }

  void line(int x0, int y0, int x1, int y1, Color c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }

  // 3x5 glyphs for numeric labels: digits, '.', '-', 'E'.
  void text(int x, int y, const std::string& s, Color c) {
    for (char ch : s) {
      draw_glyph(x, y, ch, c);
      x += 4;
    }
  }

  void save(const std::string& path) const { write_rgb8_png(path, height_, width_, rgb_); }

private:
  void draw_glyph(int x, int y, char ch, Color c) {
    static const std::uint16_t digits[10] = {
        0b111101101101111, 0b010110010010111, 0b111001111100111, 0b111001111001111,
        0b101101111001001, 0b111100111001111, 0b111100111101111, 0b111001010010010,
        0b111101111101111, 0b111101111001111};
    std::uint16_t glyph = 0;
    if (ch >= '0' && ch <= '9') glyph = digits[ch - '0'];
    else if (ch == '.') glyph = 0b000000000000010;
    else if (ch == '-') glyph = 0b000000111000000;
    else if (ch == 'e' || ch == 'E') glyph = 0b111100110100111;
    else if (ch == '+') glyph = 0b000010111010000;
    else return;  // unsupported characters render as spaces
    for (int ry = 0; ry < 5; ++ry)
      for (int rx = 0; rx < 3; ++rx)
        if (glyph >> (14 - (ry * 3 + rx)) & 1) set(x + rx, y + ry, c);
  }

  int width_, height_;
  std::vector<std::uint8_t> rgb_;
};

namespace detail {

inline std::string short_number(double v) {
  char buf[32];
  if (v == 0.0) return "0";
  const double a = std::abs(v);
  if (a >= 0.01 && a < 10000.0) std::snprintf(buf, sizeof(buf), "%.3g", v);
  else std::snprintf(buf, sizeof(buf), "%.1e", v);
  return buf;
}

struct Axes {
  int x0, y0, x1, y1;  // plot area in pixels, y grows downward
  double xmin, xmax, ymin, ymax;

  int px(double x) const {
    return x0 + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (x1 - x0)));
  }
  int py(double y) const {
    return y1 - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (y1 - y0)));
  }
};

inline Axes draw_axes(Canvas& cv, double xmin, double xmax, double ymin, double ymax) {
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  Axes ax{46, 10, cv.width() - 12, cv.height() - 20, xmin, xmax, ymin, ymax};
  const Color frame = {120, 120, 120};
  cv.line(ax.x0, ax.y0, ax.x0, ax.y1, frame);
  cv.line(ax.x0, ax.y1, ax.x1, ax.y1, frame);
  for (int t = 0; t <= 4; ++t) {
    const double fy = ymin + (ymax - ymin) * t / 4.0;
    const double fx = xmin + (xmax - xmin) * t / 4.0;
    cv.line(ax.x0 - 2, ax.py(fy), ax.x0, ax.py(fy), frame);
    cv.text(2, ax.py(fy) - 2, short_number(fy), {60, 60, 60});
    cv.line(ax.px(fx), ax.y1, ax.px(fx), ax.y1 + 2, frame);
    cv.text(ax.px(fx) - 6, ax.y1 + 5, short_number(fx), {60, 60, 60});
  }
  return ax;
}

inline void polyline(Canvas& cv, const Axes& ax, const std::vector<double>& xs,
                     const std::vector<double>& ys, Color c) {
  for (std::size_t i = 1; i < xs.size(); ++i)
    cv.line(ax.px(xs[i - 1]), ax.py(ys[i - 1]), ax.px(xs[i]), ax.py(ys[i]), c);
}

inline std::vector<double> moving_average(const std::vector<double>& v, int window) {
  std::vector<double> out(v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    if (i >= static_cast<std::size_t>(window)) acc -= v[i - window];
    out[i] = acc / std::min<std::size_t>(i + 1, window);
  }
  return out;
}

struct LoadedRun {
  std::filesystem::path dir;
  nlohmann::json run;                  // run.json
  std::vector<double> iters, lambda1, lambda2, total;
};

inline LoadedRun load_run(const std::filesystem::path& dir) {
  LoadedRun r;
  r.dir = dir;
  std::ifstream run_file(dir / "run.json");
  require(run_file.good(), "plot: missing run.json under " + dir.string());
  run_file >> r.run;
  std::ifstream log(dir / "log.jsonl");
  require(log.good(), "plot: missing log.jsonl under " + dir.string());
  std::string line;
  while (std::getline(log, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    r.iters.push_back(j.at("iter").get<double>());
    r.lambda1.push_back(j.at("lambda1").get<double>());
    r.lambda2.push_back(j.at("lambda2").get<double>());
    r.total.push_back(j.at("total").get<double>());
  }
  require(!r.iters.empty(), "plot: empty loss log under " + dir.string());
  return r;
}

}  // namespace detail

// Renders the four standard artifacts for one or more finished runs:
// smoothed loss curves, the lambda schedule, grouped per-class Dice bars and
// image/reference/prediction overlays for a few test entries. Returns the
// paths written.
inline std::vector<std::string> plot_runs(const std::vector<std::filesystem::path>& run_dirs,
                                          const std::filesystem::path& out_dir) {
  detail::require(!run_dirs.empty(), "plot: no runs given");
  std::vector<detail::LoadedRun> runs;
  for (const auto& dir : run_dirs) runs.push_back(detail::load_run(dir));
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;

  // loss curves
  {
    Canvas cv(520, 300);
    double xmax = 1.0, ymax = 0.0;
    for (const auto& r : runs) {
      xmax = std::max(xmax, r.iters.back());
      for (double v : r.total) ymax = std::max(ymax, v);
    }
    const auto ax = detail::draw_axes(cv, 0.0, xmax, 0.0, ymax * 1.05 + 1e-12);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      if (runs.size() == 1) {
        Color light = run_color(static_cast<int>(i));
        for (auto& ch : light) ch = static_cast<std::uint8_t>(255 - (255 - ch) / 4);
        detail::polyline(cv, ax, runs[i].iters, runs[i].total, light);
      }
      detail::polyline(cv, ax, runs[i].iters, detail::moving_average(runs[i].total, 50),
                       run_color(static_cast<int>(i)));
    }
    const std::string path = (out_dir / "loss_curve.png").string();
    cv.save(path);
    written.push_back(path);
  }

  // lambda schedule
  {
    Canvas cv(520, 300);
    const auto& r = runs.front();
    const auto ax = detail::draw_axes(cv, 0.0, r.iters.back() + 1.0, 0.0, 1.05);
    detail::polyline(cv, ax, r.iters, r.lambda1, {40, 90, 200});
    detail::polyline(cv, ax, r.iters, r.lambda2, {210, 60, 50});
    cv.text(ax.x1 - 30, ax.py(r.lambda1.back()) - 8, "1", {40, 90, 200});
    cv.text(ax.x1 - 30, ax.py(r.lambda2.back()) + 4, "2", {210, 60, 50});
    const std::string path = (out_dir / "schedule.png").string();
    cv.save(path);
    written.push_back(path);
  }

  // per-class dice bars, grouped by class with one bar per run
  {
    Canvas cv(520, 300);
    const auto& per_class0 = runs.front().run.at("final_test").at("per_class");
    const int num_classes = static_cast<int>(per_class0.size());
    const auto ax = detail::draw_axes(cv, 0.0, num_classes, 0.0, 1.0);
    const int group_w = (ax.x1 - ax.x0) / std::max(1, num_classes);
    const int bar_w = std::max(2, group_w / (static_cast<int>(runs.size()) + 1));
    for (int k = 0; k < num_classes; ++k) {
      for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& v = runs[i].run.at("final_test").at("per_class").at("class_" + std::to_string(k));
        if (v.is_null()) continue;
        const int x0 = ax.x0 + k * group_w + static_cast<int>(i) * bar_w + bar_w / 2;
        cv.fill_rect(x0, ax.py(v.get<double>()), x0 + bar_w - 1, ax.y1 - 1,
                     run_color(static_cast<int>(i)));
      }
      cv.text(ax.x0 + k * group_w + group_w / 2 - 2, ax.y1 + 5, std::to_string(k), {60, 60, 60});
    }
    const std::string path = (out_dir / "dice_bars.png").string();
    cv.save(path);
    written.push_back(path);
  }

  // prediction overlays for the first run: image | reference | prediction
  {
    const auto& r = runs.front();
    const RunConfig cfg = run_config_from_json(r.run.at("config"));
    const Dataset ds = load_dataset(cfg.dataset_dir);
    const Checkpoint ckpt =
        load_checkpoint(r.dir / r.run.at("best_checkpoint").get<std::string>());
    RunConfig net_cfg = run_config_from_json(nlohmann::json::parse(ckpt.config_json));
    detail::fill_net_configs_from_dataset(net_cfg, ds);
    SegNet seg(net_cfg.seg_net);
    seg.set_parameters(ckpt.seg_params);

    std::vector<int> test = ds.split_indices("test");
    if (test.size() > 4) test.resize(4);
    detail::require(!test.empty(), "plot: no test entries for overlays");
    const int tile_h = ds.entries[test[0]].image.height();
    const int tile_w = ds.entries[test[0]].image.width();
    const int pad = 4;
    Canvas cv(3 * tile_w + 4 * pad, static_cast<int>(test.size()) * (tile_h + pad) + pad,
              {245, 245, 245});

    for (std::size_t row = 0; row < test.size(); ++row) {
      const DatasetEntry& entry = ds.entries[test[row]];
      const LabelMap ref = ds.reference(test[row], net_cfg.tie_rule);
      const LabelMap pred = detail::argmax_labels(seg.forward(entry.image));
      const int oy = static_cast<int>(row) * (tile_h + pad) + pad;
      for (int y = 0; y < tile_h; ++y)
        for (int x = 0; x < tile_w; ++x) {
          const Color img_px = {static_cast<std::uint8_t>(entry.image.at(0, y, x) * 255.0),
                                static_cast<std::uint8_t>(entry.image.at(1, y, x) * 255.0),
                                static_cast<std::uint8_t>(entry.image.at(2, y, x) * 255.0)};
          cv.set(pad + x, oy + y, img_px);
          cv.set(2 * pad + tile_w + x, oy + y, class_color(ref.at(y, x)));
          cv.set(3 * pad + 2 * tile_w + x, oy + y, class_color(pred.at(y, x)));
        }
    }
    const std::string path = (out_dir / "overlays.png").string();
    cv.save(path);
    written.push_back(path);
  }

  return written;
}

}  // namespace noisyseg
