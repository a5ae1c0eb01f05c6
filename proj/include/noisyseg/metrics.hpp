#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "noisyseg/core.hpp"

namespace noisyseg {

enum class DiceAggregation { micro, macro };

inline const char* to_string(DiceAggregation a) {
  return a == DiceAggregation::micro ? "micro" : "macro";
}

struct DiceReport {
  // nullopt marks a class absent from both prediction and ground truth.
  std::vector<std::optional<double>> per_class;
  double mean = 0.0;
  std::vector<std::int64_t> pixel_counts;  // ground-truth pixels per class
  DiceAggregation aggregation = DiceAggregation::micro;
};

// Dice of one class: 2|A of pred intersect B of gt| / (|A| + |B|).
// Returns nullopt when the class appears in neither map.
inline std::optional<double> dice_per_class(const LabelMap& pred, const LabelMap& gt, int k) {
  detail::require(pred.height() == gt.height() && pred.width() == gt.width(),
                  "dice_per_class: shape mismatch");
  std::int64_t pred_count = 0, gt_count = 0, inter = 0;
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x) {
      const bool a = pred.at(y, x) == k;
      const bool b = gt.at(y, x) == k;
      pred_count += a;
      gt_count += b;
      inter += a && b;
    }
  if (pred_count + gt_count == 0) return std::nullopt;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(pred_count + gt_count);
}

// Dataset-level Dice. Micro aggregation pools per-class pixel counts across
// the whole list before dividing, so a class that is rare per image still
// gets a well-defined score; macro averages per-image Dice over the images
// where the class occurs. The mean covers classes present anywhere.
inline DiceReport dice_report(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts,
                              int num_classes,
                              DiceAggregation aggregation = DiceAggregation::micro) {
  detail::require(!preds.empty(), "dice_report: empty prediction list");
  detail::require(preds.size() == gts.size(), "dice_report: list length mismatch");

  DiceReport report;
  report.aggregation = aggregation;
  report.per_class.assign(num_classes, std::nullopt);
  report.pixel_counts.assign(num_classes, 0);

  if (aggregation == DiceAggregation::micro) {
    std::vector<std::int64_t> pred_counts(num_classes, 0), gt_counts(num_classes, 0),
        inters(num_classes, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const LabelMap& pred = preds[i];
      const LabelMap& gt = gts[i];
      detail::require(pred.height() == gt.height() && pred.width() == gt.width(),
                      "dice_report: shape mismatch at entry " + std::to_string(i));
      for (int y = 0; y < pred.height(); ++y)
        for (int x = 0; x < pred.width(); ++x) {
          const int a = pred.at(y, x);
          const int b = gt.at(y, x);
          detail::require(a < num_classes && b < num_classes,
                          "dice_report: class id exceeds num_classes");
          ++pred_counts[a];
          ++gt_counts[b];
          if (a == b) ++inters[a];
        }
    }
    for (int k = 0; k < num_classes; ++k) {
      report.pixel_counts[k] = gt_counts[k];
      if (pred_counts[k] + gt_counts[k] > 0)
        report.per_class[k] = 2.0 * static_cast<double>(inters[k]) /
                              static_cast<double>(pred_counts[k] + gt_counts[k]);
    }
  } else {
    std::vector<double> sums(num_classes, 0.0);
    std::vector<int> occurrences(num_classes, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      for (int k = 0; k < num_classes; ++k) {
        const auto d = dice_per_class(preds[i], gts[i], k);
        if (d) {
          sums[k] += *d;
          ++occurrences[k];
        }
      }
      for (int y = 0; y < gts[i].height(); ++y)
        for (int x = 0; x < gts[i].width(); ++x) ++report.pixel_counts[gts[i].at(y, x)];
    }
    for (int k = 0; k < num_classes; ++k)
      if (occurrences[k] > 0) report.per_class[k] = sums[k] / occurrences[k];
  }

  double sum = 0.0;
  int present = 0;
  for (const auto& d : report.per_class)
    if (d) {
      sum += *d;
      ++present;
    }
  report.mean = present > 0 ? sum / present : 0.0;
  return report;
}

}  // namespace noisyseg
