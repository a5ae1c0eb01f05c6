#pragma once

#include <string>
#include <vector>

#include "noisyseg/core.hpp"

namespace noisyseg {

// How a per-pixel vote tie is resolved. lowest_class is the default so that
// repeated runs are reproducible; highest_class is the severity-conservative
// choice; first_expert follows annotator order.
enum class TieRule { lowest_class, highest_class, first_expert };

inline const char* to_string(TieRule rule) {
  switch (rule) {
    case TieRule::lowest_class: return "lowest_class";
    case TieRule::highest_class: return "highest_class";
    case TieRule::first_expert: return "first_expert";
  }
  return "?";
}

inline TieRule tie_rule_from_string(const std::string& s) {
  if (s == "lowest_class") return TieRule::lowest_class;
  if (s == "highest_class") return TieRule::highest_class;
  if (s == "first_expert") return TieRule::first_expert;
  throw ValidationError("unknown tie rule: " + s);
}

// Per-pixel plurality over the N expert labels. Each pixel is voted
// independently; no spatial smoothing.
inline LabelMap major_vote(const ExpertSet& experts, TieRule rule = TieRule::lowest_class) {
  const int n_experts = experts.size();
  detail::require(n_experts >= 1, "major_vote: no annotators");
  const int height = experts.height();
  const int width = experts.width();
  const int num_classes = experts.num_classes();

  std::vector<int> out(static_cast<std::size_t>(height) * width);
  std::vector<int> counts(num_classes);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int k = 0; k < num_classes; ++k) counts[k] = 0;
      for (int n = 0; n < n_experts; ++n) ++counts[experts.label(n).at(y, x)];

      int best_count = 0;
      for (int k = 0; k < num_classes; ++k)
        if (counts[k] > best_count) best_count = counts[k];

      int winner = -1;
      switch (rule) {
        case TieRule::lowest_class:
          for (int k = 0; k < num_classes; ++k)
            if (counts[k] == best_count) { winner = k; break; }
          break;
        case TieRule::highest_class:
          for (int k = num_classes - 1; k >= 0; --k)
            if (counts[k] == best_count) { winner = k; break; }
          break;
        case TieRule::first_expert:
          for (int n = 0; n < n_experts; ++n) {
            const int k = experts.label(n).at(y, x);
            if (counts[k] == best_count) { winner = k; break; }
          }
          break;
      }
      out[static_cast<std::size_t>(y) * width + x] = winner;
    }
  }
  return LabelMap(height, width, num_classes, std::move(out));
}

}  // namespace noisyseg
