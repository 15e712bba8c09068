#pragma once

#include <optional>
#include <string>
#include <vector>

namespace aoi {

// One cell where a structural property failed.
struct StructureFinding {
  std::string property;
  std::string cell;
};

// Age thresholds: nullopt means the action is never optimal up to T_max and
// behaves as +infinity in comparisons. A threshold above `band_limit`
// (T_max - 2) is truncation-affected and is never used as the left-hand side
// of a comparison.
inline bool age_threshold_le(std::optional<int> lhs, std::optional<int> rhs, int band_limit) {
  if (!lhs || *lhs > band_limit) return true;
  return !rhs || *lhs <= *rhs;
}

// Success-probability thresholds: nullopt means never sample (+infinity).
inline bool prob_threshold_le(std::optional<double> lhs, std::optional<double> rhs) {
  if (!lhs) return !rhs;
  return !rhs || *lhs <= *rhs;
}

inline int truncation_band_limit(int age_cap) { return age_cap - 2; }

}  // namespace aoi
