// Chance-corrected agreement statistics.
#pragma once

#include <optional>
#include <string>
#include <vector>

namespace ookb {

/// Cohen's kappa for two raters over the same items. When expected agreement
/// is 1 the result is 1 for perfect observed agreement, otherwise nullopt.
/// Throws length_mismatch / precondition.
std::optional<double> cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Fleiss' kappa from an items x categories count matrix; every row must sum
/// to the same rater count n >= 2. nullopt when expected agreement is 1.
std::optional<double> fleiss_kappa(const std::vector<std::vector<int>>& counts);

/// Fleiss' kappa from per-item label lists (each item labeled by the same
/// number of raters).
std::optional<double> fleiss_kappa(const std::vector<std::vector<std::string>>& labels_per_item);

double percent_agreement(const std::vector<std::string>& a, const std::vector<std::string>& b);

}  // namespace ookb
