#pragma once

// Top-k subgroup discovery over nominal selectors.
//
// Binary targets are ranked with the q^e family q = n_p^e * (t_p - t_0)
// (Piatetsky-Shapiro e=1, binomial e=0.5, gain e=0) or by the 2x2 chi-square
// statistic. Numeric targets use the mean-shift q = n_p * (mu_p - mu_0).
// The search is a depth-first branch-and-bound over the selector lattice
// guarded by admissible optimistic estimates.

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "diagnostica/tabular.hpp"
#include "json.hpp"

namespace diagnostica::mining {

enum class MeasureKind { ps, binomial, gain, chi_square, mean_shift };

/// Accepts ps|binomial|gain|chi2|mean.
MeasureKind parse_measure(std::string_view text);
std::string_view to_string(MeasureKind kind);

struct QualityMeasure {
  MeasureKind kind = MeasureKind::ps;
  /// Required (>= 1) for gain; patterns below it are filtered out.
  std::size_t min_size = 1;

  /// e of the q^e family; 1 for mean-shift, unused for chi-square.
  double exponent() const noexcept;
};

struct SubgroupStats {
  std::size_t n_p = 0;
  std::size_t positives_p = 0;
  std::size_t N = 0;
  std::size_t positives = 0;  // dataset-wide positives
  bool numeric = false;
  double mu_p = 0.0;
  double mu_0 = 0.0;
  double max_target = 0.0;

  static SubgroupStats binary(std::size_t n_p, std::size_t positives_p, std::size_t N, std::size_t positives);
  static SubgroupStats mean(std::size_t n_p, double mu_p, std::size_t N, double mu_0, double max_target);

  /// Absent when n_p == 0.
  std::optional<double> t_p() const;
  double t_0() const;
};

/// Quality of a pattern with the given statistics. Throws UndefinedQuality for
/// n_p == 0; returns nullopt when gain filters the pattern below min_size.
std::optional<double> quality(const SubgroupStats& stats, const QualityMeasure& m);

struct ChiSquare {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// 2x2 pattern-membership x target test, one degree of freedom. Any zero
/// marginal yields (0, 1).
ChiSquare chi_square_p(const SubgroupStats& stats);

/// Upper bound on quality over all refinements, from the statistics alone.
double optimistic_estimate(const SubgroupStats& stats, const QualityMeasure& m);

/// Tighter mean-shift bound using the target values of the current cover:
/// the best achievable n^e * (mean - mu_0) over any subset of those values.
double mean_shift_estimate(std::span<const double> cover_targets, double mu_0, double exponent);

struct MiningTask {
  const tabular::Dataset* dataset = nullptr;
  QualityMeasure measure;
  std::size_t k = 10;
  std::size_t max_depth = 2;
  /// Global support floor applied to every measure.
  std::size_t min_size = 1;
};

struct RankedPattern {
  tabular::Pattern pattern;
  SubgroupStats stats;
  double quality = 0.0;
  std::optional<double> p_value;
};

/// Quality descending, then shorter pattern, then lexicographic selectors.
bool ranks_before(const RankedPattern& a, const RankedPattern& b);

/// Parallel search: first-level branches are distributed over OpenMP threads
/// sharing one result pool. The result does not depend on evaluation order.
std::vector<RankedPattern> discover_top_k(const MiningTask& task);

/// Single-threaded reference of the same search.
std::vector<RankedPattern> discover_top_k_serial(const MiningTask& task);

/// Statistics of an explicit pattern (row scan over its cover).
SubgroupStats evaluate_pattern(const tabular::Pattern& p, const tabular::Dataset& ds);

nlohmann::json to_json(const RankedPattern& r);
nlohmann::json to_json(const std::vector<RankedPattern>& results);

}  // namespace diagnostica::mining
