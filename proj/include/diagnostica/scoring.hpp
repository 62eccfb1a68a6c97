#pragma once

// Diagnostic scoring systems: single-finding rules f -> d carrying a symbolic
// confirmation category. Category values grow by a factor of four so that
// four equal categories aggregate to the next stronger one.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diagnostica/mining.hpp"
#include "json.hpp"

namespace diagnostica::scoring {

enum class Category : std::int8_t { N4, N3, N2, N1, P1, P2, P3, P4 };

inline constexpr Category kAllCategories[] = {Category::N4, Category::N3, Category::N2, Category::N1,
                                              Category::P1, Category::P2, Category::P3, Category::P4};

/// P1=1, P2=4, P3=16, P4=64; N_k = -P_k.
int value(Category c) noexcept;
std::string_view symbol(Category c) noexcept;
Category parse_category(std::string_view symbol);
bool is_positive(Category c) noexcept;
/// One step towards P4 (clamped); N1 steps to P1.
Category step_up(Category c) noexcept;
/// One step towards N4 (clamped); P1 steps to N1.
Category step_down(Category c) noexcept;
/// Next category of larger magnitude and the same sign (P1 -> P2, N1 -> N2);
/// absent for P4 and N4.
std::optional<Category> next_stronger(Category c) noexcept;

struct FindingKey {
  std::string attribute;
  std::string value;
  auto operator<=>(const FindingKey&) const = default;
  bool operator==(const FindingKey&) const = default;
};

struct Finding {
  std::string attribute;
  std::string value;
  bool abnormal = false;

  FindingKey key() const { return {attribute, value}; }
};

struct ScoreRule {
  Finding finding;
  std::string diagnosis;
  Category category = Category::P1;
};

struct Thresholds {
  int possible = 16;
  int established = 64;
  int excluded = -16;
};

class ScoreRuleBase {
 public:
  Thresholds thresholds;

  /// Throws ValidationError if a rule for (finding, diagnosis) exists.
  void add(ScoreRule rule);
  /// Inserts or replaces the rule for (finding, diagnosis).
  void put(ScoreRule rule);
  bool erase(const FindingKey& finding, const std::string& diagnosis);
  const ScoreRule* find(const FindingKey& finding, const std::string& diagnosis) const;

  /// Ordered by (diagnosis, finding).
  std::vector<ScoreRule> rules() const;
  std::size_t size() const noexcept { return rules_.size(); }
  std::set<std::string> diagnoses() const;
  /// Contributing findings per diagnosis.
  std::map<std::string, std::vector<Finding>> profiles() const;

  void set_category(const FindingKey& finding, const std::string& diagnosis, Category c);

 private:
  using Key = std::pair<std::string, FindingKey>;  // diagnosis first
  std::map<Key, ScoreRule> rules_;
};

enum class Status { excluded, unclear, possible, established };
std::string_view to_string(Status s) noexcept;

struct Score {
  int total = 0;
  Status status = Status::unclear;
};

struct Case {
  std::vector<Finding> findings;
  std::set<std::string> diagnoses;
};

Status status_for(int total, const Thresholds& t) noexcept;

/// Scores every diagnosis of the rule base against the case findings.
std::map<std::string, Score> infer(const ScoreRuleBase& rb, std::span<const Finding> findings);

/// Ordered lower bounds; a value maps to the entry with the largest bound not
/// above it, and values below the first bound map to the first entry.
struct MappingTable {
  std::vector<std::pair<double, Category>> positive{
      {0.5, Category::P1}, {0.7, Category::P2}, {0.85, Category::P3}, {0.95, Category::P4}};
  std::vector<std::pair<double, Category>> negative{
      {0.5, Category::N1}, {0.7, Category::N2}, {0.85, Category::N3}, {0.95, Category::N4}};

  /// Throws ConfigError unless bounds are strictly increasing and signs match.
  void validate() const;
  Category for_precision(double precision) const;
  Category for_false_positive_rate(double fpr) const;
};

struct PruneOptions {
  bool abnormality = false;
  bool partition = false;
  bool heuristic = false;
};

struct PruneContext {
  /// Overrides the abnormal flag stored with a rule's finding.
  std::map<FindingKey, bool> abnormal;
  /// Partition class per finding attribute and per diagnosis.
  std::map<std::string, std::string> finding_class;
  std::map<std::string, std::string> diagnosis_class;
};

/// Removes rules that the enabled knowledge options rule out. A rule whose
/// finding or diagnosis has no partition class is kept by the partition option.
ScoreRuleBase prune(const ScoreRuleBase& rb, const PruneOptions& options, const PruneContext& context);

struct LearnConfig {
  double tau = 0.5;  // |phi| threshold
  /// chi-square significance gate; <= 0 disables it.
  double alpha = 0.05;
  MappingTable mapping;
  Thresholds thresholds;
  PruneOptions prune;
  PruneContext context;
};

/// 2x2 association between a finding and a diagnosis over a case list.
struct Association {
  std::size_t both = 0, finding_only = 0, diagnosis_only = 0, neither = 0;
  double phi = 0.0;
  double p_value = 1.0;
  bool degenerate = true;
};

Association associate(std::span<const Case> cases, const FindingKey& f, const std::string& d);

ScoreRuleBase learn_scores(std::span<const Case> cases, const LearnConfig& config);

struct Refinement {
  ScoreRuleBase rule_base;
  int epochs_used = 0;
};

Refinement refine_perceptron(const ScoreRuleBase& rb, std::span<const Case> cases, int max_epochs);

/// True if the established status of any labeled or predicted diagnosis
/// disagrees with the labels.
bool misclassifies(const ScoreRuleBase& rb, const Case& c);

/// One binary attribute per finding ("attribute=value" -> yes|no), target =
/// misclassified; top-k Piatetsky-Shapiro subgroups.
std::vector<mining::RankedPattern> find_misclassification_patterns(const ScoreRuleBase& rb, std::span<const Case> cases,
                                                                   std::size_t k, std::size_t max_depth = 2);

struct EvalMetrics {
  double avg_rules = 0.0;
  double avg_rules_stddev = 0.0;
  double avg_findings_used = 0.0;
  double avg_categories_per_diagnosis = 0.0;
  double accuracy = 0.0;
};

/// Sequential k-fold cross-validation (fold i = cases [i*N/k, (i+1)*N/k)).
/// Accuracy is the share of (case, diagnosis) pairs over every diagnosis seen
/// in `cases` whose established status matches the label.
EvalMetrics evaluate(const LearnConfig& config, std::span<const Case> cases, int folds);

// JSON formats: cases are JSON lines {findings:[{attribute,value,abnormal}],
// diagnoses:[id]}; a rule base is {rules:[{attribute,value,abnormal,diagnosis,
// category}], thresholds:{possible,established,excluded}}.
Case case_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Case& c);
std::vector<Case> read_cases(std::istream& in);
void write_cases(std::ostream& out, std::span<const Case> cases);
ScoreRuleBase rule_base_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScoreRuleBase& rb);
nlohmann::json to_json(const EvalMetrics& m);

}  // namespace diagnostica::scoring
