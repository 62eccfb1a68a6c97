#include "diagnostica/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "diagnostica/errors.hpp"
#include "diagnostica/tabular.hpp"

namespace diagnostica::scoring {

int value(Category c) noexcept {
  switch (c) {
    case Category::N4: return -64;
    case Category::N3: return -16;
    case Category::N2: return -4;
    case Category::N1: return -1;
    case Category::P1: return 1;
    case Category::P2: return 4;
    case Category::P3: return 16;
    case Category::P4: return 64;
  }
  return 0;
}

std::string_view symbol(Category c) noexcept {
  static constexpr std::string_view names[] = {"N4", "N3", "N2", "N1", "P1", "P2", "P3", "P4"};
  return names[static_cast<int>(c)];
}

Category parse_category(std::string_view s) {
  for (auto c : kAllCategories)
    if (symbol(c) == s) return c;
  throw ValidationError("unknown confirmation category '" + std::string(s) + "'");
}

bool is_positive(Category c) noexcept { return c >= Category::P1; }

Category step_up(Category c) noexcept {
  return c == Category::P4 ? c : static_cast<Category>(static_cast<int>(c) + 1);
}

Category step_down(Category c) noexcept {
  return c == Category::N4 ? c : static_cast<Category>(static_cast<int>(c) - 1);
}

std::optional<Category> next_stronger(Category c) noexcept {
  if (c == Category::P4 || c == Category::N4) return std::nullopt;
  return is_positive(c) ? step_up(c) : step_down(c);
}

// ---------------------------------------------------------------- rule base

void ScoreRuleBase::add(ScoreRule rule) {
  Key key{rule.diagnosis, rule.finding.key()};
  if (rules_.contains(key))
    throw ValidationError("duplicate rule " + rule.finding.attribute + "=" + rule.finding.value + " -> " + rule.diagnosis);
  rules_.emplace(std::move(key), std::move(rule));
}

void ScoreRuleBase::put(ScoreRule rule) {
  Key key{rule.diagnosis, rule.finding.key()};
  rules_.insert_or_assign(std::move(key), std::move(rule));
}

bool ScoreRuleBase::erase(const FindingKey& finding, const std::string& diagnosis) {
  return rules_.erase(Key{diagnosis, finding}) > 0;
}

const ScoreRule* ScoreRuleBase::find(const FindingKey& finding, const std::string& diagnosis) const {
  auto it = rules_.find(Key{diagnosis, finding});
  return it == rules_.end() ? nullptr : &it->second;
}

std::vector<ScoreRule> ScoreRuleBase::rules() const {
  std::vector<ScoreRule> out;
  out.reserve(rules_.size());
  for (const auto& [k, r] : rules_) out.push_back(r);
  return out;
}

std::set<std::string> ScoreRuleBase::diagnoses() const {
  std::set<std::string> out;
  for (const auto& [k, r] : rules_) out.insert(k.first);
  return out;
}

std::map<std::string, std::vector<Finding>> ScoreRuleBase::profiles() const {
  std::map<std::string, std::vector<Finding>> out;
  for (const auto& [k, r] : rules_) out[k.first].push_back(r.finding);
  return out;
}

void ScoreRuleBase::set_category(const FindingKey& finding, const std::string& diagnosis, Category c) {
  auto it = rules_.find(Key{diagnosis, finding});
  if (it == rules_.end()) throw NotFoundError("no rule for " + finding.attribute + "=" + finding.value + " -> " + diagnosis);
  it->second.category = c;
}

// ---------------------------------------------------------------- inference

std::string_view to_string(Status s) noexcept {
  switch (s) {
    case Status::excluded: return "excluded";
    case Status::unclear: return "unclear";
    case Status::possible: return "possible";
    case Status::established: return "established";
  }
  return "unclear";
}

Status status_for(int total, const Thresholds& t) noexcept {
  if (total >= t.established) return Status::established;
  if (total >= t.possible) return Status::possible;
  if (total <= t.excluded) return Status::excluded;
  return Status::unclear;
}

std::map<std::string, Score> infer(const ScoreRuleBase& rb, std::span<const Finding> findings) {
  std::set<FindingKey> present;
  for (const auto& f : findings) present.insert(f.key());
  std::map<std::string, Score> out;
  for (const auto& d : rb.diagnoses()) out[d] = {};
  for (const auto& r : rb.rules())
    if (present.contains(r.finding.key())) out[r.diagnosis].total += value(r.category);
  for (auto& [d, s] : out) s.status = status_for(s.total, rb.thresholds);
  return out;
}

// ---------------------------------------------------------------- mapping

namespace {

Category lookup(const std::vector<std::pair<double, Category>>& table, double x) {
  Category c = table.front().second;
  for (const auto& [bound, cat] : table)
    if (x >= bound) c = cat;
  return c;
}

}  // namespace

void MappingTable::validate() const {
  auto check = [](const std::vector<std::pair<double, Category>>& t, bool positive, const char* name) {
    if (t.empty()) throw ConfigError(std::string("mapping table '") + name + "' is empty");
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (is_positive(t[i].second) != positive)
        throw ConfigError(std::string("mapping table '") + name + "' maps to a category of the wrong sign");
      if (i > 0 && !(t[i].first > t[i - 1].first))
        throw ConfigError(std::string("mapping table '") + name + "' thresholds must be strictly increasing");
    }
  };
  check(positive, true, "positive");
  check(negative, false, "negative");
}

Category MappingTable::for_precision(double precision) const { return lookup(positive, precision); }
Category MappingTable::for_false_positive_rate(double fpr) const { return lookup(negative, fpr); }

// ---------------------------------------------------------------- pruning

ScoreRuleBase prune(const ScoreRuleBase& rb, const PruneOptions& options, const PruneContext& context) {
  ScoreRuleBase out;
  out.thresholds = rb.thresholds;
  for (const auto& r : rb.rules()) {
    if (options.abnormality) {
      auto it = context.abnormal.find(r.finding.key());
      const bool abnormal = it == context.abnormal.end() ? r.finding.abnormal : it->second;
      if (!abnormal) continue;
    }
    if (options.partition) {
      auto fc = context.finding_class.find(r.finding.attribute);
      auto dc = context.diagnosis_class.find(r.diagnosis);
      if (fc != context.finding_class.end() && dc != context.diagnosis_class.end() && fc->second != dc->second) continue;
    }
    out.add(r);
  }
  if (options.heuristic) {
    std::map<std::string, bool> has_positive;
    for (const auto& r : out.rules()) has_positive[r.diagnosis] = has_positive[r.diagnosis] || is_positive(r.category);
    for (const auto& r : out.rules())
      if (!has_positive[r.diagnosis]) out.erase(r.finding.key(), r.diagnosis);
  }
  return out;
}

// ---------------------------------------------------------------- learning

namespace {

struct Universe {
  std::vector<Finding> findings;  // distinct keys, sorted
  std::vector<std::string> diagnoses;
  std::vector<tabular::Cover> finding_cover;
  std::vector<tabular::Cover> diagnosis_cover;
};

Universe build_universe(std::span<const Case> cases) {
  Universe u;
  std::map<FindingKey, Finding> findings;
  std::set<std::string> diagnoses;
  for (const auto& c : cases) {
    for (const auto& f : c.findings) {
      auto [it, inserted] = findings.try_emplace(f.key(), f);
      if (!inserted) it->second.abnormal = it->second.abnormal || f.abnormal;
    }
    diagnoses.insert(c.diagnoses.begin(), c.diagnoses.end());
  }
  std::map<FindingKey, std::size_t> fidx;
  for (auto& [k, f] : findings) {
    fidx[k] = u.findings.size();
    u.findings.push_back(f);
  }
  u.diagnoses.assign(diagnoses.begin(), diagnoses.end());
  u.finding_cover.assign(u.findings.size(), tabular::Cover(cases.size()));
  u.diagnosis_cover.assign(u.diagnoses.size(), tabular::Cover(cases.size()));
  for (std::size_t i = 0; i < cases.size(); ++i) {
    for (const auto& f : cases[i].findings) u.finding_cover[fidx[f.key()]].set(i);
    for (const auto& d : cases[i].diagnoses) {
      auto it = std::lower_bound(u.diagnoses.begin(), u.diagnoses.end(), d);
      u.diagnosis_cover[static_cast<std::size_t>(it - u.diagnoses.begin())].set(i);
    }
  }
  return u;
}

Association from_counts(std::size_t N, std::size_t n_f, std::size_t n_d, std::size_t both) {
  Association a;
  a.both = both;
  a.finding_only = n_f - both;
  a.diagnosis_only = n_d - both;
  a.neither = N - n_f - n_d + both;
  if (n_f == 0 || n_f == N || n_d == 0 || n_d == N) return a;
  a.degenerate = false;
  const double cross = static_cast<double>(a.both) * static_cast<double>(a.neither) -
                       static_cast<double>(a.finding_only) * static_cast<double>(a.diagnosis_only);
  const double denom = std::sqrt(static_cast<double>(n_f) * static_cast<double>(N - n_f) * static_cast<double>(n_d) *
                                 static_cast<double>(N - n_d));
  a.phi = cross / denom;
  const double chi2 = static_cast<double>(N) * a.phi * a.phi;
  a.p_value = std::erfc(std::sqrt(chi2 / 2.0));
  return a;
}

}  // namespace

Association associate(std::span<const Case> cases, const FindingKey& f, const std::string& d) {
  std::size_t n_f = 0, n_d = 0, both = 0;
  for (const auto& c : cases) {
    const bool has_f = std::any_of(c.findings.begin(), c.findings.end(), [&](const Finding& x) { return x.key() == f; });
    const bool has_d = c.diagnoses.contains(d);
    n_f += has_f;
    n_d += has_d;
    both += has_f && has_d;
  }
  return from_counts(cases.size(), n_f, n_d, both);
}

ScoreRuleBase learn_scores(std::span<const Case> cases, const LearnConfig& config) {
  if (cases.empty()) throw ConfigError("learn_scores requires at least one case");
  if (!(config.tau > 0.0 && config.tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
  config.mapping.validate();
  const Universe u = build_universe(cases);
  const std::size_t N = cases.size();

  ScoreRuleBase rb;
  rb.thresholds = config.thresholds;
  for (std::size_t di = 0; di < u.diagnoses.size(); ++di) {
    const auto& dcov = u.diagnosis_cover[di];
    const std::size_t n_d = dcov.count();
    for (std::size_t fi = 0; fi < u.findings.size(); ++fi) {
      const auto& fcov = u.finding_cover[fi];
      const auto a = from_counts(N, fcov.count(), n_d, (fcov & dcov).count());
      if (a.degenerate || std::abs(a.phi) < config.tau) continue;
      if (config.alpha > 0.0 && !(a.p_value < config.alpha)) continue;
      Category cat;
      if (a.phi > 0.0) {
        const double precision = static_cast<double>(a.both) / static_cast<double>(a.both + a.finding_only);
        cat = config.mapping.for_precision(precision);
      } else {
        const double fpr = static_cast<double>(a.finding_only) / static_cast<double>(a.finding_only + a.neither);
        cat = config.mapping.for_false_positive_rate(fpr);
      }
      rb.add({u.findings[fi], u.diagnoses[di], cat});
    }
  }
  const auto& p = config.prune;
  if (p.abnormality || p.partition || p.heuristic) return prune(rb, p, config.context);
  return rb;
}

// ---------------------------------------------------------------- refinement

namespace {

std::set<std::string> considered(const Case& c, const std::map<std::string, Score>& scores) {
  std::set<std::string> out = c.diagnoses;
  for (const auto& [d, s] : scores)
    if (s.status == Status::established) out.insert(d);
  return out;
}

bool established(const std::map<std::string, Score>& scores, const std::string& d) {
  auto it = scores.find(d);
  return it != scores.end() && it->second.status == Status::established;
}

}  // namespace

bool misclassifies(const ScoreRuleBase& rb, const Case& c) {
  const auto scores = infer(rb, c.findings);
  for (const auto& d : considered(c, scores))
    if (established(scores, d) != c.diagnoses.contains(d)) return true;
  return false;
}

Refinement refine_perceptron(const ScoreRuleBase& rb, std::span<const Case> cases, int max_epochs) {
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  Refinement out{rb, 0};
  auto& current = out.rule_base;
  for (int epoch = 1; epoch <= max_epochs; ++epoch) {
    out.epochs_used = epoch;
    bool changed = false;
    for (const auto& c : cases) {
      const auto scores = infer(current, c.findings);
      for (const auto& d : considered(c, scores)) {
        const bool label = c.diagnoses.contains(d);
        if (established(scores, d) == label) continue;
        for (const auto& f : c.findings) {
          const ScoreRule* r = current.find(f.key(), d);
          if (r == nullptr) continue;
          const Category next = label ? step_up(r->category) : step_down(r->category);
          if (next != r->category) {
            current.set_category(f.key(), d, next);
            changed = true;
          }
        }
      }
    }
    if (!changed) break;
  }
  return out;
}

std::vector<mining::RankedPattern> find_misclassification_patterns(const ScoreRuleBase& rb, std::span<const Case> cases,
                                                                   std::size_t k, std::size_t max_depth) {
  if (cases.empty()) return {};
  const Universe u = build_universe(cases);
  tabular::DatasetBuilder builder;
  for (std::size_t fi = 0; fi < u.findings.size(); ++fi) {
    std::vector<std::string> col(cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) col[i] = u.finding_cover[fi].test(i) ? "yes" : "no";
    builder.nominal(u.findings[fi].attribute + "=" + u.findings[fi].value, col);
  }
  std::vector<std::uint8_t> target(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) target[i] = misclassifies(rb, cases[i]) ? 1 : 0;
  builder.binary_target("misclassified", std::move(target));
  const auto ds = builder.build();
  mining::MiningTask task;
  task.dataset = &ds;
  task.measure = {mining::MeasureKind::ps, 1};
  task.k = k;
  task.max_depth = max_depth;
  return mining::discover_top_k(task);
}

// ---------------------------------------------------------------- evaluation

EvalMetrics evaluate(const LearnConfig& config, std::span<const Case> cases, int folds) {
  if (folds < 2) throw ConfigError("folds must be >= 2");
  if (static_cast<std::size_t>(folds) > cases.size())
    throw ConfigError("folds (" + std::to_string(folds) + ") exceed the number of cases (" + std::to_string(cases.size()) + ")");
  std::set<std::string> universe;
  for (const auto& c : cases) universe.insert(c.diagnoses.begin(), c.diagnoses.end());
  const double n_diag = std::max<double>(1.0, static_cast<double>(universe.size()));

  struct FoldResult {
    double rules_per_diag = 0, findings_used = 0, categories = 0, accuracy = 0;
    std::vector<double> rule_counts;
  };
  std::vector<FoldResult> results(static_cast<std::size_t>(folds));
  const std::size_t N = cases.size();

#pragma omp parallel for schedule(dynamic, 1)
  for (int f = 0; f < folds; ++f) {
    const std::size_t lo = static_cast<std::size_t>(f) * N / static_cast<std::size_t>(folds);
    const std::size_t hi = static_cast<std::size_t>(f + 1) * N / static_cast<std::size_t>(folds);
    std::vector<Case> train;
    train.reserve(N - (hi - lo));
    for (std::size_t i = 0; i < N; ++i)
      if (i < lo || i >= hi) train.push_back(cases[i]);
    const ScoreRuleBase rb = learn_scores(train, config);

    FoldResult& r = results[static_cast<std::size_t>(f)];
    std::map<std::string, std::size_t> count;
    std::map<std::string, std::set<Category>> cats;
    std::set<FindingKey> used;
    for (const auto& rule : rb.rules()) {
      ++count[rule.diagnosis];
      cats[rule.diagnosis].insert(rule.category);
      used.insert(rule.finding.key());
    }
    for (const auto& d : universe) r.rule_counts.push_back(static_cast<double>(count[d]));
    r.rules_per_diag = static_cast<double>(rb.size()) / n_diag;
    r.findings_used = static_cast<double>(used.size());
    double cat_sum = 0;
    for (const auto& d : universe) cat_sum += static_cast<double>(cats[d].size());
    r.categories = cat_sum / n_diag;

    std::size_t agree = 0, total = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto scores = infer(rb, cases[i].findings);
      for (const auto& d : universe) {
        agree += established(scores, d) == cases[i].diagnoses.contains(d);
        ++total;
      }
    }
    r.accuracy = total ? static_cast<double>(agree) / static_cast<double>(total) : 0.0;
  }

  EvalMetrics m;
  std::vector<double> all_counts;
  for (const auto& r : results) {
    m.avg_rules += r.rules_per_diag;
    m.avg_findings_used += r.findings_used;
    m.avg_categories_per_diagnosis += r.categories;
    m.accuracy += r.accuracy;
    all_counts.insert(all_counts.end(), r.rule_counts.begin(), r.rule_counts.end());
  }
  const double k = static_cast<double>(folds);
  m.avg_rules /= k;
  m.avg_findings_used /= k;
  m.avg_categories_per_diagnosis /= k;
  m.accuracy /= k;
  if (!all_counts.empty()) {
    double mean = 0;
    for (double c : all_counts) mean += c;
    mean /= static_cast<double>(all_counts.size());
    double var = 0;
    for (double c : all_counts) var += (c - mean) * (c - mean);
    m.avg_rules_stddev = std::sqrt(var / static_cast<double>(all_counts.size()));
  }
  return m;
}

// ---------------------------------------------------------------- JSON

Case case_from_json(const nlohmann::json& j) {
  Case c;
  for (const auto& f : j.at("findings"))
    c.findings.push_back({f.at("attribute").get<std::string>(), f.at("value").get<std::string>(), f.value("abnormal", false)});
  for (const auto& d : j.value("diagnoses", nlohmann::json::array())) c.diagnoses.insert(d.get<std::string>());
  return c;
}

nlohmann::json to_json(const Case& c) {
  nlohmann::json fs = nlohmann::json::array();
  for (const auto& f : c.findings) fs.push_back({{"attribute", f.attribute}, {"value", f.value}, {"abnormal", f.abnormal}});
  return {{"findings", fs}, {"diagnoses", c.diagnoses}};
}

std::vector<Case> read_cases(std::istream& in) {
  std::vector<Case> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(case_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(lineno, "cases line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_cases(std::ostream& out, std::span<const Case> cases) {
  for (const auto& c : cases) out << to_json(c).dump() << '\n';
}

ScoreRuleBase rule_base_from_json(const nlohmann::json& j) {
  ScoreRuleBase rb;
  if (j.contains("thresholds")) {
    const auto& t = j.at("thresholds");
    rb.thresholds.possible = t.value("possible", rb.thresholds.possible);
    rb.thresholds.established = t.value("established", rb.thresholds.established);
    rb.thresholds.excluded = t.value("excluded", rb.thresholds.excluded);
  }
  for (const auto& r : j.at("rules")) {
    rb.add({{r.at("attribute").get<std::string>(), r.at("value").get<std::string>(), r.value("abnormal", false)},
            r.at("diagnosis").get<std::string>(),
            parse_category(r.at("category").get<std::string>())});
  }
  return rb;
}

nlohmann::json to_json(const ScoreRuleBase& rb) {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : rb.rules())
    rules.push_back({{"attribute", r.finding.attribute},
                     {"value", r.finding.value},
                     {"abnormal", r.finding.abnormal},
                     {"diagnosis", r.diagnosis},
                     {"category", symbol(r.category)}});
  return {{"rules", rules},
          {"thresholds",
           {{"possible", rb.thresholds.possible},
            {"established", rb.thresholds.established},
            {"excluded", rb.thresholds.excluded}}}};
}

nlohmann::json to_json(const EvalMetrics& m) {
  return {{"avg_rules", m.avg_rules},
          {"avg_rules_stddev", m.avg_rules_stddev},
          {"avg_findings_used", m.avg_findings_used},
          {"avg_categories_per_diagnosis", m.avg_categories_per_diagnosis},
          {"accuracy", m.accuracy}};
}

}  // namespace diagnostica::scoring
