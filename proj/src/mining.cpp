#include "diagnostica/mining.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>

#include "diagnostica/errors.hpp"
#include "diagnostica/kernels.hpp"

namespace diagnostica::mining {

using tabular::Cover;
using tabular::Dataset;
using tabular::Pattern;
using tabular::Selector;

MeasureKind parse_measure(std::string_view text) {
  if (text == "ps") return MeasureKind::ps;
  if (text == "binomial") return MeasureKind::binomial;
  if (text == "gain") return MeasureKind::gain;
  if (text == "chi2" || text == "chi-square") return MeasureKind::chi_square;
  if (text == "mean" || text == "mean-shift") return MeasureKind::mean_shift;
  throw ConfigError("unknown quality measure '" + std::string(text) + "'");
}

std::string_view to_string(MeasureKind kind) {
  switch (kind) {
    case MeasureKind::ps: return "ps";
    case MeasureKind::binomial: return "binomial";
    case MeasureKind::gain: return "gain";
    case MeasureKind::chi_square: return "chi2";
    case MeasureKind::mean_shift: return "mean";
  }
  return "ps";
}

double QualityMeasure::exponent() const noexcept {
  switch (kind) {
    case MeasureKind::ps: return 1.0;
    case MeasureKind::binomial: return 0.5;
    case MeasureKind::gain: return 0.0;
    case MeasureKind::chi_square: return 0.0;
    case MeasureKind::mean_shift: return 1.0;
  }
  return 1.0;
}

SubgroupStats SubgroupStats::binary(std::size_t n_p, std::size_t positives_p, std::size_t N, std::size_t positives) {
  SubgroupStats s;
  s.n_p = n_p;
  s.positives_p = positives_p;
  s.N = N;
  s.positives = positives;
  return s;
}

SubgroupStats SubgroupStats::mean(std::size_t n_p, double mu_p, std::size_t N, double mu_0, double max_target) {
  SubgroupStats s;
  s.n_p = n_p;
  s.N = N;
  s.numeric = true;
  s.mu_p = mu_p;
  s.mu_0 = mu_0;
  s.max_target = max_target;
  return s;
}

std::optional<double> SubgroupStats::t_p() const {
  if (n_p == 0) return std::nullopt;
  return static_cast<double>(positives_p) / static_cast<double>(n_p);
}

double SubgroupStats::t_0() const {
  return N == 0 ? 0.0 : static_cast<double>(positives) / static_cast<double>(N);
}

namespace {

// n_p^e * (t_p - t_0) = n_p^(e-1) * (pos_p*N - P*n_p) / N. For e in {1, 0.5, 0}
// the value is one correctly rounded operation on integers (plus a sqrt), so
// patterns of equal quality compare equal bit for bit and t_p == t_0 gives 0.
double q_family(std::size_t n_p, std::size_t pos_p, std::size_t N, std::size_t P, double e) {
  const auto num = static_cast<std::int64_t>(pos_p) * static_cast<std::int64_t>(N) -
                   static_cast<std::int64_t>(P) * static_cast<std::int64_t>(n_p);
  const double dn = static_cast<double>(N), dp = static_cast<double>(n_p);
  if (e == 1.0) return static_cast<double>(num) / dn;
  if (e == 0.0) return static_cast<double>(num) / (dn * dp);
  if (e == 0.5) {
    const double sq = static_cast<double>(num) * static_cast<double>(num);
    return std::copysign(std::sqrt(sq / (dn * dn * dp)), static_cast<double>(num));
  }
  return static_cast<double>(num) / dn * std::pow(dp, e - 1.0);
}

double chi_square_statistic(std::size_t n_p, std::size_t pos_p, std::size_t N, std::size_t P) {
  if (n_p == 0 || n_p >= N || P == 0 || P >= N) return 0.0;
  const auto a = static_cast<std::int64_t>(pos_p);
  const auto b = static_cast<std::int64_t>(n_p - pos_p);
  const auto c = static_cast<std::int64_t>(P - pos_p);
  const auto d = static_cast<std::int64_t>(N) - static_cast<std::int64_t>(n_p) - c;
  const double cross = static_cast<double>(a * d - b * c);
  const double denom = static_cast<double>(n_p) * static_cast<double>(N - n_p) * static_cast<double>(P) *
                       static_cast<double>(N - P);
  return static_cast<double>(N) * cross * cross / denom;
}

void require_binary(const SubgroupStats& s, const QualityMeasure& m) {
  if (s.numeric) throw ConfigError("measure '" + std::string(to_string(m.kind)) + "' requires a binary target");
}

}  // namespace

std::optional<double> quality(const SubgroupStats& stats, const QualityMeasure& m) {
  if (stats.n_p == 0) throw UndefinedQuality("quality is undefined for an empty subgroup");
  switch (m.kind) {
    case MeasureKind::ps:
    case MeasureKind::binomial:
    case MeasureKind::gain:
      require_binary(stats, m);
      if (m.kind == MeasureKind::gain && stats.n_p < std::max<std::size_t>(m.min_size, 1)) return std::nullopt;
      return q_family(stats.n_p, stats.positives_p, stats.N, stats.positives, m.exponent());
    case MeasureKind::chi_square:
      require_binary(stats, m);
      return chi_square_statistic(stats.n_p, stats.positives_p, stats.N, stats.positives);
    case MeasureKind::mean_shift:
      if (!stats.numeric) throw ConfigError("mean-shift quality requires a numeric target");
      return std::pow(static_cast<double>(stats.n_p), m.exponent()) * (stats.mu_p - stats.mu_0);
  }
  return std::nullopt;
}

ChiSquare chi_square_p(const SubgroupStats& stats) {
  if (stats.numeric) throw ConfigError("chi-square requires a binary target");
  const double x = chi_square_statistic(stats.n_p, stats.positives_p, stats.N, stats.positives);
  if (x == 0.0) return {0.0, 1.0};
  return {x, std::erfc(std::sqrt(x / 2.0))};
}

double optimistic_estimate(const SubgroupStats& stats, const QualityMeasure& m) {
  if (stats.n_p == 0) throw UndefinedQuality("optimistic estimate is undefined for an empty subgroup");
  switch (m.kind) {
    case MeasureKind::ps:
    case MeasureKind::binomial:
    case MeasureKind::gain: {
      if (stats.positives_p == 0) return 0.0;
      // best refinement keeps only the positives: n = positives_p, t = 1
      return q_family(stats.positives_p, stats.positives_p, stats.N, stats.positives, m.exponent());
    }
    case MeasureKind::chi_square: {
      // chi-square is convex over the (positives, negatives) rectangle of
      // refinements, so its maximum sits at a corner.
      const std::size_t neg = stats.n_p - stats.positives_p;
      return std::max({chi_square_statistic(stats.positives_p, stats.positives_p, stats.N, stats.positives),
                       chi_square_statistic(neg, 0, stats.N, stats.positives),
                       chi_square_statistic(stats.n_p, stats.positives_p, stats.N, stats.positives)});
    }
    case MeasureKind::mean_shift:
      return std::pow(static_cast<double>(stats.n_p), m.exponent()) * std::max(0.0, stats.max_target - stats.mu_0);
  }
  return 0.0;
}

double mean_shift_estimate(std::span<const double> cover_targets, double mu_0, double exponent) {
  std::vector<double> v(cover_targets.begin(), cover_targets.end());
  std::sort(v.begin(), v.end(), std::greater<>());
  double best = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (std::size_t m = 1; m <= v.size(); ++m) {
    sum += v[m - 1];
    const double n = static_cast<double>(m);
    best = std::max(best, std::pow(n, exponent) * (sum / n - mu_0));
  }
  return best;
}

bool ranks_before(const RankedPattern& a, const RankedPattern& b) {
  if (a.quality != b.quality) return a.quality > b.quality;
  return a.pattern < b.pattern;
}

// ---------------------------------------------------------------- search

namespace {

class ResultPool {
 public:
  explicit ResultPool(std::size_t k) : k_(k) {}

  void offer(RankedPattern candidate) {
    std::lock_guard lock(mutex_);
    if (items_.size() == k_ && !ranks_before(candidate, items_.back())) return;
    auto it = std::lower_bound(items_.begin(), items_.end(), candidate, ranks_before);
    items_.insert(it, std::move(candidate));
    if (items_.size() > k_) items_.pop_back();
  }

  /// Quality of the current k-th result, absent while the pool is not full.
  std::optional<double> threshold() const {
    std::lock_guard lock(mutex_);
    if (items_.size() < k_) return std::nullopt;
    return items_.back().quality;
  }

  std::vector<RankedPattern> take() {
    std::lock_guard lock(mutex_);
    return std::move(items_);
  }

 private:
  std::size_t k_;
  mutable std::mutex mutex_;
  std::vector<RankedPattern> items_;
};

struct Candidate {
  std::size_t group = 0;  // attribute group position
  Selector selector;
  Cover cover;
};

class Search {
 public:
  explicit Search(const MiningTask& task) : task_(task), ds_(*task.dataset), pool_(task.k) {
    validate();
    const auto& attrs = ds_.attributes();
    std::vector<std::size_t> order;
    for (std::size_t a = 0; a < attrs.size(); ++a)
      if (attrs[a].kind == tabular::ColumnKind::nominal) order.push_back(a);
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return attrs[x].name < attrs[y].name; });
    for (std::size_t g = 0; g < order.size(); ++g) {
      const auto& attr = attrs[order[g]];
      for (const auto& value : attr.domain) {
        Selector sel{attr.name, value};
        candidates_.push_back({g, sel, tabular::selector_cover(sel, ds_)});
      }
    }
    N_ = ds_.size();
    if (numeric_) {
      const auto t = ds_.numeric_target();
      double sum = 0.0;
      max_target_ = -std::numeric_limits<double>::infinity();
      for (double v : t) {
        sum += v;
        max_target_ = std::max(max_target_, v);
      }
      mu_0_ = sum / static_cast<double>(N_);
    } else {
      target_ = Cover(N_);
      const auto t = ds_.binary_target();
      for (std::size_t r = 0; r < N_; ++r)
        if (t[r]) target_.set(r);
      positives_ = target_.count();
    }
    floor_ = std::max<std::size_t>(task_.min_size, 1);
    if (task_.measure.kind == MeasureKind::gain) floor_ = std::max(floor_, task_.measure.min_size);
  }

  std::vector<RankedPattern> run(bool parallel) {
    const auto n = static_cast<std::ptrdiff_t>(candidates_.size());
    const Cover root = Cover::all(N_);
    if (parallel) {
#pragma omp parallel for schedule(dynamic, 1)
      for (std::ptrdiff_t i = 0; i < n; ++i) {
        std::vector<std::size_t> path;
        expand(root, path, static_cast<std::size_t>(i));
      }
    } else {
      for (std::ptrdiff_t i = 0; i < n; ++i) {
        std::vector<std::size_t> path;
        expand(root, path, static_cast<std::size_t>(i));
      }
    }
    return pool_.take();
  }

 private:
  void validate() const {
    if (task_.dataset == nullptr) throw ConfigError("mining task has no dataset");
    if (task_.k < 1) throw ConfigError("k must be >= 1");
    if (task_.max_depth < 1) throw ConfigError("max_depth must be >= 1");
    if (task_.measure.kind == MeasureKind::gain && task_.measure.min_size < 1)
      throw ConfigError("gain requires min_size >= 1");
    const bool wants_numeric = task_.measure.kind == MeasureKind::mean_shift;
    if (wants_numeric && !ds_.has_numeric_target()) throw ConfigError("mean-shift requires a numeric target column");
    if (!wants_numeric && !ds_.has_binary_target()) throw ConfigError("measure requires a binary target column");
    numeric_ = wants_numeric;
  }

  // Visits the child of `parent` obtained by adding candidate `c`, then its
  // refinements over attribute groups after c's group.
  void expand(const Cover& parent, std::vector<std::size_t>& path, std::size_t c) {
    const Candidate& cand = candidates_[c];
    Cover cov = parent & cand.cover;
    const std::size_t n_p = cov.count();
    if (n_p < floor_) return;  // support is anti-monotone
    path.push_back(c);

    SubgroupStats stats;
    double bound = 0.0;
    if (numeric_) {
      std::vector<double> vals;
      vals.reserve(n_p);
      const auto t = ds_.numeric_target();
      double sum = 0.0;
      for (std::size_t r = 0; r < N_; ++r)
        if (cov.test(r)) {
          vals.push_back(t[r]);
          sum += t[r];
        }
      stats = SubgroupStats::mean(n_p, sum / static_cast<double>(n_p), N_, mu_0_, max_target_);
      bound = mean_shift_estimate(vals, mu_0_, task_.measure.exponent());
    } else {
      const std::size_t pos = kernels::serial::intersect_count(cov.words(), target_.words());
      stats = SubgroupStats::binary(n_p, pos, N_, positives_);
      bound = optimistic_estimate(stats, task_.measure);
    }

    if (auto q = quality(stats, task_.measure)) {
      RankedPattern r;
      for (auto idx : path) r.pattern.add(candidates_[idx].selector);
      r.stats = stats;
      r.quality = *q;
      if (!numeric_) r.p_value = chi_square_p(stats).p_value;
      pool_.offer(std::move(r));
    }

    if (path.size() < task_.max_depth) {
      auto thr = pool_.threshold();
      if (!thr || bound >= *thr) {
        for (std::size_t next = c + 1; next < candidates_.size(); ++next) {
          if (candidates_[next].group == cand.group) continue;
          // re-read: the pool may have tightened while exploring siblings
          auto t2 = pool_.threshold();
          if (t2 && bound < *t2) break;
          expand(cov, path, next);
        }
      }
    }
    path.pop_back();
  }

  const MiningTask& task_;
  const Dataset& ds_;
  ResultPool pool_;
  std::vector<Candidate> candidates_;
  Cover target_;
  std::size_t N_ = 0;
  std::size_t positives_ = 0;
  std::size_t floor_ = 1;
  double mu_0_ = 0.0;
  double max_target_ = 0.0;
  mutable bool numeric_ = false;
};

}  // namespace

std::vector<RankedPattern> discover_top_k(const MiningTask& task) { return Search(task).run(true); }

std::vector<RankedPattern> discover_top_k_serial(const MiningTask& task) { return Search(task).run(false); }

SubgroupStats evaluate_pattern(const Pattern& p, const Dataset& ds) {
  const Cover cov = tabular::cover(p, ds);
  const std::size_t n_p = cov.count();
  if (ds.has_numeric_target()) {
    const auto t = ds.numeric_target();
    double sum = 0.0, total = 0.0, mx = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < ds.size(); ++r) {
      total += t[r];
      mx = std::max(mx, t[r]);
      if (cov.test(r)) sum += t[r];
    }
    const double mu_p = n_p ? sum / static_cast<double>(n_p) : 0.0;
    return SubgroupStats::mean(n_p, mu_p, ds.size(), total / static_cast<double>(ds.size()), mx);
  }
  if (!ds.has_binary_target()) throw ConfigError("dataset has no target column");
  const auto t = ds.binary_target();
  std::size_t pos = 0, pos_p = 0;
  for (std::size_t r = 0; r < ds.size(); ++r) {
    pos += t[r];
    if (cov.test(r)) pos_p += t[r];
  }
  return SubgroupStats::binary(n_p, pos_p, ds.size(), pos);
}

nlohmann::json to_json(const RankedPattern& r) {
  nlohmann::json sels = nlohmann::json::array();
  for (const auto& s : r.pattern.selectors()) sels.push_back({{"attribute", s.attribute}, {"value", s.value}});
  nlohmann::json j{{"selectors", sels}, {"n_p", r.stats.n_p}, {"quality", r.quality}};
  if (r.stats.numeric) {
    j["mu_p"] = r.stats.mu_p;
    j["mu_0"] = r.stats.mu_0;
  } else if (auto t = r.stats.t_p()) {
    j["t_p"] = *t;
  }
  if (r.p_value) j["p_value"] = *r.p_value;
  return j;
}

nlohmann::json to_json(const std::vector<RankedPattern>& results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results) arr.push_back(to_json(r));
  return arr;
}

}  // namespace diagnostica::mining
