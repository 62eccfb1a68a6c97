#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "diagnostica/errors.hpp"
#include "diagnostica/mining.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace diagnostica;
using namespace diagnostica::mining;

namespace {

tabular::Dataset reference() {
  return tabular::load_table_file(DIAGNOSTICA_FIXTURES "/reference.csv", tabular::parse_schema("T:target"));
}

MiningTask task_for(const tabular::Dataset& ds, MeasureKind kind, std::size_t k, std::size_t depth,
                    std::size_t min_size = 1) {
  MiningTask t;
  t.dataset = &ds;
  t.measure = {kind, min_size};
  t.k = k;
  t.max_depth = depth;
  t.min_size = min_size;
  return t;
}

}  // namespace

TEST_SUITE("mining") {
  TEST_CASE("q^e family arithmetic") {
    // n_p=10, t_p=0.8, t_0=0.5 over N=100 with 50 positives
    const auto s = SubgroupStats::binary(10, 8, 100, 50);
    CHECK(*quality(s, {MeasureKind::ps}) == 3.0);
    CHECK(*quality(s, {MeasureKind::gain}) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(*quality(s, {MeasureKind::binomial}) == doctest::Approx(std::sqrt(10.0) * 0.3).epsilon(1e-15));

    const auto same = SubgroupStats::binary(20, 10, 100, 50);
    for (auto k : {MeasureKind::ps, MeasureKind::binomial, MeasureKind::gain}) CHECK(*quality(same, {k}) == 0.0);

    CHECK_THROWS_AS(quality(SubgroupStats::binary(0, 0, 10, 5), {MeasureKind::ps}), UndefinedQuality);
  }

  TEST_CASE("gain below min_size is filtered") {
    const auto s = SubgroupStats::binary(3, 3, 10, 5);
    CHECK_FALSE(quality(s, {MeasureKind::gain, 4}));
    CHECK(quality(s, {MeasureKind::gain, 3}));
  }

  TEST_CASE("chi-square independence and a known table") {
    const auto indep = chi_square_p(SubgroupStats::binary(10, 5, 20, 10));
    CHECK(indep.statistic == 0.0);
    CHECK(indep.p_value == 1.0);
    const auto degenerate = chi_square_p(SubgroupStats::binary(20, 10, 20, 10));
    CHECK(degenerate.statistic == 0.0);
    CHECK(degenerate.p_value == 1.0);
    // a=8 b=2 c=2 d=8: chi2 = 20*(64-4)^2/(10*10*10*10) = 7.2
    const auto x = chi_square_p(SubgroupStats::binary(10, 8, 20, 10));
    CHECK(x.statistic == doctest::Approx(7.2));
    CHECK(x.p_value == doctest::Approx(0.00729).epsilon(1e-3));
  }

  TEST_CASE("optimistic estimates bound every refinement") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t N = 5 + rng() % 40, P = rng() % (N + 1);
      const std::size_t n = 1 + rng() % N;
      const std::size_t pos = std::min<std::size_t>(P, rng() % (n + 1));
      if (n - pos > N - P) continue;
      const auto s = SubgroupStats::binary(n, pos, N, P);
      for (auto k : {MeasureKind::ps, MeasureKind::binomial, MeasureKind::gain, MeasureKind::chi_square}) {
        const QualityMeasure m{k, 1};
        const double oe = optimistic_estimate(s, m);
        for (std::size_t n2 = 1; n2 <= n; ++n2)
          for (std::size_t p2 = 0; p2 <= std::min(pos, n2); ++p2) {
            if (n2 - p2 > n - pos) continue;
            const auto q = quality(SubgroupStats::binary(n2, p2, N, P), m);
            if (q) CHECK(*q <= oe + 1e-12);
          }
      }
    }
  }

  TEST_CASE("mean-shift estimate is the best subset mean") {
    const std::vector<double> v{5, 1, 3};
    CHECK(mean_shift_estimate(v, 2.0, 1.0) == doctest::Approx(4.0));  // {5,3}: 2*(4-2)
    CHECK(mean_shift_estimate(v, 2.0, 0.0) == doctest::Approx(3.0));  // {5}
  }

  TEST_CASE("reference dataset top 3 by ps") {
    const auto ds = reference();
    const auto r = discover_top_k(task_for(ds, MeasureKind::ps, 3, 2));
    REQUIRE(r.size() == 3);
    CHECK(tabular::to_string(r[0].pattern) == "{A=a1}");
    CHECK(r[0].quality == 1.0);
    CHECK(tabular::to_string(r[1].pattern) == "{A=a1, B=b1}");
    CHECK(r[1].quality == 1.0);
    CHECK(r[2].quality == 0.0);
    CHECK(tabular::to_string(r[2].pattern) == "{B=b1}");
  }

  TEST_CASE("parallel and serial search agree with brute force") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const auto t = oracle::random_binary_table(rng, 2 + rng() % 8, 4 + rng() % 40);
      const auto ds = oracle::to_dataset(t);
      for (auto kind : {MeasureKind::ps, MeasureKind::binomial, MeasureKind::gain}) {
        const std::size_t k = 1 + rng() % 15, depth = 1 + rng() % 3, ms = 1 + rng() % 3;
        const auto want = oracle::brute_force_top_k(t, kind, k, depth, ms);
        const auto task = task_for(ds, kind, k, depth, ms);
        CHECK_MESSAGE(oracle::compare_top_k(discover_top_k(task), want).empty(), "trial ", trial);
        CHECK_MESSAGE(oracle::compare_top_k(discover_top_k_serial(task), want).empty(), "trial ", trial);
      }
    }
  }

  TEST_CASE("mean-shift search on a numeric target") {
    const auto ds = tabular::DatasetBuilder()
                        .nominal("g", {"a", "a", "b", "b", "c"})
                        .numeric_target("y", {10, 12, 0, 1, 2})
                        .build();
    auto t = task_for(ds, MeasureKind::mean_shift, 2, 1);
    const auto r = discover_top_k(t);
    REQUIRE(r.size() == 2);
    CHECK(tabular::to_string(r[0].pattern) == "{g=a}");
    CHECK(r[0].quality == doctest::Approx(2 * (11.0 - 5.0)));
    CHECK(r[0].stats.numeric);
    CHECK_FALSE(r[0].p_value);
  }

  TEST_CASE("configuration errors") {
    const auto ds = reference();
    MiningTask t;
    CHECK_THROWS_AS(discover_top_k(t), ConfigError);
    CHECK_THROWS_AS(discover_top_k(task_for(ds, MeasureKind::ps, 0, 1)), ConfigError);
    CHECK_THROWS_AS(discover_top_k(task_for(ds, MeasureKind::ps, 1, 0)), ConfigError);
    CHECK_THROWS_AS(discover_top_k(task_for(ds, MeasureKind::mean_shift, 1, 1)), ConfigError);
    CHECK_THROWS_AS(parse_measure("lift"), ConfigError);
    CHECK(parse_measure("chi2") == MeasureKind::chi_square);
  }

  TEST_CASE("evaluate_pattern and json") {
    const auto ds = reference();
    const auto s = evaluate_pattern(tabular::Pattern{{"A", "a1"}}, ds);
    CHECK(s.n_p == 4);
    CHECK(s.positives_p == 3);
    CHECK(s.positives == 4);
    const auto r = discover_top_k(task_for(ds, MeasureKind::ps, 1, 1));
    const auto j = to_json(r);
    CHECK(j[0]["selectors"][0]["attribute"] == "A");
    CHECK(j[0]["quality"] == 1.0);
    CHECK(j[0].contains("p_value"));
  }
}
