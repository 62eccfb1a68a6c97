#pragma once

// Independent reference computations used by the unit tests and the
// acceptance runner. Nothing here calls the code under test to produce an
// expected value; inputs may be handed to the library afterwards.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "diagnostica/fcn.hpp"
#include "diagnostica/kg.hpp"
#include "diagnostica/mining.hpp"
#include "diagnostica/scoring.hpp"
#include "diagnostica/tabular.hpp"

namespace oracle {

// ---- subgroups

/// Raw table of nominal columns plus a 0/1 target.
struct NominalTable {
  std::vector<std::string> names;               // attribute names
  std::vector<std::vector<std::string>> cols;   // [attribute][row]
  std::vector<std::uint8_t> target;
};

NominalTable random_binary_table(std::mt19937_64& rng, std::size_t attributes, std::size_t rows);
diagnostica::tabular::Dataset to_dataset(const NominalTable& t);

struct Subgroup {
  std::vector<std::pair<std::string, std::string>> selectors;  // sorted
  std::size_t n = 0, pos = 0;
  double quality = 0.0;
};

/// Full enumeration of conjunctions up to `max_depth`, ranked with exact
/// integer arithmetic. Supports ps, binomial and gain.
std::vector<Subgroup> brute_force_top_k(const NominalTable& t, diagnostica::mining::MeasureKind kind, std::size_t k,
                                        std::size_t max_depth, std::size_t min_size);

std::vector<std::pair<std::string, std::string>> selectors_of(const diagnostica::tabular::Pattern& p);

/// Empty when the library result equals the enumeration (patterns, order and
/// qualities within `tol`); otherwise a description of the first mismatch.
std::string compare_top_k(const std::vector<diagnostica::mining::RankedPattern>& got, const std::vector<Subgroup>& want,
                          double tol = 1e-12);

// ---- KPI

struct Books {
  std::string structure_csv;
  std::string bookings_csv;
  std::vector<std::string> materials;
  std::map<std::string, std::string> shift_of;  // material -> shift of all its bookings
  std::set<std::string> inflated;
};

/// Random BOM DAG with integer quantities and integer bookings that satisfy
/// the balance equation for every material. With `night_inflation`, every
/// material of the night shift (a third of them) gets an extra inflow of
/// 6..15 units.
Books consistent_books(std::mt19937_64& rng, std::size_t materials, bool night_inflation);

/// balance(m) from the CSV texts by direct summation.
std::map<std::string, double> direct_balances(const Books& b);

// ---- scoring

struct TwoByTwo {
  std::size_t a = 0, b = 0, c = 0, d = 0;  // f&d, f&!d, !f&d, !f&!d
  std::optional<double> phi;               // absent for a zero marginal
  double p_value = 1.0;
};

TwoByTwo two_by_two(const std::vector<diagnostica::scoring::Case>& cases, const std::string& attribute,
                    const std::string& value, const std::string& diagnosis);

/// 8 findings f1..f8 and 3 diagnoses d1..d3; fi is present exactly when di is
/// (i <= 3); f4..f8 are independent coin flips.
std::vector<diagnostica::scoring::Case> planted_cases(std::uint64_t seed, std::size_t n);

struct PartitionedData {
  std::vector<diagnostica::scoring::Case> cases;
  diagnostica::scoring::PruneContext context;
};

/// Three partition classes with two diagnoses each; every diagnosis owns two
/// normal/abnormal findings of its class. dB1 follows dA1 most of the time,
/// which correlates class-B findings with dA1 and the other way round.
PartitionedData partitioned_cases(std::uint64_t seed, std::size_t n);

/// Total of matching rules and whether it reaches the established threshold.
bool established_by_sum(const diagnostica::scoring::ScoreRuleBase& rb, const diagnostica::scoring::Case& c,
                        const std::string& diagnosis);

// ---- knowledge graph

/// Colour refinement with individualisation over (concept, attributes) vertex
/// labels and (predicate, order) edge labels.
bool isomorphic(const diagnostica::kg::KnowledgeGraph& a, const diagnostica::kg::KnowledgeGraph& b);

/// Referential integrity, domain/range and key uniqueness re-derived from
/// entities() and relations(). Empty when consistent.
std::vector<std::string> integrity_problems(const diagnostica::kg::KnowledgeGraph& g);

/// id -> concept from an exported triple text, parsed line by line.
std::map<std::string, std::string> entity_concepts(const std::string& triples);
/// (subject, predicate, object) relation triples from an exported text.
std::set<std::tuple<std::string, std::string, std::string>> relation_triples(const std::string& triples);

// ---- neural network

struct FdReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates next to a ReLU kink
};

/// Central differences of logit `cls` w.r.t. sampled parameters and
/// last-convolution entries, against backward_logit.
FdReport finite_difference_logit(const diagnostica::fcn::FcnModel& m, const std::vector<double>& v, int cls,
                                 std::size_t samples, std::uint64_t seed);
/// Central differences of the training-mode batch loss against its gradient.
FdReport finite_difference_loss(const diagnostica::fcn::FcnModel& m,
                                const std::vector<diagnostica::fcn::LabeledSeries>& batch, std::size_t samples,
                                std::uint64_t seed);

}  // namespace oracle
