// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "diagnostica/cam.hpp"
#include "diagnostica/circuit.hpp"
#include "diagnostica/errors.hpp"
#include "diagnostica/fcn.hpp"
#include "diagnostica/gateway.hpp"
#include "diagnostica/kg.hpp"
#include "diagnostica/kpi.hpp"
#include "diagnostica/mining.hpp"
#include "diagnostica/scoring.hpp"
#include "httplib.h"
#include "support/kg_fuzz.hpp"
#include "support/oracles.hpp"
#include "support/session_driver.hpp"

using namespace diagnostica;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(double x, int digits = 3) {
  std::ostringstream s;
  s.precision(digits);
  s << x;
  return s.str();
}

// ---------------------------------------------------------------- subgroups

Outcome subgroup_oracle() {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::size_t compared = 0;
  for (int trial = 0; trial < 50 && o.pass; ++trial) {
    const std::size_t attrs = 2 + rng() % 11, rows = 8 + rng() % 57;
    const auto t = oracle::random_binary_table(rng, attrs, rows);
    const auto ds = oracle::to_dataset(t);
    for (auto kind : {mining::MeasureKind::ps, mining::MeasureKind::binomial, mining::MeasureKind::gain}) {
      const std::size_t k = 1 + rng() % 25, min_size = 1 + rng() % 3;
      mining::MiningTask task;
      task.dataset = &ds;
      task.measure = {kind, min_size};
      task.k = k;
      task.max_depth = 3;
      task.min_size = min_size;
      const auto want = oracle::brute_force_top_k(t, kind, k, 3, min_size);
      const auto diff = oracle::compare_top_k(mining::discover_top_k(task), want);
      o.require(diff.empty(), "dataset " + std::to_string(trial) + " " + std::string(mining::to_string(kind)) + ": " + diff);
      ++compared;
    }
  }
  if (o.pass) o.detail = std::to_string(compared) + " top-k lists identical to enumeration";
  return o;
}

Outcome quality_arithmetic() {
  Outcome o;
  using mining::SubgroupStats;
  // n=10, t_p=0.8, t_0=0.5, e=1: 10 * 0.3 = 3
  const auto q = mining::quality(SubgroupStats::binary(10, 8, 100, 50), {mining::MeasureKind::ps, 1});
  o.require(q && *q == 3.0, "q^1(10, 0.8, 0.5) = " + (q ? fmt(*q, 17) : std::string("none")));
  for (auto kind : {mining::MeasureKind::ps, mining::MeasureKind::binomial, mining::MeasureKind::gain}) {
    const auto z = mining::quality(SubgroupStats::binary(20, 10, 100, 50), {kind, 1});
    o.require(z && *z == 0.0, "t_p = t_0 does not give 0 for " + std::string(mining::to_string(kind)));
  }
  // pattern share identical in both target classes
  const auto c = mining::chi_square_p(SubgroupStats::binary(20, 10, 40, 20));
  o.require(c.statistic == 0.0 && c.p_value == 1.0, "independent 2x2 gives (" + fmt(c.statistic) + ", " + fmt(c.p_value) + ")");
  if (o.pass) o.detail = "q^1 = 3 exactly, q = 0 at t_p = t_0, chi2 = (0, 1)";
  return o;
}

// ---------------------------------------------------------------- KPI

Outcome kpi_books() {
  Outcome o;
  std::mt19937_64 rng(77);
  std::size_t materials = 0;
  for (int trial = 0; trial < 20 && o.pass; ++trial) {
    const auto books = oracle::consistent_books(rng, 25 + rng() % 40, false);
    std::istringstream s(books.structure_csv), b(books.bookings_csv);
    const auto g = kpi::load_graphs(s, b);
    for (const auto& v : kpi::compute_all(g.structure, g.accounting)) {
      o.require(v.balance == 0.0, "consistent books: balance(" + v.material + ") = " + fmt(v.balance));
      ++materials;
    }
  }
  const auto books = oracle::consistent_books(rng, 60, true);
  const auto direct = oracle::direct_balances(books);
  std::istringstream s(books.structure_csv), b(books.bookings_csv);
  const auto g = kpi::load_graphs(s, b);
  for (const auto& v : kpi::compute_all(g.structure, g.accounting))
    o.require(v.balance == direct.at(v.material), "balance(" + v.material + ") differs from the direct sum");
  const auto table = kpi::kpi_feature_table(g.structure, g.accounting);
  mining::MiningTask task;
  task.dataset = &table.dataset;
  task.measure.kind = mining::MeasureKind::mean_shift;
  task.k = 1;
  task.max_depth = 2;
  const auto top = mining::discover_top_k(task);
  o.require(!top.empty() && tabular::to_string(top[0].pattern) == "{shift=night}",
            "top-1 mean-shift pattern is " + (top.empty() ? std::string("none") : tabular::to_string(top[0].pattern)));
  if (o.pass) o.detail = std::to_string(materials) + " balances 0; top-1 {shift=night}";
  return o;
}

// ---------------------------------------------------------------- scoring

Outcome aggregation_law() {
  Outcome o;
  std::size_t checked = 0;
  for (auto c : scoring::kAllCategories) {
    const auto next = scoring::next_stronger(c);
    if (!next) continue;
    scoring::ScoreRuleBase rb;
    std::vector<scoring::Finding> fs;
    for (int i = 0; i < 4; ++i) {
      fs.push_back({"f" + std::to_string(i), "present", true});
      rb.add({fs.back(), "d", c});
    }
    const auto total = scoring::infer(rb, fs).at("d").total;
    o.require(total == scoring::value(*next), std::string(scoring::symbol(c)) + " x4 = " + std::to_string(total));
    ++checked;
  }
  if (o.pass) o.detail = std::to_string(checked) + " categories";
  return o;
}

Outcome scoring_learner() {
  Outcome o;
  const auto cases = oracle::planted_cases(31, 200);
  scoring::LearnConfig cfg;
  cfg.tau = 0.5;
  const auto rb = scoring::learn_scores(cases, cfg);
  for (int i = 1; i <= 3; ++i) {
    const auto* r = rb.find({"f" + std::to_string(i), "present"}, "d" + std::to_string(i));
    o.require(r && r->category == scoring::Category::P4, "planted rule f" + std::to_string(i) + " -> d" +
                                                             std::to_string(i) + " missing or below P4");
  }
  std::size_t independent = 0;
  for (int f = 1; f <= 8; ++f)
    for (int d = 1; d <= 3; ++d) {
      if (f == d) continue;
      const auto t = oracle::two_by_two(cases, "f" + std::to_string(f), "present", "d" + std::to_string(d));
      const bool significant = t.phi && std::abs(*t.phi) >= cfg.tau && t.p_value < cfg.alpha;
      if (significant) continue;
      ++independent;
      o.require(!rb.find({"f" + std::to_string(f), "present"}, "d" + std::to_string(d)),
                "rule emitted for independent pair f" + std::to_string(f) + "/d" + std::to_string(d));
    }

  const auto data = oracle::partitioned_cases(32, 600);
  scoring::LearnConfig plain, pruned;
  pruned.prune = {true, true, false};
  pruned.context = data.context;
  const auto a = scoring::evaluate(plain, data.cases, 10);
  const auto b = scoring::evaluate(pruned, data.cases, 10);
  o.require(b.avg_rules <= 0.5 * a.avg_rules,
            "rules per diagnosis " + fmt(a.avg_rules) + " -> " + fmt(b.avg_rules) + " (less than half removed)");
  o.require(b.accuracy >= 0.9 * a.accuracy, "accuracy " + fmt(a.accuracy) + " -> " + fmt(b.accuracy));
  if (o.pass)
    o.detail = "3 planted P4 rules, 0 of " + std::to_string(independent) + " independent pairs; rules/diagnosis " +
               fmt(a.avg_rules) + " -> " + fmt(b.avg_rules) + ", accuracy " + fmt(a.accuracy) + " -> " + fmt(b.accuracy);
  return o;
}

Outcome perceptron() {
  Outcome o;
  const auto cases = oracle::planted_cases(33, 200);
  auto rb = scoring::learn_scores(cases, {});
  for (const auto& r : rb.rules()) rb.set_category(r.finding.key(), r.diagnosis, scoring::step_down(r.category));
  std::size_t wrong = 0;
  for (const auto& c : cases) wrong += scoring::misclassifies(rb, c);
  const auto out = scoring::refine_perceptron(rb, cases, 10);
  std::size_t agree = 0;
  for (const auto& c : cases) {
    bool ok = true;
    for (const auto& d : out.rule_base.diagnoses()) ok &= oracle::established_by_sum(out.rule_base, c, d) == (c.diagnoses.count(d) > 0);
    agree += ok;
  }
  o.require(agree == cases.size(), std::to_string(agree) + "/" + std::to_string(cases.size()) + " cases agree");
  o.require(out.epochs_used <= 10, "used " + std::to_string(out.epochs_used) + " epochs");
  const auto before = rb.rules(), after = out.rule_base.rules();
  bool same = before.size() == after.size();
  for (std::size_t i = 0; same && i < before.size(); ++i)
    same = before[i].finding.key() == after[i].finding.key() && before[i].diagnosis == after[i].diagnosis;
  o.require(same, "rule pairs changed");
  if (o.pass)
    o.detail = std::to_string(wrong) + " misclassified before, 100% agreement after " + std::to_string(out.epochs_used) +
               " epoch(s)";
  return o;
}

// ---------------------------------------------------------------- neural

Outcome gradient_check() {
  Outcome o;
  fcn::SyntheticConfig sc;
  sc.count = 8;
  sc.length = 128;
  const auto series = fcn::to_labeled(fcn::make_flat_vs_spike(sc));
  auto m = fcn::FcnModel::initialize(fcn::Architecture::tiny(), 5);
  // a few training steps move batch norm away from the identity
  fcn::TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  m = fcn::train(tc, series).model;

  double worst = 0.0;
  std::size_t checked = 0;
  for (int cls : {fcn::kAnomalous, fcn::kRegular}) {
    const auto r = oracle::finite_difference_logit(m, series[0].values, cls, 300, 40 + cls);
    worst = std::max(worst, r.max_relative_error);
    checked += r.checked;
  }
  const std::vector<fcn::LabeledSeries> batch(series.begin(), series.begin() + 4);
  const auto t = oracle::finite_difference_loss(m, batch, 300, 50);
  worst = std::max(worst, t.max_relative_error);
  checked += t.checked;
  const auto lib = fcn::gradient_check(m, series[1].values);
  worst = std::max(worst, lib.max_relative_error);
  checked += lib.checked;
  o.require(worst < 1e-4, "max relative error " + fmt(worst));
  o.require(checked > 500, "only " + std::to_string(checked) + " coordinates checked");
  o.detail = "max relative error " + fmt(worst) + " over " + std::to_string(checked) + " coordinates";
  return o;
}

struct SpikeModel {
  fcn::FcnModel model;
  std::vector<fcn::SyntheticSeries> test;
};

SpikeModel& spike_model() {
  static SpikeModel sm = [] {
    fcn::SyntheticConfig train_cfg;
    train_cfg.count = 200;
    train_cfg.length = 128;
    train_cfg.spike_width = 8;
    train_cfg.seed = 101;
    fcn::SyntheticConfig test_cfg = train_cfg;
    test_cfg.count = 100;
    test_cfg.seed = 202;
    fcn::TrainConfig tc;
    const auto r = fcn::train(tc, fcn::to_labeled(fcn::make_flat_vs_spike(train_cfg)));
    return SpikeModel{r.model, fcn::make_flat_vs_spike(test_cfg)};
  }();
  return sm;
}

Outcome saliency() {
  Outcome o;
  auto& sm = spike_model();
  std::size_t correct = 0, anomalous_correct = 0, localized = 0, agree = 0;
  for (const auto& s : sm.test) {
    const auto v = fcn::z_normalize(s.values).values;
    const auto p = fcn::predict(sm.model, v);
    if (p.y != s.label) continue;
    ++correct;
    if (s.label != fcn::kAnomalous) continue;
    ++anomalous_correct;
    const auto gc = static_cast<long>(cam::argmax(cam::grad_cam(sm.model, v).values));
    const auto hr = static_cast<long>(cam::argmax(cam::hires_cam(sm.model, v).values));
    const long lo = static_cast<long>(*s.spike_start), hi = lo + 8;
    localized += gc >= lo - 4 && gc < hi + 4;
    agree += std::abs(gc - hr) <= 8;
  }
  // spikes planted at [40, 48) on the regular test series
  std::size_t fixed = 0, fixed_hits = 0;
  for (const auto& s : sm.test) {
    if (s.label != fcn::kRegular) continue;
    auto raw = s.values;
    for (std::size_t t = 40; t < 48; ++t) raw[t] += 3.0;
    const auto v = fcn::z_normalize(raw).values;
    if (fcn::predict(sm.model, v).y != fcn::kAnomalous) continue;
    ++fixed;
    const auto gc = cam::argmax(cam::grad_cam(sm.model, v).values);
    fixed_hits += gc >= 36 && gc < 52;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(sm.test.size());
  const double loc = anomalous_correct ? static_cast<double>(localized) / static_cast<double>(anomalous_correct) : 0.0;
  const double agr = anomalous_correct ? static_cast<double>(agree) / static_cast<double>(anomalous_correct) : 0.0;
  const double fix = fixed ? static_cast<double>(fixed_hits) / static_cast<double>(fixed) : 0.0;
  o.require(acc >= 0.95, "test accuracy " + fmt(acc));
  o.require(loc >= 0.80, "grad-cam localization " + fmt(loc));
  o.require(agr >= 0.70, "grad-cam/hires-cam agreement " + fmt(agr));
  o.require(fix >= 0.80, "window [40,48) localization " + fmt(fix));
  o.detail = "accuracy " + fmt(acc) + ", localized " + fmt(loc) + ", method agreement " + fmt(agr) +
             ", fixed window " + fmt(fix) + (o.pass ? "" : "; " + o.detail);
  return o;
}

// ---------------------------------------------------------------- diagnosis

Outcome root_cause() {
  Outcome o;
  {
    kg::KnowledgeGraph g;
    driver::plant_knowledge(g);
    auto stub = std::make_shared<circuit::StubClassifier>();
    stub->verdicts = {{"C_D", true}, {"C_A", true}, {"C_B", true}, {"C_C", false}};
    circuit::Session s("rca", g, stub, {"car", "VIN1"}, {"P0500"}, {});
    driver::run(s, {stub->verdicts.begin(), stub->verdicts.end()});
    o.require(s.state() == circuit::State::REPORT, std::string("ended in ") + std::string(circuit::to_string(s.state())));
    o.require(s.fault_paths().size() == 1, std::to_string(s.fault_paths().size()) + " fault paths");
    if (s.fault_paths().size() == 1)
      o.require(s.fault_paths()[0].components == std::vector<std::string>{"C_B", "C_A", "C_D"}, "unexpected path");
  }
  kg::KnowledgeGraph g;
  driver::plant_knowledge(g, true);
  auto stub = std::make_shared<circuit::StubClassifier>();
  stub->default_anomalous = true;
  circuit::Session s("cycle", g, stub, {"car", "VIN1"}, {"P0500"}, {});
  driver::run(s, {{"C_A", true}, {"C_B", true}, {"C_C", true}, {"C_D", true}});
  o.require(circuit::is_terminal(s.state()), "cyclic graph: session did not terminate");
  o.require(s.rca_requests() <= g.component_names().size(),
            std::to_string(s.rca_requests()) + " requests for " + std::to_string(g.component_names().size()) + " components");
  if (o.pass)
    o.detail = "one path C_B -> C_A -> C_D; cyclic graph: " + std::to_string(s.rca_requests()) + " requests <= " +
               std::to_string(g.component_names().size());
  return o;
}

Outcome knowledge_graph() {
  Outcome o;
  std::mt19937_64 rng(4242);
  kg::KnowledgeGraph g;
  fuzz::random_graph(rng, g, 200);
  std::ostringstream out;
  g.export_triples(out);
  std::istringstream in(out.str());
  const auto back = kg::KnowledgeGraph::import_triples(in);
  o.require(oracle::isomorphic(g, back), "import(export(G)) is not isomorphic to G");
  const auto entities = g.stats().entities;

  std::size_t applied = 0, replays = 0;
  for (int i = 0; i < 1000 && o.pass; ++i) {
    const auto m = fuzz::random_mutation(rng, g);
    applied += m.applied;
    if (m.idempotent) {
      ++replays;
      o.require(*m.idempotent, "replayed " + m.op + " changed the graph");
    }
    const auto problems = oracle::integrity_problems(g);
    o.require(problems.empty(), "after " + m.op + ": " + (problems.empty() ? "" : problems.front()));
    const auto inv = g.check_invariants();
    o.require(inv.empty(), "after " + m.op + ": " + (inv.empty() ? "" : inv.front()));
  }
  if (o.pass)
    o.detail = std::to_string(entities) + "-entity round trip isomorphic; 1000 mutations (" + std::to_string(applied) +
               " applied, " + std::to_string(replays) + " enhancer replays) consistent";
  return o;
}

// ---------------------------------------------------------------- end to end

struct Http {
  httplib::Client cli;
  explicit Http(int port) : cli("127.0.0.1", port) {}

  std::pair<int, json> send(const std::string& method, const std::string& path, const json& body = nullptr) {
    httplib::Result r = method == "GET" ? cli.Get("/api/v1" + path)
                                        : cli.Post("/api/v1" + path, body.is_null() ? "" : body.dump(), "application/json");
    if (!r) return {0, json()};
    return {r->status, json::parse(r->body)};
  }
};

Outcome end_to_end() {
  Outcome o;
  auto& sm = spike_model();
  gateway::GatewayConfig cfg;
  cfg.port = 0;
  gateway::Gateway gw(cfg);
  for (const char* c : {"C_A", "C_C", "C_D"}) gw.register_model(c, sm.model, "spike-tiny");
  gw.start();
  Http http(gw.port());

  // knowledge through the API; C_B has no model and falls back to a manual inspection
  std::ifstream kf(std::string(DIAGNOSTICA_FIXTURES) + "/plant_knowledge.json");
  const json knowledge = json::parse(kf);
  for (const auto& c : knowledge["components"])
    o.require(http.send("POST", "/knowledge/components", c).first == 201, "component upload failed");
  for (const auto& f : knowledge["fault_contexts"])
    o.require(http.send("POST", "/knowledge/fault-contexts", f).first == 201, "fault context upload failed");

  // inputs the model classifies as intended
  std::optional<std::vector<double>> spike, clean;
  for (const auto& s : sm.test) {
    const auto y = fcn::predict(sm.model, fcn::z_normalize(s.values).values).y;
    if (s.label == fcn::kAnomalous && y == fcn::kAnomalous && !spike) spike = s.values;
    if (s.label == fcn::kRegular && y == fcn::kRegular && !clean) clean = s.values;
  }
  o.require(spike && clean, "no usable test series");
  if (!o.pass) return o;

  auto [st, created] = http.send("POST", "/sessions", {{"vehicle", {{"name", "test car"}, {"vin", "WVW000E2E"}}},
                                                       {"dtcs", {"P0500"}}});
  o.require(st == 201, "session creation returned " + std::to_string(st));
  if (!o.pass) return o;
  const std::string sid = created["payload"]["id"];
  const std::map<std::string, bool> faulty{{"C_D", true}, {"C_A", true}, {"C_B", true}, {"C_C", false}};
  std::size_t uploads = 0, manual = 0;
  for (int step = 0; step < 20 && o.pass; ++step) {
    auto [code, acts] = http.send("GET", "/sessions/" + sid + "/actions");
    o.require(code == 200, "actions returned " + std::to_string(code));
    const auto& list = acts["payload"]["actions"];
    if (list.empty()) break;
    const std::string comp = list[0]["component"];
    const std::string kind = list[0]["kind"];
    if (kind == "record_oscillogram") {
      const auto& values = faulty.at(comp) ? *spike : *clean;
      auto [c, r] = http.send("POST", "/sessions/" + sid + "/oscillograms", {{"component", comp}, {"values", values}});
      o.require(c == 201, "oscillogram upload returned " + std::to_string(c));
      o.require(r["payload"]["classification"]["prediction"] == (faulty.at(comp) ? "anomalous" : "regular"),
                "model misjudged " + comp);
      ++uploads;
    } else {
      auto [c, r] = http.send("POST", "/sessions/" + sid + "/manual-results",
                              {{"component", comp}, {"anomalous", comp == "sensor" ? false : faulty.at(comp)}});
      o.require(c == 201, "manual result returned " + std::to_string(c));
      ++manual;
    }
  }
  auto [fc, fin] = http.send("POST", "/sessions/" + sid + "/finalize");
  o.require(fc == 200, "finalize returned " + std::to_string(fc));
  auto [rc, rep] = http.send("GET", "/sessions/" + sid + "/report");
  o.require(rc == 200, "report returned " + std::to_string(rc));
  if (!o.pass) return o;
  const json report = rep["payload"];
  o.require(report["fault_paths"].size() == 1 && report["fault_paths"][0]["components"] == json{"C_B", "C_A", "C_D"},
            "report fault path is " + report["fault_paths"].dump());

  auto [ec, exp] = http.send("GET", "/kg/export");
  const std::string triples = exp["payload"]["triples"];
  const auto concepts = oracle::entity_concepts(triples);
  const auto rels = oracle::relation_triples(triples);
  std::size_t resolved = 0;
  auto resolves = [&](const json& id, std::initializer_list<const char*> kinds) {
    const auto it = id.is_string() ? concepts.find(id.get<std::string>()) : concepts.end();
    bool ok = false;
    if (it != concepts.end())
      for (const char* k : kinds) ok |= it->second == k;
    o.require(ok, "report id " + id.dump() + " does not resolve to " + *kinds.begin());
    resolved += ok;
  };
  const std::string log = report["diag_log"];
  resolves(report["diag_log"], {"DiagLog"});
  resolves(report["vehicle"]["id"], {"Vehicle"});
  o.require(rels.count({log, "createdFor", report["vehicle"]["id"]}) == 1, "diag log not linked to the vehicle");
  for (const auto& c : report["contexts"]) {
    resolves(c["id"], {"FaultContext"});
    o.require(rels.count({c["id"], "appearsIn", log}) == 1, "context not linked to the diag log");
  }
  for (const auto& c : report["classifications"]) {
    const std::string id = c["id"];
    resolves(c["id"], {"OscillogramClassification", "ManualInspection"});
    o.require(rels.count({log, "entails", id}) == 1, "classification " + id + " not entailed by the diag log");
    const bool by_assoc = c["reason"]["kind"] == "association";
    resolves(c["reason"]["id"], by_assoc ? std::initializer_list<const char*>{"DiagnosticAssociation"}
                                         : std::initializer_list<const char*>{"OscillogramClassification", "ManualInspection"});
    o.require(rels.count({c["reason"]["id"], by_assoc ? "ledTo" : "reasonFor", id}) == 1, "reason edge missing for " + id);
    if (c.contains("oscillogram_id")) {
      resolves(c["oscillogram_id"], {"Oscillogram"});
      o.require(rels.count({id, "classifies", c["oscillogram_id"]}) == 1, "oscillogram not linked to " + id);
    }
    if (c.contains("heatmap_id")) {
      resolves(c["heatmap_id"], {"Heatmap"});
      o.require(rels.count({id, "producedHeatmap", c["heatmap_id"]}) == 1, "heatmap not linked to " + id);
    }
  }
  for (const auto& h : report["heatmap_refs"]) {
    resolves(h, {"Heatmap"});
    o.require(http.send("GET", "/heatmaps/" + h.get<std::string>()).first == 200, "heatmap " + h.dump() + " not served");
  }
  for (const auto& p : report["fault_paths"]) {
    resolves(p["id"], {"FaultPath"});
    o.require(rels.count({log, "entails", p["id"]}) == 1, "fault path not entailed by the diag log");
    for (const auto& comp : p["components"]) {
      const auto cid = gw.graph().component_id(comp.get<std::string>());
      o.require(cid && rels.count({p["id"], "pathStep", *cid}) == 1, "path step to " + comp.dump() + " missing");
    }
  }
  o.require(uploads >= 3 && manual >= 1, "expected oscillogram and manual submissions");
  gw.stop();
  if (o.pass)
    o.detail = std::to_string(uploads) + " uploads, " + std::to_string(manual) + " manual results, " +
               std::to_string(resolved) + " report ids resolved";
  return o;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"subgroup discovery equals exhaustive enumeration", 30, subgroup_oracle},
      {"quality function arithmetic", 1, quality_arithmetic},
      {"material balance KPI and night-shift subgroup", 10, kpi_books},
      {"score aggregation law", 1, aggregation_law},
      {"score learner recovery and pruning trend", 120, scoring_learner},
      {"perceptron refinement", 30, perceptron},
      {"FCN gradient check", 60, gradient_check},
      {"saliency localization", 300, saliency},
      {"root-cause isolation", 5, root_cause},
      {"knowledge graph round trip and integrity", 120, knowledge_graph},
      {"end-to-end HTTP session", 120, end_to_end},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_seconds) {
      o.detail += (o.detail.empty() ? "" : "; ") + ("took " + fmt(secs) + " s, budget " + fmt(c.budget_seconds) + " s");
      o.pass = false;
    }
    failed += !o.pass;
    std::printf("[%s] %-50s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
