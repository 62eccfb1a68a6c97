#include <filesystem>
#include <sstream>

#include "diagnostica/errors.hpp"
#include "diagnostica/kg.hpp"
#include "doctest.h"
#include "support/kg_fuzz.hpp"
#include "support/oracles.hpp"

using namespace diagnostica;
using namespace diagnostica::kg;

namespace {

void plant_knowledge(KnowledgeGraph& g) {
  g.add_component({"C_B", true, {}, std::nullopt});
  g.add_component({"C_C", true, {}, std::nullopt});
  g.add_component({"C_A", true, {"C_B"}, std::nullopt});
  g.add_component({"C_D", true, {"C_A", "C_C"}, std::nullopt});
  g.add_fault_context({"P0500", "Vehicle Speed Sensor Malfunction", {"speedometer inoperative"}, {{"C_D", 0}}});
}

std::string exported(const KnowledgeGraph& g) {
  std::ostringstream out;
  g.export_triples(out);
  return out.str();
}

KnowledgeGraph reimport(const std::string& text) {
  std::istringstream in(text);
  return KnowledgeGraph::import_triples(in);
}

}  // namespace

TEST_SUITE("kg") {
  TEST_CASE("concept and predicate names") {
    CHECK(parse_concept("OscillogramClassification") == Concept::OscillogramClassification);
    CHECK_FALSE(parse_concept("Car"));
    CHECK(is_a(Concept::ManualInspection, Concept::Classification));
    CHECK_FALSE(is_a(Concept::Heatmap, Concept::Classification));
    CHECK(parse_predicate("affected_by") == Predicate::affected_by);
    CHECK(is_reason(Predicate::ledTo));
    CHECK(valid_dtc("P2563"));
    CHECK_FALSE(valid_dtc("p2563"));
    CHECK_FALSE(valid_dtc("P256"));
  }

  TEST_CASE("entity and relation validation") {
    KnowledgeGraph g;
    CHECK_THROWS_AS(g.add_entity(Concept::FaultContext, {{"code", std::string("X1")}}), ValidationError);
    CHECK_THROWS_AS(g.add_entity(Concept::SuspectComponent, {{"name", std::string("a")}}), ValidationError);
    const auto a = g.add_entity(Concept::SuspectComponent, {{"name", std::string("a")}, {"use_oscilloscope", false}});
    CHECK_THROWS_AS(g.add_entity(Concept::SuspectComponent, {{"name", std::string("a")}, {"use_oscilloscope", true}}),
                    ValidationError);
    CHECK_THROWS_AS(g.add_entity(Concept::ManualInspection, {{"prediction", true}}), ValidationError);
    const auto s = g.add_entity(Concept::Symptom, {{"text", std::string("noise")}});
    CHECK_THROWS_AS(g.add_relation(a, Predicate::affected_by, s), ValidationError);
    CHECK_THROWS_AS(g.add_relation(a, Predicate::affected_by, a), ValidationError);
    CHECK_THROWS_AS(g.add_relation(a, Predicate::ledTo, a), ValidationError);
    CHECK_THROWS_AS(g.add_relation(a, Predicate::affected_by, "e999"), IntegrityError);
    CHECK_THROWS_AS(g.set_attribute(a, "use_oscilloscope", std::string("yes")), ValidationError);
    CHECK_THROWS_AS(g.set_attribute("e999", "x", std::int64_t{1}), NotFoundError);
    CHECK_THROWS_AS(g.set_attribute(a, "bad name", std::int64_t{1}), ValidationError);

    const auto b = g.add_entity(Concept::SuspectComponent, {{"name", std::string("b")}, {"use_oscilloscope", true}});
    const auto rev = g.revision();
    g.add_relation(a, Predicate::affected_by, b);
    CHECK(g.revision() == rev + 1);
    g.add_relation(a, Predicate::affected_by, b);
    CHECK(g.revision() == rev + 1);
    CHECK(g.query_affected_by("a") == std::vector<std::string>{"b"});
    CHECK(g.remove_relation(a, Predicate::affected_by, b));
    CHECK_FALSE(g.remove_relation(a, Predicate::affected_by, b));
    CHECK(g.check_invariants().empty());
  }

  TEST_CASE("enhancers are idempotent") {
    KnowledgeGraph g;
    plant_knowledge(g);
    const auto rev = g.revision();
    const auto stats = g.stats();
    plant_knowledge(g);
    CHECK(g.revision() == rev);
    CHECK(g.stats().entities == stats.entities);
    CHECK(g.stats().relations == stats.relations);
    g.extend_kg_with_vehicle("car", "VIN1");
    const auto rev2 = g.revision();
    g.extend_kg_with_vehicle("car", "VIN1");
    CHECK(g.revision() == rev2);
    g.add_component_set({"pedal", {"C_A", "C_B"}, "C_A"});
    const auto rev3 = g.revision();
    g.add_component_set({"pedal", {"C_A", "C_B"}, "C_A"});
    CHECK(g.revision() == rev3);
  }

  TEST_CASE("fault context merging and priority conflicts") {
    KnowledgeGraph g;
    plant_knowledge(g);
    g.add_fault_context({"P0500", "Vehicle Speed Sensor Malfunction", {}, {{"C_C", 1}}});
    CHECK(g.query_suspect_components_by_dtc("P0500") == std::vector<std::string>{"C_D", "C_C"});
    CHECK_THROWS_AS(g.add_fault_context({"P0500", "x", {}, {{"C_B", 1}}}), ValidationError);
    CHECK_THROWS_AS(g.add_fault_context({"P05", "x", {}, {}}), ValidationError);
    CHECK_THROWS_AS(g.add_fault_context({"P0501", "x", {}, {{"C_B", 0}, {"C_A", 0}}}), ValidationError);
    g.add_fault_context({"P0501", "other", {}, {{"new_part", 0}}});
    const auto c = g.component("new_part");
    REQUIRE(c);
    CHECK(c->flag("use_oscilloscope") == false);
    // generic writes may not reintroduce a duplicate priority
    const auto assoc = g.query_associations("P0500");
    CHECK_THROWS_AS(g.set_attribute(assoc[1].id, "priority_id", std::int64_t{0}), ValidationError);
    const auto other = g.query_associations("P0501").at(0).id;
    g.set_attribute(other, "priority_id", std::int64_t{1});
    CHECK_THROWS_AS(g.add_relation(*g.fault_context_id("P0500"), Predicate::hasAssociation, other), ValidationError);
    CHECK(g.check_invariants().empty());
  }

  TEST_CASE("queries") {
    KnowledgeGraph g;
    plant_knowledge(g);
    g.add_component({"C_A", true, {}, std::string("brakes")});
    g.add_component_set({"pedal", {"C_A", "C_B"}, "C_B"});
    g.extend_kg_with_vehicle("car", "VIN7");
    CHECK(g.query_affected_by("C_D") == std::vector<std::string>{"C_A", "C_C"});
    CHECK(g.query_symptoms_by_dtc("P0500") == std::vector<std::string>{"speedometer inoperative"});
    CHECK(g.query_dtcs_by_symptom("speedometer inoperative") == std::vector<std::string>{"P0500"});
    CHECK(g.query_dtcs_by_symptom("speedometer") .empty());
    CHECK(g.query_vehicle_instance_by_vin("VIN7"));
    CHECK_FALSE(g.query_vehicle_instance_by_vin("VIN8"));
    const auto sets = g.query_component_sets();
    REQUIRE(sets.size() == 1);
    CHECK(sets[0].verified_by == std::optional<std::string>("C_B"));
    CHECK(sets[0].members.size() == 2);
    const auto assoc = g.query_associations("P0500");
    REQUIRE(assoc.size() == 1);
    CHECK(assoc[0].use_oscilloscope);
    CHECK(g.stats().by_concept.at("SuspectComponent") == 4);
  }

  TEST_CASE("classifications keep exactly one reason") {
    KnowledgeGraph g;
    plant_knowledge(g);
    const auto assoc = g.query_associations("P0500").at(0).id;
    const auto osc = g.add_oscillogram("C_D", {1, 2, 3});
    const auto c1 = g.add_classification(
        {Concept::OscillogramClassification, "C_D", true, 0.1, std::string("m"), Predicate::ledTo, assoc, osc});
    const auto c2 = g.add_classification({Concept::ManualInspection, "C_A", false, std::nullopt, std::nullopt,
                                          Predicate::reasonFor, c1, std::nullopt});
    CHECK_THROWS_AS(g.add_classification({Concept::ManualInspection, "C_A", false, std::nullopt, std::nullopt,
                                          Predicate::ledTo, c1, std::nullopt}),
                    IntegrityError);
    CHECK_THROWS_AS(g.add_classification({Concept::ManualInspection, "nope", false, std::nullopt, std::nullopt,
                                          Predicate::ledTo, assoc, std::nullopt}),
                    IntegrityError);
    CHECK_THROWS_AS(g.remove_relation(c1, Predicate::reasonFor, c2), IntegrityError);
    CHECK_THROWS_AS(g.remove_entity(c1), IntegrityError);
    const auto h = g.add_heatmap(c1, "grad-cam", 0, {0, 1, 0});
    CHECK_THROWS_AS(g.add_heatmap(h, "grad-cam", 0, {}), IntegrityError);
    g.remove_entity(c2);
    g.remove_entity(c1);
    CHECK_FALSE(g.entity(h) == std::nullopt);
    CHECK(oracle::integrity_problems(g).empty());
    CHECK(g.check_invariants().empty());
  }

  TEST_CASE("diagnosis logs link contexts, vehicle and artifacts") {
    KnowledgeGraph g;
    plant_knowledge(g);
    g.extend_kg_with_vehicle("car", "VIN1");
    const auto path = g.add_fault_path({"C_B", "C_A", "C_D"}, std::string("P0500"), false);
    const auto log = g.extend_kg_with_diag_log({"P0500"}, "VIN1", {}, {path});
    const auto rels = oracle::relation_triples(exported(g));
    const auto fc = *g.fault_context_id("P0500");
    CHECK(rels.count({fc, "appearsIn", log}));
    CHECK(rels.count({log, "entails", path}));
    std::size_t steps = 0;
    for (const auto& r : g.outgoing(path))
      if (r.predicate == Predicate::pathStep) CHECK(r.order == static_cast<std::int64_t>(steps++));
    CHECK(steps == 3);
    CHECK_THROWS_AS(g.extend_kg_with_diag_log({}, "VIN2", {}, {}), IntegrityError);
    CHECK_THROWS_AS(g.extend_kg_with_diag_log({"P9999"}, "VIN1", {}, {}), IntegrityError);
    CHECK_THROWS_AS(g.add_fault_path({"C_X"}, std::nullopt, false), IntegrityError);
  }

  TEST_CASE("export then import is isomorphic") {
    std::mt19937_64 rng(11);
    KnowledgeGraph g;
    fuzz::random_graph(rng, g, 120);
    const auto text = exported(g);
    const auto back = reimport(text);
    CHECK(oracle::isomorphic(g, back));
    CHECK(oracle::integrity_problems(back).empty());
    g.set_attribute(g.entities().front().id, "note", std::string("changed"));
    CHECK_FALSE(oracle::isomorphic(g, back));
  }

  TEST_CASE("the fixture triples match the fixture payload") {
    KnowledgeGraph g;
    plant_knowledge(g);
    const auto loaded = KnowledgeGraph::load(std::string(DIAGNOSTICA_FIXTURES) + "/plant.kg");
    CHECK(oracle::isomorphic(g, loaded));
  }

  TEST_CASE("import errors name the line") {
    const std::string bad = "<e1> <a> <SuspectComponent> .\n<e1> <name> \"x\"^^xsd:string .\n<e1> <oops\n";
    try {
      reimport(bad);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(reimport("<e1> <affected_by> <e2> .\n"), ParseError);
    CHECK_THROWS_AS(reimport("<e1> <a> <Classification> .\n"), ParseError);
    // a component without its required flag
    CHECK_THROWS_AS(reimport("<e1> <a> <SuspectComponent> .\n<e1> <name> \"x\"^^xsd:string .\n"), ParseError);
  }

  TEST_CASE("save and load") {
    KnowledgeGraph g;
    plant_knowledge(g);
    const auto path = (std::filesystem::temp_directory_path() / "diagnostica_test.kg").string();
    g.save(path);
    const auto back = KnowledgeGraph::load(path);
    CHECK(oracle::isomorphic(g, back));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(KnowledgeGraph::load("/nonexistent/x.kg"), InfrastructureError);
  }

  TEST_CASE("random mutations keep the graph consistent") {
    std::mt19937_64 rng(12);
    KnowledgeGraph g;
    fuzz::random_graph(rng, g, 100);
    std::size_t applied = 0, replays = 0;
    for (int i = 0; i < 300; ++i) {
      const auto m = fuzz::random_mutation(rng, g);
      applied += m.applied;
      if (m.idempotent) {
        ++replays;
        CHECK_MESSAGE(*m.idempotent, m.op);
      }
      const auto problems = oracle::integrity_problems(g);
      CHECK_MESSAGE(problems.empty(), m.op << ": " << (problems.empty() ? "" : problems.front()));
      CHECK(g.check_invariants().empty());
    }
    CHECK(applied > 50);
    CHECK(replays > 10);
  }
}
