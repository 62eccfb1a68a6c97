#pragma once

// Typed in-process knowledge graph for on-board diagnostics.
//
// Entities carry exactly one concept and a literal attribute map; relations
// are typed by a closed predicate set with domain/range checks. Natural keys
// (DTC code, component name, VIN, component-set name) are unique-indexed.
// Single writer, many readers: every mutation takes the exclusive lock and
// bumps the revision counter when it changes something.
//
// Required attributes per concept (checked on every write):
//   FaultContext              code:string (letter + 4 digits)
//   FaultCondition, Symptom   text:string
//   SuspectComponent          name:string, use_oscilloscope:bool
//   DiagnosticAssociation     priority_id:int >= 0
//   ComponentSet, Subsystem   name:string
//   Vehicle                   name:string, vin:string (non-empty)
//   ManualInspection          prediction:bool (true = anomalous)
//   OscillogramClassification prediction:bool, uncertainty:double in [0,1], model_id:string
//   Oscillogram               samples:int
//   Heatmap                   method:string
// Classification itself is abstract. Any other attribute is accepted;
// attribute names are [A-Za-z0-9_]+.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "json.hpp"

namespace diagnostica::kg {

enum class Concept {
  FaultContext,
  FaultCondition,
  Symptom,
  SuspectComponent,
  DiagnosticAssociation,
  ComponentSet,
  Subsystem,
  Vehicle,
  DiagLog,
  Classification,
  ManualInspection,
  OscillogramClassification,
  Oscillogram,
  ParallelRecOscillogramSet,
  Heatmap,
  FaultPath,
};

std::string_view to_string(Concept c) noexcept;
std::optional<Concept> parse_concept(std::string_view text) noexcept;
/// True if c is `super` or a subtype of it.
bool is_a(Concept c, Concept super) noexcept;

enum class Predicate {
  hasAssociation,
  pointsTo,
  affected_by,
  containedIn,
  verifiedBy,
  manifestedBy,
  represents,
  appearsIn,
  createdFor,
  entails,
  reasonFor,
  ledTo,
  classifies,
  producedHeatmap,
  resultedIn,
  partOf,
  pathStep,
};

std::string_view to_string(Predicate p) noexcept;
std::optional<Predicate> parse_predicate(std::string_view text) noexcept;
/// reasonFor and ledTo: the inbound edges that justify a classification.
bool is_reason(Predicate p) noexcept;

using Literal = std::variant<bool, std::int64_t, double, std::string>;
using Attributes = std::map<std::string, Literal, std::less<>>;

struct Entity {
  std::string id;
  Concept kind = Concept::FaultContext;
  Attributes attributes;

  const std::string* text(std::string_view name) const;
  std::optional<bool> flag(std::string_view name) const;
  std::optional<std::int64_t> integer(std::string_view name) const;
  std::optional<double> real(std::string_view name) const;
};

struct Relation {
  std::string subject;
  Predicate predicate = Predicate::hasAssociation;
  std::string object;
  std::optional<std::int64_t> order;

  bool operator==(const Relation&) const = default;
};

nlohmann::json to_json(const Literal& value);
nlohmann::json to_json(const Entity& e);
nlohmann::json to_json(const Relation& r);

// ---- enhancer payloads

struct AssociationSpec {
  std::string component;
  std::int64_t priority = 0;
};

struct FaultContextSpec {
  std::string code;
  std::string condition;
  std::vector<std::string> symptoms;
  std::vector<AssociationSpec> associations;
};

struct ComponentSpec {
  std::string name;
  bool use_oscilloscope = false;
  std::vector<std::string> affected_by;
  std::optional<std::string> subsystem;
};

struct ComponentSetSpec {
  std::string name;
  std::vector<std::string> members;
  /// Component whose regular classification verifies the whole set.
  std::string verified_by;
};

struct ClassificationSpec {
  Concept kind = Concept::ManualInspection;  // or OscillogramClassification
  std::string component;                     // name
  bool anomalous = false;
  std::optional<double> uncertainty;
  std::optional<std::string> model_id;
  /// ledTo from a DiagnosticAssociation or reasonFor from a Classification.
  Predicate reason = Predicate::ledTo;
  std::string reason_source;
  std::optional<std::string> oscillogram;  // entity id
};

// ---- query results

struct AssociationInfo {
  std::string id;
  std::string component;
  std::int64_t priority = 0;
  bool use_oscilloscope = false;
};

struct ComponentSetInfo {
  std::string id;
  std::string name;
  std::vector<std::string> members;
  std::optional<std::string> verified_by;
};

struct Stats {
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::map<std::string, std::size_t> by_concept;
  std::uint64_t revision = 0;
};

nlohmann::json to_json(const Stats& s);

/// "P2563": one uppercase letter followed by four digits.
bool valid_dtc(std::string_view code) noexcept;

class KnowledgeGraph {
 public:
  KnowledgeGraph();
  ~KnowledgeGraph();
  KnowledgeGraph(KnowledgeGraph&& other) noexcept;
  KnowledgeGraph& operator=(KnowledgeGraph&& other) noexcept;
  KnowledgeGraph(const KnowledgeGraph&) = delete;
  KnowledgeGraph& operator=(const KnowledgeGraph&) = delete;

  // ---- generic access

  /// Creates an entity; classifications must go through add_classification.
  std::string add_entity(Concept kind, Attributes attributes = {});
  void set_attribute(const std::string& id, const std::string& name, Literal value);
  /// Domain/range checked; reason edges are rejected (see add_classification).
  /// Adding an identical relation again is a no-op.
  void add_relation(const std::string& subject, Predicate p, const std::string& object,
                    std::optional<std::int64_t> order = std::nullopt);
  /// Returns false if absent. Reason edges cannot be removed.
  bool remove_relation(const std::string& subject, Predicate p, const std::string& object);
  /// Removes the entity and every incident relation. Refused when the entity
  /// is the source of a reason edge, since that would orphan a classification.
  void remove_entity(const std::string& id);

  std::optional<Entity> entity(const std::string& id) const;
  /// Insertion order.
  std::vector<Entity> entities() const;
  std::vector<Relation> relations() const;
  std::vector<Relation> outgoing(const std::string& id) const;
  std::vector<Relation> incoming(const std::string& id) const;
  std::uint64_t revision() const;
  Stats stats() const;

  // ---- enhancers

  /// Creates or merges a fault context. Missing components are created with
  /// use_oscilloscope=false. Replaying an identical payload changes nothing.
  std::string add_fault_context(const FaultContextSpec& spec);
  std::string add_component(const ComponentSpec& spec);
  std::string add_component_set(const ComponentSetSpec& spec);
  std::string extend_kg_with_vehicle(const std::string& name, const std::string& vin);
  /// A fault path carrying a `dtc` attribute is linked from that context's
  /// fault condition only; otherwise from every listed context.
  std::string extend_kg_with_diag_log(const std::vector<std::string>& dtc_codes, const std::string& vin,
                                      const std::vector<std::string>& classification_ids,
                                      const std::vector<std::string>& fault_path_ids);

  // ---- diagnostic artifacts

  std::string add_classification(const ClassificationSpec& spec);
  std::string add_oscillogram(const std::string& component, const std::vector<double>& values);
  std::string add_heatmap(const std::string& classification_id, const std::string& method, int target_class,
                          const std::vector<double>& values);
  /// Components by name, root cause first.
  std::string add_fault_path(const std::vector<std::string>& components, const std::optional<std::string>& dtc,
                             bool cyclic);

  // ---- queries

  /// Component names, ascending priority_id.
  std::vector<std::string> query_suspect_components_by_dtc(std::string_view dtc) const;
  std::vector<AssociationInfo> query_associations(std::string_view dtc) const;
  /// Direct affected_by neighbours of a component, insertion order.
  std::vector<std::string> query_affected_by(std::string_view component) const;
  std::vector<std::string> query_symptoms_by_dtc(std::string_view dtc) const;
  std::optional<std::string> query_vehicle_instance_by_vin(std::string_view vin) const;
  /// Codes of fault contexts with a symptom of exactly this text.
  std::vector<std::string> query_dtcs_by_symptom(std::string_view symptom) const;
  std::vector<ComponentSetInfo> query_component_sets() const;
  std::optional<std::string> fault_context_id(std::string_view code) const;
  std::optional<std::string> component_id(std::string_view name) const;
  std::optional<Entity> component(std::string_view name) const;
  std::vector<std::string> component_names() const;

  /// Empty when the graph is consistent; otherwise one message per violation.
  std::vector<std::string> check_invariants() const;

  // ---- triples

  void export_triples(std::ostream& out) const;
  /// Ids are regenerated. Throws ParseError naming the offending line.
  static KnowledgeGraph import_triples(std::istream& in);
  /// Replaces this graph's content with the parsed stream (atomic).
  void replace_with(KnowledgeGraph&& other);

  void save(const std::string& path) const;
  static KnowledgeGraph load(const std::string& path);

  struct State;

 private:
  std::unique_ptr<State> state_;
  mutable std::unique_ptr<std::shared_mutex> mutex_;
};

}  // namespace diagnostica::kg
