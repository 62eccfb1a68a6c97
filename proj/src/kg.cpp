#include "diagnostica/kg.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>

#include "diagnostica/errors.hpp"

namespace diagnostica::kg {

namespace {

constexpr std::string_view kConceptNames[] = {
    "FaultContext",   "FaultCondition",   "Symptom",         "SuspectComponent",
    "DiagnosticAssociation", "ComponentSet", "Subsystem",    "Vehicle",
    "DiagLog",        "Classification",   "ManualInspection", "OscillogramClassification",
    "Oscillogram",    "ParallelRecOscillogramSet", "Heatmap", "FaultPath",
};

constexpr std::string_view kPredicateNames[] = {
    "hasAssociation", "pointsTo",  "affected_by", "containedIn", "verifiedBy",      "manifestedBy",
    "represents",     "appearsIn", "createdFor",  "entails",     "reasonFor",       "ledTo",
    "classifies",     "producedHeatmap", "resultedIn", "partOf",  "pathStep",
};

using C = Concept;
using P = Predicate;

bool range_ok(P p, C s, C o) {
  switch (p) {
    case P::hasAssociation: return s == C::FaultContext && o == C::DiagnosticAssociation;
    case P::pointsTo:
      return (s == C::DiagnosticAssociation || is_a(s, C::Classification)) && o == C::SuspectComponent;
    case P::affected_by: return s == C::SuspectComponent && o == C::SuspectComponent;
    case P::containedIn: return s == C::SuspectComponent && (o == C::Subsystem || o == C::ComponentSet);
    case P::verifiedBy: return s == C::ComponentSet && o == C::SuspectComponent;
    case P::manifestedBy: return s == C::FaultContext && o == C::Symptom;
    case P::represents: return s == C::FaultContext && o == C::FaultCondition;
    case P::appearsIn: return s == C::FaultContext && o == C::DiagLog;
    case P::createdFor: return s == C::DiagLog && o == C::Vehicle;
    case P::entails: return s == C::DiagLog && (is_a(o, C::Classification) || o == C::FaultPath);
    case P::reasonFor: return is_a(s, C::Classification) && is_a(o, C::Classification);
    case P::ledTo: return s == C::DiagnosticAssociation && is_a(o, C::Classification);
    case P::classifies: return s == C::OscillogramClassification && o == C::Oscillogram;
    case P::producedHeatmap: return is_a(s, C::Classification) && o == C::Heatmap;
    case P::resultedIn: return s == C::FaultCondition && o == C::FaultPath;
    case P::partOf: return s == C::Oscillogram && o == C::ParallelRecOscillogramSet;
    case P::pathStep: return s == C::FaultPath && o == C::SuspectComponent;
  }
  return false;
}

/// Attribute holding the natural key of a concept, if any.
std::optional<std::string_view> natural_key(C c) {
  switch (c) {
    case C::FaultContext: return "code";
    case C::SuspectComponent: return "name";
    case C::Vehicle: return "vin";
    case C::ComponentSet: return "name";
    case C::Subsystem: return "name";
    default: return std::nullopt;
  }
}

enum class Type { boolean, integer, real, text };

struct Required {
  std::string_view name;
  Type type;
};

std::vector<Required> required_attributes(C c) {
  switch (c) {
    case C::FaultContext: return {{"code", Type::text}};
    case C::FaultCondition:
    case C::Symptom: return {{"text", Type::text}};
    case C::SuspectComponent: return {{"name", Type::text}, {"use_oscilloscope", Type::boolean}};
    case C::DiagnosticAssociation: return {{"priority_id", Type::integer}};
    case C::ComponentSet:
    case C::Subsystem: return {{"name", Type::text}};
    case C::Vehicle: return {{"name", Type::text}, {"vin", Type::text}};
    case C::ManualInspection: return {{"prediction", Type::boolean}};
    case C::OscillogramClassification:
      return {{"prediction", Type::boolean}, {"uncertainty", Type::real}, {"model_id", Type::text}};
    case C::Oscillogram: return {{"samples", Type::integer}};
    case C::Heatmap: return {{"method", Type::text}};
    default: return {};
  }
}

bool has_type(const Literal& v, Type t) {
  switch (t) {
    case Type::boolean: return std::holds_alternative<bool>(v);
    case Type::integer: return std::holds_alternative<std::int64_t>(v);
    case Type::real: return std::holds_alternative<double>(v) || std::holds_alternative<std::int64_t>(v);
    case Type::text: return std::holds_alternative<std::string>(v);
  }
  return false;
}

bool valid_attribute_name(std::string_view name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](char ch) {
    return (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '_';
  });
}

/// Empty when valid.
std::string attribute_problem(C c, const Attributes& attrs) {
  if (c == C::Classification) return "Classification is abstract";
  for (const auto& [name, value] : attrs) {
    if (!valid_attribute_name(name)) return "invalid attribute name '" + name + "'";
    if (auto* d = std::get_if<double>(&value); d && !std::isfinite(*d)) return "attribute '" + name + "' is not finite";
  }
  for (const auto& req : required_attributes(c)) {
    auto it = attrs.find(req.name);
    if (it == attrs.end() || !has_type(it->second, req.type))
      return std::string(to_string(c)) + " requires attribute '" + std::string(req.name) + "' of the right type";
  }
  auto text = [&](std::string_view n) { return std::get<std::string>(attrs.find(n)->second); };
  switch (c) {
    case C::FaultContext:
      if (!valid_dtc(text("code"))) return "malformed DTC code '" + text("code") + "'";
      break;
    case C::SuspectComponent:
    case C::ComponentSet:
    case C::Subsystem:
      if (text("name").empty()) return std::string(to_string(c)) + " name must not be empty";
      break;
    case C::Vehicle:
      if (text("vin").empty()) return "vehicle VIN must not be empty";
      if (text("name").empty()) return "vehicle name must not be empty";
      break;
    case C::DiagnosticAssociation:
      if (std::get<std::int64_t>(attrs.find("priority_id")->second) < 0) return "priority_id must be >= 0";
      break;
    case C::OscillogramClassification: {
      const auto& u = attrs.find("uncertainty")->second;
      const double x = std::holds_alternative<double>(u) ? std::get<double>(u) : static_cast<double>(std::get<std::int64_t>(u));
      if (!(x >= 0.0 && x <= 1.0)) return "uncertainty must lie in [0, 1]";
      break;
    }
    default: break;
  }
  return {};
}

std::optional<std::uint64_t> parse_id(std::string_view id) {
  if (id.size() < 2 || id[0] != 'e') return std::nullopt;
  std::uint64_t n = 0;
  auto [ptr, ec] = std::from_chars(id.data() + 1, id.data() + id.size(), n);
  if (ec != std::errc() || ptr != id.data() + id.size()) return std::nullopt;
  return n;
}

std::string make_id(std::uint64_t n) { return "e" + std::to_string(n); }

std::string json_array_text(const std::vector<double>& values) { return nlohmann::json(values).dump(); }

}  // namespace

// ---------------------------------------------------------------- names

std::string_view to_string(Concept c) noexcept { return kConceptNames[static_cast<int>(c)]; }

std::optional<Concept> parse_concept(std::string_view text) noexcept {
  for (std::size_t i = 0; i < std::size(kConceptNames); ++i)
    if (kConceptNames[i] == text) return static_cast<Concept>(i);
  return std::nullopt;
}

bool is_a(Concept c, Concept super) noexcept {
  if (c == super) return true;
  return super == C::Classification && (c == C::ManualInspection || c == C::OscillogramClassification);
}

std::string_view to_string(Predicate p) noexcept { return kPredicateNames[static_cast<int>(p)]; }

std::optional<Predicate> parse_predicate(std::string_view text) noexcept {
  for (std::size_t i = 0; i < std::size(kPredicateNames); ++i)
    if (kPredicateNames[i] == text) return static_cast<Predicate>(i);
  return std::nullopt;
}

bool is_reason(Predicate p) noexcept { return p == P::reasonFor || p == P::ledTo; }

bool valid_dtc(std::string_view code) noexcept {
  if (code.size() != 5 || code[0] < 'A' || code[0] > 'Z') return false;
  return std::all_of(code.begin() + 1, code.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
}

const std::string* Entity::text(std::string_view name) const {
  auto it = attributes.find(name);
  return it == attributes.end() ? nullptr : std::get_if<std::string>(&it->second);
}

std::optional<bool> Entity::flag(std::string_view name) const {
  auto it = attributes.find(name);
  if (it == attributes.end() || !std::holds_alternative<bool>(it->second)) return std::nullopt;
  return std::get<bool>(it->second);
}

std::optional<std::int64_t> Entity::integer(std::string_view name) const {
  auto it = attributes.find(name);
  if (it == attributes.end() || !std::holds_alternative<std::int64_t>(it->second)) return std::nullopt;
  return std::get<std::int64_t>(it->second);
}

std::optional<double> Entity::real(std::string_view name) const {
  auto it = attributes.find(name);
  if (it == attributes.end()) return std::nullopt;
  if (auto* d = std::get_if<double>(&it->second)) return *d;
  if (auto* i = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*i);
  return std::nullopt;
}

nlohmann::json to_json(const Literal& value) {
  return std::visit([](const auto& v) { return nlohmann::json(v); }, value);
}

nlohmann::json to_json(const Entity& e) {
  nlohmann::json attrs = nlohmann::json::object();
  for (const auto& [k, v] : e.attributes) attrs[k] = to_json(v);
  return {{"id", e.id}, {"concept", to_string(e.kind)}, {"attributes", attrs}};
}

nlohmann::json to_json(const Relation& r) {
  nlohmann::json j{{"subject", r.subject}, {"predicate", to_string(r.predicate)}, {"object", r.object}};
  if (r.order) j["order"] = *r.order;
  return j;
}

nlohmann::json to_json(const Stats& s) {
  return {{"entities", s.entities}, {"relations", s.relations}, {"by_concept", s.by_concept}, {"revision", s.revision}};
}

// ---------------------------------------------------------------- state

struct KnowledgeGraph::State {
  std::uint64_t next_entity = 1;
  std::uint64_t next_relation = 1;
  std::uint64_t revision = 0;
  std::map<std::uint64_t, Entity> entities;
  std::map<std::uint64_t, Relation> relations;
  std::unordered_map<std::string, std::set<std::uint64_t>> out, in;
  // concept -> natural key -> entity id
  std::map<Concept, std::map<std::string, std::string, std::less<>>> keys;

  void touch() { ++revision; }

  Entity* find(std::string_view id) {
    auto n = parse_id(id);
    if (!n) return nullptr;
    auto it = entities.find(*n);
    return it == entities.end() ? nullptr : &it->second;
  }
  const Entity* find(std::string_view id) const { return const_cast<State*>(this)->find(id); }

  const Entity& require(std::string_view id) const {
    const Entity* e = find(id);
    if (!e) throw IntegrityError("unknown entity '" + std::string(id) + "'");
    return *e;
  }

  std::optional<std::string> lookup(Concept c, std::string_view key) const {
    auto kc = keys.find(c);
    if (kc == keys.end()) return std::nullopt;
    auto it = kc->second.find(key);
    if (it == kc->second.end()) return std::nullopt;
    return it->second;
  }

  std::string create(Concept c, Attributes attrs) {
    if (auto problem = attribute_problem(c, attrs); !problem.empty()) throw ValidationError(problem);
    std::optional<std::string> key;
    if (auto k = natural_key(c)) {
      key = std::get<std::string>(attrs.find(*k)->second);
      if (lookup(c, *key)) throw ValidationError(std::string(to_string(c)) + " '" + *key + "' already exists");
    }
    const std::uint64_t n = next_entity++;
    std::string id = make_id(n);
    entities.emplace(n, Entity{id, c, std::move(attrs)});
    if (key) keys[c][*key] = id;
    touch();
    return id;
  }

  void set_attribute(const std::string& id, const std::string& name, Literal value) {
    Entity* e = find(id);
    if (!e) throw NotFoundError("unknown entity '" + id + "'");
    auto it = e->attributes.find(name);
    if (it != e->attributes.end() && it->second == value) return;
    Attributes next = e->attributes;
    next[name] = value;
    if (auto problem = attribute_problem(e->kind, next); !problem.empty()) throw ValidationError(problem);
    if (e->kind == C::DiagnosticAssociation && name == "priority_id")
      for (const Relation* ha : in_edges(id, P::hasAssociation))
        if (priority_taken(ha->subject, id, std::get<std::int64_t>(value)))
          throw ValidationError("priority " + std::to_string(std::get<std::int64_t>(value)) +
                                " is already used by another association of " + ha->subject);
    auto k = natural_key(e->kind);
    if (k && *k == name) {
      const auto& fresh = std::get<std::string>(value);
      if (lookup(e->kind, fresh)) throw ValidationError(std::string(to_string(e->kind)) + " '" + fresh + "' already exists");
      keys[e->kind].erase(*e->text(*k));
      keys[e->kind][fresh] = id;
    }
    e->attributes = std::move(next);
    touch();
  }

  std::vector<const Relation*> edges(const std::unordered_map<std::string, std::set<std::uint64_t>>& index,
                                     std::string_view id, std::optional<P> p = std::nullopt) const {
    std::vector<const Relation*> result;
    auto it = index.find(std::string(id));
    if (it == index.end()) return result;
    for (auto seq : it->second) {
      const Relation& r = relations.at(seq);
      if (!p || r.predicate == *p) result.push_back(&r);
    }
    return result;
  }
  std::vector<const Relation*> out_edges(std::string_view id, std::optional<P> p = std::nullopt) const {
    return edges(out, id, p);
  }
  std::vector<const Relation*> in_edges(std::string_view id, std::optional<P> p = std::nullopt) const {
    return edges(in, id, p);
  }

  void check_relation(const std::string& s, P p, const std::string& o, std::optional<std::int64_t> order) const {
    const Entity& se = require(s);
    const Entity& oe = require(o);
    if (!range_ok(p, se.kind, oe.kind))
      throw ValidationError(std::string(to_string(p)) + " cannot link " + std::string(to_string(se.kind)) + " to " +
                            std::string(to_string(oe.kind)));
    if ((p == P::pathStep) != order.has_value())
      throw ValidationError(p == P::pathStep ? "pathStep requires an order index" : "only pathStep carries an order");
    if (p == P::affected_by && s == o) throw ValidationError("a component cannot be affected by itself");
    if (p == P::hasAssociation) {
      if (auto prio = oe.integer("priority_id"); prio && priority_taken(s, o, *prio))
        throw ValidationError("priority " + std::to_string(*prio) + " is already used by another association of " + s);
    }
  }

  // Another association of fault context `fc` already carries `prio`.
  bool priority_taken(const std::string& fc, const std::string& association, std::int64_t prio) const {
    for (const Relation* ha : out_edges(fc, P::hasAssociation)) {
      if (ha->object == association) continue;
      const Entity* a = find(ha->object);
      if (a && a->integer("priority_id") == prio) return true;
    }
    return false;
  }

  bool link(const std::string& s, P p, const std::string& o, std::optional<std::int64_t> order = std::nullopt) {
    check_relation(s, p, o, order);
    Relation r{s, p, o, order};
    for (const Relation* existing : out_edges(s, p))
      if (*existing == r) return false;
    const std::uint64_t seq = next_relation++;
    relations.emplace(seq, std::move(r));
    out[s].insert(seq);
    in[o].insert(seq);
    touch();
    return true;
  }

  void unlink(std::uint64_t seq) {
    const Relation& r = relations.at(seq);
    out[r.subject].erase(seq);
    in[r.object].erase(seq);
    relations.erase(seq);
    touch();
  }

  void remove_entity(const std::string& id) {
    const Entity& e = require(id);
    for (const Relation* r : out_edges(id))
      if (is_reason(r->predicate))
        throw IntegrityError("entity " + id + " is the reason of classification " + r->object);
    std::vector<std::uint64_t> incident;
    for (auto* index : {&out, &in}) {
      auto it = index->find(id);
      if (it != index->end()) incident.insert(incident.end(), it->second.begin(), it->second.end());
    }
    std::sort(incident.begin(), incident.end());
    incident.erase(std::unique(incident.begin(), incident.end()), incident.end());
    for (auto seq : incident) unlink(seq);
    if (auto k = natural_key(e.kind)) keys[e.kind].erase(*e.text(*k));
    out.erase(id);
    in.erase(id);
    entities.erase(*parse_id(id));
    touch();
  }

  std::string ensure_component(const std::string& name) {
    if (auto id = lookup(C::SuspectComponent, name)) return *id;
    return create(C::SuspectComponent, {{"name", name}, {"use_oscilloscope", false}});
  }

  std::string name_of(const std::string& id) const {
    const Entity* e = find(id);
    const std::string* n = e ? e->text("name") : nullptr;
    return n ? *n : id;
  }

  std::vector<AssociationInfo> associations(std::string_view dtc) const {
    std::vector<AssociationInfo> result;
    auto fc = lookup(C::FaultContext, dtc);
    if (!fc) return result;
    for (const Relation* ha : out_edges(*fc, P::hasAssociation)) {
      const Entity& a = *find(ha->object);
      for (const Relation* pt : out_edges(a.id, P::pointsTo)) {
        const Entity& comp = *find(pt->object);
        result.push_back({a.id, *comp.text("name"), a.integer("priority_id").value_or(0),
                          comp.flag("use_oscilloscope").value_or(false)});
      }
    }
    std::stable_sort(result.begin(), result.end(), [](const auto& x, const auto& y) {
      return std::tie(x.priority, x.component) < std::tie(y.priority, y.component);
    });
    return result;
  }

  std::vector<std::string> invariants() const {
    std::vector<std::string> problems;
    std::map<Concept, std::map<std::string, int>> seen_keys;
    for (const auto& [n, e] : entities) {
      if (auto problem = attribute_problem(e.kind, e.attributes); !problem.empty())
        problems.push_back(e.id + ": " + problem);
      if (auto k = natural_key(e.kind)) {
        if (const std::string* key = e.text(*k)) {
          if (++seen_keys[e.kind][*key] > 1) problems.push_back(e.id + ": duplicate natural key '" + *key + "'");
          if (lookup(e.kind, *key) != e.id) problems.push_back(e.id + ": natural-key index out of date");
        }
      }
      if (is_a(e.kind, C::Classification)) {
        std::size_t reasons = 0;
        for (const Relation* r : in_edges(e.id))
          if (is_reason(r->predicate)) ++reasons;
        if (reasons != 1)
          problems.push_back(e.id + ": classification has " + std::to_string(reasons) + " reasons (expected 1)");
      }
      if (e.kind == C::FaultContext) {
        std::set<std::int64_t> prios;
        for (const Relation* ha : out_edges(e.id, P::hasAssociation)) {
          const Entity* a = find(ha->object);
          if (a && !prios.insert(a->integer("priority_id").value_or(-1)).second)
            problems.push_back(e.id + ": duplicate priority_id among associations");
        }
      }
    }
    for (const auto& [seq, r] : relations) {
      const Entity* s = find(r.subject);
      const Entity* o = find(r.object);
      if (!s || !o) {
        problems.push_back("relation " + r.subject + " " + std::string(to_string(r.predicate)) + " " + r.object +
                           " has a dangling end");
        continue;
      }
      if (!range_ok(r.predicate, s->kind, o->kind))
        problems.push_back("relation " + r.subject + " " + std::string(to_string(r.predicate)) + " " + r.object +
                           " violates its domain/range");
    }
    return problems;
  }
};

// ---------------------------------------------------------------- lifecycle

KnowledgeGraph::KnowledgeGraph() : state_(std::make_unique<State>()), mutex_(std::make_unique<std::shared_mutex>()) {}
KnowledgeGraph::~KnowledgeGraph() = default;

KnowledgeGraph::KnowledgeGraph(KnowledgeGraph&& other) noexcept
    : state_(std::move(other.state_)), mutex_(std::move(other.mutex_)) {
  other.state_ = std::make_unique<State>();
  other.mutex_ = std::make_unique<std::shared_mutex>();
}

KnowledgeGraph& KnowledgeGraph::operator=(KnowledgeGraph&& other) noexcept {
  if (this != &other) {
    state_ = std::move(other.state_);
    mutex_ = std::move(other.mutex_);
    other.state_ = std::make_unique<State>();
    other.mutex_ = std::make_unique<std::shared_mutex>();
  }
  return *this;
}

void KnowledgeGraph::replace_with(KnowledgeGraph&& other) {
  std::unique_ptr<State> incoming;
  {
    std::unique_lock other_lock(*other.mutex_);
    incoming = std::move(other.state_);
    other.state_ = std::make_unique<State>();
  }
  std::unique_lock lock(*mutex_);
  incoming->revision = std::max(incoming->revision, state_->revision) + 1;
  state_ = std::move(incoming);
}

// ---------------------------------------------------------------- generic access

std::string KnowledgeGraph::add_entity(Concept kind, Attributes attributes) {
  if (is_a(kind, C::Classification)) throw ValidationError("classifications are created with add_classification");
  std::unique_lock lock(*mutex_);
  return state_->create(kind, std::move(attributes));
}

void KnowledgeGraph::set_attribute(const std::string& id, const std::string& name, Literal value) {
  std::unique_lock lock(*mutex_);
  state_->set_attribute(id, name, std::move(value));
}

void KnowledgeGraph::add_relation(const std::string& subject, Predicate p, const std::string& object,
                                  std::optional<std::int64_t> order) {
  if (is_reason(p)) throw ValidationError("reason edges are created with add_classification");
  std::unique_lock lock(*mutex_);
  state_->link(subject, p, object, order);
}

bool KnowledgeGraph::remove_relation(const std::string& subject, Predicate p, const std::string& object) {
  if (is_reason(p)) throw IntegrityError("a classification must keep its reason");
  std::unique_lock lock(*mutex_);
  for (const Relation* r : state_->out_edges(subject, p)) {
    if (r->object != object) continue;
    for (auto seq : state_->out[subject])
      if (&state_->relations.at(seq) == r) {
        state_->unlink(seq);
        return true;
      }
  }
  return false;
}

void KnowledgeGraph::remove_entity(const std::string& id) {
  std::unique_lock lock(*mutex_);
  if (!state_->find(id)) throw NotFoundError("unknown entity '" + id + "'");
  state_->remove_entity(id);
}

std::optional<Entity> KnowledgeGraph::entity(const std::string& id) const {
  std::shared_lock lock(*mutex_);
  const Entity* e = state_->find(id);
  if (!e) return std::nullopt;
  return *e;
}

std::vector<Entity> KnowledgeGraph::entities() const {
  std::shared_lock lock(*mutex_);
  std::vector<Entity> result;
  result.reserve(state_->entities.size());
  for (const auto& [n, e] : state_->entities) result.push_back(e);
  return result;
}

std::vector<Relation> KnowledgeGraph::relations() const {
  std::shared_lock lock(*mutex_);
  std::vector<Relation> result;
  result.reserve(state_->relations.size());
  for (const auto& [n, r] : state_->relations) result.push_back(r);
  return result;
}

std::vector<Relation> KnowledgeGraph::outgoing(const std::string& id) const {
  std::shared_lock lock(*mutex_);
  std::vector<Relation> result;
  for (const Relation* r : state_->out_edges(id)) result.push_back(*r);
  return result;
}

std::vector<Relation> KnowledgeGraph::incoming(const std::string& id) const {
  std::shared_lock lock(*mutex_);
  std::vector<Relation> result;
  for (const Relation* r : state_->in_edges(id)) result.push_back(*r);
  return result;
}

std::uint64_t KnowledgeGraph::revision() const {
  std::shared_lock lock(*mutex_);
  return state_->revision;
}

Stats KnowledgeGraph::stats() const {
  std::shared_lock lock(*mutex_);
  Stats s;
  s.entities = state_->entities.size();
  s.relations = state_->relations.size();
  s.revision = state_->revision;
  for (const auto& [n, e] : state_->entities) ++s.by_concept[std::string(to_string(e.kind))];
  return s;
}

// ---------------------------------------------------------------- enhancers

std::string KnowledgeGraph::add_fault_context(const FaultContextSpec& spec) {
  if (!valid_dtc(spec.code)) throw ValidationError("malformed DTC code '" + spec.code + "'");
  std::set<std::int64_t> prios;
  std::set<std::string> comps;
  for (const auto& a : spec.associations) {
    if (a.component.empty()) throw ValidationError("association component must not be empty");
    if (a.priority < 0) throw ValidationError("priority must be >= 0");
    if (!prios.insert(a.priority).second)
      throw ValidationError("duplicate priority " + std::to_string(a.priority) + " for " + spec.code);
    if (!comps.insert(a.component).second)
      throw ValidationError("component '" + a.component + "' listed twice for " + spec.code);
  }

  std::unique_lock lock(*mutex_);
  State& st = *state_;
  const auto existing = st.lookup(C::FaultContext, spec.code);

  // Validate the merged priority assignment before mutating anything.
  std::map<std::string, std::pair<std::string, std::int64_t>> current;  // component -> (association, priority)
  if (existing)
    for (const auto& info : st.associations(spec.code)) current[info.component] = {info.id, info.priority};
  std::map<std::string, std::int64_t> merged;
  for (const auto& [comp, ap] : current) merged[comp] = ap.second;
  for (const auto& a : spec.associations) merged[a.component] = a.priority;
  std::set<std::int64_t> merged_prios;
  for (const auto& [comp, prio] : merged)
    if (!merged_prios.insert(prio).second)
      throw ValidationError("priority " + std::to_string(prio) + " is already used by another association of " + spec.code);

  const std::string fc = existing ? *existing : st.create(C::FaultContext, {{"code", spec.code}});

  auto conditions = st.out_edges(fc, P::represents);
  if (conditions.empty()) {
    const std::string cond = st.create(C::FaultCondition, {{"text", spec.condition}});
    st.link(fc, P::represents, cond);
  } else if (!spec.condition.empty()) {
    st.set_attribute(conditions.front()->object, "text", spec.condition);
  }

  std::set<std::string> known_symptoms;
  for (const Relation* r : st.out_edges(fc, P::manifestedBy)) known_symptoms.insert(*st.find(r->object)->text("text"));
  for (const auto& text : spec.symptoms) {
    if (text.empty() || !known_symptoms.insert(text).second) continue;
    const std::string sym = st.create(C::Symptom, {{"text", text}});
    st.link(fc, P::manifestedBy, sym);
  }

  for (const auto& a : spec.associations) {
    auto it = current.find(a.component);
    if (it != current.end()) {
      st.set_attribute(it->second.first, "priority_id", a.priority);
      continue;
    }
    const std::string comp = st.ensure_component(a.component);
    const std::string assoc = st.create(C::DiagnosticAssociation, {{"priority_id", a.priority}});
    st.link(fc, P::hasAssociation, assoc);
    st.link(assoc, P::pointsTo, comp);
  }
  return fc;
}

std::string KnowledgeGraph::add_component(const ComponentSpec& spec) {
  if (spec.name.empty()) throw ValidationError("component name must not be empty");
  for (const auto& other : spec.affected_by) {
    if (other.empty()) throw ValidationError("affected_by names must not be empty");
    if (other == spec.name) throw ValidationError("component '" + spec.name + "' cannot be affected by itself");
  }
  if (spec.subsystem && spec.subsystem->empty()) throw ValidationError("subsystem name must not be empty");

  std::unique_lock lock(*mutex_);
  State& st = *state_;
  std::string id;
  if (auto existing = st.lookup(C::SuspectComponent, spec.name)) {
    id = *existing;
    st.set_attribute(id, "use_oscilloscope", spec.use_oscilloscope);
  } else {
    id = st.create(C::SuspectComponent, {{"name", spec.name}, {"use_oscilloscope", spec.use_oscilloscope}});
  }
  for (const auto& other : spec.affected_by) st.link(id, P::affected_by, st.ensure_component(other));
  if (spec.subsystem) {
    auto sub = st.lookup(C::Subsystem, *spec.subsystem);
    const std::string sid = sub ? *sub : st.create(C::Subsystem, {{"name", *spec.subsystem}});
    st.link(id, P::containedIn, sid);
  }
  return id;
}

std::string KnowledgeGraph::add_component_set(const ComponentSetSpec& spec) {
  if (spec.name.empty()) throw ValidationError("component set name must not be empty");
  if (spec.verified_by.empty()) throw ValidationError("component set needs a verifying component");
  for (const auto& m : spec.members)
    if (m.empty()) throw ValidationError("component set members must not be empty");

  std::unique_lock lock(*mutex_);
  State& st = *state_;
  auto existing = st.lookup(C::ComponentSet, spec.name);
  const std::string id = existing ? *existing : st.create(C::ComponentSet, {{"name", spec.name}});
  for (const auto& m : spec.members) st.link(st.ensure_component(m), P::containedIn, id);
  const std::string verifier = st.ensure_component(spec.verified_by);
  for (const Relation* r : st.out_edges(id, P::verifiedBy)) {
    if (r->object == verifier) continue;
    for (auto seq : std::set<std::uint64_t>(st.out[id]))
      if (&st.relations.at(seq) == r) st.unlink(seq);
  }
  st.link(id, P::verifiedBy, verifier);
  return id;
}

std::string KnowledgeGraph::extend_kg_with_vehicle(const std::string& name, const std::string& vin) {
  if (vin.empty()) throw ValidationError("vehicle VIN must not be empty");
  if (name.empty()) throw ValidationError("vehicle name must not be empty");
  std::unique_lock lock(*mutex_);
  State& st = *state_;
  if (auto existing = st.lookup(C::Vehicle, vin)) {
    st.set_attribute(*existing, "name", name);
    return *existing;
  }
  return st.create(C::Vehicle, {{"name", name}, {"vin", vin}});
}

std::string KnowledgeGraph::extend_kg_with_diag_log(const std::vector<std::string>& dtc_codes, const std::string& vin,
                                                    const std::vector<std::string>& classification_ids,
                                                    const std::vector<std::string>& fault_path_ids) {
  std::unique_lock lock(*mutex_);
  State& st = *state_;
  auto vehicle = st.lookup(C::Vehicle, vin);
  if (!vehicle) throw IntegrityError("unknown vehicle '" + vin + "'");
  std::vector<std::pair<std::string, std::string>> contexts;  // code, fault context
  for (const auto& code : dtc_codes) {
    auto fc = st.lookup(C::FaultContext, code);
    if (!fc) throw IntegrityError("unknown fault context '" + code + "'");
    contexts.emplace_back(code, *fc);
  }
  for (const auto& id : classification_ids)
    if (!is_a(st.require(id).kind, C::Classification)) throw IntegrityError(id + " is not a classification");
  for (const auto& id : fault_path_ids)
    if (st.require(id).kind != C::FaultPath) throw IntegrityError(id + " is not a fault path");

  const std::string log = st.create(C::DiagLog, {{"created_revision", static_cast<std::int64_t>(st.revision)}});
  for (const auto& [code, fc] : contexts) st.link(fc, P::appearsIn, log);
  st.link(log, P::createdFor, *vehicle);
  for (const auto& id : classification_ids) st.link(log, P::entails, id);
  for (const auto& path : fault_path_ids) {
    st.link(log, P::entails, path);
    const std::string* dtc = st.find(path)->text("dtc");
    for (const auto& [code, fc] : contexts) {
      if (dtc && *dtc != code) continue;
      for (const Relation* r : st.out_edges(fc, P::represents)) st.link(r->object, P::resultedIn, path);
    }
  }
  return log;
}

// ---------------------------------------------------------------- artifacts

std::string KnowledgeGraph::add_classification(const ClassificationSpec& spec) {
  if (spec.kind != C::ManualInspection && spec.kind != C::OscillogramClassification)
    throw ValidationError("classification kind must be ManualInspection or OscillogramClassification");
  if (!is_reason(spec.reason)) throw ValidationError("classification reason must be ledTo or reasonFor");

  std::unique_lock lock(*mutex_);
  State& st = *state_;
  auto comp = st.lookup(C::SuspectComponent, spec.component);
  if (!comp) throw IntegrityError("unknown component '" + spec.component + "'");
  const Entity& source = st.require(spec.reason_source);
  const bool source_ok = spec.reason == P::ledTo ? source.kind == C::DiagnosticAssociation
                                                 : is_a(source.kind, C::Classification);
  if (!source_ok)
    throw IntegrityError(std::string(to_string(spec.reason)) + " cannot start at a " +
                         std::string(to_string(source.kind)));
  if (spec.oscillogram && st.require(*spec.oscillogram).kind != C::Oscillogram)
    throw IntegrityError(*spec.oscillogram + " is not an oscillogram");
  if (spec.oscillogram && spec.kind != C::OscillogramClassification)
    throw ValidationError("only oscillogram classifications classify an oscillogram");

  Attributes attrs{{"prediction", spec.anomalous}, {"component", spec.component}};
  if (spec.uncertainty) attrs["uncertainty"] = *spec.uncertainty;
  if (spec.model_id) attrs["model_id"] = *spec.model_id;
  const std::string id = st.create(spec.kind, std::move(attrs));
  st.link(spec.reason_source, spec.reason, id);
  st.link(id, P::pointsTo, *comp);
  if (spec.oscillogram) st.link(id, P::classifies, *spec.oscillogram);
  return id;
}

std::string KnowledgeGraph::add_oscillogram(const std::string& component, const std::vector<double>& values) {
  std::unique_lock lock(*mutex_);
  return state_->create(C::Oscillogram, {{"samples", static_cast<std::int64_t>(values.size())},
                                         {"component", component},
                                         {"values", json_array_text(values)}});
}

std::string KnowledgeGraph::add_heatmap(const std::string& classification_id, const std::string& method,
                                        int target_class, const std::vector<double>& values) {
  std::unique_lock lock(*mutex_);
  State& st = *state_;
  if (!is_a(st.require(classification_id).kind, C::Classification))
    throw IntegrityError(classification_id + " is not a classification");
  const std::string id = st.create(C::Heatmap, {{"method", method},
                                                {"target_class", static_cast<std::int64_t>(target_class)},
                                                {"values", json_array_text(values)}});
  st.link(classification_id, P::producedHeatmap, id);
  return id;
}

std::string KnowledgeGraph::add_fault_path(const std::vector<std::string>& components,
                                           const std::optional<std::string>& dtc, bool cyclic) {
  std::unique_lock lock(*mutex_);
  State& st = *state_;
  std::vector<std::string> ids;
  for (const auto& name : components) {
    auto id = st.lookup(C::SuspectComponent, name);
    if (!id) throw IntegrityError("unknown component '" + name + "'");
    ids.push_back(*id);
  }
  Attributes attrs{{"length", static_cast<std::int64_t>(ids.size())}, {"cyclic", cyclic}};
  if (dtc) attrs["dtc"] = *dtc;
  const std::string path = st.create(C::FaultPath, std::move(attrs));
  for (std::size_t i = 0; i < ids.size(); ++i) st.link(path, P::pathStep, ids[i], static_cast<std::int64_t>(i));
  return path;
}

// ---------------------------------------------------------------- queries

std::vector<std::string> KnowledgeGraph::query_suspect_components_by_dtc(std::string_view dtc) const {
  std::shared_lock lock(*mutex_);
  std::vector<std::string> result;
  for (const auto& a : state_->associations(dtc)) result.push_back(a.component);
  return result;
}

std::vector<AssociationInfo> KnowledgeGraph::query_associations(std::string_view dtc) const {
  std::shared_lock lock(*mutex_);
  return state_->associations(dtc);
}

std::vector<std::string> KnowledgeGraph::query_affected_by(std::string_view component) const {
  std::shared_lock lock(*mutex_);
  std::vector<std::string> result;
  auto id = state_->lookup(C::SuspectComponent, component);
  if (!id) return result;
  for (const Relation* r : state_->out_edges(*id, P::affected_by)) result.push_back(state_->name_of(r->object));
  return result;
}

std::vector<std::string> KnowledgeGraph::query_symptoms_by_dtc(std::string_view dtc) const {
  std::shared_lock lock(*mutex_);
  std::vector<std::string> result;
  auto fc = state_->lookup(C::FaultContext, dtc);
  if (!fc) return result;
  for (const Relation* r : state_->out_edges(*fc, P::manifestedBy)) result.push_back(*state_->find(r->object)->text("text"));
  return result;
}

std::optional<std::string> KnowledgeGraph::query_vehicle_instance_by_vin(std::string_view vin) const {
  std::shared_lock lock(*mutex_);
  return state_->lookup(C::Vehicle, vin);
}

std::vector<std::string> KnowledgeGraph::query_dtcs_by_symptom(std::string_view symptom) const {
  std::shared_lock lock(*mutex_);
  std::set<std::string> codes;
  for (const auto& [n, e] : state_->entities) {
    if (e.kind != C::Symptom || *e.text("text") != symptom) continue;
    for (const Relation* r : state_->in_edges(e.id, P::manifestedBy)) codes.insert(*state_->find(r->subject)->text("code"));
  }
  return {codes.begin(), codes.end()};
}

std::vector<ComponentSetInfo> KnowledgeGraph::query_component_sets() const {
  std::shared_lock lock(*mutex_);
  std::vector<ComponentSetInfo> result;
  for (const auto& [n, e] : state_->entities) {
    if (e.kind != C::ComponentSet) continue;
    ComponentSetInfo info{e.id, *e.text("name"), {}, std::nullopt};
    for (const Relation* r : state_->in_edges(e.id, P::containedIn)) info.members.push_back(state_->name_of(r->subject));
    for (const Relation* r : state_->out_edges(e.id, P::verifiedBy)) info.verified_by = state_->name_of(r->object);
    result.push_back(std::move(info));
  }
  return result;
}

std::optional<std::string> KnowledgeGraph::fault_context_id(std::string_view code) const {
  std::shared_lock lock(*mutex_);
  return state_->lookup(C::FaultContext, code);
}

std::optional<std::string> KnowledgeGraph::component_id(std::string_view name) const {
  std::shared_lock lock(*mutex_);
  return state_->lookup(C::SuspectComponent, name);
}

std::optional<Entity> KnowledgeGraph::component(std::string_view name) const {
  std::shared_lock lock(*mutex_);
  auto id = state_->lookup(C::SuspectComponent, name);
  if (!id) return std::nullopt;
  return *state_->find(*id);
}

std::vector<std::string> KnowledgeGraph::component_names() const {
  std::shared_lock lock(*mutex_);
  std::vector<std::string> result;
  for (const auto& [n, e] : state_->entities)
    if (e.kind == C::SuspectComponent) result.push_back(*e.text("name"));
  return result;
}

std::vector<std::string> KnowledgeGraph::check_invariants() const {
  std::shared_lock lock(*mutex_);
  return state_->invariants();
}

// ---------------------------------------------------------------- triples

namespace {

std::string literal_text(const Literal& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, bool>) {
          return std::string("\"") + (x ? "true" : "false") + "\"^^xsd:boolean";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return "\"" + std::to_string(x) + "\"^^xsd:integer";
        } else if constexpr (std::is_same_v<T, double>) {
          char buf[64];
          auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
          return "\"" + std::string(buf, ptr) + "\"^^xsd:double";
        } else {
          return nlohmann::json(x).dump() + "^^xsd:string";
        }
      },
      v);
}

struct Cursor {
  std::string_view s;
  std::size_t pos = 0;
  std::size_t line;

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line, msg); }
  void skip_ws() {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\r')) ++pos;
  }
  bool at_end() {
    skip_ws();
    return pos >= s.size();
  }
  char peek() {
    skip_ws();
    return pos < s.size() ? s[pos] : '\0';
  }
  std::string iri() {
    if (peek() != '<') fail("expected '<'");
    const auto close = s.find('>', pos + 1);
    if (close == std::string_view::npos) fail("unterminated '<'");
    std::string out(s.substr(pos + 1, close - pos - 1));
    pos = close + 1;
    if (out.empty()) fail("empty name");
    return out;
  }
  Literal literal() {
    if (peek() != '"') fail("expected literal");
    std::size_t i = pos + 1;
    while (i < s.size() && s[i] != '"') i += s[i] == '\\' ? 2 : 1;
    if (i >= s.size()) fail("unterminated literal");
    const std::string_view quoted = s.substr(pos, i - pos + 1);
    pos = i + 1;
    constexpr std::string_view tag = "^^xsd:";
    if (s.substr(pos, tag.size()) != tag) fail("literal without ^^xsd: type");
    pos += tag.size();
    std::size_t end = pos;
    while (end < s.size() && s[end] != ' ' && s[end] != '\t') ++end;
    const std::string_view type = s.substr(pos, end - pos);
    pos = end;
    std::string body;
    try {
      body = nlohmann::json::parse(quoted).get<std::string>();
    } catch (const nlohmann::json::exception&) {
      fail("bad string escape");
    }
    if (type == "string") return body;
    if (type == "boolean") {
      if (body == "true") return true;
      if (body == "false") return false;
      fail("bad boolean '" + body + "'");
    }
    if (type == "integer") {
      std::int64_t v = 0;
      auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
      if (ec != std::errc() || ptr != body.data() + body.size()) fail("bad integer '" + body + "'");
      return v;
    }
    if (type == "double") {
      double v = 0;
      auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
      if (ec != std::errc() || ptr != body.data() + body.size()) fail("bad double '" + body + "'");
      return v;
    }
    fail("unknown literal type '" + std::string(type) + "'");
  }
  std::optional<std::int64_t> order() {
    const char c = peek();
    if (!(c == '-' || (c >= '0' && c <= '9'))) return std::nullopt;
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + s.size(), v);
    if (ec != std::errc()) fail("bad order index");
    pos = static_cast<std::size_t>(ptr - s.data());
    return v;
  }
  void terminal() {
    if (peek() != '.') fail("missing terminal '.'");
    ++pos;
    if (!at_end()) fail("trailing content after '.'");
  }
};

}  // namespace

void KnowledgeGraph::export_triples(std::ostream& out) const {
  std::shared_lock lock(*mutex_);
  for (const auto& [n, e] : state_->entities) {
    out << '<' << e.id << "> <a> <" << to_string(e.kind) << "> .\n";
    for (const auto& [name, value] : e.attributes) out << '<' << e.id << "> <" << name << "> " << literal_text(value) << " .\n";
  }
  for (const auto& [seq, r] : state_->relations) {
    out << '<' << r.subject << "> <" << to_string(r.predicate) << "> <" << r.object << '>';
    if (r.order) out << ' ' << *r.order;
    out << " .\n";
  }
}

KnowledgeGraph KnowledgeGraph::import_triples(std::istream& in) {
  struct Decl {
    Concept kind;
    std::size_t line;
    Attributes attrs;
  };
  struct Edge {
    std::string s, o;
    Predicate p;
    std::optional<std::int64_t> order;
    std::size_t line;
  };
  std::map<std::string, Decl> decls;
  std::vector<std::string> decl_order;
  std::vector<std::tuple<std::string, std::string, Literal, std::size_t>> attrs;
  std::vector<Edge> edges;

  std::string text;
  std::size_t lineno = 0;
  while (std::getline(in, text)) {
    ++lineno;
    Cursor cur{text, 0, lineno};
    if (cur.at_end() || cur.peek() == '#') continue;
    std::string subject = cur.iri();
    std::string predicate = cur.iri();
    if (predicate == "a") {
      std::string kind = cur.iri();
      cur.terminal();
      auto c = parse_concept(kind);
      if (!c) cur.fail("unknown concept '" + kind + "'");
      if (decls.contains(subject)) cur.fail("entity '" + subject + "' declared twice");
      decls.emplace(subject, Decl{*c, lineno, {}});
      decl_order.push_back(subject);
    } else if (cur.peek() == '"') {
      Literal value = cur.literal();
      cur.terminal();
      if (!valid_attribute_name(predicate)) cur.fail("invalid attribute name '" + predicate + "'");
      attrs.emplace_back(subject, predicate, std::move(value), lineno);
    } else {
      std::string object = cur.iri();
      auto order = cur.order();
      cur.terminal();
      auto p = parse_predicate(predicate);
      if (!p) cur.fail("unknown predicate '" + predicate + "'");
      edges.push_back({subject, object, *p, order, lineno});
    }
  }

  for (auto& [s, name, value, line] : attrs) {
    auto it = decls.find(s);
    if (it == decls.end()) throw ParseError(line, "attribute of undeclared entity '" + s + "'");
    if (!it->second.attrs.emplace(name, std::move(value)).second)
      throw ParseError(line, "attribute '" + name + "' repeated for '" + s + "'");
  }

  KnowledgeGraph kg;
  State& st = *kg.state_;
  std::map<std::string, std::string> ids;
  for (const auto& old : decl_order) {
    Decl& d = decls.at(old);
    try {
      if (d.kind == C::Classification) throw ValidationError("Classification is abstract");
      ids[old] = st.create(d.kind, std::move(d.attrs));
    } catch (const ValidationError& e) {
      throw ParseError(d.line, e.what());
    }
  }
  for (const auto& e : edges) {
    auto s = ids.find(e.s);
    auto o = ids.find(e.o);
    if (s == ids.end() || o == ids.end())
      throw ParseError(e.line, "relation refers to undeclared entity '" + (s == ids.end() ? e.s : e.o) + "'");
    try {
      st.link(s->second, e.p, o->second, e.order);
    } catch (const Error& err) {
      throw ParseError(e.line, err.what());
    }
  }
  if (auto problems = st.invariants(); !problems.empty()) throw IntegrityError("imported graph: " + problems.front());
  return kg;
}

void KnowledgeGraph::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InfrastructureError("cannot write '" + tmp + "'");
    export_triples(out);
    if (!out.flush()) throw InfrastructureError("write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw InfrastructureError("cannot replace '" + path + "'");
}

KnowledgeGraph KnowledgeGraph::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InfrastructureError("cannot read knowledge graph '" + path + "'");
  return import_triples(in);
}

}  // namespace diagnostica::kg
