#include "diagnostica/circuit.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <filesystem>
#include <functional>

#include "diagnostica/errors.hpp"

namespace diagnostica::circuit {

namespace {

constexpr std::array<std::string_view, 11> kStateNames{
    "PROCESS_CONTEXT",    "SELECT_FAULT_CONTEXT", "SUGGEST_SUSPECTS",
    "AWAIT_MEASUREMENTS", "CLASSIFY",             "AWAIT_MANUAL_RESULTS",
    "EVALUATE",           "ISOLATE_ROOT_CAUSE",   "SENSOR_MALFUNCTION_HYPOTHESIS",
    "REPORT",             "NO_DIAGNOSIS"};

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

PendingAction sensor_action() {
  PendingAction a;
  a.kind = ActionKind::confirm_sensor_hypothesis;
  a.component = std::string(kSensorComponent);
  a.instruction =
      "No anomalous component was found. Check whether the sensor that reported the fault works; "
      "submit anomalous=true if the sensor is defective, false if it works.";
  return a;
}

}  // namespace

std::string_view to_string(State s) noexcept { return kStateNames[static_cast<std::size_t>(s)]; }

std::optional<State> parse_state(std::string_view text) noexcept {
  for (std::size_t i = 0; i < kStateNames.size(); ++i)
    if (kStateNames[i] == text) return static_cast<State>(i);
  return std::nullopt;
}

const std::vector<std::pair<State, State>>& transition_table() {
  using S = State;
  static const std::vector<std::pair<State, State>> table{
      {S::PROCESS_CONTEXT, S::SELECT_FAULT_CONTEXT},
      {S::PROCESS_CONTEXT, S::SENSOR_MALFUNCTION_HYPOTHESIS},
      {S::SELECT_FAULT_CONTEXT, S::SUGGEST_SUSPECTS},
      {S::SELECT_FAULT_CONTEXT, S::SENSOR_MALFUNCTION_HYPOTHESIS},
      {S::SUGGEST_SUSPECTS, S::AWAIT_MEASUREMENTS},
      {S::SUGGEST_SUSPECTS, S::AWAIT_MANUAL_RESULTS},
      {S::SUGGEST_SUSPECTS, S::SELECT_FAULT_CONTEXT},
      {S::AWAIT_MEASUREMENTS, S::CLASSIFY},
      {S::CLASSIFY, S::AWAIT_MEASUREMENTS},
      {S::CLASSIFY, S::AWAIT_MANUAL_RESULTS},
      {S::CLASSIFY, S::EVALUATE},
      {S::AWAIT_MANUAL_RESULTS, S::EVALUATE},
      {S::EVALUATE, S::SUGGEST_SUSPECTS},
      {S::EVALUATE, S::ISOLATE_ROOT_CAUSE},
      {S::ISOLATE_ROOT_CAUSE, S::AWAIT_MEASUREMENTS},
      {S::ISOLATE_ROOT_CAUSE, S::AWAIT_MANUAL_RESULTS},
      {S::ISOLATE_ROOT_CAUSE, S::REPORT},
      {S::SENSOR_MALFUNCTION_HYPOTHESIS, S::REPORT},
      {S::SENSOR_MALFUNCTION_HYPOTHESIS, S::NO_DIAGNOSIS},
  };
  return table;
}

bool transition_allowed(State from, State to) noexcept {
  const auto& t = transition_table();
  return std::find(t.begin(), t.end(), std::pair{from, to}) != t.end();
}

bool is_terminal(State s) noexcept { return s == State::REPORT || s == State::NO_DIAGNOSIS; }

std::string_view to_string(ActionKind k) noexcept {
  switch (k) {
    case ActionKind::record_oscillogram: return "record_oscillogram";
    case ActionKind::manual_inspection: return "manual_inspection";
    case ActionKind::confirm_sensor_hypothesis: return "confirm_sensor_hypothesis";
  }
  return "?";
}

// ---- classifiers

bool StubClassifier::has_model(std::string_view component) const { return !without_model.contains(component); }

Verdict StubClassifier::classify(std::string_view component, std::span<const double> series) const {
  if (series.empty()) throw ShapeError("empty series");
  auto it = verdicts.find(component);
  Verdict v;
  v.anomalous = it == verdicts.end() ? default_anomalous : it->second;
  v.model_id = "stub";
  return v;
}

void ModelRegistry::add(const std::string& component, fcn::FcnModel model, std::string model_id) {
  if (component.empty()) throw ValidationError("model registry: empty component name");
  models_[component] = Entry{std::move(model), std::move(model_id)};
}

void ModelRegistry::add_file(const std::string& component, const std::string& path) {
  try {
    add(component, fcn::load_model(path), std::filesystem::path(path).stem().string());
  } catch (const std::exception& e) {
    throw ConfigError("model for component '" + component + "' (" + path + "): " + e.what());
  }
}

bool ModelRegistry::has_model(std::string_view component) const { return models_.contains(component); }

Verdict ModelRegistry::classify(std::string_view component, std::span<const double> series) const {
  auto it = models_.find(component);
  if (it == models_.end()) throw NotFoundError("no model registered for '" + std::string(component) + "'");
  const auto z = fcn::z_normalize(series);
  const fcn::Prediction p = fcn::predict(it->second.model, z.values);
  Verdict v;
  v.anomalous = p.y == fcn::kAnomalous;
  v.uncertainty = p.uncertainty;
  v.model_id = it->second.id;
  v.heatmap = cam::grad_cam(it->second.model, z.values, p.y);
  return v;
}

std::vector<std::string> ModelRegistry::components() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : models_) out.push_back(name);
  return out;
}

// ---- json

nlohmann::json to_json(const PendingAction& a) {
  nlohmann::json j{{"kind", to_string(a.kind)}, {"component", a.component}, {"instruction", a.instruction}};
  if (a.notice) j["notice"] = *a.notice;
  return j;
}

nlohmann::json to_json(const ClassificationRecord& r) {
  nlohmann::json j{{"id", r.id},
                   {"component", r.component},
                   {"source", r.from_model ? "model" : "manual"},
                   {"prediction", r.anomalous ? "anomalous" : "regular"},
                   {"context", r.context},
                   {"reason",
                    {{"kind", r.reason == kg::Predicate::ledTo ? "association" : "classification"},
                     {"id", r.reason_source}}}};
  if (r.uncertainty) j["uncertainty"] = *r.uncertainty;
  if (r.model_id) j["model_id"] = *r.model_id;
  if (r.heatmap_id) j["heatmap_id"] = *r.heatmap_id;
  if (r.oscillogram_id) j["oscillogram_id"] = *r.oscillogram_id;
  return j;
}

nlohmann::json to_json(const FaultPathRecord& p) {
  return {{"id", p.id}, {"components", p.components}, {"cyclic", p.cyclic}, {"context", p.context}};
}

// ---- session

Session::Session(std::string id, kg::KnowledgeGraph& graph, std::shared_ptr<const SignalClassifier> classifier,
                 Vehicle vehicle, std::vector<std::string> dtcs, std::vector<std::string> symptoms,
                 SessionOptions options)
    : id_(std::move(id)),
      kg_(&graph),
      classifier_(std::move(classifier)),
      vehicle_(std::move(vehicle)),
      options_(options),
      symptoms_(std::move(symptoms)) {
  for (const auto& code : dtcs)
    if (!kg::valid_dtc(code)) throw ValidationError("malformed DTC '" + code + "'");
  if (vehicle_.name.empty() || vehicle_.vin.empty()) throw ValidationError("vehicle name and vin are required");

  vehicle_id_ = kg_->extend_kg_with_vehicle(vehicle_.name, vehicle_.vin);

  auto known = [&](const std::string& code) {
    return std::any_of(contexts_.begin(), contexts_.end(), [&](const ContextStatus& c) { return c.code == code; });
  };
  for (const auto& code : dtcs) {
    if (known(code)) continue;
    ContextStatus c{code, false, false};
    if (auto fc = kg_->fault_context_id(code)) {
      c.provisional = kg_->entity(*fc)->flag("provisional").value_or(false);
    } else {
      const std::string fc_id = kg_->add_fault_context({code, "unknown fault condition", {}, {}});
      kg_->set_attribute(fc_id, "provisional", true);
      c.provisional = true;
    }
    contexts_.push_back(std::move(c));
  }
  for (const auto& s : symptoms_)
    for (const auto& code : kg_->query_dtcs_by_symptom(s))
      if (!known(code)) contexts_.push_back({code, false, false});

  const bool resolved = std::any_of(contexts_.begin(), contexts_.end(), [&](const ContextStatus& c) {
    return !kg_->query_associations(c.code).empty();
  });
  if (resolved) {
    go(State::SELECT_FAULT_CONTEXT, "fault contexts resolved: " + std::to_string(contexts_.size()));
  } else {
    go(State::SENSOR_MALFUNCTION_HYPOTHESIS, "no fault context with suspect components");
    pending_ = {sensor_action()};
  }
}

void Session::go(State to, std::string cause) {
  if (!transition_allowed(state_, to))
    throw ProtocolError("illegal transition " + std::string(to_string(state_)) + " -> " +
                        std::string(to_string(to)));
  trace_.push_back({state_, to, std::move(cause)});
  state_ = to;
}

bool Session::examined(const std::string& component) const {
  return verdict_of_.contains(component) || covered_.contains(component);
}

void Session::mark_verified_sets(const std::string& component) {
  for (const auto& set : kg_->query_component_sets()) {
    if (set.verified_by != component) continue;
    for (const auto& m : set.members)
      if (!verdict_of_.contains(m)) covered_.insert(m);
  }
}

std::optional<std::string> Session::select_fault_context() {
  if (state_ != State::SELECT_FAULT_CONTEXT)
    throw ProtocolError("select_fault_context requires SELECT_FAULT_CONTEXT, session is in " +
                        std::string(to_string(state_)));
  ContextStatus* best = nullptr;
  std::size_t best_count = 0;
  for (auto& c : contexts_) {
    if (c.processed) continue;
    std::size_t n = 0;
    for (const auto& s : kg_->query_suspect_components_by_dtc(c.code))
      if (!examined(s)) ++n;
    if (n == 0) {
      c.processed = true;
      continue;
    }
    if (!best || n > best_count || (n == best_count && c.code < best->code)) {
      best = &c;
      best_count = n;
    }
  }
  if (!best) {
    current_.reset();
    go(State::SENSOR_MALFUNCTION_HYPOTHESIS, "all fault contexts processed without anomaly");
    pending_ = {sensor_action()};
    return std::nullopt;
  }
  current_ = best->code;
  go(State::SUGGEST_SUSPECTS, "selected " + best->code + " (" + std::to_string(best_count) + " unexamined suspects)");
  return current_;
}

PendingAction Session::make_action(const std::string& component, kg::Predicate reason, const std::string& source,
                                   bool request_osc) {
  PendingAction a;
  a.component = component;
  a.reason = reason;
  a.reason_source = source;
  if (request_osc && classifier_ && classifier_->has_model(component)) {
    a.kind = ActionKind::record_oscillogram;
    a.instruction = "Record an oscillogram at component '" + component + "' and upload it.";
  } else {
    a.kind = ActionKind::manual_inspection;
    a.instruction = "Inspect component '" + component + "' and report whether it is anomalous.";
    if (request_osc) a.notice = "no model registered for '" + component + "'; manual inspection instead";
  }
  return a;
}

void Session::enter_round(std::vector<PendingAction> actions, const std::string& cause) {
  std::stable_partition(actions.begin(), actions.end(),
                        [](const PendingAction& a) { return a.kind == ActionKind::record_oscillogram; });
  pending_ = std::move(actions);
  round_anomalies_.clear();
  const bool osc = !pending_.empty() && pending_.front().kind == ActionKind::record_oscillogram;
  go(osc ? State::AWAIT_MEASUREMENTS : State::AWAIT_MANUAL_RESULTS, cause);
}

std::vector<PendingAction> Session::next_actions() {
  if (state_ != State::SUGGEST_SUSPECTS)
    throw ProtocolError("next_actions requires SUGGEST_SUSPECTS, session is in " + std::string(to_string(state_)));
  std::vector<kg::AssociationInfo> open;
  for (auto& a : kg_->query_associations(*current_))
    if (!examined(a.component)) open.push_back(std::move(a));
  std::stable_sort(open.begin(), open.end(), [](const auto& a, const auto& b) { return a.priority < b.priority; });
  if (open.empty()) {
    for (auto& c : contexts_)
      if (c.code == *current_) c.processed = true;
    go(State::SELECT_FAULT_CONTEXT, "no unexamined suspects left for " + *current_);
    return {};
  }
  std::vector<PendingAction> actions;
  std::vector<std::string> names;
  for (const auto& a : open) {
    if (options_.batch == BatchPolicy::same_priority && a.priority != open.front().priority) break;
    actions.push_back(make_action(a.component, kg::Predicate::ledTo, a.id, a.use_oscilloscope));
    names.push_back(a.component);
  }
  enter_round(std::move(actions), "suggested " + join(names, ", "));
  return pending_;
}

ClassificationRecord& Session::persist(PendingAction action, bool from_model, bool anomalous, const Verdict* verdict,
                                       const std::optional<std::string>& oscillogram) {
  kg::ClassificationSpec spec;
  spec.kind = from_model ? kg::Concept::OscillogramClassification : kg::Concept::ManualInspection;
  spec.component = action.component;
  spec.anomalous = anomalous;
  spec.reason = action.reason;
  spec.reason_source = action.reason_source;
  spec.oscillogram = oscillogram;
  if (verdict) {
    spec.uncertainty = verdict->uncertainty;
    spec.model_id = verdict->model_id;
  }
  ClassificationRecord r;
  r.id = kg_->add_classification(spec);
  r.component = action.component;
  r.from_model = from_model;
  r.anomalous = anomalous;
  r.uncertainty = spec.uncertainty;
  r.model_id = spec.model_id;
  r.oscillogram_id = oscillogram;
  r.reason = action.reason;
  r.reason_source = action.reason_source;
  r.context = current_.value_or("");

  records_.push_back(std::move(r));
  verdict_of_[action.component] = records_.size() - 1;
  if (anomalous) {
    round_anomalies_.push_back(action.component);
    if (in_rca_) rca_queue_.push_back(action.component);
  } else {
    mark_verified_sets(action.component);
  }
  return records_.back();
}

ClassificationRecord Session::submit_oscillogram(const std::string& component, std::span<const double> series) {
  if (state_ != State::AWAIT_MEASUREMENTS)
    throw ProtocolError("no oscillogram expected in state " + std::string(to_string(state_)));
  auto it = std::find_if(pending_.begin(), pending_.end(), [&](const PendingAction& a) {
    return a.component == component && a.kind == ActionKind::record_oscillogram;
  });
  if (it == pending_.end()) throw ProtocolError("no pending oscillogram recording for '" + component + "'");
  const Verdict verdict = classifier_->classify(component, series);

  PendingAction action = *it;
  pending_.erase(it);
  go(State::CLASSIFY, "oscillogram for " + component);
  const std::string osc = kg_->add_oscillogram(component, std::vector<double>(series.begin(), series.end()));
  ClassificationRecord& r = persist(action, true, verdict.anomalous, &verdict, osc);
  if (verdict.heatmap)
    r.heatmap_id = kg_->add_heatmap(r.id, std::string(cam::to_string(verdict.heatmap->method)),
                                    verdict.heatmap->target_class, verdict.heatmap->values);
  ClassificationRecord out = r;
  after_submission();
  return out;
}

std::optional<ClassificationRecord> Session::submit_manual_result(const std::string& component, bool anomalous) {
  if (state_ == State::SENSOR_MALFUNCTION_HYPOTHESIS) {
    if (component != kSensorComponent)
      throw ProtocolError("the pending action is the sensor hypothesis (component 'sensor'), not '" + component + "'");
    sensor_defective_ = anomalous;
    pending_.clear();
    if (anomalous)
      go(State::REPORT, "sensor malfunction confirmed");
    else
      go(State::NO_DIAGNOSIS, "sensor hypothesis refuted");
    return std::nullopt;
  }
  if (state_ != State::AWAIT_MANUAL_RESULTS) {
    if (state_ == State::AWAIT_MEASUREMENTS)
      throw ProtocolError("pending oscillogram recordings must be submitted before manual results");
    throw ProtocolError("no manual result expected in state " + std::string(to_string(state_)));
  }
  auto it = std::find_if(pending_.begin(), pending_.end(), [&](const PendingAction& a) {
    return a.component == component && a.kind == ActionKind::manual_inspection;
  });
  if (it == pending_.end()) throw ProtocolError("no pending manual inspection for '" + component + "'");
  PendingAction action = *it;
  pending_.erase(it);
  ClassificationRecord out = persist(action, false, anomalous, nullptr, std::nullopt);
  after_submission();
  return out;
}

void Session::after_submission() {
  const bool osc_left = std::any_of(pending_.begin(), pending_.end(),
                                    [](const PendingAction& a) { return a.kind == ActionKind::record_oscillogram; });
  if (state_ == State::CLASSIFY) {
    if (osc_left)
      go(State::AWAIT_MEASUREMENTS, "awaiting further recordings");
    else if (!pending_.empty())
      go(State::AWAIT_MANUAL_RESULTS, "recordings complete, manual inspections pending");
  }
  if (pending_.empty()) {
    go(State::EVALUATE, "round complete");
    evaluate();
  }
}

void Session::evaluate() {
  if (in_rca_) {
    go(State::ISOLATE_ROOT_CAUSE, "classification requests answered");
  } else if (!round_anomalies_.empty()) {
    in_rca_ = true;
    rca_seeds_ = round_anomalies_;
    rca_queue_ = round_anomalies_;
    go(State::ISOLATE_ROOT_CAUSE, "anomalous: " + join(round_anomalies_, ", "));
  } else {
    go(State::SUGGEST_SUSPECTS, "no anomaly in round");
  }
}

std::vector<FaultPathRecord> Session::isolate_root_cause() {
  if (state_ != State::ISOLATE_ROOT_CAUSE)
    throw ProtocolError("isolate_root_cause requires ISOLATE_ROOT_CAUSE, session is in " +
                        std::string(to_string(state_)));
  std::vector<PendingAction> requests;
  std::set<std::string> requested;
  std::deque<std::string> queue(rca_queue_.begin(), rca_queue_.end());
  rca_queue_.clear();
  while (!queue.empty()) {
    const std::string a = queue.front();
    queue.pop_front();
    if (!rca_expanded_.insert(a).second) continue;
    const std::string& source = records_[verdict_of_.at(a)].id;
    for (const auto& b : kg_->query_affected_by(a)) {
      if (examined(b)) {
        auto v = verdict_of_.find(b);
        if (v != verdict_of_.end() && records_[v->second].anomalous && !rca_expanded_.contains(b)) queue.push_back(b);
        continue;
      }
      if (!requested.insert(b).second) continue;
      const bool osc = kg_->component(b)->flag("use_oscilloscope").value_or(false);
      requests.push_back(make_action(b, kg::Predicate::reasonFor, source, osc));
    }
  }
  if (!requests.empty()) {
    rca_requests_ += requests.size();
    std::vector<std::string> names;
    for (const auto& r : requests) names.push_back(r.component);
    enter_round(std::move(requests), "classification requests: " + names.front() +
                                         (names.size() > 1 ? " (+" + std::to_string(names.size() - 1) + ")" : ""));
    return {};
  }

  std::vector<bool> cyclic;
  const auto chains = build_paths(cyclic);
  for (std::size_t i = 0; i < chains.size(); ++i) {
    FaultPathRecord p;
    p.components = chains[i];
    p.cyclic = cyclic[i];
    p.context = current_.value_or("");
    p.id = kg_->add_fault_path(p.components, current_, p.cyclic);
    paths_.push_back(std::move(p));
  }
  go(State::REPORT, std::to_string(paths_.size()) + " fault path(s) isolated");
  return paths_;
}

std::vector<std::vector<std::string>> Session::build_paths(std::vector<bool>& cyclic) const {
  // Walk affected_by backwards through anomalous components from each seed;
  // every maximal chain, reversed, is a path from a root cause to the seed.
  auto preds = [&](const std::string& n) {
    std::vector<std::string> out;
    for (const auto& b : kg_->query_affected_by(n))
      if (rca_expanded_.contains(b)) out.push_back(b);
    return out;
  };
  auto ancestors = [&](const std::string& s) {
    std::set<std::string> seen;
    std::vector<std::string> stack{s};
    while (!stack.empty()) {
      const std::string n = stack.back();
      stack.pop_back();
      for (const auto& p : preds(n))
        if (seen.insert(p).second) stack.push_back(p);
    }
    return seen;
  };

  std::vector<std::string> starts;
  for (const auto& s : rca_seeds_) {
    const bool upstream = std::any_of(rca_seeds_.begin(), rca_seeds_.end(),
                                      [&](const std::string& t) { return t != s && ancestors(t).contains(s); });
    if (!upstream) starts.push_back(s);
  }
  if (starts.empty() && !rca_seeds_.empty()) starts.push_back(rca_seeds_.front());

  constexpr std::size_t kMaxPaths = 1024;
  std::set<std::vector<std::string>> seen;
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> stack;
  std::function<void(const std::string&)> walk = [&](const std::string& n) {
    if (out.size() >= kMaxPaths) return;
    stack.push_back(n);
    bool extended = false, loop = false;
    for (const auto& p : preds(n)) {
      if (std::find(stack.begin(), stack.end(), p) != stack.end()) {
        loop = true;
        continue;
      }
      extended = true;
      walk(p);
    }
    if (!extended) {
      std::vector<std::string> path(stack.rbegin(), stack.rend());
      if (seen.insert(path).second) {
        out.push_back(std::move(path));
        cyclic.push_back(loop);
      }
    }
    stack.pop_back();
  };
  for (const auto& s : starts) walk(s);
  return out;
}

void Session::advance() {
  for (;;) {
    switch (state_) {
      case State::SELECT_FAULT_CONTEXT: select_fault_context(); break;
      case State::SUGGEST_SUSPECTS: next_actions(); break;
      case State::ISOLATE_ROOT_CAUSE: isolate_root_cause(); break;
      default: return;
    }
  }
}

nlohmann::json Session::finalize() {
  if (!is_terminal(state_))
    throw ProtocolError("finalize requires REPORT or NO_DIAGNOSIS, session is in " + std::string(to_string(state_)));
  if (report_) throw ProtocolError("session '" + id_ + "' is already finalized");
  std::vector<std::string> codes, cls, paths;
  for (const auto& c : contexts_) codes.push_back(c.code);
  for (const auto& r : records_) cls.push_back(r.id);
  for (const auto& p : paths_) paths.push_back(p.id);
  const std::string log = kg_->extend_kg_with_diag_log(codes, vehicle_.vin, cls, paths);
  nlohmann::json r = build_report();
  r["diag_log"] = log;
  report_ = std::move(r);
  return *report_;
}

const nlohmann::json& Session::report() const {
  if (!report_) throw ProtocolError("session '" + id_ + "' has not been finalized");
  return *report_;
}

nlohmann::json Session::build_report() const {
  nlohmann::json j;
  j["session"] = id_;
  j["outcome"] = to_string(state_);
  j["vehicle"] = {{"name", vehicle_.name}, {"vin", vehicle_.vin}, {"id", vehicle_id_}};
  j["symptoms"] = symptoms_;
  j["contexts"] = nlohmann::json::array();
  for (const auto& c : contexts_)
    j["contexts"].push_back({{"code", c.code},
                             {"id", kg_->fault_context_id(c.code).value_or("")},
                             {"provisional", c.provisional},
                             {"processed", c.processed}});
  j["classifications"] = nlohmann::json::array();
  j["heatmap_refs"] = nlohmann::json::array();
  for (const auto& r : records_) {
    j["classifications"].push_back(to_json(r));
    if (r.heatmap_id) j["heatmap_refs"].push_back(*r.heatmap_id);
  }
  j["fault_paths"] = nlohmann::json::array();
  for (const auto& p : paths_) j["fault_paths"].push_back(to_json(p));
  j["transitions"] = nlohmann::json::array();
  for (const auto& t : trace_)
    j["transitions"].push_back({{"from", to_string(t.from)}, {"to", to_string(t.to)}, {"cause", t.cause}});
  if (sensor_defective_)
    j["sensor_hypothesis"] = {{"raised", true}, {"confirmed", *sensor_defective_}};
  else
    j["sensor_hypothesis"] = {{"raised", false}};

  std::string conclusion;
  if (state_ == State::NO_DIAGNOSIS) {
    conclusion = "diagnosis unsuccessful: the sensor malfunction hypothesis was refuted";
  } else if (sensor_defective_) {
    conclusion = "defective sensor";
  } else if (!paths_.empty()) {
    std::vector<std::string> parts;
    for (const auto& p : paths_) parts.push_back(join(p.components, " -> ") + (p.cyclic ? " (cyclic)" : ""));
    conclusion = "probable root cause " + paths_.front().components.front() + ": " + join(parts, "; ");
  }
  j["conclusion"] = conclusion;
  return j;
}

nlohmann::json Session::status() const {
  nlohmann::json j;
  j["id"] = id_;
  j["state"] = to_string(state_);
  j["context"] = current_ ? nlohmann::json(*current_) : nlohmann::json(nullptr);
  j["pending"] = nlohmann::json::array();
  for (const auto& a : pending_) j["pending"].push_back(to_json(a));
  j["contexts"] = nlohmann::json::array();
  for (const auto& c : contexts_)
    j["contexts"].push_back({{"code", c.code}, {"provisional", c.provisional}, {"processed", c.processed}});
  j["classifications"] = nlohmann::json::array();
  for (const auto& r : records_) j["classifications"].push_back(to_json(r));
  j["fault_paths"] = nlohmann::json::array();
  for (const auto& p : paths_) j["fault_paths"].push_back(to_json(p));
  j["finalized"] = finalized();
  return j;
}

}  // namespace diagnostica::circuit
