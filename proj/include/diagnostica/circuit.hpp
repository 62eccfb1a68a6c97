#pragma once

// Diagnostic session state machine.
//
//   PROCESS_CONTEXT -> SELECT_FAULT_CONTEXT -> SUGGEST_SUSPECTS
//     -> AWAIT_MEASUREMENTS <-> CLASSIFY -> AWAIT_MANUAL_RESULTS -> EVALUATE
//     -> (no anomaly) SUGGEST_SUSPECTS | (anomaly) ISOLATE_ROOT_CAUSE -> REPORT
//   no context left / none resolved -> SENSOR_MALFUNCTION_HYPOTHESIS
//     -> REPORT (sensor defective) | NO_DIAGNOSIS (sensor works)
//
// The full table is `transition_table()`; every transition is traced. States
// that need no user input (SELECT_FAULT_CONTEXT, SUGGEST_SUSPECTS,
// ISOLATE_ROOT_CAUSE) are left either by calling the matching operation or by
// `advance()`. EVALUATE runs as soon as the last pending action of a round is
// answered.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "diagnostica/cam.hpp"
#include "diagnostica/fcn.hpp"
#include "diagnostica/kg.hpp"
#include "json.hpp"

namespace diagnostica::circuit {

enum class State {
  PROCESS_CONTEXT,
  SELECT_FAULT_CONTEXT,
  SUGGEST_SUSPECTS,
  AWAIT_MEASUREMENTS,
  CLASSIFY,
  AWAIT_MANUAL_RESULTS,
  EVALUATE,
  ISOLATE_ROOT_CAUSE,
  SENSOR_MALFUNCTION_HYPOTHESIS,
  REPORT,
  NO_DIAGNOSIS,
};

std::string_view to_string(State s) noexcept;
std::optional<State> parse_state(std::string_view text) noexcept;
const std::vector<std::pair<State, State>>& transition_table();
bool transition_allowed(State from, State to) noexcept;
bool is_terminal(State s) noexcept;

// ---- classifiers

struct Verdict {
  bool anomalous = false;
  double uncertainty = 0.0;
  std::string model_id;
  std::optional<cam::Heatmap> heatmap;
};

class SignalClassifier {
 public:
  virtual ~SignalClassifier() = default;
  virtual bool has_model(std::string_view component) const = 0;
  /// `series` is the raw recording. May throw DegenerateSeriesError/ShapeError.
  virtual Verdict classify(std::string_view component, std::span<const double> series) const = 0;
};

/// Fixed verdicts per component, for tests and dry runs.
class StubClassifier : public SignalClassifier {
 public:
  std::map<std::string, bool, std::less<>> verdicts;
  bool default_anomalous = false;
  /// Components reported as having no model.
  std::set<std::string, std::less<>> without_model;

  bool has_model(std::string_view component) const override;
  Verdict classify(std::string_view component, std::span<const double> series) const override;
};

/// FCN models per component; z-normalise, predict, Grad-CAM towards the
/// predicted class.
class ModelRegistry : public SignalClassifier {
 public:
  void add(const std::string& component, fcn::FcnModel model, std::string model_id);
  /// Loads and validates a model file; ConfigError naming the component on
  /// failure.
  void add_file(const std::string& component, const std::string& path);
  bool has_model(std::string_view component) const override;
  Verdict classify(std::string_view component, std::span<const double> series) const override;
  std::vector<std::string> components() const;

 private:
  struct Entry {
    fcn::FcnModel model;
    std::string id;
  };
  std::map<std::string, Entry, std::less<>> models_;
};

// ---- session records

enum class ActionKind { record_oscillogram, manual_inspection, confirm_sensor_hypothesis };
std::string_view to_string(ActionKind k) noexcept;

inline constexpr std::string_view kSensorComponent = "sensor";

struct PendingAction {
  ActionKind kind = ActionKind::manual_inspection;
  std::string component;
  std::string instruction;
  std::optional<std::string> notice;
  /// ledTo source (association id) or reasonFor source (classification id).
  kg::Predicate reason = kg::Predicate::ledTo;
  std::string reason_source;
};

struct ClassificationRecord {
  std::string id;  // KG entity
  std::string component;
  bool from_model = false;
  bool anomalous = false;
  std::optional<double> uncertainty;
  std::optional<std::string> model_id;
  std::optional<std::string> heatmap_id;
  std::optional<std::string> oscillogram_id;
  kg::Predicate reason = kg::Predicate::ledTo;
  std::string reason_source;
  std::string context;
};

struct FaultPathRecord {
  std::string id;  // KG entity
  std::vector<std::string> components;  // root cause first
  bool cyclic = false;
  std::string context;
};

struct Transition {
  State from = State::PROCESS_CONTEXT;
  State to = State::PROCESS_CONTEXT;
  std::string cause;
};

struct ContextStatus {
  std::string code;
  bool provisional = false;
  bool processed = false;
};

struct Vehicle {
  std::string name;
  std::string vin;
};

enum class BatchPolicy {
  /// All unexamined suspects sharing the lowest remaining priority.
  same_priority,
  /// Every unexamined suspect of the context at once.
  all,
};

struct SessionOptions {
  BatchPolicy batch = BatchPolicy::same_priority;
};

nlohmann::json to_json(const PendingAction& a);
nlohmann::json to_json(const ClassificationRecord& r);
nlohmann::json to_json(const FaultPathRecord& p);

class Session {
 public:
  /// Persists the vehicle, resolves contexts (unknown but well-formed codes
  /// become provisional contexts) and lands in SELECT_FAULT_CONTEXT, or in
  /// SENSOR_MALFUNCTION_HYPOTHESIS when no context has a suspect.
  /// ValidationError for a malformed code or an empty vehicle field.
  Session(std::string id, kg::KnowledgeGraph& graph, std::shared_ptr<const SignalClassifier> classifier,
          Vehicle vehicle, std::vector<std::string> dtcs, std::vector<std::string> symptoms,
          SessionOptions options = {});

  const std::string& id() const noexcept { return id_; }
  State state() const noexcept { return state_; }
  const std::vector<PendingAction>& pending() const noexcept { return pending_; }
  const std::optional<std::string>& current_context() const noexcept { return current_; }
  const std::vector<ContextStatus>& contexts() const noexcept { return contexts_; }
  const std::vector<ClassificationRecord>& classifications() const noexcept { return records_; }
  const std::vector<FaultPathRecord>& fault_paths() const noexcept { return paths_; }
  const std::vector<Transition>& transitions() const noexcept { return trace_; }
  bool finalized() const noexcept { return report_.has_value(); }
  /// Number of classification requests issued during root-cause analysis.
  std::size_t rca_requests() const noexcept { return rca_requests_; }

  /// Requires SELECT_FAULT_CONTEXT. Returns the chosen code, or nullopt when
  /// every context is exhausted (the session moves to the sensor hypothesis).
  std::optional<std::string> select_fault_context();
  /// Requires SUGGEST_SUSPECTS. Empty when the context is exhausted.
  std::vector<PendingAction> next_actions();
  ClassificationRecord submit_oscillogram(const std::string& component, std::span<const double> series);
  /// `anomalous` for component "sensor" answers the sensor hypothesis: true
  /// confirms a defective sensor.
  std::optional<ClassificationRecord> submit_manual_result(const std::string& component, bool anomalous);
  /// Requires ISOLATE_ROOT_CAUSE. Either issues classification requests (empty
  /// result) or completes with the fault paths.
  std::vector<FaultPathRecord> isolate_root_cause();
  /// Runs automatic steps until user input is needed or a terminal state.
  void advance();
  /// Requires REPORT or NO_DIAGNOSIS and a session not yet finalized.
  nlohmann::json finalize();
  /// The finalized report; ProtocolError before finalize.
  const nlohmann::json& report() const;
  nlohmann::json status() const;

 private:
  void go(State to, std::string cause);
  bool examined(const std::string& component) const;
  void mark_verified_sets(const std::string& component);
  PendingAction make_action(const std::string& component, kg::Predicate reason, const std::string& source,
                            bool request_osc);
  void enter_round(std::vector<PendingAction> actions, const std::string& cause);
  void after_submission();
  void evaluate();
  ClassificationRecord& persist(PendingAction action, bool from_model, bool anomalous, const Verdict* verdict,
                                const std::optional<std::string>& oscillogram);
  std::vector<std::vector<std::string>> build_paths(std::vector<bool>& cyclic) const;
  nlohmann::json build_report() const;

  std::string id_;
  kg::KnowledgeGraph* kg_;
  std::shared_ptr<const SignalClassifier> classifier_;
  Vehicle vehicle_;
  std::string vehicle_id_;
  SessionOptions options_;
  std::vector<std::string> symptoms_;

  State state_ = State::PROCESS_CONTEXT;
  std::vector<Transition> trace_;
  std::vector<ContextStatus> contexts_;
  std::optional<std::string> current_;
  std::vector<PendingAction> pending_;

  std::vector<ClassificationRecord> records_;
  std::map<std::string, std::size_t> verdict_of_;  // component -> index into records_
  std::set<std::string> covered_;                  // regular via a verified component set
  std::vector<std::string> round_anomalies_;

  bool in_rca_ = false;
  std::vector<std::string> rca_seeds_;
  std::vector<std::string> rca_queue_;
  std::set<std::string> rca_expanded_;
  std::size_t rca_requests_ = 0;
  std::vector<FaultPathRecord> paths_;

  std::optional<bool> sensor_defective_;
  std::optional<nlohmann::json> report_;
};

}  // namespace diagnostica::circuit
