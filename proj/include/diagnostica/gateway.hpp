#pragma once

// HTTP service over the knowledge graph and diagnosis sessions.
//
// Every response body is a JSON envelope
//   {"request_id": "...", "payload": ...}                          on success
//   {"request_id": "...", "error": {"code", "message", "detail"}}  on failure
// Status codes: 400 unparsable input, 404 unknown resource, 409 session
// protocol violation, 422 invalid content, 500 infrastructure.
//
// Routes (prefix /api/v1):
//   POST /sessions                      {vehicle:{name,vin}, dtcs[], symptoms[], batch?}
//   GET  /sessions/{id}
//   GET  /sessions/{id}/actions
//   POST /sessions/{id}/oscillograms    {component, values[]} or text/csv + ?component=
//   POST /sessions/{id}/manual-results  {component, anomalous}
//   POST /sessions/{id}/finalize
//   GET  /sessions/{id}/report
//   POST /knowledge/fault-contexts      {code, condition, symptoms[], associations[{component, priority}]}
//   POST /knowledge/components          {name, use_oscilloscope, affected_by[], subsystem?}
//   POST /knowledge/component-sets      {name, members[], verified_by}
//   GET  /kg/query/suspects?dtc=
//   GET  /kg/query/symptoms?dtc=
//   GET  /kg/components
//   GET  /kg/stats
//   GET  /kg/export
//   POST /kg/import                     triples as text/plain, or {"triples": "..."}
//   POST /kg/checkpoint
//   GET  /heatmaps/{id}                 ?format=svg adds a rendered report

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "diagnostica/circuit.hpp"
#include "diagnostica/fcn.hpp"
#include "diagnostica/kg.hpp"

namespace diagnostica::gateway {

inline constexpr std::string_view kApiPrefix = "/api/v1";

struct GatewayConfig {
  std::string host = "127.0.0.1";
  /// 0 picks a free port.
  int port = 8080;
  /// Loaded at startup when the file exists, written on checkpoint and stop.
  std::optional<std::string> kg_path;
  /// (component, model file)
  std::vector<std::pair<std::string, std::string>> models;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

using Query = std::multimap<std::string, std::string>;

/// HTTP status for a library error code.
int status_for(std::string_view error_code) noexcept;

// Knowledge payloads as accepted by the /knowledge endpoints. ValidationError
// for missing or mistyped fields.
kg::FaultContextSpec fault_context_from_json(const nlohmann::json& j);
kg::ComponentSpec component_from_json(const nlohmann::json& j);
kg::ComponentSetSpec component_set_from_json(const nlohmann::json& j);
/// {"components": [...], "fault_contexts": [...], "component_sets": [...]},
/// applied in that order.
void load_knowledge(kg::KnowledgeGraph& graph, const nlohmann::json& j);

class Gateway {
 public:
  /// Loads the KG and every model. InfrastructureError/ParseError for an
  /// unusable KG file, ConfigError naming the component for a bad model.
  explicit Gateway(GatewayConfig config);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Transport-independent dispatch; `path` includes the /api/v1 prefix.
  HttpResponse handle(std::string_view method, std::string_view path, const Query& query, const std::string& body,
                      std::string_view content_type = "application/json");

  /// Binds and serves on a background thread. InfrastructureError when the
  /// address cannot be bound.
  void start();
  /// Bound port once started.
  int port() const;
  bool running() const;
  /// Stops serving and persists the KG. Safe to call twice.
  void stop();
  /// Writes the KG to the configured path; ConfigError when there is none.
  void checkpoint();

  kg::KnowledgeGraph& graph();
  void register_model(const std::string& component, fcn::FcnModel model, std::string model_id);

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace diagnostica::gateway
