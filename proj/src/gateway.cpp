#include "diagnostica/gateway.hpp"

#include <atomic>
#include <charconv>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>

#include "diagnostica/cam.hpp"
#include "diagnostica/errors.hpp"
#include "httplib.h"
#include "json.hpp"

namespace diagnostica::gateway {

using nlohmann::json;

int status_for(std::string_view code) noexcept {
  if (code == "protocol_error") return 409;
  if (code == "not_found") return 404;
  if (code == "parse_error" || code == "format_error" || code == "bad_request") return 400;
  if (code == "infrastructure_error") return 500;
  return 422;
}

namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
  json detail;
};

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const std::size_t j = path.find('/', i);
    const std::size_t end = j == std::string_view::npos ? path.size() : j;
    if (end > i) parts.emplace_back(path.substr(i, end - i));
    i = end;
  }
  return parts;
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw ParseError(1, std::string("request body is not valid JSON: ") + e.what());
  }
}

const json& field(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw ValidationError(std::string("missing field '") + name + "'");
  return j.at(name);
}

std::string string_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_string()) throw ValidationError(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

bool bool_field(const json& j, const char* name, std::optional<bool> fallback = std::nullopt) {
  if (fallback && (!j.is_object() || !j.contains(name))) return *fallback;
  const json& v = field(j, name);
  if (!v.is_boolean()) throw ValidationError(std::string("field '") + name + "' must be a boolean");
  return v.get<bool>();
}

std::vector<std::string> strings_field(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) return {};
  const json& v = j.at(name);
  if (!v.is_array()) throw ValidationError(std::string("field '") + name + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& x : v) {
    if (!x.is_string()) throw ValidationError(std::string("field '") + name + "' must be an array of strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

std::vector<double> parse_csv_values(const std::string& body) {
  std::vector<double> values;
  std::size_t row = 0;
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    ++row;
    std::size_t i = 0;
    while (i <= line.size()) {
      std::size_t j = line.find_first_of(",;\t", i);
      if (j == std::string::npos) j = line.size();
      std::string_view tok(line.data() + i, j - i);
      while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\r')) tok.remove_prefix(1);
      while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\r')) tok.remove_suffix(1);
      if (!tok.empty()) {
        double v = 0.0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size()) {
          if (row == 1 && values.empty()) break;  // header line
          throw FormatError(row, "not a number: '" + std::string(tok) + "'");
        }
        values.push_back(v);
      }
      i = j + 1;
    }
  }
  return values;
}

std::optional<std::string> query_value(const Query& q, const std::string& key) {
  auto it = q.find(key);
  if (it == q.end()) return std::nullopt;
  return it->second;
}

}  // namespace

kg::FaultContextSpec fault_context_from_json(const json& req) {
  kg::FaultContextSpec spec;
  spec.code = string_field(req, "code");
  spec.condition = req.contains("condition") ? string_field(req, "condition") : std::string();
  spec.symptoms = strings_field(req, "symptoms");
  if (req.contains("associations")) {
    const json& a = req.at("associations");
    if (!a.is_array()) throw ValidationError("field 'associations' must be an array");
    for (const auto& x : a) {
      const json& prio = field(x, "priority");
      if (!prio.is_number_integer()) throw ValidationError("association priority must be an integer");
      spec.associations.push_back({string_field(x, "component"), prio.get<std::int64_t>()});
    }
  }
  return spec;
}

kg::ComponentSpec component_from_json(const json& req) {
  kg::ComponentSpec spec;
  spec.name = string_field(req, "name");
  spec.use_oscilloscope = bool_field(req, "use_oscilloscope", false);
  spec.affected_by = strings_field(req, "affected_by");
  if (req.contains("subsystem") && !req.at("subsystem").is_null()) spec.subsystem = string_field(req, "subsystem");
  return spec;
}

kg::ComponentSetSpec component_set_from_json(const json& req) {
  kg::ComponentSetSpec spec;
  spec.name = string_field(req, "name");
  spec.members = strings_field(req, "members");
  spec.verified_by = string_field(req, "verified_by");
  return spec;
}

void load_knowledge(kg::KnowledgeGraph& graph, const json& j) {
  if (!j.is_object()) throw ValidationError("knowledge document must be a JSON object");
  auto each = [&](const char* key, auto&& apply) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_array()) throw ValidationError(std::string("field '") + key + "' must be an array");
    for (const auto& x : j.at(key)) apply(x);
  };
  each("components", [&](const json& x) { graph.add_component(component_from_json(x)); });
  each("fault_contexts", [&](const json& x) { graph.add_fault_context(fault_context_from_json(x)); });
  each("component_sets", [&](const json& x) { graph.add_component_set(component_set_from_json(x)); });
}

namespace {

struct SessionSlot {
  std::mutex mutex;
  std::unique_ptr<circuit::Session> session;
};

}  // namespace

struct Gateway::Impl {
  GatewayConfig config;
  kg::KnowledgeGraph graph;
  std::mutex models_mutex;
  std::shared_ptr<circuit::ModelRegistry> models = std::make_shared<circuit::ModelRegistry>();

  std::mutex sessions_mutex;
  std::map<std::string, std::shared_ptr<SessionSlot>> sessions;
  std::uint64_t next_session = 1;
  std::atomic<std::uint64_t> next_request{1};

  std::mutex persist_mutex;
  httplib::Server server;
  std::thread listener;
  int bound_port = 0;
  std::atomic<bool> serving{false};

  std::shared_ptr<SessionSlot> slot(const std::string& id) {
    std::lock_guard lock(sessions_mutex);
    auto it = sessions.find(id);
    if (it == sessions.end()) throw NotFoundError("unknown session '" + id + "'");
    return it->second;
  }

  void persist() {
    if (!config.kg_path) throw ConfigError("no knowledge graph file configured");
    std::lock_guard lock(persist_mutex);
    graph.save(*config.kg_path);
  }

  json dispatch(std::string_view method, const std::vector<std::string>& p, const Query& query,
                const std::string& body, std::string_view content_type, int& status);
  json sessions_route(std::string_view method, const std::vector<std::string>& p, const Query& query,
                      const std::string& body, std::string_view content_type, int& status);
  json heatmap(const std::string& id, bool svg);
};

namespace {

json components_view(const kg::KnowledgeGraph& g) {
  json out = json::array();
  for (const auto& name : g.component_names()) {
    const auto e = g.component(name);
    out.push_back({{"name", name},
                   {"id", e->id},
                   {"use_oscilloscope", e->flag("use_oscilloscope").value_or(false)},
                   {"affected_by", g.query_affected_by(name)}});
  }
  return out;
}

}  // namespace

json Gateway::Impl::sessions_route(std::string_view method, const std::vector<std::string>& p, const Query& query,
                                   const std::string& body, std::string_view content_type, int& status) {
  if (p.size() == 1) {
    if (method != "POST") throw HttpError{404, "not_found", "no such route", nullptr};
    const json req = parse_body(body);
    const json& v = field(req, "vehicle");
    circuit::Vehicle vehicle{string_field(v, "name"), string_field(v, "vin")};
    circuit::SessionOptions options;
    if (req.contains("batch")) {
      const std::string b = string_field(req, "batch");
      if (b == "all")
        options.batch = circuit::BatchPolicy::all;
      else if (b != "same_priority")
        throw ValidationError("batch must be 'same_priority' or 'all'");
    }
    std::shared_ptr<const circuit::SignalClassifier> classifier;
    {
      std::lock_guard lock(models_mutex);
      classifier = models;
    }
    auto slot = std::make_shared<SessionSlot>();
    std::string id;
    {
      std::lock_guard lock(sessions_mutex);
      id = "session-" + std::to_string(next_session++);
    }
    slot->session = std::make_unique<circuit::Session>(id, graph, classifier, vehicle, strings_field(req, "dtcs"),
                                                       strings_field(req, "symptoms"), options);
    slot->session->advance();
    json view = slot->session->status();
    {
      std::lock_guard lock(sessions_mutex);
      sessions[id] = slot;
    }
    status = 201;
    return view;
  }

  auto s = slot(p[1]);
  const bool mutating = method == "POST";
  std::unique_lock lock(s->mutex, std::defer_lock);
  if (mutating) {
    if (!lock.try_lock()) throw ProtocolError("session '" + p[1] + "' is busy with another request");
  } else {
    lock.lock();
  }
  circuit::Session& session = *s->session;

  if (p.size() == 2 && method == "GET") return session.status();
  if (p.size() != 3) throw HttpError{404, "not_found", "no such route", nullptr};
  const std::string& op = p[2];

  if (op == "actions" && method == "GET") {
    if (!session.finalized()) session.advance();
    json actions = json::array();
    for (const auto& a : session.pending()) actions.push_back(circuit::to_json(a));
    return {{"state", circuit::to_string(session.state())}, {"actions", actions}};
  }
  if (op == "oscillograms" && method == "POST") {
    std::string component;
    std::vector<double> values;
    if (content_type.find("text/csv") != std::string_view::npos ||
        content_type.find("text/plain") != std::string_view::npos) {
      auto c = query_value(query, "component");
      if (!c) throw ValidationError("query parameter 'component' is required for CSV uploads");
      component = *c;
      values = parse_csv_values(body);
    } else {
      const json req = parse_body(body);
      component = string_field(req, "component");
      const json& v = field(req, "values");
      if (!v.is_array()) throw ValidationError("field 'values' must be an array of numbers");
      for (const auto& x : v) {
        if (!x.is_number()) throw ValidationError("field 'values' must be an array of numbers");
        values.push_back(x.get<double>());
      }
    }
    const auto record = session.submit_oscillogram(component, values);
    session.advance();
    json out{{"classification", circuit::to_json(record)}, {"state", circuit::to_string(session.state())}};
    if (record.heatmap_id) out["heatmap"] = heatmap(*record.heatmap_id, false);
    status = 201;
    return out;
  }
  if (op == "manual-results" && method == "POST") {
    const json req = parse_body(body);
    const auto record = session.submit_manual_result(string_field(req, "component"), bool_field(req, "anomalous"));
    session.advance();
    status = 201;
    return {{"classification", record ? circuit::to_json(*record) : json(nullptr)},
            {"state", circuit::to_string(session.state())}};
  }
  if (op == "finalize" && method == "POST") return session.finalize();
  if (op == "report" && method == "GET") return session.report();
  throw HttpError{404, "not_found", "no such route", nullptr};
}

json Gateway::Impl::heatmap(const std::string& id, bool svg) {
  const auto e = graph.entity(id);
  if (!e || e->kind != kg::Concept::Heatmap) throw NotFoundError("unknown heatmap '" + id + "'");
  json out{{"id", id},
           {"method", *e->text("method")},
           {"target_class", e->integer("target_class").value_or(0)},
           {"values", e->text("values") ? json::parse(*e->text("values")) : json::array()}};
  std::vector<double> series;
  for (const auto& r : graph.incoming(id)) {
    if (r.predicate != kg::Predicate::producedHeatmap) continue;
    out["classification"] = r.subject;
    if (const auto c = graph.entity(r.subject)) {
      if (const auto* comp = c->text("component")) out["component"] = *comp;
    }
    for (const auto& o : graph.outgoing(r.subject)) {
      if (o.predicate != kg::Predicate::classifies) continue;
      const auto osc = graph.entity(o.object);
      if (osc && osc->text("values")) series = json::parse(*osc->text("values")).get<std::vector<double>>();
      out["oscillogram"] = o.object;
    }
  }
  if (svg) {
    cam::Heatmap h;
    h.method = cam::parse_method(out["method"].get<std::string>());
    h.target_class = out["target_class"].get<int>();
    h.values = out["values"].get<std::vector<double>>();
    if (series.size() != h.values.size()) series.assign(h.values.size(), 0.0);
    out["svg"] = cam::render_heatmap_report(series, std::span<const cam::Heatmap>(&h, 1)).svg;
  }
  return out;
}

json Gateway::Impl::dispatch(std::string_view method, const std::vector<std::string>& p, const Query& query,
                             const std::string& body, std::string_view content_type, int& status) {
  const auto not_found = [] { return HttpError{404, "not_found", "no such route", nullptr}; };
  if (p.empty()) throw not_found();
  const std::string& root = p[0];

  if (root == "sessions") return sessions_route(method, p, query, body, content_type, status);

  if (root == "knowledge" && p.size() == 2 && method == "POST") {
    const json req = parse_body(body);
    std::string id;
    if (p[1] == "fault-contexts") {
      id = graph.add_fault_context(fault_context_from_json(req));
    } else if (p[1] == "components") {
      id = graph.add_component(component_from_json(req));
    } else if (p[1] == "component-sets") {
      id = graph.add_component_set(component_set_from_json(req));
    } else {
      throw not_found();
    }
    status = 201;
    return {{"id", id}, {"revision", graph.revision()}};
  }

  if (root == "kg") {
    if (p.size() == 3 && p[1] == "query" && method == "GET") {
      auto dtc = query_value(query, "dtc");
      if (!dtc) throw ValidationError("query parameter 'dtc' is required");
      if (!kg::valid_dtc(*dtc)) throw ValidationError("malformed DTC '" + *dtc + "'");
      if (!graph.fault_context_id(*dtc)) throw NotFoundError("unknown fault context '" + *dtc + "'");
      if (p[2] == "suspects") {
        json list = json::array();
        for (const auto& a : graph.query_associations(*dtc))
          list.push_back({{"component", a.component}, {"priority", a.priority}, {"use_oscilloscope", a.use_oscilloscope}});
        return {{"dtc", *dtc}, {"suspects", list}};
      }
      if (p[2] == "symptoms") return {{"dtc", *dtc}, {"symptoms", graph.query_symptoms_by_dtc(*dtc)}};
      throw not_found();
    }
    if (p.size() != 2) throw not_found();
    if (p[1] == "stats" && method == "GET") return kg::to_json(graph.stats());
    if (p[1] == "components" && method == "GET") return components_view(graph);
    if (p[1] == "export" && method == "GET") {
      std::ostringstream out;
      graph.export_triples(out);
      return {{"triples", out.str()}, {"stats", kg::to_json(graph.stats())}};
    }
    if (p[1] == "import" && method == "POST") {
      std::string text = body;
      if (content_type.find("json") != std::string_view::npos) text = string_field(parse_body(body), "triples");
      std::istringstream in(text);
      graph.replace_with(kg::KnowledgeGraph::import_triples(in));
      return kg::to_json(graph.stats());
    }
    if (p[1] == "checkpoint" && method == "POST") {
      persist();
      return {{"path", *config.kg_path}, {"revision", graph.revision()}};
    }
    throw not_found();
  }

  if (root == "heatmaps" && p.size() == 2 && method == "GET")
    return heatmap(p[1], query_value(query, "format").value_or("") == "svg");

  throw not_found();
}

Gateway::Gateway(GatewayConfig config) : impl_(std::make_unique<Impl>()) {
  impl_->config = std::move(config);
  if (impl_->config.kg_path && std::filesystem::exists(*impl_->config.kg_path))
    impl_->graph = kg::KnowledgeGraph::load(*impl_->config.kg_path);
  for (const auto& [component, path] : impl_->config.models) impl_->models->add_file(component, path);
}

Gateway::~Gateway() {
  try {
    stop();
  } catch (...) {
  }
}

kg::KnowledgeGraph& Gateway::graph() { return impl_->graph; }

void Gateway::register_model(const std::string& component, fcn::FcnModel model, std::string model_id) {
  std::lock_guard lock(impl_->models_mutex);
  auto next = std::make_shared<circuit::ModelRegistry>(*impl_->models);
  next->add(component, std::move(model), std::move(model_id));
  impl_->models = std::move(next);
}

void Gateway::checkpoint() { impl_->persist(); }

HttpResponse Gateway::handle(std::string_view method, std::string_view path, const Query& query,
                             const std::string& body, std::string_view content_type) {
  const std::string request_id = "req-" + std::to_string(impl_->next_request++);
  HttpResponse res;
  json envelope{{"request_id", request_id}};
  auto fail = [&](int status, const std::string& code, const std::string& message, json detail) {
    res.status = status;
    envelope["error"] = {{"code", code}, {"message", message}, {"detail", std::move(detail)}};
  };
  try {
    if (!path.starts_with(kApiPrefix)) throw HttpError{404, "not_found", "no such route", nullptr};
    int status = 200;
    json payload = impl_->dispatch(method, split_path(path.substr(kApiPrefix.size())), query, body, content_type,
                                   status);
    res.status = status;
    envelope["payload"] = std::move(payload);
  } catch (const HttpError& e) {
    fail(e.status, e.code, e.message, e.detail);
  } catch (const ParseError& e) {
    fail(400, e.code(), e.what(), {{"line", e.line()}});
  } catch (const FormatError& e) {
    fail(400, e.code(), e.what(), {{"row", e.row()}});
  } catch (const CycleError& e) {
    fail(422, e.code(), e.what(), {{"cycle", e.cycle()}});
  } catch (const Error& e) {
    fail(status_for(e.code()), e.code(), e.what(), nullptr);
  } catch (const json::exception& e) {
    fail(400, "bad_request", e.what(), nullptr);
  } catch (const std::exception& e) {
    fail(500, "internal_error", e.what(), nullptr);
  }
  res.body = envelope.dump();
  return res;
}

void Gateway::start() {
  if (impl_->serving) return;
  auto& svr = impl_->server;
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    Query q(req.params.begin(), req.params.end());
    const HttpResponse r = handle(req.method, req.path, q, req.body, req.get_header_value("Content-Type"));
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  const std::string any = R"(/.*)";
  svr.Get(any, handler);
  svr.Post(any, handler);
  svr.Put(any, handler);
  svr.Delete(any, handler);
  svr.set_payload_max_length(64u << 20);

  const auto& cfg = impl_->config;
  if (cfg.port == 0) {
    impl_->bound_port = svr.bind_to_any_port(cfg.host);
    if (impl_->bound_port <= 0) throw InfrastructureError("cannot bind " + cfg.host);
  } else {
    if (!svr.bind_to_port(cfg.host, cfg.port))
      throw InfrastructureError("cannot bind " + cfg.host + ":" + std::to_string(cfg.port) + " (port busy?)");
    impl_->bound_port = cfg.port;
  }
  impl_->serving = true;
  impl_->listener = std::thread([&svr] { svr.listen_after_bind(); });
  svr.wait_until_ready();
}

int Gateway::port() const { return impl_->bound_port; }

bool Gateway::running() const { return impl_->serving; }

void Gateway::stop() {
  if (impl_->serving.exchange(false)) {
    impl_->server.stop();
    if (impl_->listener.joinable()) impl_->listener.join();
  }
  if (impl_->config.kg_path) impl_->persist();
}

}  // namespace diagnostica::gateway
