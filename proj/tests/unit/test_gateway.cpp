#include "diagnostica/gateway.hpp"

#include <filesystem>

#include "diagnostica/errors.hpp"

#include "doctest.h"
#include "httplib.h"
#include "support/oracles.hpp"

using namespace diagnostica;
using namespace diagnostica::gateway;
using nlohmann::json;

namespace {

struct Reply {
  int status;
  json body;
};

Reply call(Gateway& g, std::string_view method, const std::string& path, const json& body = nullptr,
           const Query& q = {}) {
  const auto r = g.handle(method, "/api/v1" + path, q, body.is_null() ? std::string() : body.dump());
  return {r.status, json::parse(r.body)};
}

void load_plant(Gateway& g) {
  for (const auto& c : {json{{"name", "C_B"}, {"use_oscilloscope", true}},
                        json{{"name", "C_C"}, {"use_oscilloscope", true}},
                        json{{"name", "C_A"}, {"use_oscilloscope", true}, {"affected_by", {"C_B"}}},
                        json{{"name", "C_D"}, {"use_oscilloscope", true}, {"affected_by", {"C_A", "C_C"}}}})
    REQUIRE(call(g, "POST", "/knowledge/components", c).status == 201);
  const json fc{{"code", "P0500"},
                {"condition", "Vehicle Speed Sensor Malfunction"},
                {"symptoms", {"speedometer inoperative"}},
                {"associations", {{{"component", "C_D"}, {"priority", 0}}}}};
  REQUIRE(call(g, "POST", "/knowledge/fault-contexts", fc).status == 201);
}

GatewayConfig in_process() {
  GatewayConfig c;
  c.port = 0;
  return c;
}

}  // namespace

TEST_SUITE("gateway") {
  TEST_CASE("status mapping") {
    CHECK(status_for("protocol_error") == 409);
    CHECK(status_for("not_found") == 404);
    CHECK(status_for("parse_error") == 400);
    CHECK(status_for("validation_error") == 422);
    CHECK(status_for("infrastructure_error") == 500);
  }

  TEST_CASE("envelopes and unknown routes") {
    Gateway g(in_process());
    auto r = call(g, "GET", "/nothing");
    CHECK(r.status == 404);
    CHECK(r.body.contains("request_id"));
    CHECK(r.body["error"]["code"] == "not_found");
    CHECK(g.handle("GET", "/other/kg/stats", {}, "").status == 404);
    r = call(g, "GET", "/kg/stats");
    CHECK(r.status == 200);
    CHECK(r.body["payload"]["entities"] == 0);
    CHECK(g.handle("POST", "/api/v1/knowledge/components", {}, "{not json").status == 400);
  }

  TEST_CASE("knowledge endpoints and queries") {
    Gateway g(in_process());
    load_plant(g);
    CHECK(call(g, "POST", "/knowledge/component-sets", {{"name", "set"}, {"members", {"C_A"}}, {"verified_by", "C_A"}}).status ==
          201);
    CHECK(call(g, "POST", "/knowledge/components", {{"use_oscilloscope", true}}).status == 422);
    CHECK(call(g, "POST", "/knowledge/fault-contexts", {{"code", "X"}}).status == 422);

    auto r = call(g, "GET", "/kg/query/suspects", nullptr, {{"dtc", "P0500"}});
    REQUIRE(r.status == 200);
    CHECK(r.body["payload"]["suspects"][0]["component"] == "C_D");
    r = call(g, "GET", "/kg/query/symptoms", nullptr, {{"dtc", "P0500"}});
    CHECK(r.body["payload"]["symptoms"][0] == "speedometer inoperative");
    CHECK(call(g, "GET", "/kg/query/suspects", nullptr, {{"dtc", "P0501"}}).status == 404);
    CHECK(call(g, "GET", "/kg/query/suspects", nullptr, {{"dtc", "bad"}}).status == 422);
    CHECK(call(g, "GET", "/kg/query/suspects").status == 422);
    r = call(g, "GET", "/kg/components");
    CHECK(r.body["payload"].size() == 4);
  }

  TEST_CASE("export and import") {
    Gateway g(in_process());
    load_plant(g);
    const auto text = call(g, "GET", "/kg/export").body["payload"]["triples"].get<std::string>();
    Gateway h(in_process());
    CHECK(h.handle("POST", "/api/v1/kg/import", {}, text, "text/plain").status == 200);
    CHECK(oracle::isomorphic(g.graph(), h.graph()));
    const auto bad = h.handle("POST", "/api/v1/kg/import", {}, "<e1> <a> <Nope> .\n", "text/plain");
    CHECK(bad.status == 400);
    CHECK(json::parse(bad.body)["error"]["detail"]["line"] == 1);
    CHECK(oracle::isomorphic(g.graph(), h.graph()));
    CHECK(call(h, "POST", "/kg/import", {{"triples", text}}).status == 200);
    CHECK(call(h, "POST", "/kg/checkpoint").status == 422);
  }

  TEST_CASE("manual session over the dispatcher") {
    Gateway g(in_process());
    load_plant(g);
    auto r = call(g, "POST", "/sessions", {{"vehicle", {{"name", "car"}, {"vin", "VIN1"}}}, {"dtcs", {"P0500"}}});
    REQUIRE(r.status == 201);
    const std::string id = r.body["payload"]["id"];
    CHECK(r.body["payload"]["state"] == "AWAIT_MANUAL_RESULTS");

    r = call(g, "GET", "/sessions/" + id + "/actions");
    REQUIRE(r.body["payload"]["actions"].size() == 1);
    CHECK(r.body["payload"]["actions"][0]["component"] == "C_D");

    CHECK(call(g, "POST", "/sessions/" + id + "/manual-results", {{"component", "C_X"}, {"anomalous", true}}).status ==
          409);
    CHECK(call(g, "POST", "/sessions/" + id + "/oscillograms", {{"component", "C_D"}, {"values", {1, 2, 3}}}).status ==
          409);
    CHECK(call(g, "POST", "/sessions/" + id + "/finalize").status == 409);
    CHECK(call(g, "GET", "/sessions/" + id + "/report").status == 409);

    const std::map<std::string, bool> verdict{{"C_D", true}, {"C_A", true}, {"C_B", true}, {"C_C", false}};
    for (int i = 0; i < 10; ++i) {
      r = call(g, "GET", "/sessions/" + id + "/actions");
      if (r.body["payload"]["actions"].empty()) break;
      const std::string c = r.body["payload"]["actions"][0]["component"];
      REQUIRE(call(g, "POST", "/sessions/" + id + "/manual-results", {{"component", c}, {"anomalous", verdict.at(c)}})
                  .status == 201);
    }
    CHECK(call(g, "GET", "/sessions/" + id).body["payload"]["state"] == "REPORT");
    r = call(g, "POST", "/sessions/" + id + "/finalize");
    REQUIRE(r.status == 200);
    CHECK(r.body["payload"]["fault_paths"][0]["components"] == json{"C_B", "C_A", "C_D"});
    CHECK(call(g, "GET", "/sessions/" + id + "/report").body["payload"] == r.body["payload"]);
    CHECK(call(g, "POST", "/sessions/" + id + "/finalize").status == 409);
    CHECK(call(g, "GET", "/sessions/session-99").status == 404);
    CHECK(call(g, "POST", "/sessions", {{"vehicle", {{"name", "car"}}}}).status == 422);
    CHECK(call(g, "POST", "/sessions", {{"vehicle", {{"name", "car"}, {"vin", "V"}}}, {"batch", "some"}}).status == 422);
  }

  TEST_CASE("oscillogram upload produces a retrievable heatmap") {
    Gateway g(in_process());
    load_plant(g);
    g.register_model("C_D", fcn::FcnModel::initialize(fcn::Architecture::tiny(), 3), "tiny-3");
    auto r = call(g, "POST", "/sessions", {{"vehicle", {{"name", "car"}, {"vin", "VIN1"}}}, {"dtcs", {"P0500"}}});
    const std::string id = r.body["payload"]["id"];
    CHECK(r.body["payload"]["state"] == "AWAIT_MEASUREMENTS");

    // csv upload, with a header line
    std::string csv = "value\n";
    for (int i = 0; i < 40; ++i) csv += std::to_string((i % 7) * 0.5) + "\n";
    CHECK(g.handle("POST", "/api/v1/sessions/" + id + "/oscillograms", {}, csv, "text/csv").status == 422);
    CHECK(g.handle("POST", "/api/v1/sessions/" + id + "/oscillograms", {{"component", "C_D"}}, "1\nx\n", "text/csv")
              .status == 400);
    const auto up = g.handle("POST", "/api/v1/sessions/" + id + "/oscillograms", {{"component", "C_D"}}, csv, "text/csv");
    REQUIRE(up.status == 201);
    const auto payload = json::parse(up.body)["payload"];
    const std::string heatmap = payload["classification"]["heatmap_id"];
    CHECK(payload["heatmap"]["values"].size() == 40);

    r = call(g, "GET", "/heatmaps/" + heatmap, nullptr, {{"format", "svg"}});
    REQUIRE(r.status == 200);
    CHECK(r.body["payload"]["component"] == "C_D");
    CHECK(r.body["payload"]["svg"].get<std::string>().find("<svg") != std::string::npos);
    CHECK(call(g, "GET", "/heatmaps/e1").status == 404);
  }

  TEST_CASE("degenerate recordings are rejected without a state change") {
    Gateway g(in_process());
    load_plant(g);
    g.register_model("C_D", fcn::FcnModel::initialize(fcn::Architecture::tiny(), 3), "tiny-3");
    const std::string id = call(g, "POST", "/sessions", {{"vehicle", {{"name", "car"}, {"vin", "VIN1"}}}, {"dtcs", {"P0500"}}})
                               .body["payload"]["id"];
    const auto r = call(g, "POST", "/sessions/" + id + "/oscillograms",
                        {{"component", "C_D"}, {"values", std::vector<double>(32, 1.0)}});
    CHECK(r.status == 422);
    CHECK(r.body["error"]["code"] == "degenerate_series");
    CHECK(call(g, "GET", "/sessions/" + id).body["payload"]["state"] == "AWAIT_MEASUREMENTS");
  }

  TEST_CASE("checkpoint and reload") {
    const auto path = (std::filesystem::temp_directory_path() / "diagnostica_gateway_test.kg").string();
    std::filesystem::remove(path);
    {
      GatewayConfig c = in_process();
      c.kg_path = path;
      Gateway g(c);
      load_plant(g);
      CHECK(call(g, "POST", "/kg/checkpoint").status == 200);
    }
    GatewayConfig c = in_process();
    c.kg_path = path;
    Gateway g(c);
    CHECK(g.graph().component_names().size() == 4);
    std::filesystem::remove(path);
    GatewayConfig bad = in_process();
    bad.models = {{"C_A", "/nonexistent.json"}};
    CHECK_THROWS_AS(Gateway{bad}, ConfigError);
  }

  TEST_CASE("real HTTP transport") {
    Gateway g(in_process());
    g.start();
    REQUIRE(g.running());
    REQUIRE(g.port() > 0);
    httplib::Client cli("127.0.0.1", g.port());
    auto res = cli.Post("/api/v1/knowledge/components", R"({"name":"C_A","use_oscilloscope":false})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 201);
    res = cli.Get("/api/v1/kg/query/suspects?dtc=P0500");
    REQUIRE(res);
    CHECK(res->status == 404);
    CHECK(json::parse(res->body)["error"]["code"] == "not_found");
    res = cli.Get("/api/v1/kg/components");
    REQUIRE(res);
    CHECK(json::parse(res->body)["payload"][0]["name"] == "C_A");
    g.stop();
    g.stop();
    CHECK_FALSE(g.running());
  }
}
