// kg import|export|stats|load, diagnose, serve

#include <csignal>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>

#include "cli.hpp"
#include "diagnostica/circuit.hpp"
#include "diagnostica/errors.hpp"
#include "diagnostica/gateway.hpp"
#include "diagnostica/kg.hpp"

namespace diagnostica::cli {

namespace {

kg::KnowledgeGraph open_graph(const std::string& path) {
  if (std::filesystem::exists(path)) return kg::KnowledgeGraph::load(path);
  return {};
}

std::string render_stats(const kg::Stats& s) {
  std::ostringstream out;
  out << s.entities << " entities, " << s.relations << " relations (revision " << s.revision << ")\n";
  for (const auto& [c, n] : s.by_concept) out << "  " << c << '\t' << n << '\n';
  return out.str();
}

std::vector<std::pair<std::string, std::string>> parse_models(const std::vector<std::string>& specs) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
      throw ConfigError("--model expects component=path, got '" + s + "'");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

void print_pending(const circuit::Session& s) {
  std::cout << "[" << circuit::to_string(s.state()) << "]";
  if (s.current_context()) std::cout << " context " << *s.current_context();
  std::cout << '\n';
  for (const auto& a : s.pending()) {
    std::cout << "  - " << circuit::to_string(a.kind) << ' ' << a.component << ": " << a.instruction << '\n';
    if (a.notice) std::cout << "    note: " << *a.notice << '\n';
  }
}

bool parse_yes_no(const std::string& word) {
  if (word == "yes" || word == "y" || word == "true" || word == "anomalous" || word == "1") return true;
  if (word == "no" || word == "n" || word == "false" || word == "regular" || word == "0") return false;
  throw ValidationError("expected yes|no, got '" + word + "'");
}

std::vector<double> read_numbers(const std::string& text) {
  std::vector<double> out;
  std::string cleaned = text;
  for (char& c : cleaned)
    if (c == ',' || c == ';' || c == '\t' || c == '\r') c = ' ';
  std::istringstream in(cleaned);
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::logic_error&) {
      if (out.empty()) continue;  // header
      throw FormatError(0, "not a number: '" + tok + "'");
    }
  }
  return out;
}

}  // namespace

void register_kg(CLI::App& app, Registry reg) {
  struct KgOpts {
    std::string kg, input, out = "-";
  };
  auto o = std::make_shared<KgOpts>();
  auto* kgcmd = app.add_subcommand("kg", "Knowledge graph import, export and statistics");
  kgcmd->require_subcommand(1);
  kgcmd->add_option("--kg", o->kg, "KG file (default $DIAGNOSTICA_KG)");

  auto* imp = kgcmd->add_subcommand("import", "Replace the KG file content with a triple file");
  imp->add_option("input", o->input, "Triple file ('-' for stdin)")->required();
  imp->callback([o, reg] {
    *reg.run = [o, reg] {
      std::istringstream in(read_file(o->input));
      const kg::KnowledgeGraph g = kg::KnowledgeGraph::import_triples(in);
      const std::string path = kg_path(o->kg);
      g.save(path);
      const auto stats = g.stats();
      nlohmann::json j = kg::to_json(stats);
      j["path"] = path;
      emit(*reg.globals, j, "imported into " + path + ": " + render_stats(stats));
      return 0;
    };
  });

  auto* exp = kgcmd->add_subcommand("export", "Write the KG as triples");
  exp->add_option("--out", o->out, "Output file ('-' for stdout)");
  exp->callback([o, reg] {
    *reg.run = [o] {
      const auto g = kg::KnowledgeGraph::load(kg_path(o->kg));
      std::ostringstream out;
      g.export_triples(out);
      write_file(o->out, out.str());
      return 0;
    };
  });

  auto* stats = kgcmd->add_subcommand("stats", "Entity and relation counts");
  stats->callback([o, reg] {
    *reg.run = [o, reg] {
      const auto g = open_graph(kg_path(o->kg));
      emit(*reg.globals, kg::to_json(g.stats()), render_stats(g.stats()));
      return 0;
    };
  });

  auto* load = kgcmd->add_subcommand("load", "Merge a knowledge document into the KG file");
  load->add_option("input", o->input, "JSON {components, fault_contexts, component_sets}")->required();
  load->callback([o, reg] {
    *reg.run = [o, reg] {
      const std::string path = kg_path(o->kg);
      auto g = open_graph(path);
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(read_file(o->input));
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(1, e.what());
      }
      gateway::load_knowledge(g, doc);
      g.save(path);
      emit(*reg.globals, kg::to_json(g.stats()), "merged into " + path + ": " + render_stats(g.stats()));
      return 0;
    };
  });

  struct DiagOpts {
    std::string kg, name, vin, batch = "same_priority";
    std::vector<std::string> dtcs, symptoms, models;
  };
  auto d = std::make_shared<DiagOpts>();
  auto* diag = app.add_subcommand("diagnose", "Line-interactive diagnosis session");
  diag->add_option("--kg", d->kg, "KG file (default $DIAGNOSTICA_KG)");
  diag->add_option("--name", d->name, "Vehicle name")->required();
  diag->add_option("--vin", d->vin, "Vehicle identification number")->required();
  diag->add_option("--dtc", d->dtcs, "Diagnostic trouble code (repeatable)");
  diag->add_option("--symptom", d->symptoms, "Observed symptom (repeatable)");
  diag->add_option("--model", d->models, "component=model-file (repeatable)");
  diag->add_option("--batch", d->batch, "same_priority|all")->check(CLI::IsMember({"same_priority", "all"}));
  diag->footer(
      "Commands on stdin:\n"
      "  osc <component> <file>      upload a recording (numbers separated by commas or newlines)\n"
      "  manual <component> yes|no   manual inspection result (yes = anomalous)\n"
      "  sensor yes|no               answer the sensor hypothesis (yes = sensor defective)\n"
      "  status | quit");
  diag->callback([d, reg] {
    *reg.run = [d, reg] {
      const std::string path = kg_path(d->kg);
      auto graph = open_graph(path);
      auto registry = std::make_shared<circuit::ModelRegistry>();
      for (const auto& [component, file] : parse_models(d->models)) registry->add_file(component, file);
      circuit::SessionOptions options;
      options.batch = d->batch == "all" ? circuit::BatchPolicy::all : circuit::BatchPolicy::same_priority;
      circuit::Session session("cli", graph, registry, {d->name, d->vin}, d->dtcs, d->symptoms, options);
      session.advance();
      print_pending(session);

      std::string line;
      while (!circuit::is_terminal(session.state()) && std::getline(std::cin, line)) {
        std::istringstream in(line);
        std::string cmd, a, b;
        in >> cmd >> a >> b;
        if (cmd.empty() || cmd[0] == '#') continue;
        try {
          if (cmd == "quit" || cmd == "exit") break;
          if (cmd == "status") {
            std::cout << session.status().dump(2) << '\n';
            continue;
          }
          if (cmd == "osc") {
            const auto r = session.submit_oscillogram(a, read_numbers(read_file(b)));
            std::cout << a << ": " << (r.anomalous ? "anomalous" : "regular") << " (uncertainty "
                      << r.uncertainty.value_or(0.0) << ")\n";
          } else if (cmd == "manual") {
            session.submit_manual_result(a, parse_yes_no(b));
          } else if (cmd == "sensor") {
            session.submit_manual_result(std::string(circuit::kSensorComponent), parse_yes_no(a));
          } else {
            std::cout << "unknown command '" << cmd << "'\n";
            continue;
          }
          session.advance();
        } catch (const Error& e) {
          std::cout << "error [" << e.code() << "]: " << e.what() << '\n';
        }
        print_pending(session);
      }
      if (!circuit::is_terminal(session.state())) {
        graph.save(path);
        std::cerr << "session ended in " << circuit::to_string(session.state()) << " without a result\n";
        return 1;
      }
      const auto report = session.finalize();
      graph.save(path);
      std::ostringstream text;
      text << "outcome: " << report["outcome"].get<std::string>() << '\n'
           << "conclusion: " << report["conclusion"].get<std::string>() << '\n';
      emit(*reg.globals, report, text.str());
      return 0;
    };
  });

  struct ServeOpts {
    std::string host = "127.0.0.1", kg;
    int port = 8080;
    std::vector<std::string> models;
  };
  auto s = std::make_shared<ServeOpts>();
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--host", s->host, "Bind address");
  serve->add_option("--port", s->port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--kg", s->kg, "KG file (default $DIAGNOSTICA_KG)");
  serve->add_option("--model", s->models, "component=model-file (repeatable)");
  serve->callback([s, reg] {
    *reg.run = [s] {
      gateway::GatewayConfig cfg;
      cfg.host = s->host;
      cfg.port = s->port;
      cfg.kg_path = kg_path(s->kg);
      cfg.models = parse_models(s->models);

      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);

      gateway::Gateway gw(cfg);
      gw.start();
      std::cout << "listening on http://" << cfg.host << ':' << gw.port() << gateway::kApiPrefix << std::endl;
      int sig = 0;
      sigwait(&set, &sig);
      gw.stop();
      std::cerr << "stopped; knowledge graph saved to " << *cfg.kg_path << '\n';
      return 0;
    };
  });
}

}  // namespace diagnostica::cli
