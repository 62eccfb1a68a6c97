#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cli.hpp"
#include "diagnostica/errors.hpp"

namespace diagnostica::cli {

std::string read_file(const std::string& path) {
  if (path == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InfrastructureError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  if (path == "-" || path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InfrastructureError("cannot write '" + path + "'");
  out << content;
  if (!out) throw InfrastructureError("write to '" + path + "' failed");
}

void emit(const Globals& g, const nlohmann::json& j, const std::string& text) {
  if (g.json)
    std::cout << j.dump(2) << '\n';
  else
    std::cout << text;
}

std::string kg_path(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("DIAGNOSTICA_KG"); env && *env) return env;
  return "diagnostica.kg";
}

}  // namespace diagnostica::cli

int main(int argc, char** argv) {
  using namespace diagnostica;
  CLI::App app{"Anomaly detection and fault diagnosis workbench", "diagnostica"};
  app.require_subcommand(1);
  cli::Globals globals;
  cli::Runner run;
  app.add_flag("--json", globals.json, "Machine-readable JSON output");
  const cli::Registry reg{&globals, &run};
  cli::register_mining(app, reg);
  cli::register_scores(app, reg);
  cli::register_neural(app, reg);
  cli::register_kg(app, reg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  if (!run) {
    std::cerr << app.help();
    return 2;
  }
  try {
    return run();
  } catch (const Error& e) {
    if (globals.json)
      std::cout << nlohmann::json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump(2) << '\n';
    std::cerr << "error [" << e.code() << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
