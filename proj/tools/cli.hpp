#pragma once

#include <functional>
#include <iosfwd>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

namespace diagnostica::cli {

struct Globals {
  bool json = false;
};

/// Each register_* adds its subcommands and sets `run` callbacks that return
/// the process exit code.
using Runner = std::function<int()>;

struct Registry {
  Globals* globals = nullptr;
  Runner* run = nullptr;
};

void register_mining(CLI::App& app, Registry reg);
void register_scores(CLI::App& app, Registry reg);
void register_neural(CLI::App& app, Registry reg);
void register_kg(CLI::App& app, Registry reg);

std::string read_file(const std::string& path);
/// "-" writes to stdout.
void write_file(const std::string& path, const std::string& content);
/// Prints j with --json, otherwise the text.
void emit(const Globals& g, const nlohmann::json& j, const std::string& text);
/// Default KG file: --kg, else $DIAGNOSTICA_KG, else "diagnostica.kg".
std::string kg_path(const std::string& flag);

}  // namespace diagnostica::cli
