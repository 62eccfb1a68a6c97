#pragma once

// Answers every pending action of a session from fixed per-component verdicts
// until it reaches a terminal state.

#include <map>
#include <string>
#include <vector>

#include "diagnostica/circuit.hpp"

namespace driver {

inline void plant_knowledge(diagnostica::kg::KnowledgeGraph& g, bool cycle = false) {
  g.add_component({"C_B", true, cycle ? std::vector<std::string>{"C_D"} : std::vector<std::string>{}, std::nullopt});
  g.add_component({"C_C", true, {}, std::nullopt});
  g.add_component({"C_A", true, {"C_B"}, std::nullopt});
  g.add_component({"C_D", true, {"C_A", "C_C"}, std::nullopt});
  g.add_fault_context({"P0500", "Vehicle Speed Sensor Malfunction", {"speedometer inoperative"}, {{"C_D", 0}}});
}

/// Returns the order in which components were asked about.
inline std::vector<std::string> run(diagnostica::circuit::Session& s, const std::map<std::string, bool>& anomalous,
                                    std::size_t max_steps = 1000) {
  using namespace diagnostica::circuit;
  std::vector<std::string> asked;
  const std::vector<double> series(64, 0.0);
  for (std::size_t step = 0; step < max_steps && !is_terminal(s.state()); ++step) {
    s.advance();
    if (is_terminal(s.state()) || s.pending().empty()) continue;
    const PendingAction a = s.pending().front();
    asked.push_back(a.component);
    const auto it = anomalous.find(a.component);
    const bool verdict = it != anomalous.end() && it->second;
    if (a.kind == ActionKind::record_oscillogram)
      s.submit_oscillogram(a.component, series);
    else
      s.submit_manual_result(a.component, verdict);
  }
  return asked;
}

}  // namespace driver
