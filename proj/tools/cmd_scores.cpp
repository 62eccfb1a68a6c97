// scores learn|prune|refine|eval|infer

#include <iostream>
#include <memory>
#include <sstream>

#include "cli.hpp"
#include "diagnostica/errors.hpp"
#include "diagnostica/scoring.hpp"
#include "diagnostica/tabular.hpp"

namespace diagnostica::cli {

namespace {

struct ScoreOpts {
  std::string cases, rules, out = "-", context;
  double tau = 0.5, alpha = 0.05;
  bool prune_abnormality = false, prune_partition = false, prune_heuristic = false;
  int epochs = 10, folds = 10;
  std::vector<std::string> findings;
  std::size_t patterns = 0;
};

std::vector<scoring::Case> load_cases(const std::string& path) {
  std::istringstream in(read_file(path));
  return scoring::read_cases(in);
}

scoring::ScoreRuleBase load_rules(const std::string& path) {
  try {
    return scoring::rule_base_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("rule base '" + path + "': " + e.what());
  }
}

// {"abnormal": [{attribute, value, abnormal}], "finding_class": {attr: cls}, "diagnosis_class": {d: cls}}
scoring::PruneContext load_context(const std::string& path) {
  scoring::PruneContext ctx;
  if (path.empty()) return ctx;
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    for (const auto& a : j.value("abnormal", nlohmann::json::array()))
      ctx.abnormal[{a.at("attribute").get<std::string>(), a.at("value").get<std::string>()}] =
          a.at("abnormal").get<bool>();
    ctx.finding_class = j.value("finding_class", std::map<std::string, std::string>{});
    ctx.diagnosis_class = j.value("diagnosis_class", std::map<std::string, std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("prune context '" + path + "': " + e.what());
  }
  return ctx;
}

scoring::PruneOptions prune_options(const ScoreOpts& o) {
  return {o.prune_abnormality, o.prune_partition, o.prune_heuristic};
}

void add_prune_flags(CLI::App* cmd, ScoreOpts& o) {
  cmd->add_flag("--prune-abnormality", o.prune_abnormality, "Drop positive rules of normal findings");
  cmd->add_flag("--prune-partition", o.prune_partition, "Drop rules across partition classes");
  cmd->add_flag("--prune-heuristic", o.prune_heuristic, "Drop diagnoses without a positive rule");
  cmd->add_option("--context", o.context, "JSON with abnormal flags and partition classes");
}

std::string render_rules(const scoring::ScoreRuleBase& rb) {
  std::ostringstream out;
  for (const auto& r : rb.rules())
    out << r.finding.attribute << '=' << r.finding.value << " -> " << r.diagnosis << "  "
        << scoring::symbol(r.category) << '\n';
  out << rb.size() << " rule(s)\n";
  return out.str();
}

scoring::Finding parse_finding(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("finding '" + text + "' must be attribute=value");
  return {text.substr(0, eq), text.substr(eq + 1), false};
}

}  // namespace

void register_scores(CLI::App& app, Registry reg) {
  auto o = std::make_shared<ScoreOpts>();
  auto* scores = app.add_subcommand("scores", "Diagnostic scores: learn, prune, refine, evaluate, infer");
  scores->require_subcommand(1);

  auto* learn = scores->add_subcommand("learn", "Learn a rule base from labeled cases");
  learn->add_option("--cases", o->cases, "Cases (JSON lines)")->required();
  learn->add_option("--tau", o->tau, "Minimum |phi|");
  learn->add_option("--alpha", o->alpha, "Significance level (0 disables the test)");
  learn->add_option("--out", o->out, "Rule base file");
  add_prune_flags(learn, *o);
  learn->callback([o, reg] {
    *reg.run = [o, reg] {
      scoring::LearnConfig cfg;
      cfg.tau = o->tau;
      cfg.alpha = o->alpha;
      cfg.prune = prune_options(*o);
      cfg.context = load_context(o->context);
      const auto rb = scoring::learn_scores(load_cases(o->cases), cfg);
      const std::string text = scoring::to_json(rb).dump(2) + "\n";
      write_file(o->out, text);
      if (o->out != "-") emit(*reg.globals, {{"rules", rb.size()}, {"out", o->out}}, render_rules(rb));
      return 0;
    };
  });

  auto* prune = scores->add_subcommand("prune", "Apply knowledge-based pruning to a rule base");
  prune->add_option("--rules", o->rules, "Rule base file")->required();
  prune->add_option("--out", o->out, "Pruned rule base file");
  add_prune_flags(prune, *o);
  prune->callback([o, reg] {
    *reg.run = [o, reg] {
      const auto before = load_rules(o->rules);
      const auto after = scoring::prune(before, prune_options(*o), load_context(o->context));
      write_file(o->out, scoring::to_json(after).dump(2) + "\n");
      std::cerr << before.size() << " -> " << after.size() << " rule(s)\n";
      return 0;
    };
  });

  auto* refine = scores->add_subcommand("refine", "Perceptron-style category refinement");
  refine->add_option("--rules", o->rules, "Rule base file")->required();
  refine->add_option("--cases", o->cases, "Cases (JSON lines)")->required();
  refine->add_option("--epochs", o->epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  refine->add_option("--out", o->out, "Refined rule base file");
  refine->add_option("--patterns", o->patterns, "Also mine the top-k misclassification patterns");
  refine->callback([o, reg] {
    *reg.run = [o, reg] {
      const auto cases = load_cases(o->cases);
      const auto r = scoring::refine_perceptron(load_rules(o->rules), cases, o->epochs);
      write_file(o->out, scoring::to_json(r.rule_base).dump(2) + "\n");
      std::size_t wrong = 0;
      for (const auto& c : cases) wrong += scoring::misclassifies(r.rule_base, c) ? 1 : 0;
      nlohmann::json j{{"epochs_used", r.epochs_used}, {"misclassified", wrong}, {"cases", cases.size()}};
      std::ostringstream text;
      text << "epochs used: " << r.epochs_used << ", misclassified " << wrong << " of " << cases.size() << '\n';
      if (o->patterns > 0) {
        const auto p = scoring::find_misclassification_patterns(r.rule_base, cases, o->patterns);
        j["patterns"] = mining::to_json(p);
        for (const auto& x : p)
          text << "  " << tabular::to_string(x.pattern) << "  quality=" << tabular::format_number(x.quality) << '\n';
      }
      if (o->out == "-")
        std::cerr << text.str();
      else
        emit(*reg.globals, j, text.str());
      return 0;
    };
  });

  auto* eval = scores->add_subcommand("eval", "Cross-validated learning metrics");
  eval->add_option("--cases", o->cases, "Cases (JSON lines)")->required();
  eval->add_option("--tau", o->tau, "Minimum |phi|");
  eval->add_option("--alpha", o->alpha, "Significance level");
  eval->add_option("--folds", o->folds, "Number of folds")->check(CLI::Range(2, 1000000));
  add_prune_flags(eval, *o);
  eval->callback([o, reg] {
    *reg.run = [o, reg] {
      scoring::LearnConfig cfg;
      cfg.tau = o->tau;
      cfg.alpha = o->alpha;
      cfg.prune = prune_options(*o);
      cfg.context = load_context(o->context);
      const auto m = scoring::evaluate(cfg, load_cases(o->cases), o->folds);
      std::ostringstream text;
      text << "avg rules per diagnosis " << tabular::format_number(m.avg_rules) << " (sd "
           << tabular::format_number(m.avg_rules_stddev) << ")\nfindings used "
           << tabular::format_number(m.avg_findings_used) << "\ncategories per diagnosis "
           << tabular::format_number(m.avg_categories_per_diagnosis) << "\naccuracy "
           << tabular::format_number(m.accuracy) << '\n';
      emit(*reg.globals, scoring::to_json(m), text.str());
      return 0;
    };
  });

  auto* infer = scores->add_subcommand("infer", "Score findings against a rule base");
  infer->add_option("--rules", o->rules, "Rule base file")->required();
  infer->add_option("--finding", o->findings, "attribute=value (repeatable)");
  infer->add_option("--cases", o->cases, "Cases (JSON lines); scores every case");
  infer->callback([o, reg] {
    *reg.run = [o, reg] {
      const auto rb = load_rules(o->rules);
      std::vector<std::vector<scoring::Finding>> inputs;
      if (!o->cases.empty())
        for (auto& c : load_cases(o->cases)) inputs.push_back(std::move(c.findings));
      if (!o->findings.empty()) {
        std::vector<scoring::Finding> f;
        for (const auto& t : o->findings) f.push_back(parse_finding(t));
        inputs.push_back(std::move(f));
      }
      if (inputs.empty()) throw ValidationError("give --finding or --cases");
      nlohmann::json j = nlohmann::json::array();
      std::ostringstream text;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        nlohmann::json row = nlohmann::json::object();
        if (inputs.size() > 1) text << "case " << i + 1 << '\n';
        for (const auto& [d, s] : scoring::infer(rb, inputs[i])) {
          row[d] = {{"total", s.total}, {"status", scoring::to_string(s.status)}};
          text << "  " << d << '\t' << s.total << '\t' << scoring::to_string(s.status) << '\n';
        }
        j.push_back(row);
      }
      emit(*reg.globals, inputs.size() == 1 ? j[0] : j, text.str());
      return 0;
    };
  });
}

}  // namespace diagnostica::cli
