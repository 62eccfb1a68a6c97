// train, cam

#include <charconv>
#include <iostream>
#include <memory>
#include <sstream>

#include "cli.hpp"
#include "diagnostica/cam.hpp"
#include "diagnostica/errors.hpp"
#include "diagnostica/fcn.hpp"
#include "diagnostica/tabular.hpp"

namespace diagnostica::cli {

namespace {

std::optional<double> number(std::string_view tok) {
  while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\r')) tok.remove_prefix(1);
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\r')) tok.remove_suffix(1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || ec != std::errc() || p != tok.data() + tok.size()) return std::nullopt;
  return v;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',' || c == ';' || c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty() || !out.empty()) out.push_back(cur);
  return out;
}

int parse_label(std::string_view tok, std::size_t row) {
  while (!tok.empty() && tok.back() == '\r') tok.remove_suffix(1);
  if (tok == "anomalous" || tok == "0") return fcn::kAnomalous;
  if (tok == "regular" || tok == "1") return fcn::kRegular;
  throw FormatError(row, "label must be anomalous|regular|0|1, got '" + std::string(tok) + "'");
}

/// One labeled series per row: label,v1,v2,...  A non-numeric first row is a header.
std::vector<fcn::LabeledSeries> read_labeled(const std::string& text) {
  std::vector<fcn::LabeledSeries> out;
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() < 2) throw FormatError(row, "expected label followed by values");
    if (row == 1 && !number(cells[1])) continue;
    fcn::LabeledSeries s;
    s.label = parse_label(cells[0], row);
    std::vector<double> raw;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      auto v = number(cells[i]);
      if (!v) throw FormatError(row, "not a number: '" + cells[i] + "'");
      raw.push_back(*v);
    }
    s.values = fcn::z_normalize(raw).values;
    out.push_back(std::move(s));
  }
  return out;
}

/// Every number in the file, in reading order; a non-numeric first line is skipped.
std::vector<double> read_series(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    for (const auto& cell : split_line(line)) {
      if (cell.empty() || cell == "\r") continue;
      auto v = number(cell);
      if (!v) {
        if (row == 1 && out.empty()) break;
        throw FormatError(row, "not a number: '" + cell + "'");
      }
      out.push_back(*v);
    }
  }
  return out;
}

}  // namespace

void register_neural(CLI::App& app, Registry reg) {
  struct TrainOpts {
    std::string data, out, arch = "tiny";
    bool synthetic = false;
    fcn::SyntheticConfig syn;
    std::size_t test_count = 0;
    fcn::TrainConfig cfg;
  };
  auto t = std::make_shared<TrainOpts>();
  auto* train = app.add_subcommand("train", "Train the 1D FCN classifier");
  train->add_option("--data", t->data, "CSV rows label,v1,...,vn (label anomalous|regular|0|1)");
  train->add_flag("--synthetic", t->synthetic, "Use generated flat-vs-spike series instead of --data");
  train->add_option("--count", t->syn.count, "Synthetic series count");
  train->add_option("--length", t->syn.length, "Synthetic series length");
  train->add_option("--spike-width", t->syn.spike_width, "Synthetic spike width");
  train->add_option("--data-seed", t->syn.seed, "Synthetic data seed");
  train->add_option("--test-count", t->test_count, "Evaluate on this many fresh synthetic series");
  train->add_option("--arch", t->arch, "tiny|standard")->check(CLI::IsMember({"tiny", "standard"}));
  train->add_option("--epochs", t->cfg.epochs, "Epochs")->check(CLI::PositiveNumber);
  train->add_option("--batch", t->cfg.batch_size, "Batch size")->check(CLI::PositiveNumber);
  train->add_option("--lr", t->cfg.learning_rate, "Learning rate");
  train->add_flag("!--constant-lr", t->cfg.cosine_decay, "Keep the learning rate fixed instead of cosine annealing");
  train->add_option("--seed", t->cfg.seed, "Initialisation and shuffling seed");
  train->add_option("--out", t->out, "Model file")->required();
  train->callback([t, reg] {
    *reg.run = [t, reg] {
      std::vector<fcn::LabeledSeries> data;
      if (t->synthetic)
        data = fcn::to_labeled(fcn::make_flat_vs_spike(t->syn));
      else if (!t->data.empty())
        data = read_labeled(read_file(t->data));
      else
        throw ConfigError("give --data or --synthetic");
      t->cfg.architecture = t->arch == "tiny" ? fcn::Architecture::tiny() : fcn::Architecture::standard();
      const auto result = fcn::train(t->cfg, data);
      fcn::save_model(result.model, t->out);
      nlohmann::json j{{"model", t->out},
                       {"series", data.size()},
                       {"training_accuracy", result.training_accuracy},
                       {"final_loss", result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()}};
      std::ostringstream text;
      text << "trained on " << data.size() << " series, training accuracy "
           << tabular::format_number(result.training_accuracy) << ", model written to " << t->out << '\n';
      if (t->test_count > 0) {
        auto cfg = t->syn;
        cfg.count = t->test_count;
        cfg.seed = t->syn.seed + 1;
        const auto test = fcn::to_labeled(fcn::make_flat_vs_spike(cfg));
        const double acc = fcn::accuracy(result.model, test);
        j["test_accuracy"] = acc;
        text << "test accuracy " << tabular::format_number(acc) << " on " << test.size() << " series\n";
      }
      emit(*reg.globals, j, text.str());
      return 0;
    };
  });

  struct CamOpts {
    std::string model, series, method = "both", svg, csv;
    std::optional<int> target;
  };
  auto c = std::make_shared<CamOpts>();
  auto* camcmd = app.add_subcommand("cam", "Classify a series and explain it with class activation maps");
  camcmd->add_option("--model", c->model, "Model file")->required();
  camcmd->add_option("--series", c->series, "Series file (numbers separated by commas or newlines)")->required();
  camcmd->add_option("--method", c->method, "grad-cam|hires-cam|both")
      ->check(CLI::IsMember({"grad-cam", "hires-cam", "both"}));
  camcmd->add_option("--target", c->target, "Class to explain (0 anomalous, 1 regular); default predicted");
  camcmd->add_option("--svg", c->svg, "Write an SVG overlay");
  camcmd->add_option("--csv", c->csv, "Write the overlay data as CSV");
  camcmd->callback([c, reg] {
    *reg.run = [c, reg] {
      const fcn::FcnModel model = fcn::load_model(c->model);
      const std::vector<double> raw = read_series(read_file(c->series));
      const auto z = fcn::z_normalize(raw);
      const auto p = fcn::predict(model, z.values);
      std::vector<cam::Heatmap> maps;
      if (c->method != "hires-cam") maps.push_back(cam::grad_cam(model, z.values, c->target));
      if (c->method != "grad-cam") maps.push_back(cam::hires_cam(model, z.values, c->target));

      nlohmann::json j{{"prediction", p.y == fcn::kAnomalous ? "anomalous" : "regular"},
                       {"probabilities", p.probabilities},
                       {"uncertainty", p.uncertainty},
                       {"heatmaps", nlohmann::json::array()}};
      std::ostringstream text;
      text << "prediction " << (p.y == fcn::kAnomalous ? "anomalous" : "regular") << " (p="
           << tabular::format_number(p.probabilities[static_cast<std::size_t>(p.y)]) << ")\n";
      for (const auto& h : maps) {
        auto hj = cam::to_json(h);
        hj["argmax"] = cam::argmax(h.values);
        j["heatmaps"].push_back(hj);
        text << cam::to_string(h.method) << " peak at index " << cam::argmax(h.values) << '\n';
      }
      if (!c->svg.empty() || !c->csv.empty()) {
        const auto report = cam::render_heatmap_report(raw, maps);
        if (!c->svg.empty()) write_file(c->svg, report.svg);
        if (!c->csv.empty()) write_file(c->csv, report.csv);
      }
      emit(*reg.globals, j, text.str());
      return 0;
    };
  });
}

}  // namespace diagnostica::cli
