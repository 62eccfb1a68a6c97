// discover, kpi compute

#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "cli.hpp"
#include "diagnostica/errors.hpp"
#include "diagnostica/kpi.hpp"
#include "diagnostica/mining.hpp"
#include "diagnostica/tabular.hpp"

namespace diagnostica::cli {

namespace {

std::string render_patterns(const std::vector<mining::RankedPattern>& results) {
  std::ostringstream out;
  std::size_t rank = 1;
  for (const auto& r : results) {
    out << rank++ << ". " << tabular::to_string(r.pattern) << "  quality=" << tabular::format_number(r.quality)
        << "  n_p=" << r.stats.n_p;
    if (r.stats.numeric)
      out << "  mu_p=" << tabular::format_number(r.stats.mu_p);
    else if (auto t = r.stats.t_p())
      out << "  t_p=" << tabular::format_number(*t);
    if (r.p_value) out << "  p=" << tabular::format_number(*r.p_value);
    out << '\n';
  }
  if (results.empty()) out << "no subgroup found\n";
  return out.str();
}

/// Re-serialises the CSV without the ignored columns.
std::string drop_columns(const std::string& csv, const std::vector<std::string>& ignore) {
  if (ignore.empty()) return csv;
  std::istringstream in(csv);
  const auto records = tabular::parse_csv(in);
  if (records.empty()) return csv;
  std::vector<bool> keep(records.front().size(), true);
  for (const auto& name : ignore) {
    auto it = std::find(records.front().begin(), records.front().end(), name);
    if (it == records.front().end()) throw SchemaError("--ignore: no column '" + name + "'");
    keep[static_cast<std::size_t>(it - records.front().begin())] = false;
  }
  std::ostringstream out;
  for (const auto& row : records) {
    bool first = true;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c < keep.size() && !keep[c]) continue;
      if (!first) out << ',';
      out << tabular::csv_escape(row[c]);
      first = false;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace

void register_mining(CLI::App& app, Registry reg) {
  struct DiscoverOpts {
    std::string data, schema, measure = "ps";
    std::size_t k = 10, max_depth = 2, min_size = 1;
    int bins = 0;
    std::vector<std::string> ignore;
  };
  auto d = std::make_shared<DiscoverOpts>();
  auto* discover = app.add_subcommand("discover", "Top-k subgroup discovery on a CSV table");
  discover->add_option("data", d->data, "CSV file ('-' for stdin)")->required();
  discover->add_option("--schema", d->schema, "Column kinds, e.g. A:nominal,x:numeric,T:target");
  discover->add_option("--measure", d->measure, "ps|binomial|gain|chi2|mean")
      ->check(CLI::IsMember({"ps", "binomial", "gain", "chi2", "mean"}));
  discover->add_option("--k", d->k, "Number of subgroups")->check(CLI::PositiveNumber);
  discover->add_option("--max-depth", d->max_depth, "Maximum selectors per pattern")->check(CLI::PositiveNumber);
  discover->add_option("--min-size", d->min_size, "Minimum subgroup size");
  discover->add_option("--ignore", d->ignore, "Columns to leave out")->delimiter(',');
  discover->add_option("--bins", d->bins, "Equal-frequency bins for numeric attributes (0 = skip them)");
  discover->callback([d, reg] {
    *reg.run = [d, reg] {
      const tabular::Schema schema = d->schema.empty() ? tabular::Schema{} : tabular::parse_schema(d->schema);
      std::istringstream in(drop_columns(read_file(d->data), d->ignore));
      tabular::Dataset ds = tabular::load_table(in, schema);
      if (d->bins > 0) {
        std::vector<std::string> numeric;
        for (const auto& a : ds.attributes())
          if (a.kind == tabular::ColumnKind::numeric) numeric.push_back(a.name);
        for (const auto& name : numeric) {
          auto r = tabular::discretize(ds, name, d->bins, tabular::BinStrategy::equal_frequency);
          if (r.warning) std::cerr << "warning: " << *r.warning << '\n';
          ds = std::move(r.dataset);
        }
      }
      mining::MiningTask task;
      task.dataset = &ds;
      task.measure.kind = mining::parse_measure(d->measure);
      task.measure.min_size = d->min_size;
      task.k = d->k;
      task.max_depth = d->max_depth;
      task.min_size = d->min_size;
      const auto results = mining::discover_top_k(task);
      emit(*reg.globals, mining::to_json(results), render_patterns(results));
      return 0;
    };
  });

  struct KpiOpts {
    std::string structure, bookings, out;
    std::string granularity = "material";
    std::size_t discover = 0;
  };
  auto o = std::make_shared<KpiOpts>();
  auto* kpi = app.add_subcommand("kpi", "Material balance KPIs from structure and booking graphs");
  kpi->require_subcommand(1);
  auto* compute = kpi->add_subcommand("compute", "Compute balances and the feature table");
  compute->add_option("--structure", o->structure, "Structure CSV")->required();
  compute->add_option("--bookings", o->bookings, "Bookings CSV")->required();
  compute->add_option("--out", o->out, "Feature table CSV to write");
  compute->add_option("--granularity", o->granularity, "material|booking_group")
      ->check(CLI::IsMember({"material", "booking_group"}));
  compute->add_option("--discover", o->discover, "Also report the top-k mean-shift subgroups");
  compute->callback([o, reg] {
    *reg.run = [o, reg] {
      std::ifstream s(o->structure), b(o->bookings);
      if (!s) throw InfrastructureError("cannot read '" + o->structure + "'");
      if (!b) throw InfrastructureError("cannot read '" + o->bookings + "'");
      const kpi::Graphs g = kpi::load_graphs(s, b);
      for (const auto& w : g.warnings) std::cerr << "warning: " << w << '\n';
      const auto values = kpi::compute_all(g.structure, g.accounting);

      kpi::FeatureOptions fo;
      fo.granularity = o->granularity == "material" ? kpi::Granularity::material : kpi::Granularity::booking_group;
      const kpi::FeatureTable table = kpi::kpi_feature_table(g.structure, g.accounting, fo);
      if (!o->out.empty()) {
        std::ostringstream csv;
        tabular::write_table(csv, table.dataset);
        write_file(o->out, csv.str());
      }

      nlohmann::json j{{"balances", nlohmann::json::array()}, {"warnings", g.warnings}};
      std::ostringstream text;
      for (const auto& v : values) {
        j["balances"].push_back({{"material", v.material}, {"balance", v.balance}});
        text << v.material << '\t' << tabular::format_number(v.balance) << '\n';
      }
      if (o->discover > 0) {
        mining::MiningTask task;
        task.dataset = &table.dataset;
        task.measure.kind = mining::MeasureKind::mean_shift;
        task.k = o->discover;
        task.max_depth = 2;
        const auto results = mining::discover_top_k(task);
        j["subgroups"] = mining::to_json(results);
        text << "\nmean-shift subgroups of |balance|:\n" << render_patterns(results);
      }
      emit(*reg.globals, j, text.str());
      return 0;
    };
  });
}

}  // namespace diagnostica::cli
