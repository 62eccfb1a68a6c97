#include "diagnostica/kpi.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <tuple>

#include "diagnostica/errors.hpp"

namespace diagnostica::kpi {

// ---------------------------------------------------------------- structure

void StructureGraph::add_material(const std::string& id, std::optional<double> price) {
  if (id.empty()) throw ValidationError("material id must not be empty");
  auto [it, inserted] = materials_.try_emplace(id, Material{id, price});
  if (!inserted && price) it->second.price = price;
}

void StructureGraph::add_edge(const std::string& parent, const std::string& child, double quantity) {
  if (!(quantity > 0.0) || !std::isfinite(quantity))
    throw ValidationError("BOM quantity for " + parent + " -> " + child + " must be > 0");
  add_material(parent);
  add_material(child);
  auto key = std::make_pair(parent, child);
  if (auto it = edge_index_.find(key); it != edge_index_.end()) {
    edges_[it->second].quantity += quantity;
    return;
  }
  edge_index_.emplace(key, edges_.size());
  edges_.push_back({parent, child, quantity});
}

std::vector<std::pair<std::string, double>> StructureGraph::parents(std::string_view id) const {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& e : edges_)
    if (e.child == id) out.emplace_back(e.parent, e.quantity);
  return out;
}

std::vector<std::pair<std::string, double>> StructureGraph::children(std::string_view id) const {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& e : edges_)
    if (e.parent == id) out.emplace_back(e.child, e.quantity);
  return out;
}

std::size_t StructureGraph::degree(std::string_view id) const {
  std::size_t d = 0;
  for (const auto& e : edges_) d += (e.parent == id) + (e.child == id);
  return d;
}

void StructureGraph::check_acyclic() const {
  std::map<std::string_view, std::vector<std::string_view>> adj;
  for (const auto& e : edges_) adj[e.parent].push_back(e.child);
  enum class Mark { none, active, done };
  std::map<std::string_view, Mark> mark;
  std::vector<std::string_view> stack;

  // iterative DFS keeping the active path in `stack`
  for (const auto& [root, unused] : materials_) {
    if (mark[root] != Mark::none) continue;
    std::vector<std::pair<std::string_view, std::size_t>> frames{{root, 0}};
    mark[root] = Mark::active;
    stack.assign(1, root);
    while (!frames.empty()) {
      auto& [node, next] = frames.back();
      const auto& succ = adj[node];
      if (next == succ.size()) {
        mark[node] = Mark::done;
        frames.pop_back();
        stack.pop_back();
        continue;
      }
      const std::string_view child = succ[next++];
      if (mark[child] == Mark::active) {
        auto from = std::find(stack.begin(), stack.end(), child);
        std::string cycle;
        for (auto it = from; it != stack.end(); ++it) cycle += std::string(*it) + " -> ";
        cycle += std::string(child);
        throw CycleError(cycle, "structure graph contains a cycle: " + cycle);
      }
      if (mark[child] == Mark::none) {
        mark[child] = Mark::active;
        stack.push_back(child);
        frames.emplace_back(child, 0);
      }
    }
  }
}

// ---------------------------------------------------------------- bookings

BookingKind parse_booking_kind(std::string_view text) {
  if (text == "production") return BookingKind::production;
  if (text == "consumption") return BookingKind::consumption;
  if (text == "inflow") return BookingKind::inflow;
  if (text == "outflow") return BookingKind::outflow;
  throw ValidationError("unknown booking kind '" + std::string(text) + "'");
}

std::string_view to_string(BookingKind kind) {
  switch (kind) {
    case BookingKind::production: return "production";
    case BookingKind::consumption: return "consumption";
    case BookingKind::inflow: return "inflow";
    case BookingKind::outflow: return "outflow";
  }
  return "inflow";
}

void AccountingGraph::add(Booking booking) {
  if (!(booking.amount >= 0.0) || !std::isfinite(booking.amount))
    throw ValidationError("booking amount must be finite and >= 0");
  auto& t = totals_[booking.material];
  switch (booking.kind) {
    case BookingKind::production: t.produced += booking.amount; break;
    case BookingKind::consumption: t.consumed += booking.amount; break;
    case BookingKind::inflow: t.inflow += booking.amount; break;
    case BookingKind::outflow: t.outflow += booking.amount; break;
  }
  bookings_.push_back(std::move(booking));
}

BookingTotals AccountingGraph::totals(std::string_view material) const {
  auto it = totals_.find(material);
  return it == totals_.end() ? BookingTotals{} : it->second;
}

// ---------------------------------------------------------------- loading

namespace {

struct Columns {
  std::vector<std::string> header;
  std::size_t index(std::string_view name, bool required) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      if (required) throw SchemaError("missing column '" + std::string(name) + "'");
      return std::numeric_limits<std::size_t>::max();
    }
    return static_cast<std::size_t>(it - header.begin());
  }
};

std::optional<double> number(std::string_view cell, std::size_t row) {
  if (cell.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size())
    throw FormatError(row, "row " + std::to_string(row) + ": '" + std::string(cell) + "' is not numeric");
  return v;
}

std::string cell_or_empty(const std::vector<std::string>& rec, std::size_t idx) {
  return idx < rec.size() ? rec[idx] : std::string();
}

}  // namespace

Graphs load_graphs(std::istream& structure_csv, std::istream& bookings_csv) {
  Graphs g;
  {
    auto rec = tabular::parse_csv(structure_csv);
    if (rec.empty()) throw FormatError(0, "structure CSV has no header");
    Columns cols{rec.front()};
    const auto ip = cols.index("parent", true), ic = cols.index("child", true), iq = cols.index("quantity", true);
    const auto ipp = cols.index("price_parent", false), ipc = cols.index("price_child", false);
    for (std::size_t r = 1; r < rec.size(); ++r) {
      if (rec[r].size() != cols.header.size()) throw FormatError(r, "ragged structure row " + std::to_string(r));
      const auto& row = rec[r];
      g.structure.add_material(row[ip], number(cell_or_empty(row, ipp), r));
      if (row[ic].empty()) continue;
      g.structure.add_material(row[ic], number(cell_or_empty(row, ipc), r));
      auto q = number(row[iq], r);
      if (!q) throw FormatError(r, "row " + std::to_string(r) + ": missing quantity");
      try {
        g.structure.add_edge(row[ip], row[ic], *q);
      } catch (const ValidationError& e) {
        throw FormatError(r, e.what());
      }
    }
    g.structure.check_acyclic();
  }
  {
    auto rec = tabular::parse_csv(bookings_csv);
    if (rec.empty()) throw FormatError(0, "bookings CSV has no header");
    Columns cols{rec.front()};
    const auto im = cols.index("material", true), ik = cols.index("kind", true), ia = cols.index("amount", true);
    const auto is = cols.index("shift", false), ig = cols.index("storage_group", false),
               icc = cols.index("cost_center_id", false);
    for (std::size_t r = 1; r < rec.size(); ++r) {
      if (rec[r].size() != cols.header.size()) throw FormatError(r, "ragged bookings row " + std::to_string(r));
      const auto& row = rec[r];
      Booking b;
      b.material = row[im];
      try {
        b.kind = parse_booking_kind(row[ik]);
      } catch (const ValidationError& e) {
        throw FormatError(r, e.what());
      }
      auto amount = number(row[ia], r);
      if (!amount || *amount < 0.0) throw FormatError(r, "row " + std::to_string(r) + ": amount must be >= 0");
      b.amount = *amount;
      b.shift = cell_or_empty(row, is);
      b.storage_group = cell_or_empty(row, ig);
      b.cost_center_id = cell_or_empty(row, icc);
      b.dangling = !g.structure.contains(b.material);
      if (b.dangling) g.warnings.push_back("booking row " + std::to_string(r) + " references unknown material '" + b.material + "'");
      g.accounting.add(std::move(b));
    }
  }
  return g;
}

// ---------------------------------------------------------------- KPI

KpiValue compute_kpi(std::string_view material, const StructureGraph& sg, const AccountingGraph& ag) {
  if (!sg.contains(material)) throw NotFoundError("unknown material '" + std::string(material) + "'");
  const auto own = ag.totals(material);
  double balance = own.inflow + own.produced - own.outflow - own.consumed;
  for (const auto& [parent, qty] : sg.parents(material)) balance -= ag.totals(parent).produced * qty;
  return {std::string(material), balance};
}

std::vector<KpiValue> compute_all(const StructureGraph& sg, const AccountingGraph& ag) {
  std::vector<std::string_view> ids;
  for (const auto& [id, m] : sg.materials()) ids.push_back(id);
  std::vector<KpiValue> out(ids.size());
  const auto n = static_cast<std::ptrdiff_t>(ids.size());
#pragma omp parallel for schedule(static) if (n > 256)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = compute_kpi(ids[static_cast<std::size_t>(i)], sg, ag);
  return out;
}

namespace {

std::string or_empty(const std::string& v) { return v.empty() ? std::string(kEmpty) : v; }

// Most frequent value, ties broken by the smaller token.
std::string mode(const std::map<std::string, std::size_t>& counts) {
  std::string best(kEmpty);
  std::size_t best_n = 0;
  for (const auto& [value, n] : counts)
    if (n > best_n) {
      best = value;
      best_n = n;
    }
  return best;
}

std::vector<std::string> band_tokens(std::vector<double> values, int bins, const char* name) {
  tabular::DatasetBuilder b;
  b.numeric(name, std::move(values));
  auto d = tabular::discretize(b.build(), name, bins, tabular::BinStrategy::equal_frequency);
  std::vector<std::string> out(d.dataset.size());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = std::string(d.dataset.token(r, 0));
  return out;
}

}  // namespace

FeatureTable kpi_feature_table(const StructureGraph& sg, const AccountingGraph& ag, const FeatureOptions& options) {
  const auto kpis = compute_all(sg, ag);
  std::map<std::string_view, double> balance;
  for (const auto& k : kpis) balance[k.material] = k.balance;

  std::vector<std::string> shift, storage, cost, rows;
  if (options.granularity == Granularity::material) {
    struct Counts {
      std::map<std::string, std::size_t> shift, storage, cost;
    };
    std::map<std::string_view, Counts> per;
    for (const auto& b : ag.bookings()) {
      if (b.dangling) continue;
      auto& c = per[b.material];
      ++c.shift[or_empty(b.shift)];
      ++c.storage[or_empty(b.storage_group)];
      ++c.cost[or_empty(b.cost_center_id)];
    }
    for (const auto& [id, m] : sg.materials()) {
      rows.push_back(id);
      auto it = per.find(id);
      shift.push_back(it == per.end() ? std::string(kEmpty) : mode(it->second.shift));
      storage.push_back(it == per.end() ? std::string(kEmpty) : mode(it->second.storage));
      cost.push_back(it == per.end() ? std::string(kEmpty) : mode(it->second.cost));
    }
  } else {
    std::map<std::tuple<std::string, std::string, std::string, std::string>, bool> groups;
    for (const auto& b : ag.bookings()) {
      if (b.dangling) continue;
      groups.emplace(std::make_tuple(b.material, or_empty(b.shift), or_empty(b.storage_group), or_empty(b.cost_center_id)), true);
    }
    for (const auto& [key, unused] : groups) {
      rows.push_back(std::get<0>(key));
      shift.push_back(std::get<1>(key));
      storage.push_back(std::get<2>(key));
      cost.push_back(std::get<3>(key));
    }
  }
  if (rows.empty()) throw ConfigError("feature table would be empty");

  std::vector<double> price(rows.size()), degree(rows.size()), signed_balance(rows.size()), target(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& m = sg.materials().find(rows[r])->second;
    price[r] = m.price.value_or(std::numeric_limits<double>::quiet_NaN());
    degree[r] = static_cast<double>(sg.degree(rows[r]));
    signed_balance[r] = balance[rows[r]];
    target[r] = std::abs(signed_balance[r]);
  }

  tabular::DatasetBuilder b;
  b.nominal("shift", shift)
      .nominal("storage_group", storage)
      .nominal("cost_center_id", cost)
      .nominal("price_band", band_tokens(price, options.price_bins, "price"))
      .nominal("degree_band", band_tokens(degree, options.degree_bins, "degree"))
      .numeric("balance", signed_balance)
      .numeric_target("abs_balance", target);
  return {b.build(), rows};
}

}  // namespace diagnostica::kpi
