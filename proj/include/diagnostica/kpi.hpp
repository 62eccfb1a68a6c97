#pragma once

// Bill-of-materials structure graph plus bookings (accounting) graph, and the
// per-material logistical balance computed across both:
//
//   balance(m) = inflow(m) + produced(m) - outflow(m) - consumed(m)
//                - sum over parents p of produced(p) * quantity(p -> m)
//
// Books that are consistent with the BOM balance to zero. Only direct parents
// contribute; there is no transitive roll-up over deeper BOM levels.

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "diagnostica/tabular.hpp"

namespace diagnostica::kpi {

struct Material {
  std::string id;
  std::optional<double> price;
};

struct BomEdge {
  std::string parent;
  std::string child;
  double quantity = 0.0;  // units of child per unit of parent
};

class StructureGraph {
 public:
  /// Adds or updates a material; a present price overrides an absent one.
  void add_material(const std::string& id, std::optional<double> price = std::nullopt);
  /// Quantities of repeated (parent, child) pairs are summed. quantity > 0.
  void add_edge(const std::string& parent, const std::string& child, double quantity);

  bool contains(std::string_view id) const { return materials_.find(id) != materials_.end(); }
  const std::map<std::string, Material, std::less<>>& materials() const noexcept { return materials_; }
  const std::vector<BomEdge>& edges() const noexcept { return edges_; }
  /// (parent, quantity) pairs of edges into `id`.
  std::vector<std::pair<std::string, double>> parents(std::string_view id) const;
  std::vector<std::pair<std::string, double>> children(std::string_view id) const;
  std::size_t degree(std::string_view id) const;

  /// Throws CycleError naming one cycle.
  void check_acyclic() const;

 private:
  std::map<std::string, Material, std::less<>> materials_;
  std::vector<BomEdge> edges_;
  std::map<std::pair<std::string, std::string>, std::size_t> edge_index_;
};

enum class BookingKind { production, consumption, inflow, outflow };

BookingKind parse_booking_kind(std::string_view text);
std::string_view to_string(BookingKind kind);

struct Booking {
  std::string material;
  BookingKind kind = BookingKind::inflow;
  double amount = 0.0;
  std::string shift;
  std::string storage_group;
  std::string cost_center_id;
  /// Material id not present in the structure graph.
  bool dangling = false;
};

struct BookingTotals {
  double produced = 0.0;
  double consumed = 0.0;
  double inflow = 0.0;
  double outflow = 0.0;
};

class AccountingGraph {
 public:
  void add(Booking booking);
  const std::vector<Booking>& bookings() const noexcept { return bookings_; }
  /// Zero totals for materials without bookings.
  BookingTotals totals(std::string_view material) const;

 private:
  std::vector<Booking> bookings_;
  std::map<std::string, BookingTotals, std::less<>> totals_;
};

struct Graphs {
  StructureGraph structure;
  AccountingGraph accounting;
  std::vector<std::string> warnings;  // dangling materials
};

/// structure CSV: parent,child,quantity,price_parent,price_child (an empty
/// child declares a standalone parent); bookings CSV:
/// material,kind,amount,shift,storage_group,cost_center_id.
Graphs load_graphs(std::istream& structure_csv, std::istream& bookings_csv);

struct KpiValue {
  std::string material;
  double balance = 0.0;
};

KpiValue compute_kpi(std::string_view material, const StructureGraph& sg, const AccountingGraph& ag);

/// All materials in id order; materials are evaluated in parallel.
std::vector<KpiValue> compute_all(const StructureGraph& sg, const AccountingGraph& ag);

enum class Granularity { material, booking_group };

struct FeatureOptions {
  Granularity granularity = Granularity::material;
  int price_bins = 3;
  int degree_bins = 3;
};

/// Token used for empty booking attributes so that e.g. storage_group=EMPTY is
/// a selectable pattern.
inline constexpr std::string_view kEmpty = "EMPTY";

struct FeatureTable {
  tabular::Dataset dataset;  // nominal features + numeric `balance`; target `abs_balance`
  std::vector<std::string> row_materials;
};

/// Nominal features shift, storage_group, cost_center_id (most frequent value
/// over the material's bookings at material granularity), price_band,
/// degree_band; numeric target |balance|.
FeatureTable kpi_feature_table(const StructureGraph& sg, const AccountingGraph& ag, const FeatureOptions& options = {});

}  // namespace diagnostica::kpi
