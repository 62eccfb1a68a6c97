#pragma once

// Tabular dataset model: typed columns, nominal selectors, conjunctive
// patterns and bitset covers. Datasets are immutable once built.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace diagnostica::tabular {

enum class ColumnKind { nominal, numeric, target, numeric_target };

ColumnKind parse_column_kind(std::string_view text);
std::string_view to_string(ColumnKind kind);

/// Column name -> kind. Header columns absent from the schema are nominal.
using Schema = std::map<std::string, ColumnKind, std::less<>>;

/// Reserved token for missing values; selectors never match it.
inline constexpr std::string_view kMissing = "MISSING";
inline constexpr std::int32_t kMissingCode = -1;

struct Attribute {
  std::string name;
  ColumnKind kind = ColumnKind::nominal;  // nominal or numeric
  std::vector<std::string> domain;        // sorted tokens, nominal only
};

/// Bitset over instance indices.
class Cover {
 public:
  Cover() = default;
  explicit Cover(std::size_t universe, bool filled = false);

  static Cover all(std::size_t universe) { return Cover(universe, true); }

  std::size_t universe() const noexcept { return universe_; }
  std::size_t count() const noexcept;
  bool test(std::size_t i) const noexcept { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(std::size_t i) noexcept { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }

  Cover& operator&=(const Cover& other);
  friend Cover operator&(Cover lhs, const Cover& rhs) { return lhs &= rhs; }
  bool operator==(const Cover&) const = default;

  std::span<const std::uint64_t> words() const noexcept { return words_; }
  std::span<std::uint64_t> words() noexcept { return words_; }
  std::vector<std::size_t> indices() const;

 private:
  std::size_t universe_ = 0;
  std::vector<std::uint64_t> words_;
};

class Dataset {
 public:
  std::size_t size() const noexcept { return rows_; }
  const std::vector<Attribute>& attributes() const noexcept { return attributes_; }
  std::optional<std::size_t> attribute_index(std::string_view name) const;
  const Attribute& attribute(std::string_view name) const;

  /// Nominal code at (row, attribute), `kMissingCode` when missing.
  std::int32_t code(std::size_t row, std::size_t attr) const { return codes_[attr][row]; }
  std::string_view token(std::size_t row, std::size_t attr) const;
  /// Numeric value, NaN when missing.
  double numeric(std::size_t row, std::size_t attr) const { return values_[attr][row]; }
  std::span<const std::int32_t> codes(std::size_t attr) const { return codes_[attr]; }
  std::span<const double> values(std::size_t attr) const { return values_[attr]; }

  const std::string& target_name() const noexcept { return target_name_; }
  bool has_binary_target() const noexcept { return !binary_target_.empty(); }
  bool has_numeric_target() const noexcept { return !numeric_target_.empty(); }
  std::span<const std::uint8_t> binary_target() const noexcept { return binary_target_; }
  std::span<const double> numeric_target() const noexcept { return numeric_target_; }

 private:
  friend class DatasetBuilder;
  std::size_t rows_ = 0;
  std::vector<Attribute> attributes_;
  std::vector<std::vector<std::int32_t>> codes_;  // empty for numeric columns
  std::vector<std::vector<double>> values_;       // empty for nominal columns
  std::string target_name_;
  std::vector<std::uint8_t> binary_target_;
  std::vector<double> numeric_target_;
};

/// Assembles a Dataset column by column; `build()` validates the invariants.
class DatasetBuilder {
 public:
  /// Tokens equal to `kMissing` (or empty) become missing.
  DatasetBuilder& nominal(std::string name, const std::vector<std::string>& tokens);
  DatasetBuilder& numeric(std::string name, std::vector<double> values);
  DatasetBuilder& binary_target(std::string name, std::vector<std::uint8_t> labels);
  DatasetBuilder& numeric_target(std::string name, std::vector<double> values);
  Dataset build();

 private:
  struct PendingColumn {
    std::string name;
    ColumnKind kind;
    std::vector<std::string> tokens;
    std::vector<double> values;
  };
  std::vector<PendingColumn> columns_;
  std::string target_name_;
  std::vector<std::uint8_t> binary_target_;
  std::vector<double> numeric_target_;
  bool has_binary_ = false;
  bool has_numeric_ = false;
};

struct Selector {
  std::string attribute;
  std::string value;

  auto operator<=>(const Selector&) const = default;
  bool operator==(const Selector&) const = default;
};

std::string to_string(const Selector& sel);

/// Conjunction of selectors, kept sorted by (attribute, value); at most one
/// selector per attribute.
class Pattern {
 public:
  Pattern() = default;
  Pattern(std::initializer_list<Selector> selectors);

  /// Throws ValidationError when the attribute is already constrained.
  void add(Selector sel);
  Pattern with(Selector sel) const;

  std::size_t length() const noexcept { return selectors_.size(); }
  bool empty() const noexcept { return selectors_.empty(); }
  const std::vector<Selector>& selectors() const noexcept { return selectors_; }

  bool operator==(const Pattern&) const = default;
  /// Shorter first, then lexicographic over the sorted selector list.
  bool operator<(const Pattern& other) const;

 private:
  std::vector<Selector> selectors_;
};

std::string to_string(const Pattern& p);

/// CSV (RFC 4180) -> Dataset.
Dataset load_table(std::istream& in, const Schema& schema);
Dataset load_table_file(const std::string& path, const Schema& schema);
/// Writes attributes then target as CSV with a header row.
void write_table(std::ostream& out, const Dataset& ds);

/// Parses "name:kind,name:kind" sidecar specs as used by the CLI.
Schema parse_schema(std::string_view spec);

/// RFC 4180 record reader. Handles quoted fields, doubled quotes and CRLF.
std::vector<std::vector<std::string>> parse_csv(std::istream& in);
std::string csv_escape(std::string_view field);

enum class BinStrategy { equal_width, equal_frequency };

struct Discretized {
  Dataset dataset;
  /// Set when the column was constant and a single bin was emitted.
  std::optional<std::string> warning;
};

/// Replaces a numeric attribute by nominal "[lo,hi)" interval tokens; the last
/// bin is closed. Returns a new dataset; the input is untouched.
Discretized discretize(const Dataset& ds, std::string_view attribute, int bins, BinStrategy strategy);

bool matches(const Selector& sel, const Dataset& ds, std::size_t row);

Cover selector_cover(const Selector& sel, const Dataset& ds);
Cover cover(const Pattern& p, const Dataset& ds);

/// Shortest round-trip decimal rendering used for interval tokens.
std::string format_number(double value);

}  // namespace diagnostica::tabular
