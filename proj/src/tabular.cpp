#include "diagnostica/tabular.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "diagnostica/errors.hpp"

namespace diagnostica::tabular {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_missing_token(std::string_view t) { return t.empty() || t == kMissing; }

std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return v;
}

std::optional<std::uint8_t> parse_label(std::string_view t) {
  if (t == "1" || t == "true" || t == "TRUE" || t == "yes" || t == "True") return 1;
  if (t == "0" || t == "false" || t == "FALSE" || t == "no" || t == "False") return 0;
  return std::nullopt;
}

}  // namespace

ColumnKind parse_column_kind(std::string_view text) {
  if (text == "nominal") return ColumnKind::nominal;
  if (text == "numeric") return ColumnKind::numeric;
  if (text == "target") return ColumnKind::target;
  if (text == "numeric_target") return ColumnKind::numeric_target;
  throw SchemaError("unknown column kind '" + std::string(text) + "'");
}

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::nominal: return "nominal";
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::target: return "target";
    case ColumnKind::numeric_target: return "numeric_target";
  }
  return "nominal";
}

// ---------------------------------------------------------------- Cover

Cover::Cover(std::size_t universe, bool filled)
    : universe_(universe), words_((universe + 63) / 64, filled ? ~std::uint64_t{0} : 0) {
  if (filled && universe % 64 != 0) {
    words_.back() = (std::uint64_t{1} << (universe % 64)) - 1;
  }
}

std::size_t Cover::count() const noexcept {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

Cover& Cover::operator&=(const Cover& other) {
  if (other.universe_ != universe_) throw ShapeError("cover universe mismatch");
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= other.words_[i];
  return *this;
}

std::vector<std::size_t> Cover::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < universe_; ++i)
    if (test(i)) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------- Dataset

std::optional<std::size_t> Dataset::attribute_index(std::string_view name) const {
  for (std::size_t i = 0; i < attributes_.size(); ++i)
    if (attributes_[i].name == name) return i;
  return std::nullopt;
}

const Attribute& Dataset::attribute(std::string_view name) const {
  auto idx = attribute_index(name);
  if (!idx) throw SchemaError("unknown attribute '" + std::string(name) + "'");
  return attributes_[*idx];
}

std::string_view Dataset::token(std::size_t row, std::size_t attr) const {
  auto c = codes_[attr][row];
  if (c == kMissingCode) return kMissing;
  return attributes_[attr].domain[static_cast<std::size_t>(c)];
}

DatasetBuilder& DatasetBuilder::nominal(std::string name, const std::vector<std::string>& tokens) {
  columns_.push_back({std::move(name), ColumnKind::nominal, tokens, {}});
  return *this;
}

DatasetBuilder& DatasetBuilder::numeric(std::string name, std::vector<double> values) {
  columns_.push_back({std::move(name), ColumnKind::numeric, {}, std::move(values)});
  return *this;
}

DatasetBuilder& DatasetBuilder::binary_target(std::string name, std::vector<std::uint8_t> labels) {
  if (has_numeric_ || has_binary_) throw SchemaError("only one target column is supported");
  target_name_ = std::move(name);
  binary_target_ = std::move(labels);
  has_binary_ = true;
  return *this;
}

DatasetBuilder& DatasetBuilder::numeric_target(std::string name, std::vector<double> values) {
  if (has_numeric_ || has_binary_) throw SchemaError("only one target column is supported");
  target_name_ = std::move(name);
  numeric_target_ = std::move(values);
  has_numeric_ = true;
  return *this;
}

Dataset DatasetBuilder::build() {
  Dataset ds;
  std::optional<std::size_t> rows;
  auto check_rows = [&](std::size_t n, const std::string& name) {
    if (!rows) rows = n;
    if (*rows != n) throw SchemaError("column '" + name + "' has " + std::to_string(n) + " rows, expected " + std::to_string(*rows));
  };
  std::set<std::string, std::less<>> names;
  for (const auto& col : columns_) {
    if (!names.insert(col.name).second) throw SchemaError("duplicate attribute name '" + col.name + "'");
    check_rows(col.kind == ColumnKind::nominal ? col.tokens.size() : col.values.size(), col.name);
  }
  if (has_binary_) check_rows(binary_target_.size(), target_name_);
  if (has_numeric_) check_rows(numeric_target_.size(), target_name_);
  if ((has_binary_ || has_numeric_) && names.contains(target_name_))
    throw SchemaError("target name '" + target_name_ + "' collides with an attribute");
  if (!rows || *rows == 0) throw FormatError(0, "dataset is empty: N >= 1 violated");
  ds.rows_ = *rows;

  for (auto& col : columns_) {
    Attribute attr{col.name, col.kind, {}};
    std::vector<std::int32_t> codes;
    std::vector<double> values;
    if (col.kind == ColumnKind::nominal) {
      std::set<std::string> domain;
      for (const auto& t : col.tokens)
        if (!is_missing_token(t)) domain.insert(t);
      attr.domain.assign(domain.begin(), domain.end());
      codes.reserve(col.tokens.size());
      for (const auto& t : col.tokens) {
        if (is_missing_token(t)) {
          codes.push_back(kMissingCode);
        } else {
          auto it = std::lower_bound(attr.domain.begin(), attr.domain.end(), t);
          codes.push_back(static_cast<std::int32_t>(it - attr.domain.begin()));
        }
      }
    } else {
      values = std::move(col.values);
    }
    ds.attributes_.push_back(std::move(attr));
    ds.codes_.push_back(std::move(codes));
    ds.values_.push_back(std::move(values));
  }
  ds.target_name_ = target_name_;
  ds.binary_target_ = std::move(binary_target_);
  ds.numeric_target_ = std::move(numeric_target_);
  for (auto v : ds.binary_target_)
    if (v > 1) throw SchemaError("binary target must be 0/1");
  return ds;
}

// ---------------------------------------------------------------- Pattern

std::string to_string(const Selector& sel) { return sel.attribute + "=" + sel.value; }

Pattern::Pattern(std::initializer_list<Selector> selectors) {
  for (const auto& s : selectors) add(s);
}

void Pattern::add(Selector sel) {
  for (const auto& s : selectors_)
    if (s.attribute == sel.attribute)
      throw ValidationError("pattern already constrains attribute '" + sel.attribute + "'");
  auto it = std::lower_bound(selectors_.begin(), selectors_.end(), sel);
  selectors_.insert(it, std::move(sel));
}

Pattern Pattern::with(Selector sel) const {
  Pattern p = *this;
  p.add(std::move(sel));
  return p;
}

bool Pattern::operator<(const Pattern& other) const {
  if (length() != other.length()) return length() < other.length();
  return selectors_ < other.selectors_;
}

std::string to_string(const Pattern& p) {
  if (p.empty()) return "{}";
  std::string out = "{";
  for (std::size_t i = 0; i < p.selectors().size(); ++i) {
    if (i) out += ", ";
    out += to_string(p.selectors()[i]);
  }
  return out + "}";
}

// ---------------------------------------------------------------- CSV

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  bool quoted_field = false;
  char c = 0;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
    quoted_field = false;
  };
  auto end_record = [&] {
    end_field();
    // a bare empty line is not a record
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started) {
          in_quotes = true;
          quoted_field = true;
          field_started = true;
        } else {
          field.push_back(c);
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (in.peek() == '\n') in.get(c);
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw FormatError(records.size(), "unterminated quoted field");
  if (field_started || quoted_field || !field.empty() || !record.empty()) end_record();
  return records;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

Schema parse_schema(std::string_view spec) {
  Schema schema;
  std::size_t pos = 0;
  while (pos < spec.size()) {
    auto comma = spec.find(',', pos);
    auto item = spec.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    auto colon = item.rfind(':');
    if (colon == std::string_view::npos) throw SchemaError("schema entry '" + std::string(item) + "' lacks ':kind'");
    schema.emplace(std::string(item.substr(0, colon)), parse_column_kind(item.substr(colon + 1)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return schema;
}

Dataset load_table(std::istream& in, const Schema& schema) {
  auto records = parse_csv(in);
  if (records.empty()) throw FormatError(0, "missing header row");
  const auto& header = records.front();
  for (const auto& [name, kind] : schema) {
    if (std::find(header.begin(), header.end(), name) == header.end())
      throw SchemaError("schema column '" + name + "' not in header");
  }
  const std::size_t rows = records.size() - 1;
  if (rows == 0) throw FormatError(0, "no data rows: N >= 1 violated");
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != header.size())
      throw FormatError(r, "row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                               " cells, header has " + std::to_string(header.size()));
  }

  DatasetBuilder builder;
  for (std::size_t c = 0; c < header.size(); ++c) {
    auto it = schema.find(header[c]);
    const ColumnKind kind = it == schema.end() ? ColumnKind::nominal : it->second;
    switch (kind) {
      case ColumnKind::nominal: {
        std::vector<std::string> tokens(rows);
        for (std::size_t r = 0; r < rows; ++r) tokens[r] = records[r + 1][c];
        builder.nominal(header[c], tokens);
        break;
      }
      case ColumnKind::numeric:
      case ColumnKind::numeric_target: {
        std::vector<double> values(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          const auto& cell = records[r + 1][c];
          if (is_missing_token(cell)) {
            if (kind == ColumnKind::numeric_target)
              throw FormatError(r + 1, "missing numeric target in row " + std::to_string(r + 1));
            values[r] = kNaN;
            continue;
          }
          auto v = parse_double(cell);
          if (!v) throw FormatError(r + 1, "row " + std::to_string(r + 1) + ": '" + cell + "' is not numeric");
          values[r] = *v;
        }
        if (kind == ColumnKind::numeric)
          builder.numeric(header[c], std::move(values));
        else
          builder.numeric_target(header[c], std::move(values));
        break;
      }
      case ColumnKind::target: {
        std::vector<std::uint8_t> labels(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          auto v = parse_label(records[r + 1][c]);
          if (!v) throw FormatError(r + 1, "row " + std::to_string(r + 1) + ": '" + records[r + 1][c] + "' is not a binary label");
          labels[r] = *v;
        }
        builder.binary_target(header[c], std::move(labels));
        break;
      }
    }
  }
  return builder.build();
}

Dataset load_table_file(const std::string& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(0, "cannot open '" + path + "'");
  return load_table(in, schema);
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

void write_table(std::ostream& out, const Dataset& ds) {
  const auto& attrs = ds.attributes();
  const bool has_target = ds.has_binary_target() || ds.has_numeric_target();
  for (std::size_t a = 0; a < attrs.size(); ++a) out << (a ? "," : "") << csv_escape(attrs[a].name);
  if (has_target) out << (attrs.empty() ? "" : ",") << csv_escape(ds.target_name());
  out << '\n';
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t a = 0; a < attrs.size(); ++a) {
      if (a) out << ',';
      if (attrs[a].kind == ColumnKind::nominal) {
        out << csv_escape(ds.token(r, a));
      } else {
        double v = ds.numeric(r, a);
        out << (std::isnan(v) ? std::string(kMissing) : format_number(v));
      }
    }
    if (has_target) {
      if (!attrs.empty()) out << ',';
      if (ds.has_binary_target())
        out << int(ds.binary_target()[r]);
      else
        out << format_number(ds.numeric_target()[r]);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------- discretize

namespace {

std::string interval_token(double lo, double hi, bool last) {
  return "[" + format_number(lo) + "," + format_number(hi) + (last ? "]" : ")");
}

}  // namespace

Discretized discretize(const Dataset& ds, std::string_view attribute, int bins, BinStrategy strategy) {
  auto idx = ds.attribute_index(attribute);
  if (!idx) throw SchemaError("unknown attribute '" + std::string(attribute) + "'");
  if (ds.attributes()[*idx].kind != ColumnKind::numeric)
    throw SchemaError("attribute '" + std::string(attribute) + "' is not numeric");
  if (bins < 2) throw ConfigError("discretize requires bins >= 2");

  const auto values = ds.values(*idx);
  std::vector<double> present;
  for (double v : values)
    if (!std::isnan(v)) present.push_back(v);
  std::sort(present.begin(), present.end());

  // Interior edges; bin i is [edge_i, edge_{i+1}), the last one closed.
  std::vector<double> edges;
  std::optional<std::string> warning;
  if (!present.empty()) {
    const double lo = present.front();
    const double hi = present.back();
    edges.push_back(lo);
    if (lo == hi) {
      warning = "constant column '" + std::string(attribute) + "': emitted a single bin";
    } else if (strategy == BinStrategy::equal_width) {
      const double width = (hi - lo) / bins;
      for (int i = 1; i < bins; ++i) edges.push_back(lo + width * i);
    } else {
      const std::size_t m = present.size();
      for (int j = 1; j < bins; ++j) {
        std::size_t pos = (static_cast<std::size_t>(j) * m + static_cast<std::size_t>(bins) - 1) / static_cast<std::size_t>(bins);
        if (pos == 0) continue;
        const double cut = present[pos - 1];
        auto next = std::upper_bound(present.begin(), present.end(), cut);
        if (next == present.end()) continue;
        const double boundary = cut + (*next - cut) / 2.0;
        if (boundary > edges.back()) edges.push_back(boundary);
      }
      if (edges.size() == 1) warning = "column '" + std::string(attribute) + "' yields a single equal-frequency bin";
    }
    edges.push_back(hi);
  }

  std::vector<std::string> tokens(ds.size());
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const double v = values[r];
    if (std::isnan(v)) {
      tokens[r] = std::string(kMissing);
      continue;
    }
    // edges.size() >= 2 here
    std::size_t bin = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end() - 1, v) - edges.begin());
    bin = std::clamp<std::size_t>(bin, 1, edges.size() - 1) - 1;
    const bool last = bin + 2 == edges.size();
    tokens[r] = interval_token(edges[bin], edges[bin + 1], last);
  }

  DatasetBuilder builder;
  for (std::size_t a = 0; a < ds.attributes().size(); ++a) {
    const auto& attr = ds.attributes()[a];
    if (a == *idx) {
      builder.nominal(attr.name, tokens);
    } else if (attr.kind == ColumnKind::nominal) {
      std::vector<std::string> col(ds.size());
      for (std::size_t r = 0; r < ds.size(); ++r) col[r] = std::string(ds.token(r, a));
      builder.nominal(attr.name, col);
    } else {
      auto v = ds.values(a);
      builder.numeric(attr.name, std::vector<double>(v.begin(), v.end()));
    }
  }
  if (ds.has_binary_target()) {
    auto t = ds.binary_target();
    builder.binary_target(ds.target_name(), {t.begin(), t.end()});
  }
  if (ds.has_numeric_target()) {
    auto t = ds.numeric_target();
    builder.numeric_target(ds.target_name(), {t.begin(), t.end()});
  }
  return {builder.build(), warning};
}

// ---------------------------------------------------------------- covers

bool matches(const Selector& sel, const Dataset& ds, std::size_t row) {
  auto idx = ds.attribute_index(sel.attribute);
  if (!idx || ds.attributes()[*idx].kind != ColumnKind::nominal) return false;
  auto c = ds.code(row, *idx);
  return c != kMissingCode && ds.attributes()[*idx].domain[static_cast<std::size_t>(c)] == sel.value;
}

Cover selector_cover(const Selector& sel, const Dataset& ds) {
  auto idx = ds.attribute_index(sel.attribute);
  if (!idx) throw SchemaError("unknown attribute '" + sel.attribute + "'");
  const auto& attr = ds.attributes()[*idx];
  if (attr.kind != ColumnKind::nominal) throw SchemaError("attribute '" + sel.attribute + "' is not nominal");
  Cover out(ds.size());
  auto it = std::lower_bound(attr.domain.begin(), attr.domain.end(), sel.value);
  if (it == attr.domain.end() || *it != sel.value) return out;
  const auto code = static_cast<std::int32_t>(it - attr.domain.begin());
  const auto codes = ds.codes(*idx);
  for (std::size_t r = 0; r < ds.size(); ++r)
    if (codes[r] == code) out.set(r);
  return out;
}

Cover cover(const Pattern& p, const Dataset& ds) {
  Cover out = Cover::all(ds.size());
  for (const auto& sel : p.selectors()) out &= selector_cover(sel, ds);
  return out;
}

}  // namespace diagnostica::tabular
