#include <cmath>
#include <sstream>

#include "diagnostica/errors.hpp"
#include "diagnostica/tabular.hpp"
#include "doctest.h"

using namespace diagnostica;
using namespace diagnostica::tabular;

namespace {

Dataset load(const std::string& csv, const Schema& schema = {}) {
  std::istringstream in(csv);
  return load_table(in, schema);
}

}  // namespace

TEST_SUITE("tabular") {
  TEST_CASE("csv reader handles quotes, doubled quotes and CRLF") {
    std::istringstream in("a,b\r\n\"x,1\",\"say \"\"hi\"\"\"\r\nplain,\n");
    const auto rec = parse_csv(in);
    REQUIRE(rec.size() == 3);
    CHECK(rec[1][0] == "x,1");
    CHECK(rec[1][1] == "say \"hi\"");
    CHECK(rec[2] == std::vector<std::string>{"plain", ""});
    CHECK(csv_escape("a,b") == "\"a,b\"");
    CHECK(csv_escape("q\"") == "\"q\"\"\"");
    CHECK(csv_escape("plain") == "plain");
  }

  TEST_CASE("unterminated quote is a format error") {
    std::istringstream in("a\n\"open\n");
    CHECK_THROWS_AS(parse_csv(in), FormatError);
  }

  TEST_CASE("schema kinds and target detection") {
    const auto ds = load("A,x,T\na1,1.5,1\na2,MISSING,0\n", parse_schema("x:numeric,T:target"));
    CHECK(ds.size() == 2);
    CHECK(ds.attributes().size() == 2);
    CHECK(ds.attribute("A").kind == ColumnKind::nominal);
    CHECK(ds.attribute("x").kind == ColumnKind::numeric);
    CHECK(std::isnan(ds.numeric(1, *ds.attribute_index("x"))));
    CHECK(ds.has_binary_target());
    CHECK(ds.target_name() == "T");
    CHECK(ds.binary_target()[0] == 1);
    CHECK(ds.binary_target()[1] == 0);
  }

  TEST_CASE("binary labels accept yes/no and true/false") {
    const auto ds = load("A,T\na,yes\nb,false\n", parse_schema("T:target"));
    CHECK(ds.binary_target()[0] == 1);
    CHECK(ds.binary_target()[1] == 0);
  }

  TEST_CASE("errors carry rows") {
    try {
      load("A,T\na,1\nb\n", parse_schema("T:target"));
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.row() == 2);
    }
    try {
      load("A,T\na,1\nb,maybe\n", parse_schema("T:target"));
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.row() == 2);
    }
    CHECK_THROWS_AS(load("A,T\n", parse_schema("T:target")), FormatError);
    CHECK_THROWS_AS(load("A,T\na,1\n", parse_schema("Z:target")), SchemaError);
    CHECK_THROWS_AS(parse_schema("x:weird"), SchemaError);
    CHECK_THROWS_AS(parse_schema("x"), SchemaError);
  }

  TEST_CASE("builder validates shapes and names") {
    CHECK_THROWS_AS(DatasetBuilder().nominal("a", {"x", "y"}).nominal("b", {"x"}).build(), SchemaError);
    CHECK_THROWS_AS(DatasetBuilder().nominal("a", {"x"}).nominal("a", {"y"}).build(), SchemaError);
    CHECK_THROWS_AS(DatasetBuilder().nominal("a", {"x"}).binary_target("a", {1}).build(), SchemaError);
    CHECK_THROWS_AS(DatasetBuilder().binary_target("t", {2}).nominal("a", {"x"}).build(), SchemaError);
    CHECK_THROWS_AS(DatasetBuilder().binary_target("t", {1}).numeric_target("u", {1.0}), SchemaError);
  }

  TEST_CASE("missing values never match a selector") {
    const auto ds = DatasetBuilder().nominal("A", {"x", "MISSING", "", "x"}).binary_target("T", {1, 0, 0, 1}).build();
    CHECK(ds.code(1, 0) == kMissingCode);
    CHECK(ds.code(2, 0) == kMissingCode);
    const auto c = selector_cover({"A", "x"}, ds);
    CHECK(c.count() == 2);
    CHECK(c.indices() == std::vector<std::size_t>{0, 3});
    CHECK_FALSE(matches({"A", "MISSING"}, ds, 1));
    CHECK(ds.attribute("A").domain == std::vector<std::string>{"x"});
  }

  TEST_CASE("patterns stay sorted and reject a repeated attribute") {
    Pattern p{{"B", "b1"}, {"A", "a1"}};
    REQUIRE(p.length() == 2);
    CHECK(p.selectors()[0].attribute == "A");
    CHECK(to_string(p) == "{A=a1, B=b1}");
    CHECK_THROWS_AS(p.add({"A", "a2"}), ValidationError);
    CHECK(Pattern{{"Z", "z"}} < p);
    CHECK(Pattern{{"A", "a1"}} < Pattern{{"A", "a2"}});
    CHECK_FALSE(p < p);
  }

  TEST_CASE("pattern cover is the intersection of selector covers") {
    const auto ds = load("A,B,T\na1,b1,1\na1,b2,1\na2,b1,0\na1,b1,0\n", parse_schema("T:target"));
    const auto c = cover(Pattern{{"A", "a1"}, {"B", "b1"}}, ds);
    CHECK(c.indices() == std::vector<std::size_t>{0, 3});
    CHECK(cover(Pattern{}, ds).count() == 4);
    CHECK_THROWS_AS(selector_cover({"Q", "x"}, ds), SchemaError);
  }

  TEST_CASE("cover bit operations across word boundaries") {
    Cover a(130), b(130);
    for (std::size_t i = 0; i < 130; i += 2) a.set(i);
    for (std::size_t i = 0; i < 130; i += 3) b.set(i);
    const Cover c = a & b;
    std::size_t expected = 0;
    for (std::size_t i = 0; i < 130; ++i) expected += (i % 6 == 0);
    CHECK(c.count() == expected);
    CHECK(Cover::all(130).count() == 130);
    CHECK_THROWS_AS(a &= Cover(10), ShapeError);
  }

  TEST_CASE("equal-width discretization closes the last bin") {
    const auto ds = DatasetBuilder().numeric("x", {0, 1, 2, 3, 4}).binary_target("T", {0, 1, 0, 1, 0}).build();
    const auto r = discretize(ds, "x", 2, BinStrategy::equal_width);
    CHECK_FALSE(r.warning);
    const auto& d = r.dataset;
    const auto a = *d.attribute_index("x");
    CHECK(d.attribute("x").kind == ColumnKind::nominal);
    CHECK(d.token(0, a) == "[0,2)");
    CHECK(d.token(2, a) == "[2,4]");
    CHECK(d.token(4, a) == "[2,4]");
    CHECK(d.has_binary_target());
    // input untouched
    CHECK(ds.attribute("x").kind == ColumnKind::numeric);
  }

  TEST_CASE("equal-frequency discretization and constant columns") {
    const auto ds = DatasetBuilder().numeric("x", {1, 1, 2, 2, 9, 9}).numeric_target("y", {0, 0, 0, 0, 0, 0}).build();
    const auto r = discretize(ds, "x", 3, BinStrategy::equal_frequency);
    const auto a = *r.dataset.attribute_index("x");
    CHECK(r.dataset.attribute("x").domain.size() == 3);
    CHECK(r.dataset.token(0, a) == r.dataset.token(1, a));
    CHECK(r.dataset.token(1, a) != r.dataset.token(2, a));

    const auto flat = DatasetBuilder().numeric("x", {5, 5, 5}).numeric_target("y", {1, 2, 3}).build();
    const auto f = discretize(flat, "x", 4, BinStrategy::equal_width);
    REQUIRE(f.warning);
    CHECK(f.dataset.attribute("x").domain.size() == 1);
    CHECK_THROWS_AS(discretize(flat, "x", 1, BinStrategy::equal_width), ConfigError);
    CHECK_THROWS_AS(discretize(flat, "nope", 2, BinStrategy::equal_width), SchemaError);
  }

  TEST_CASE("write_table round-trips") {
    const auto ds = load("A,x,T\n\"a,1\",0.5,1\nb,2,0\n", parse_schema("x:numeric,T:target"));
    std::ostringstream out;
    write_table(out, ds);
    const auto back = load(out.str(), parse_schema("x:numeric,T:target"));
    CHECK(back.size() == 2);
    CHECK(back.token(0, 0) == "a,1");
    CHECK(back.numeric(1, 1) == 2.0);
    CHECK(back.binary_target()[0] == 1);
  }

  TEST_CASE("format_number is shortest round-trip") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(2.0) == "2");
    CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
  }
}
