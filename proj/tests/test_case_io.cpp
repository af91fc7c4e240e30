#include <doctest.h>

#include "gridnn/case_io.hpp"
#include "test_helpers.hpp"

using namespace gridnn;
using namespace gridnn::testing;

TEST_CASE("minimal native 2-bus case parses") {
  ParseResult cr = load_case("case2.json");
  CHECK(cr.net.n_buses() == 2);
  CHECK(cr.net.n_branches() == 1);
  CHECK(cr.net.ref_bus() == 0);
  CHECK(cr.net.buses[1].p_demand == doctest::Approx(0.5));
  REQUIRE(cr.anchor.has_value());
  CHECK(cr.anchor->v[0] == 1.0);
}

TEST_CASE("IEEE 14-bus MATPOWER subset parses to N=14, L=20") {
  ParseResult cr = load_case("case14.m");
  const Network& net = cr.net;
  CHECK(net.n_buses() == 14);
  CHECK(net.n_branches() == 20);
  CHECK(net.base_mva == 100.0);
  CHECK(net.ref_bus() == 0);

  // Generator aggregation: bus 1 keeps its injection bounds (no demand).
  CHECK(net.buses[0].p_max == doctest::Approx(3.324));
  CHECK(net.buses[0].p_min == doctest::Approx(0.0));
  CHECK(net.buses[0].cost_lin == doctest::Approx(20.0 * 100.0));
  // Bus 2 subtracts demand from generator bounds.
  CHECK(net.buses[1].p_max == doctest::Approx(1.4 - 0.217));
  CHECK(net.buses[1].p_min == doctest::Approx(-0.217));
  // Load-only bus 4 is a fixed injection.
  CHECK(net.buses[3].p_min == doctest::Approx(-0.478));
  CHECK(net.buses[3].p_max == doctest::Approx(-0.478));
  CHECK(net.buses[3].q_min == doctest::Approx(0.039));

  // Quadratic gencost terms dropped with a warning.
  bool warned = false;
  for (const auto& w : cr.warnings)
    if (w.find("quadratic cost term dropped") != std::string::npos) warned = true;
  CHECK(warned);

  // Branch admittance from r + jx, charging split across the two ends.
  const Branch& br = net.branches[0];  // 1-2: r=0.01938, x=0.05917
  double z2 = 0.01938 * 0.01938 + 0.05917 * 0.05917;
  CHECK(br.g == doctest::Approx(0.01938 / z2));
  CHECK(br.b == doctest::Approx(-0.05917 / z2));
  CHECK(br.b_sh == doctest::Approx(0.0528 / 2));
  CHECK(br.p_max == doctest::Approx(2.6));
  // Transformer 4-7 keeps its off-nominal tap.
  CHECK(net.branches[7].tap == doctest::Approx(0.978));

  // Stored solution becomes the anchor.
  REQUIRE(cr.anchor.has_value());
  CHECK(cr.anchor->v[0] == doctest::Approx(1.06));
  CHECK(cr.anchor->theta[0] == 0.0);
  CHECK(cr.anchor->theta[13] == doctest::Approx(-16.04 * 3.14159265358979323846 / 180));
}

TEST_CASE("branch referencing an unknown bus is an error") {
  std::string text = R"({
    "base_mva": 100,
    "buses": [
      {"id": 1, "is_ref": true, "p_min": 0, "p_max": 1},
      {"id": 2, "p_min": -1, "p_max": 0}
    ],
    "branches": [{"from": 1, "to": 99, "g": 1, "b": -5}]
  })";
  CHECK_THROWS_WITH_AS(parse_case(text, CaseFormat::native_json),
                       doctest::Contains("unknown bus"), std::runtime_error);
}

TEST_CASE("duplicate bus id is an error, duplicate branch is not") {
  std::string dup_bus = R"({
    "buses": [{"id": 1, "is_ref": true}, {"id": 1}],
    "branches": []
  })";
  CHECK_THROWS_WITH_AS(parse_case(dup_bus, CaseFormat::native_json),
                       doctest::Contains("duplicate bus id"), std::runtime_error);

  std::string dup_branch = R"({
    "buses": [{"id": 1, "is_ref": true}, {"id": 2}],
    "branches": [{"from": 1, "to": 2, "g": 1, "b": -5},
                 {"from": 1, "to": 2, "g": 1, "b": -5}]
  })";
  CHECK(parse_case(dup_branch, CaseFormat::native_json).net.n_branches() == 2);
}

TEST_CASE("missing reference bus is an error") {
  std::string text = R"({
    "buses": [{"id": 1}, {"id": 2}],
    "branches": [{"from": 1, "to": 2, "g": 1, "b": -5}]
  })";
  CHECK_THROWS_AS(parse_case(text, CaseFormat::native_json), std::runtime_error);
}

TEST_CASE("native JSON round-trips through to_native_json") {
  ParseResult cr = load_case("case5.json");
  std::string text = to_native_json(cr.net, cr.anchor);
  ParseResult back = parse_case(text, CaseFormat::native_json);
  CHECK(back.net.digest() == cr.net.digest());
  REQUIRE(back.anchor.has_value());
  CHECK((back.anchor->v - cr.anchor->v).norm() == 0.0);
  // Serialization is deterministic.
  CHECK(to_native_json(back.net, back.anchor) == text);
}

TEST_CASE("format detection by extension") {
  CHECK(format_from_path("a/b/case.m") == CaseFormat::matpower_subset);
  CHECK(format_from_path("a/b/case.json") == CaseFormat::native_json);
}
