#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gridnn/milp_solve.hpp"
#include "gridnn/rng.hpp"
#include "test_helpers.hpp"

using namespace gridnn;

namespace {

// Independent oracle: the classic full-tableau simplex for
//   max c'x  s.t.  Ax <= b, x >= 0, b >= 0,
// kept deliberately separate from the production solver.
struct TableauResult {
  bool unbounded = false;
  double objective = 0.0;
};

TableauResult tableau_simplex(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                              const Eigen::VectorXd& c) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m + 1, n + m + 1);
  t.block(0, 0, m, n) = a;
  t.block(0, n, m, m) = Eigen::MatrixXd::Identity(m, m);
  t.block(0, n + m, m, 1) = b;
  t.block(m, 0, 1, n) = -c.transpose();

  for (long iter = 0; iter < 10000; ++iter) {
    int enter = -1;
    double best = -1e-9;
    for (int j = 0; j < n + m; ++j)
      if (t(m, j) < best) {
        best = t(m, j);
        enter = j;
      }
    if (enter < 0) return {false, t(m, n + m)};
    int leave = -1;
    double best_ratio = 0;
    for (int i = 0; i < m; ++i) {
      if (t(i, enter) <= 1e-9) continue;
      double ratio = t(i, n + m) / t(i, enter);
      if (leave < 0 || ratio < best_ratio - 1e-12) {
        leave = i;
        best_ratio = ratio;
      }
    }
    if (leave < 0) return {true, 0.0};
    t.row(leave) /= t(leave, enter);
    for (int i = 0; i <= m; ++i) {
      if (i == leave) continue;
      t.row(i) -= t(i, enter) * t.row(leave);
    }
  }
  return {true, 0.0};
}

std::string temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("textbook LP: max x+y with box rows") {
  MILPModel m;
  int x = m.add_variable("x", VarKind::continuous, 0, kInf);
  int y = m.add_variable("y", VarKind::continuous, 0, kInf);
  m.add_constraint("cx", {{x, 1.0}}, Sense::le, 1.0);
  m.add_constraint("cy", {{y, 1.0}}, Sense::le, 2.0);
  m.objective_sense = ObjSense::maximize;
  m.objective = {{x, 1.0}, {y, 1.0}};
  LPSolution sol = solve_lp(m);
  REQUIRE(sol.status == LPStatus::optimal);
  CHECK(sol.objective == doctest::Approx(3.0));
  CHECK(sol.values[x] == doctest::Approx(1.0));
  CHECK(sol.values[y] == doctest::Approx(2.0));
}

TEST_CASE("infeasible bounds pair is detected") {
  MILPModel m;
  int x = m.add_variable("x", VarKind::continuous, -kInf, kInf);
  m.add_constraint("ge1", {{x, 1.0}}, Sense::ge, 1.0);
  m.add_constraint("le0", {{x, 1.0}}, Sense::le, 0.0);
  m.objective = {{x, 1.0}};
  CHECK(solve_lp(m).status == LPStatus::infeasible);
}

TEST_CASE("unbounded LP is detected") {
  MILPModel m;
  int x = m.add_variable("x", VarKind::continuous, 0, kInf);
  m.objective_sense = ObjSense::maximize;
  m.objective = {{x, 1.0}};
  CHECK(solve_lp(m).status == LPStatus::unbounded);
}

TEST_CASE("random dense LPs match the independent tableau simplex") {
  SplitMix64 rng(2024);
  int solved = 0;
  for (int trial = 0; trial < 60; ++trial) {
    int n = 2 + static_cast<int>(rng.below(18));
    int rows = 2 + static_cast<int>(rng.below(18));
    Eigen::MatrixXd a(rows + 1, n);
    Eigen::VectorXd b(rows + 1), c(n);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < n; ++j) a(i, j) = rng.uniform(-1.0, 2.0);
      b[i] = rng.uniform(0.5, 5.0);
    }
    a.row(rows).setOnes();  // keeps the region bounded
    b[rows] = 10.0;
    for (int j = 0; j < n; ++j) c[j] = rng.uniform(-2.0, 3.0);

    TableauResult oracle = tableau_simplex(a, b, c);
    REQUIRE(!oracle.unbounded);

    MILPModel m;
    for (int j = 0; j < n; ++j)
      m.add_variable("x" + std::to_string(j), VarKind::continuous, 0.0, kInf);
    for (int i = 0; i <= rows; ++i) {
      std::vector<LinTerm> terms;
      for (int j = 0; j < n; ++j)
        if (a(i, j) != 0.0) terms.push_back({j, a(i, j)});
      m.add_constraint("r" + std::to_string(i), terms, Sense::le, b[i]);
    }
    m.objective_sense = ObjSense::maximize;
    for (int j = 0; j < n; ++j) m.objective.push_back({j, c[j]});

    LPSolution sol = solve_lp(m);
    REQUIRE(sol.status == LPStatus::optimal);
    CHECK(sol.objective == doctest::Approx(oracle.objective).epsilon(1e-6));
    ++solved;
  }
  CHECK(solved == 60);
}

TEST_CASE("LP solutions satisfy feasibility and duals are returned") {
  SplitMix64 rng(77);
  MILPModel m;
  for (int j = 0; j < 8; ++j)
    m.add_variable("x" + std::to_string(j), VarKind::continuous, -1.0, 2.0);
  for (int i = 0; i < 6; ++i) {
    std::vector<LinTerm> terms;
    for (int j = 0; j < 8; ++j) terms.push_back({j, rng.uniform(-1.0, 1.0)});
    m.add_constraint("r" + std::to_string(i), terms,
                     i % 3 == 0 ? Sense::eq : Sense::le, rng.uniform(-0.5, 1.5));
  }
  for (int j = 0; j < 8; ++j) m.objective.push_back({j, rng.uniform(-1.0, 1.0)});
  LPSolution sol = solve_lp(m);
  REQUIRE(sol.status == LPStatus::optimal);
  REQUIRE(sol.duals.size() == m.num_constraints());
  for (int r = 0; r < m.num_constraints(); ++r) {
    double lhs = 0;
    for (const LinTerm& t : m.constraints[r].terms) lhs += t.coeff * sol.values[t.var];
    if (m.constraints[r].sense == Sense::le) CHECK(lhs <= m.constraints[r].rhs + 1e-7);
    if (m.constraints[r].sense == Sense::eq)
      CHECK(lhs == doctest::Approx(m.constraints[r].rhs).epsilon(1e-7));
  }
}

TEST_CASE("knapsack MILP: max 5x1+4x2 s.t. 3x1+2x2<=4 binary") {
  MILPModel m;
  int x1 = m.add_variable("x1", VarKind::binary, 0, 1);
  int x2 = m.add_variable("x2", VarKind::binary, 0, 1);
  m.add_constraint("cap", {{x1, 3.0}, {x2, 2.0}}, Sense::le, 4.0);
  m.objective_sense = ObjSense::maximize;
  m.objective = {{x1, 5.0}, {x2, 4.0}};
  MILPSolution sol = solve_milp(m);
  REQUIRE(sol.status == MILPStatus::optimal);
  CHECK(sol.objective == doctest::Approx(5.0));
  CHECK(sol.values[x1] == doctest::Approx(1.0));
  CHECK(sol.values[x2] == doctest::Approx(0.0));
  CHECK(sol.gap <= 1e-9);
}

TEST_CASE("all-continuous model reduces to solve_lp") {
  MILPModel m;
  int x = m.add_variable("x", VarKind::continuous, 0, 3);
  int y = m.add_variable("y", VarKind::continuous, 0, 2);
  m.add_constraint("c", {{x, 1.0}, {y, 2.0}}, Sense::le, 4.0);
  m.objective_sense = ObjSense::maximize;
  m.objective = {{x, 1.0}, {y, 3.0}};
  MILPSolution milp = solve_milp(m);
  LPSolution lp = solve_lp(m);
  REQUIRE(milp.status == MILPStatus::optimal);
  CHECK(milp.objective == doctest::Approx(lp.objective).epsilon(1e-9));
  CHECK(milp.node_count == 1);
}

TEST_CASE("random MILPs match exhaustive enumeration") {
  SplitMix64 rng(4242);
  for (int trial = 0; trial < 25; ++trial) {
    int n_bin = 3 + static_cast<int>(rng.below(10));  // up to 12
    int n_cont = 1 + static_cast<int>(rng.below(3));
    MILPModel m;
    for (int j = 0; j < n_bin; ++j)
      m.add_variable("b" + std::to_string(j), VarKind::binary, 0, 1);
    for (int j = 0; j < n_cont; ++j)
      m.add_variable("c" + std::to_string(j), VarKind::continuous, 0.0, 2.0);
    int rows = 2 + static_cast<int>(rng.below(4));
    for (int i = 0; i < rows; ++i) {
      std::vector<LinTerm> terms;
      for (int j = 0; j < n_bin + n_cont; ++j) {
        double coeff = rng.uniform(-1.0, 2.0);
        if (std::abs(coeff) > 0.2) terms.push_back({j, coeff});
      }
      if (terms.empty()) terms.push_back({0, 1.0});
      m.add_constraint("r" + std::to_string(i), terms, Sense::le,
                       rng.uniform(1.0, static_cast<double>(n_bin)));
    }
    m.objective_sense = ObjSense::maximize;
    for (int j = 0; j < n_bin + n_cont; ++j)
      m.objective.push_back({j, rng.uniform(-1.0, 2.0)});

    MILPSolution sol = solve_milp(m);

    // Enumeration oracle: LP per binary fixing.
    double best = -1e300;
    bool any_feasible = false;
    MILPModel relaxed = m;
    for (long mask = 0; mask < (1L << n_bin); ++mask) {
      for (int j = 0; j < n_bin; ++j) {
        double v = (mask >> j) & 1 ? 1.0 : 0.0;
        relaxed.variables[j].lower = v;
        relaxed.variables[j].upper = v;
      }
      LPSolution lp = solve_lp(relaxed);
      if (lp.status == LPStatus::optimal) {
        any_feasible = true;
        best = std::max(best, lp.objective);
      }
    }
    if (!any_feasible) {
      CHECK(sol.status == MILPStatus::infeasible);
      continue;
    }
    REQUIRE(sol.status == MILPStatus::optimal);
    CHECK(sol.objective == doctest::Approx(best).epsilon(1e-6));
  }
}

TEST_CASE("solve_milp is deterministic (same nodes, same solution)") {
  SplitMix64 rng(99);
  MILPModel m;
  for (int j = 0; j < 8; ++j)
    m.add_variable("b" + std::to_string(j), VarKind::binary, 0, 1);
  for (int i = 0; i < 3; ++i) {
    std::vector<LinTerm> terms;
    for (int j = 0; j < 8; ++j) terms.push_back({j, rng.uniform(-1.0, 2.0)});
    m.add_constraint("r" + std::to_string(i), terms, Sense::le, 3.0);
  }
  m.objective_sense = ObjSense::maximize;
  for (int j = 0; j < 8; ++j) m.objective.push_back({j, rng.uniform(0.0, 1.0)});
  MILPSolution a = solve_milp(m);
  MILPSolution b = solve_milp(m);
  CHECK(a.node_count == b.node_count);
  CHECK(a.objective == b.objective);
  CHECK((a.values - b.values).norm() == 0.0);
}

TEST_CASE("node limit reports a limit status") {
  // An integer-infeasible-rich instance with a tiny node budget.
  MILPModel m;
  for (int j = 0; j < 10; ++j)
    m.add_variable("b" + std::to_string(j), VarKind::binary, 0, 1);
  std::vector<LinTerm> terms;
  for (int j = 0; j < 10; ++j) terms.push_back({j, 2.0});
  m.add_constraint("odd", terms, Sense::eq, 9.99);  // never integral
  m.objective_sense = ObjSense::maximize;
  m.objective = {{0, 1.0}};
  SolveLimits limits;
  limits.max_nodes = 3;
  MILPSolution sol = solve_milp(m, limits);
  CHECK((sol.status == MILPStatus::limit || sol.status == MILPStatus::infeasible));
}

TEST_CASE("solve_external parses a stub solver's output") {
  MILPModel m;
  int x = m.add_variable("a_rather_long_variable_name", VarKind::continuous, 0, 10);
  int y = m.add_variable("y", VarKind::continuous, 0, 10);
  m.add_constraint("c", {{x, 1.0}, {y, 1.0}}, Sense::le, 8.0);
  m.objective_sense = ObjSense::maximize;
  m.objective = {{x, 2.0}, {y, 1.0}};

  std::string dir = temp_dir("gridnn_ext_solver");
  std::string fixture = dir + "/fixture.sol";

  SUBCASE("with objective line") {
    write_text_file(fixture,
                    "# stub solver output\n=obj= 14\nX0000001 7\nX0000002 1\n");
    MILPSolution sol = solve_external(m, "cp " + fixture + " {sol}", dir);
    CHECK(sol.status == MILPStatus::optimal);
    CHECK(sol.objective == doctest::Approx(14.0));
    CHECK(sol.values[x] == doctest::Approx(7.0));
    CHECK(sol.values[y] == doctest::Approx(1.0));
  }

  SUBCASE("objective recomputed when the line is absent") {
    write_text_file(fixture, "X0000001 3\nX0000002 2\n");
    MILPSolution sol = solve_external(m, "cp " + fixture + " {sol}", dir);
    CHECK(sol.objective == doctest::Approx(2.0 * 3 + 2));
  }

  SUBCASE("original long names are accepted too") {
    write_text_file(fixture, "a_rather_long_variable_name 4\ny 0\n");
    MILPSolution sol = solve_external(m, "cp " + fixture + " {sol}", dir);
    CHECK(sol.values[x] == doctest::Approx(4.0));
  }

  SUBCASE("missing variable raises the explicit error") {
    write_text_file(fixture, "X0000001 3\n");
    CHECK_THROWS_AS(solve_external(m, "cp " + fixture + " {sol}", dir),
                    ExternalSolverError);
  }

  SUBCASE("nonzero exit raises") {
    CHECK_THROWS_AS(solve_external(m, "false", dir), ExternalSolverError);
  }
}
