#include <doctest.h>

#include <algorithm>

#include "gridnn/milp_model.hpp"
#include "test_helpers.hpp"

using namespace gridnn;

namespace {

MILPModel sample_model() {
  MILPModel m;
  int x = m.add_variable("gen_output_with_a_long_name", VarKind::continuous, 0.0, 4.0);
  int y = m.add_variable("y", VarKind::continuous, -kInf, kInf);
  int z = m.add_variable("on_flag", VarKind::binary, 0, 1);
  int w = m.add_variable("w", VarKind::continuous, -2.0, kInf);
  m.add_constraint("cap", {{x, 3.0}, {y, 2.0}}, Sense::le, 12.0);
  m.add_constraint("link", {{x, 1.0}, {z, -4.0}}, Sense::le, 0.0);
  m.add_constraint("bal", {{y, 1.0}, {w, 1.0}}, Sense::eq, 1.0);
  m.add_constraint("floor", {{x, 1.0}, {w, -1.0}}, Sense::ge, -1.0);
  m.objective_sense = ObjSense::maximize;
  m.objective = {{x, 5.0}, {y, 4.0}, {z, -1.0}};
  m.objective_constant = 2.5;
  return m;
}

bool same_model(const MILPModel& a, const MILPModel& b) {
  if (a.num_variables() != b.num_variables()) return false;
  if (a.num_constraints() != b.num_constraints()) return false;
  if (a.objective_sense != b.objective_sense) return false;
  if (a.objective_constant != b.objective_constant) return false;
  for (int v = 0; v < a.num_variables(); ++v) {
    const Variable &va = a.variables[v], &vb = b.variables[v];
    if (va.name != vb.name || va.kind != vb.kind) return false;
    if (va.lower != vb.lower || va.upper != vb.upper) return false;
  }
  auto norm_obj = [](const MILPModel& m) {
    std::vector<double> coeff(m.num_variables(), 0.0);
    for (const LinTerm& t : m.objective) coeff[t.var] += t.coeff;
    return coeff;
  };
  if (norm_obj(a) != norm_obj(b)) return false;
  for (int r = 0; r < a.num_constraints(); ++r) {
    const Constraint &ca = a.constraints[r], &cb = b.constraints[r];
    if (ca.name != cb.name || ca.sense != cb.sense || ca.rhs != cb.rhs) return false;
    std::vector<double> ta(a.num_variables(), 0.0), tb(b.num_variables(), 0.0);
    for (const LinTerm& t : ca.terms) ta[t.var] += t.coeff;
    for (const LinTerm& t : cb.terms) tb[t.var] += t.coeff;
    if (ta != tb) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("model invariants are enforced") {
  MILPModel m;
  m.add_variable("x", VarKind::continuous, 0, 1);
  CHECK_THROWS_AS(m.add_variable("x", VarKind::continuous, 0, 1), std::runtime_error);
  CHECK_THROWS_AS(m.add_variable("bad", VarKind::continuous, 2, 1), std::runtime_error);
  CHECK_THROWS_AS(m.add_constraint("c", {{5, 1.0}}, Sense::le, 0), std::runtime_error);
  m.add_constraint("c", {{0, 1.0}}, Sense::le, 0.5);
  CHECK_THROWS_AS(m.add_constraint("c", {{0, 1.0}}, Sense::le, 1), std::runtime_error);
  CHECK(m.num_binaries() == 0);
}

TEST_CASE("empty model exports a byte-stable skeleton") {
  MILPModel empty;
  std::string expected =
      "NAME          GRIDNN\n"
      "OBJSENSE\n"
      "    MIN\n"
      "ROWS\n"
      " N  OBJ\n"
      "COLUMNS\n"
      "RHS\n"
      "BOUNDS\n"
      "ENDATA\n";
  CHECK(export_mps(empty) == expected);
}

TEST_CASE("MPS export is deterministic") {
  std::string a = export_mps(sample_model());
  std::string b = export_mps(sample_model());
  CHECK(a == b);
  CHECK(a.find("OBJSENSE") != std::string::npos);
  CHECK(a.find("MAX") != std::string::npos);
  CHECK(a.find("'INTORG'") != std::string::npos);
  CHECK(a.find("'INTEND'") != std::string::npos);
  // All short names stay within the 8-character MPS limit.
  CHECK(mps_var_name(0).size() == 8);
  CHECK(mps_row_name(12345).size() == 8);
}

TEST_CASE("export then internal re-parse restores the model through the name map") {
  MILPModel m = sample_model();
  std::string mps = export_mps(m);
  std::string names = mps_name_map(m);
  MILPModel back = parse_mps(mps, names);
  CHECK(same_model(m, back));
  // And the re-exported text is identical.
  CHECK(export_mps(back) == mps);
}

TEST_CASE("long names round-trip through the rename table") {
  MILPModel m = sample_model();
  std::string names = mps_name_map(m);
  CHECK(names.find("gen_output_with_a_long_name") != std::string::npos);
  MILPModel back = parse_mps(export_mps(m), names);
  CHECK(back.variables[0].name == "gen_output_with_a_long_name");
  CHECK(back.var_index("gen_output_with_a_long_name") == 0);
}

TEST_CASE("eval_objective applies coefficients and constant") {
  MILPModel m = sample_model();
  Eigen::VectorXd values(4);
  values << 1.0, 2.0, 1.0, -1.0;
  CHECK(m.eval_objective(values) == doctest::Approx(5.0 + 8.0 - 1.0 + 2.5));
}
