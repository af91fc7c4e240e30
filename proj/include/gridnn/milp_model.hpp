#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace gridnn {

// Solver-agnostic MILP container. Declaration order is part of the contract:
// MPS emission and the embedded solver both follow it, so identical builds
// give byte-identical artifacts.

constexpr double kInf = 1e30;  // bounds at or beyond this are treated as infinite

enum class VarKind { continuous, binary };
enum class Sense { le, eq, ge };
enum class ObjSense { minimize, maximize };

struct Variable {
  std::string name;
  VarKind kind = VarKind::continuous;
  double lower = -kInf;
  double upper = kInf;
};

struct LinTerm {
  int var = 0;
  double coeff = 0.0;
};

struct Constraint {
  std::string name;
  std::vector<LinTerm> terms;
  Sense sense = Sense::le;
  double rhs = 0.0;
};

class MILPModel {
 public:
  std::vector<Variable> variables;
  std::vector<Constraint> constraints;
  ObjSense objective_sense = ObjSense::minimize;
  std::vector<LinTerm> objective;
  double objective_constant = 0.0;

  int add_variable(const std::string& name, VarKind kind, double lower, double upper);
  void add_constraint(const std::string& name, std::vector<LinTerm> terms, Sense sense,
                      double rhs);
  int var_index(const std::string& name) const;  // -1 when absent

  int num_variables() const { return static_cast<int>(variables.size()); }
  int num_constraints() const { return static_cast<int>(constraints.size()); }
  int num_binaries() const;

  /// Checks the type invariants (unique names, binary bounds within [0,1],
  /// term indices in range); throws on violation.
  void validate() const;

  double eval_objective(const Eigen::VectorXd& values) const;

 private:
  std::map<std::string, int> var_names_;
  std::map<std::string, int> con_names_;
};

/// Fixed-format MPS with deterministic row/column ordering (declaration
/// order). Names are shortened to <= 8 chars through a stable renaming table;
/// binaries use MARKER INTORG/INTEND lines; an OBJSENSE section records the
/// optimization direction; the objective constant rides on the objective
/// row's RHS entry (negated).
std::string export_mps(const MILPModel& model);

/// Sidecar renaming table (short name -> original) as a JSON string.
std::string mps_name_map(const MILPModel& model);

/// Internal reader for round-trips; accepts the exact dialect export_mps
/// writes. `name_map_json` (optional) restores original names.
MILPModel parse_mps(const std::string& text, const std::string& name_map_json = "");

std::string mps_var_name(int index);
std::string mps_row_name(int index);

}  // namespace gridnn
