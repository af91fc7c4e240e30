#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

#include "gridnn/milp_model.hpp"

namespace gridnn {

enum class LPStatus { optimal, infeasible, unbounded, breakdown };

struct LPSolution {
  LPStatus status = LPStatus::breakdown;
  double objective = 0.0;
  Eigen::VectorXd values;  // per declared variable
  Eigen::VectorXd duals;   // per constraint (minimize convention)
  long iterations = 0;
};

enum class MILPStatus { optimal, feasible, infeasible, limit };

struct MILPSolution {
  MILPStatus status = MILPStatus::limit;
  double objective = 0.0;
  Eigen::VectorXd values;
  double bound = 0.0;  // best proven bound on the optimum
  double gap = 0.0;    // |objective - bound| / max(1, |objective|)
  long node_count = 0;
  double wall_seconds = 0.0;
};

struct SolveLimits {
  long max_nodes = 200000;
  double max_seconds = 900.0;
  double target_gap = 0.0;  // prove optimality by default
};

/// Bounded-variable revised simplex (dense basis inverse, sparse columns,
/// Bland's-rule fallback on stalling). Binaries are relaxed to their [0,1]
/// bounds. Never throws on numerical trouble; reports status instead.
LPSolution solve_lp(const MILPModel& model);

/// Branch-and-bound on the binary variables: depth-first plunging until the
/// first incumbent, best-bound selection afterwards; branching on the most
/// fractional binary (ties toward the lowest index). Deterministic.
MILPSolution solve_milp(const MILPModel& model, const SolveLimits& limits = {});

class ExternalSolverError : public std::runtime_error {
 public:
  enum class Kind { nonzero_exit, missing_solution, parse_error, missing_variable };
  ExternalSolverError(Kind kind, const std::string& message)
      : std::runtime_error(message), kind(kind) {}
  Kind kind;
};

/// Writes the model as MPS plus its name map into workdir, runs the command
/// template ({mps} and {sol} placeholders), and parses the solution file:
/// lines of `name value`, `#` comments, optional `=obj= value`. When the
/// objective line is absent it is recomputed from the parsed values.
MILPSolution solve_external(const MILPModel& model, const std::string& command_template,
                            const std::string& workdir);

}  // namespace gridnn
