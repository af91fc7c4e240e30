#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "gridnn/gennn.hpp"
#include "gridnn/grid.hpp"
#include "gridnn/milp_encode.hpp"
#include "gridnn/milp_solve.hpp"
#include "gridnn/sampling.hpp"

namespace gridnn {

/// Box-plot style summary: median, quartiles, and whiskers at the farthest
/// data points within 1.5 IQR of the box.
struct BoxStats {
  double median = 0, q1 = 0, q3 = 0;
  double whisker_lo = 0, whisker_hi = 0;
  double mean = 0, max = 0;
};

BoxStats box_stats(std::vector<double> values);

struct ErrorStats {
  std::vector<double> avg_flow_pct;    // per-sample average |err|/capacity * 100
  std::vector<double> max_flow_pct;    // per-sample maximum
  std::vector<double> injection_rmse;  // per-sample RMSE over 2N entries
  BoxStats avg_flow_box, max_flow_box, rmse_box;
  std::vector<std::string> warnings;
};

/// (z_pf, z_inj) prediction at the nominal topology for one input vector.
using Predictor =
    std::function<std::pair<Eigen::VectorXd, Eigen::VectorXd>(const Eigen::VectorXd&)>;

Predictor make_predictor(const GenNNModel& m);
Predictor make_predictor(const DirectNNModel& m, int n_flow_rows);
/// The exact-model predictor (errors identically zero; used in tests).
Predictor exact_predictor(const Network& net);

/// Per-entry flow errors as percent of capacity (P entries against p_max,
/// Q against q_max); zero-capacity entries are excluded with a warning.
ErrorStats flow_error_stats(const Predictor& predict, const Network& net,
                            const Dataset& test);

ErrorStats injection_rmse(const Predictor& predict, const Network& net,
                          const Dataset& test);

struct NewtonResult {
  bool converged = false;
  PFState state;
  int iterations = 0;
  double mismatch = 0.0;  // final infinity-norm
};

/// Damped Newton on the exact mismatch equations; every bus is PQ except the
/// reference (slack). p_set/q_set are specified injections (reference entries
/// ignored).
NewtonResult newton_pf(const Network& net, const Eigen::VectorXd& p_set,
                       const Eigen::VectorXd& q_set, const Eigen::VectorXd& eps,
                       const PFState& start, double tol = 1e-8, int max_iters = 50);

struct Violation {
  std::string constraint;
  double magnitude;
};

struct TopoEvalReport {
  double cost = 0.0;          // fixed-topology PWL-OPF optimum
  double base_cost = 0.0;     // no-switching baseline optimum
  double cost_percent = 0.0;  // 100 * cost / base_cost
  bool solver_failure = false;
  std::vector<Violation> violations;
  double exact_residual = 0.0;  // max |exact Eq.(1)-(3) - solution values|
  bool newton_converged = true;
};

struct TopoEvalOptions {
  double theta_bound = 3.14159265358979323846 / 6.0;
  SolveLimits limits;
  bool newton_probe = false;
  double violation_threshold = 1e-3;  // fraction of each bound's range
};

/// Scores a topology decision: re-solves the fixed-topology PWL-OPF (the
/// protocol substitute for a nonlinear AC-OPF re-run), normalizes its cost by
/// the all-in-service baseline, and checks exact-equation residuals and bound
/// violations at the solution point.
TopoEvalReport evaluate_topology(const Network& net, const GenNNModel& gennn,
                                 const Eigen::VectorXd& eps_solution,
                                 const TopoEvalOptions& options = {});

/// Percent of demanded energy at the affected buses not delivered over the
/// horizon: sum (1-x_it) d_i / sum d_i * 100.
double energy_not_served(const Eigen::MatrixXd& shed_fraction /* buses x T */,
                         const std::vector<int>& affected_buses,
                         const Eigen::VectorXd& p_demand, int horizon,
                         std::vector<std::string>* warnings = nullptr);

/// Per-bus independent uniform demand scaling factors in [lo_pct, hi_pct]/100.
std::vector<Eigen::VectorXd> demand_scenarios(const Network& net, double lo_pct,
                                              double hi_pct, int count,
                                              std::uint64_t seed);

}  // namespace gridnn
