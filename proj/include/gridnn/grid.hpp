#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace gridnn {

// Physical network model. Everything is per-unit on base_mva; injections use
// the generation-minus-demand convention. All types are immutable in practice
// (construct, validate, share read-only) and every operation below is pure.

struct Bus {
  int id = 0;  // 1..N after validation
  double v_min = 0.9, v_max = 1.1;
  double p_min = 0.0, p_max = 0.0;
  double q_min = 0.0, q_max = 0.0;
  double p_demand = 0.0, q_demand = 0.0;
  double cost_lin = 0.0, cost_const = 0.0;
  bool is_ref = false;
};

struct Branch {
  int from = 0, to = 0;  // bus ids
  double g = 0.0, b = 0.0;        // series admittance
  double g_sh = 0.0, b_sh = 0.0;  // shunt admittance, same value at each end
  double tap = 1.0;               // applied to the from->to direction only
  double p_max = 1.0, q_max = 1.0;
  double theta_min = -1.0, theta_max = 1.0;
  bool switchable = false;
  int status = 1;  // initial in-service flag
};

struct Network {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  double base_mva = 100.0;

  int n_buses() const { return static_cast<int>(buses.size()); }
  int n_branches() const { return static_cast<int>(branches.size()); }

  /// Index (0-based) of the reference bus; validate() guarantees uniqueness.
  int ref_bus() const;

  int from_index(int branch) const { return branches[branch].from - 1; }
  int to_index(int branch) const { return branches[branch].to - 1; }

  /// Checks all type invariants; throws std::runtime_error on violation.
  /// Returns warnings (e.g. in-service graph disconnected).
  std::vector<std::string> validate() const;

  /// Digest binding datasets/checkpoints to this exact network.
  std::uint64_t digest() const;

  /// Copy with per-bus demand replaced; injection bounds for buses without
  /// flexibility shift with the demand so fixed loads stay fixed.
  Network with_demands(const Eigen::VectorXd& p_demand,
                       const Eigen::VectorXd& q_demand) const;
};

struct PFState {
  Eigen::VectorXd v;      // length N, per-unit magnitudes
  Eigen::VectorXd theta;  // length N, radians; theta[ref] = 0 by convention
};

struct FlowVectors {
  Eigen::VectorXd z_pf;   // 4L, ordered (P_ij, Q_ij, P_ji, Q_ji) per branch
  Eigen::VectorXd z_inj;  // 2N, all P_i then all Q_i
};

struct NonlinearTerms {
  Eigen::VectorXd gamma;  // N:  V_i^2
  Eigen::VectorXd rho;    // L:  V_i V_j cos(theta_ij)
  Eigen::VectorXd pi;     // L:  V_i V_j sin(theta_ij)
};

struct FlowMaps {
  Eigen::SparseMatrix<double> w_gamma;  // 4L x N
  Eigen::SparseMatrix<double> w_rho;    // 4L x L
  Eigen::SparseMatrix<double> w_pi;     // 4L x L
};

enum class FlowDirection { fwd, rev };

/// Active/reactive flow of one branch end. Inputs are always in the branch's
/// stored orientation (v_i at `from`, v_j at `to`, theta_ij = theta_i - theta_j);
/// rev evaluates the j->i flow, which uses tap = 1.
std::pair<double, double> branch_flow(const Branch& br, double v_i, double v_j,
                                      double theta_ij, FlowDirection direction);

NonlinearTerms nonlinear_terms(const Network& net, const PFState& state);

/// Fixed linear maps taking (gamma, rho, pi) to the 4L flow vector. Pure
/// function of the network; exact (not an approximation).
FlowMaps assemble_flow_maps(const Network& net);

/// 2N x 4L map summing sending-end flows of in-service branches into bus
/// injections; eps is the per-branch status vector.
Eigen::SparseMatrix<double> assemble_injection_map(const Network& net,
                                                   const Eigen::VectorXd& eps);

/// Exact AC power flow evaluation; the ground-truth oracle for training
/// targets and error metrics. Computed per-branch from Eq.-level formulas,
/// independent of the assembled matrices.
FlowVectors evaluate_pf(const Network& net, const PFState& state,
                        const Eigen::VectorXd& eps);

/// z_pf row index of a branch's flow entry: offset 0..3 = P_ij, Q_ij, P_ji, Q_ji.
inline int flow_row(int branch, int offset) { return 4 * branch + offset; }

}  // namespace gridnn
