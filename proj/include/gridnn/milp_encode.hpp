#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "gridnn/gennn.hpp"
#include "gridnn/grid.hpp"
#include "gridnn/milp_model.hpp"

namespace gridnn {

/// Box on x_tilde = x - x_check; the validity region of the ReLU bound
/// matrices. The reference-bus V coordinate is pinned to zero width.
struct InputBox {
  Eigen::VectorXd lo, hi;  // length D
};

/// Column k bounds the pre-activation of neuron k over the box:
/// W1_k . L_col <= W1_k . x_tilde <= W1_k . U_col for all x_tilde in the box.
struct ReluBounds {
  Eigen::MatrixXd l;  // D x K
  Eigen::MatrixXd u;  // D x K
};

/// Neurons whose activation is constant over the entire box; their binaries
/// are fixed instead of declared.
struct PruneSets {
  std::vector<int> k0;  // always inactive: W1_k U + b_k < 0
  std::vector<int> k1;  // always active:   W1_k L + b_k >= 0
};

struct EncodeOptions {
  double theta_bound = 3.14159265358979323846 / 6.0;  // global |theta_ij| cap
  bool use_pruning = true;
  std::optional<Eigen::VectorXd> eps_override;  // OPF topology, default net status
};

/// V coordinates: [v_min - V_check, v_max - V_check]; theta coordinates:
/// branch angle limits intersected with +-theta_bound, shifted by the anchor.
InputBox input_box(const Network& net, const Eigen::VectorXd& x_check,
                   double theta_bound);

ReluBounds relu_bounds(const Eigen::MatrixXd& w1, const InputBox& box);

PruneSets prune_sets(const Eigen::MatrixXd& w1, const Eigen::VectorXd& bias,
                     const ReluBounds& bounds);

/// Variable handles returned by encode_pwlpf; indices are -1 where a variable
/// was not declared (pruned beta, injections in variable-eps mode).
struct PwlPfVars {
  std::vector<int> v, theta, gamma;
  std::vector<int> z1, beta;
  std::vector<int> rho, pi;
  std::vector<std::array<int, 4>> flow;  // P_ij, Q_ij, P_ji, Q_ji
  std::vector<int> p_inj, q_inj;
  std::string suffix;
};

/// Emits the PWL power-flow block: big-M ReLU inequalities with fixings for
/// the pruned sets, the affine rho/pi rows, gamma_hat = 2V - V_check, and the
/// per-direction flow definitions. When eps_fixed is given the injection
/// balance is emitted with constant status weights; otherwise the caller adds
/// switched flows and balance.
PwlPfVars encode_pwlpf(MILPModel& model, const GenNNModel& gennn, const Network& net,
                       const InputBox& box, const ReluBounds& bounds,
                       const PruneSets& prune,
                       const Eigen::VectorXd* eps_fixed,
                       const std::string& suffix = "");

MILPModel build_opf(const Network& net, const GenNNModel& gennn, const InputBox& box,
                    const EncodeOptions& options = {});

/// Transmission switching: binary eps on switchable branches, switched flow
/// variables tied by four big-M rows each (flow limits as the constants), and
/// the budget row sum(eps) >= L_switchable - alpha.
MILPModel build_ots(const Network& net, const GenNNModel& gennn, const InputBox& box,
                    double alpha, const EncodeOptions& options = {});

struct RopConfig {
  double eta = 1;                // lines restorable per period
  int horizon = 1;               // T
  std::vector<int> damaged;      // branch indices (0-based) out at t=0
};

/// Multi-period restoration ordering: time-indexed PWL-PF copies, shedding
/// fractions at demand buses, per-period restoration budget, monotone
/// restoration, and full restoration at the final period.
MILPModel build_rop(const Network& net, const GenNNModel& gennn, const InputBox& box,
                    const RopConfig& rop, const EncodeOptions& options = {});

// Variable-name helpers shared with result extraction.
std::string rop_shed_name(int bus_id, int t);
std::string rop_eps_name(int branch, int t);
std::string ots_eps_name(int branch);

}  // namespace gridnn
