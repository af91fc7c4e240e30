#pragma once

#include <Eigen/Dense>

#include "gridnn/grid.hpp"

namespace gridnn {

// Model input vector x: all bus voltages V (bus order) then all branch angle
// differences theta_ij (branch order); D = N + L. Every module shares this
// packing.

struct Linearization {
  Eigen::VectorXd x_check;       // D, operating point
  Eigen::VectorXd f_check;       // 2L, [rho; pi] at the operating point
  Eigen::MatrixXd j_check;       // 2L x D Jacobian of [rho; pi]
  Eigen::VectorXd gamma_anchor;  // N, V at the operating point
};

struct LinearApprox {
  Eigen::VectorXd gamma_hat;  // N
  Eigen::VectorXd rho_hat;    // L
  Eigen::VectorXd pi_hat;     // L
};

inline int input_dim(const Network& net) { return net.n_buses() + net.n_branches(); }
inline int v_coord(int bus) { return bus; }
inline int theta_coord(const Network& net, int branch) { return net.n_buses() + branch; }

Eigen::VectorXd build_input(const Network& net, const PFState& state);

/// Inverse of build_input: bus angles recovered by walking a spanning tree
/// from the reference (angle differences sampled per bus are cycle-consistent
/// by construction, so any tree gives the same answer up to theta_ref).
PFState unpack_input(const Network& net, const Eigen::VectorXd& x, double theta_ref = 0.0);

/// Analytic first-order anchor at x_check: f(x_check) and the Jacobian of
/// [rho; pi]. Each row has nonzeros only on its branch's V_i, V_j, theta_ij.
Linearization jacobian(const Network& net, const Eigen::VectorXd& x_check);

/// gamma_hat = 2V - V_check; [rho_hat; pi_hat] = f(x_check) + J (x - x_check).
LinearApprox linear_approx(const Linearization& lin, const Eigen::VectorXd& x);

}  // namespace gridnn
