#include "gridnn/linearize.hpp"

#include <cmath>
#include <queue>
#include <stdexcept>

namespace gridnn {

Eigen::VectorXd build_input(const Network& net, const PFState& state) {
  const int n = net.n_buses(), l = net.n_branches();
  if (state.v.size() != n || state.theta.size() != n)
    throw std::runtime_error("build_input: state dimension mismatch");
  Eigen::VectorXd x(n + l);
  x.head(n) = state.v;
  for (int k = 0; k < l; ++k)
    x[n + k] = state.theta[net.from_index(k)] - state.theta[net.to_index(k)];
  return x;
}

PFState unpack_input(const Network& net, const Eigen::VectorXd& x, double theta_ref) {
  const int n = net.n_buses(), l = net.n_branches();
  if (x.size() != n + l) throw std::runtime_error("unpack_input: dimension mismatch");
  PFState st;
  st.v = x.head(n);
  st.theta.setConstant(n, std::numeric_limits<double>::quiet_NaN());
  int ref = net.ref_bus();
  st.theta[ref] = theta_ref;
  std::queue<int> frontier;
  frontier.push(ref);
  while (!frontier.empty()) {
    int u = frontier.front();
    frontier.pop();
    for (int k = 0; k < l; ++k) {
      int i = net.from_index(k), j = net.to_index(k);
      if (i == u && std::isnan(st.theta[j])) {
        st.theta[j] = st.theta[i] - x[n + k];
        frontier.push(j);
      } else if (j == u && std::isnan(st.theta[i])) {
        st.theta[i] = st.theta[j] + x[n + k];
        frontier.push(i);
      }
    }
  }
  for (int i = 0; i < n; ++i)
    if (std::isnan(st.theta[i]))
      throw std::runtime_error("unpack_input: bus " + std::to_string(i + 1) +
                               " unreachable from reference");
  return st;
}

Linearization jacobian(const Network& net, const Eigen::VectorXd& x_check) {
  const int n = net.n_buses(), l = net.n_branches();
  if (x_check.size() != n + l) throw std::runtime_error("jacobian: dimension mismatch");
  Linearization lin;
  lin.x_check = x_check;
  lin.gamma_anchor = x_check.head(n);
  lin.f_check.resize(2 * l);
  lin.j_check = Eigen::MatrixXd::Zero(2 * l, n + l);
  for (int k = 0; k < l; ++k) {
    int i = net.from_index(k), j = net.to_index(k);
    double vi = x_check[v_coord(i)], vj = x_check[v_coord(j)];
    double th = x_check[theta_coord(net, k)];
    double c = std::cos(th), s = std::sin(th);
    lin.f_check[k] = vi * vj * c;
    lin.f_check[l + k] = vi * vj * s;
    // rho = Vi Vj cos(th)
    lin.j_check(k, v_coord(i)) = vj * c;
    lin.j_check(k, v_coord(j)) = vi * c;
    lin.j_check(k, theta_coord(net, k)) = -vi * vj * s;
    // pi = Vi Vj sin(th)
    lin.j_check(l + k, v_coord(i)) = vj * s;
    lin.j_check(l + k, v_coord(j)) = vi * s;
    lin.j_check(l + k, theta_coord(net, k)) = vi * vj * c;
  }
  return lin;
}

LinearApprox linear_approx(const Linearization& lin, const Eigen::VectorXd& x) {
  if (x.size() != lin.x_check.size())
    throw std::runtime_error("linear_approx: dimension mismatch");
  const int n = static_cast<int>(lin.gamma_anchor.size());
  const int l = static_cast<int>(lin.f_check.size()) / 2;
  LinearApprox out;
  out.gamma_hat = 2.0 * x.head(n) - lin.gamma_anchor;
  Eigen::VectorXd f = lin.f_check + lin.j_check * (x - lin.x_check);
  out.rho_hat = f.head(l);
  out.pi_hat = f.tail(l);
  return out;
}

}  // namespace gridnn
