#include "gridnn/grid.hpp"

#include <cmath>
#include <numeric>
#include <queue>
#include <stdexcept>

#include "gridnn/hash.hpp"

namespace gridnn {

int Network::ref_bus() const {
  for (int i = 0; i < n_buses(); ++i)
    if (buses[i].is_ref) return i;
  throw std::runtime_error("network has no reference bus");
}

std::vector<std::string> Network::validate() const {
  std::vector<std::string> warnings;
  if (buses.empty()) throw std::runtime_error("network has no buses");

  int n_ref = 0;
  for (int i = 0; i < n_buses(); ++i) {
    const Bus& bus = buses[i];
    if (bus.id != i + 1)
      throw std::runtime_error("bus ids must be 1..N in order; bus at position " +
                               std::to_string(i) + " has id " + std::to_string(bus.id));
    if (bus.v_min > bus.v_max) throw std::runtime_error("bus " + std::to_string(bus.id) + ": v_min > v_max");
    if (bus.p_min > bus.p_max) throw std::runtime_error("bus " + std::to_string(bus.id) + ": p_min > p_max");
    if (bus.q_min > bus.q_max) throw std::runtime_error("bus " + std::to_string(bus.id) + ": q_min > q_max");
    if (bus.is_ref) ++n_ref;
  }
  if (n_ref != 1)
    throw std::runtime_error("network must have exactly one reference bus, found " +
                             std::to_string(n_ref));

  for (int l = 0; l < n_branches(); ++l) {
    const Branch& br = branches[l];
    auto tag = [&] { return "branch " + std::to_string(l + 1); };
    if (br.from < 1 || br.from > n_buses() || br.to < 1 || br.to > n_buses())
      throw std::runtime_error(tag() + ": unknown bus reference");
    if (br.from == br.to) throw std::runtime_error(tag() + ": from == to");
    if (br.tap <= 0.0) throw std::runtime_error(tag() + ": non-positive tap ratio");
    if (br.p_max <= 0.0) throw std::runtime_error(tag() + ": p_max must be positive");
    if (!(br.theta_min < 0.0 && br.theta_max > 0.0))
      throw std::runtime_error(tag() + ": angle bounds must straddle zero");
  }

  // Connectivity of the in-service graph: warn, not error.
  std::vector<int> seen(n_buses(), 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    int u = frontier.front();
    frontier.pop();
    for (int l = 0; l < n_branches(); ++l) {
      if (branches[l].status == 0) continue;
      int a = from_index(l), b = to_index(l);
      int v = (a == u) ? b : (b == u) ? a : -1;
      if (v >= 0 && !seen[v]) {
        seen[v] = 1;
        ++reached;
        frontier.push(v);
      }
    }
  }
  if (reached != n_buses())
    warnings.push_back("in-service graph is disconnected (" +
                       std::to_string(n_buses() - reached) + " buses unreachable)");
  return warnings;
}

std::uint64_t Network::digest() const {
  Fnv64 h;
  h.str("gridnn-network").f64(base_mva).i64(n_buses()).i64(n_branches());
  for (const Bus& bus : buses) {
    h.i64(bus.id).f64(bus.v_min).f64(bus.v_max);
    h.f64(bus.p_min).f64(bus.p_max).f64(bus.q_min).f64(bus.q_max);
    h.f64(bus.p_demand).f64(bus.q_demand).f64(bus.cost_lin).f64(bus.cost_const);
    h.i64(bus.is_ref ? 1 : 0);
  }
  for (const Branch& br : branches) {
    h.i64(br.from).i64(br.to).f64(br.g).f64(br.b).f64(br.g_sh).f64(br.b_sh);
    h.f64(br.tap).f64(br.p_max).f64(br.q_max).f64(br.theta_min).f64(br.theta_max);
    h.i64(br.switchable ? 1 : 0).i64(br.status);
  }
  return h.value();
}

Network Network::with_demands(const Eigen::VectorXd& p_demand,
                              const Eigen::VectorXd& q_demand) const {
  if (p_demand.size() != n_buses() || q_demand.size() != n_buses())
    throw std::runtime_error("with_demands: dimension mismatch");
  Network out = *this;
  for (int i = 0; i < n_buses(); ++i) {
    Bus& bus = out.buses[i];
    double dp = p_demand[i] - bus.p_demand;
    double dq = q_demand[i] - bus.q_demand;
    bus.p_min -= dp;
    bus.p_max -= dp;
    bus.q_min -= dq;
    bus.q_max -= dq;
    bus.p_demand = p_demand[i];
    bus.q_demand = q_demand[i];
  }
  return out;
}

std::pair<double, double> branch_flow(const Branch& br, double v_i, double v_j,
                                      double theta_ij, FlowDirection direction) {
  double vs, vr, th, a;
  if (direction == FlowDirection::fwd) {
    vs = v_i;
    vr = v_j;
    th = theta_ij;
    a = br.tap;
  } else {
    // Roles of i and j swapped; tap applies to the forward direction only.
    vs = v_j;
    vr = v_i;
    th = -theta_ij;
    a = 1.0;
  }
  double vv = vs * vr / a;
  double p = vs * vs * (br.g / (a * a) + br.g_sh) -
             vv * (br.g * std::cos(th) + br.b * std::sin(th));
  double q = -vs * vs * (br.b / (a * a) + br.b_sh) -
             vv * (br.g * std::sin(th) - br.b * std::cos(th));
  return {p, q};
}

NonlinearTerms nonlinear_terms(const Network& net, const PFState& state) {
  const int n = net.n_buses(), l = net.n_branches();
  if (state.v.size() != n || state.theta.size() != n)
    throw std::runtime_error("nonlinear_terms: state dimension mismatch");
  NonlinearTerms t;
  t.gamma = state.v.array().square();
  t.rho.resize(l);
  t.pi.resize(l);
  for (int k = 0; k < l; ++k) {
    int i = net.from_index(k), j = net.to_index(k);
    double th = state.theta[i] - state.theta[j];
    double vv = state.v[i] * state.v[j];
    t.rho[k] = vv * std::cos(th);
    t.pi[k] = vv * std::sin(th);
  }
  return t;
}

FlowMaps assemble_flow_maps(const Network& net) {
  const int n = net.n_buses(), l = net.n_branches();
  std::vector<Eigen::Triplet<double>> tg, tr, tp;
  for (int k = 0; k < l; ++k) {
    const Branch& br = net.branches[k];
    int i = net.from_index(k), j = net.to_index(k);
    double a = br.tap;
    // P_ij = gamma_i (g/a^2 + g_sh) - (g/a) rho - (b/a) pi
    tg.emplace_back(flow_row(k, 0), i, br.g / (a * a) + br.g_sh);
    tr.emplace_back(flow_row(k, 0), k, -br.g / a);
    tp.emplace_back(flow_row(k, 0), k, -br.b / a);
    // Q_ij = -gamma_i (b/a^2 + b_sh) + (b/a) rho - (g/a) pi
    tg.emplace_back(flow_row(k, 1), i, -(br.b / (a * a) + br.b_sh));
    tr.emplace_back(flow_row(k, 1), k, br.b / a);
    tp.emplace_back(flow_row(k, 1), k, -br.g / a);
    // Reverse direction (a = 1): cos is even, sin is odd, so the rho
    // coefficient keeps its pattern and the pi coefficient flips sign.
    // P_ji = gamma_j (g + g_sh) - g rho + b pi
    tg.emplace_back(flow_row(k, 2), j, br.g + br.g_sh);
    tr.emplace_back(flow_row(k, 2), k, -br.g);
    tp.emplace_back(flow_row(k, 2), k, br.b);
    // Q_ji = -gamma_j (b + b_sh) + b rho + g pi
    tg.emplace_back(flow_row(k, 3), j, -(br.b + br.b_sh));
    tr.emplace_back(flow_row(k, 3), k, br.b);
    tp.emplace_back(flow_row(k, 3), k, br.g);
  }
  FlowMaps maps;
  maps.w_gamma.resize(4 * l, n);
  maps.w_rho.resize(4 * l, l);
  maps.w_pi.resize(4 * l, l);
  maps.w_gamma.setFromTriplets(tg.begin(), tg.end());
  maps.w_rho.setFromTriplets(tr.begin(), tr.end());
  maps.w_pi.setFromTriplets(tp.begin(), tp.end());
  return maps;
}

Eigen::SparseMatrix<double> assemble_injection_map(const Network& net,
                                                   const Eigen::VectorXd& eps) {
  const int n = net.n_buses(), l = net.n_branches();
  if (eps.size() != l) throw std::runtime_error("assemble_injection_map: eps size mismatch");
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < l; ++k) {
    if (eps[k] == 0.0) continue;
    int i = net.from_index(k), j = net.to_index(k);
    t.emplace_back(i, flow_row(k, 0), eps[k]);          // P_i += eps * P_ij
    t.emplace_back(n + i, flow_row(k, 1), eps[k]);      // Q_i += eps * Q_ij
    t.emplace_back(j, flow_row(k, 2), eps[k]);          // P_j += eps * P_ji
    t.emplace_back(n + j, flow_row(k, 3), eps[k]);      // Q_j += eps * Q_ji
  }
  Eigen::SparseMatrix<double> w(2 * n, 4 * l);
  w.setFromTriplets(t.begin(), t.end());
  return w;
}

FlowVectors evaluate_pf(const Network& net, const PFState& state,
                        const Eigen::VectorXd& eps) {
  const int n = net.n_buses(), l = net.n_branches();
  if (state.v.size() != n || eps.size() != l)
    throw std::runtime_error("evaluate_pf: dimension mismatch");
  FlowVectors out;
  out.z_pf.resize(4 * l);
  out.z_inj = Eigen::VectorXd::Zero(2 * n);
  for (int k = 0; k < l; ++k) {
    int i = net.from_index(k), j = net.to_index(k);
    double th = state.theta[i] - state.theta[j];
    auto [pf, qf] = branch_flow(net.branches[k], state.v[i], state.v[j], th,
                                FlowDirection::fwd);
    auto [pr, qr] = branch_flow(net.branches[k], state.v[i], state.v[j], th,
                                FlowDirection::rev);
    out.z_pf[flow_row(k, 0)] = pf;
    out.z_pf[flow_row(k, 1)] = qf;
    out.z_pf[flow_row(k, 2)] = pr;
    out.z_pf[flow_row(k, 3)] = qr;
    out.z_inj[i] += eps[k] * pf;
    out.z_inj[n + i] += eps[k] * qf;
    out.z_inj[j] += eps[k] * pr;
    out.z_inj[n + j] += eps[k] * qr;
  }
  return out;
}

std::string hex_digest(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[h & 0xF];
    h >>= 4;
  }
  return s;
}

}  // namespace gridnn
