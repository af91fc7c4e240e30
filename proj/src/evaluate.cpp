#include "gridnn/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gridnn/linearize.hpp"
#include "gridnn/rng.hpp"

namespace gridnn {

namespace {

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  double pos = q * (static_cast<double>(sorted.size()) - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1 - frac) + sorted[hi] * frac;
}

}  // namespace

BoxStats box_stats(std::vector<double> values) {
  BoxStats s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.median = quantile(values, 0.5);
  s.q1 = quantile(values, 0.25);
  s.q3 = quantile(values, 0.75);
  double iqr = s.q3 - s.q1;
  double lo_fence = s.q1 - 1.5 * iqr, hi_fence = s.q3 + 1.5 * iqr;
  s.whisker_lo = values.back();
  s.whisker_hi = values.front();
  for (double v : values) {
    if (v >= lo_fence) {
      s.whisker_lo = v;
      break;
    }
  }
  for (auto it = values.rbegin(); it != values.rend(); ++it) {
    if (*it <= hi_fence) {
      s.whisker_hi = *it;
      break;
    }
  }
  s.max = values.back();
  double total = 0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  return s;
}

Predictor make_predictor(const GenNNModel& m) {
  return [&m](const Eigen::VectorXd& x) {
    Layers layers = forward_single(m, x);
    return std::make_pair(Eigen::VectorXd(layers.z3.col(0)),
                          Eigen::VectorXd(layers.z4.col(0)));
  };
}

Predictor make_predictor(const DirectNNModel& m, int n_flow_rows) {
  return [&m, n_flow_rows](const Eigen::VectorXd& x) {
    Eigen::VectorXd y = direct_predict(m, x);
    return std::make_pair(Eigen::VectorXd(y.head(n_flow_rows)),
                          Eigen::VectorXd(y.tail(y.size() - n_flow_rows)));
  };
}

Predictor exact_predictor(const Network& net) {
  return [&net](const Eigen::VectorXd& x) {
    PFState st = unpack_input(net, x);
    FlowVectors fv = evaluate_pf(net, st, Eigen::VectorXd::Ones(net.n_branches()));
    return std::make_pair(fv.z_pf, fv.z_inj);
  };
}

ErrorStats flow_error_stats(const Predictor& predict, const Network& net,
                            const Dataset& test) {
  if (test.net_hash != net.digest())
    throw std::runtime_error("flow_error_stats: dataset bound to a different network");
  ErrorStats stats;
  const int l = net.n_branches();
  Eigen::VectorXd capacity(4 * l);
  int zero_capacity = 0;
  for (int k = 0; k < l; ++k) {
    capacity[flow_row(k, 0)] = net.branches[k].p_max;
    capacity[flow_row(k, 1)] = net.branches[k].q_max;
    capacity[flow_row(k, 2)] = net.branches[k].p_max;
    capacity[flow_row(k, 3)] = net.branches[k].q_max;
  }
  for (int e = 0; e < capacity.size(); ++e)
    if (capacity[e] <= 0.0) ++zero_capacity;
  if (zero_capacity > 0)
    stats.warnings.push_back(std::to_string(zero_capacity) +
                             " zero-capacity flow entries excluded");

  for (int s = 0; s < test.size(); ++s) {
    Eigen::VectorXd x = build_input(net, test.state(s));
    auto [z_pf, z_inj] = predict(x);
    double total = 0, worst = 0;
    int counted = 0;
    for (int e = 0; e < 4 * l; ++e) {
      if (capacity[e] <= 0.0) continue;
      double pct = std::abs(z_pf[e] - test.z_pf(e, s)) / capacity[e] * 100.0;
      total += pct;
      worst = std::max(worst, pct);
      ++counted;
    }
    stats.avg_flow_pct.push_back(counted ? total / counted : 0.0);
    stats.max_flow_pct.push_back(worst);
  }
  stats.avg_flow_box = box_stats(stats.avg_flow_pct);
  stats.max_flow_box = box_stats(stats.max_flow_pct);
  return stats;
}

ErrorStats injection_rmse(const Predictor& predict, const Network& net,
                          const Dataset& test) {
  if (test.net_hash != net.digest())
    throw std::runtime_error("injection_rmse: dataset bound to a different network");
  ErrorStats stats;
  for (int s = 0; s < test.size(); ++s) {
    Eigen::VectorXd x = build_input(net, test.state(s));
    auto [z_pf, z_inj] = predict(x);
    double mse = (z_inj - test.z_inj.col(s)).squaredNorm() /
                 static_cast<double>(z_inj.size());
    stats.injection_rmse.push_back(std::sqrt(mse));
  }
  stats.rmse_box = box_stats(stats.injection_rmse);
  return stats;
}

NewtonResult newton_pf(const Network& net, const Eigen::VectorXd& p_set,
                       const Eigen::VectorXd& q_set, const Eigen::VectorXd& eps,
                       const PFState& start, double tol, int max_iters) {
  const int n = net.n_buses();
  const int ref = net.ref_bus();
  NewtonResult result;
  result.state = start;

  // Unknown ordering: V then theta at every non-reference bus.
  std::vector<int> unknown_bus;
  for (int i = 0; i < n; ++i)
    if (i != ref) unknown_bus.push_back(i);
  const int u = static_cast<int>(unknown_bus.size());

  auto mismatch = [&](const PFState& st) {
    FlowVectors fv = evaluate_pf(net, st, eps);
    Eigen::VectorXd f(2 * u);
    for (int k = 0; k < u; ++k) {
      f[k] = fv.z_inj[unknown_bus[k]] - p_set[unknown_bus[k]];
      f[u + k] = fv.z_inj[n + unknown_bus[k]] - q_set[unknown_bus[k]];
    }
    return f;
  };

  Eigen::VectorXd f = mismatch(result.state);
  for (int iter = 0; iter < max_iters; ++iter) {
    result.mismatch = f.lpNorm<Eigen::Infinity>();
    result.iterations = iter;
    if (result.mismatch <= tol) {
      result.converged = true;
      return result;
    }

    // Jacobian of injections w.r.t. (V, theta) at non-reference buses,
    // assembled from per-branch partials of Eq. (1).
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * u, 2 * u);
    std::vector<int> pos(n, -1);
    for (int k = 0; k < u; ++k) pos[unknown_bus[k]] = k;
    for (int k = 0; k < net.n_branches(); ++k) {
      if (eps[k] == 0.0) continue;
      const Branch& br = net.branches[k];
      int i = net.from_index(k), j = net.to_index(k);
      double vi = result.state.v[i], vj = result.state.v[j];
      double th = result.state.theta[i] - result.state.theta[j];
      double a = br.tap;
      double cs = std::cos(th), sn = std::sin(th);

      // Forward direction (sending end i).
      double dp_dvi = 2 * vi * (br.g / (a * a) + br.g_sh) - vj / a * (br.g * cs + br.b * sn);
      double dp_dvj = -vi / a * (br.g * cs + br.b * sn);
      double dp_dth = -vi * vj / a * (-br.g * sn + br.b * cs);
      double dq_dvi = -2 * vi * (br.b / (a * a) + br.b_sh) - vj / a * (br.g * sn - br.b * cs);
      double dq_dvj = -vi / a * (br.g * sn - br.b * cs);
      double dq_dth = -vi * vj / a * (br.g * cs + br.b * sn);
      // Reverse direction (sending end j, tap 1, angle -th).
      double rp_dvj = 2 * vj * (br.g + br.g_sh) - vi * (br.g * cs - br.b * sn);
      double rp_dvi = -vj * (br.g * cs - br.b * sn);
      double rp_dth = vi * vj * (br.g * sn + br.b * cs);  // d/d(theta_ij)
      double rq_dvj = -2 * vj * (br.b + br.b_sh) - vi * (-br.g * sn - br.b * cs);
      double rq_dvi = -vj * (-br.g * sn - br.b * cs);
      double rq_dth = -vi * vj * (-br.g * cs + br.b * sn);

      double e = eps[k];
      auto add = [&](int bus_row, bool q_row, int bus_col, bool th_col, double val) {
        int r = pos[bus_row], c = pos[bus_col];
        if (r < 0 || c < 0) return;
        jac(q_row ? u + r : r, th_col ? u + c : c) += e * val;
      };
      // P_i and Q_i receive the forward flow partials.
      add(i, false, i, false, dp_dvi);
      add(i, false, j, false, dp_dvj);
      add(i, false, i, true, dp_dth);
      add(i, false, j, true, -dp_dth);
      add(i, true, i, false, dq_dvi);
      add(i, true, j, false, dq_dvj);
      add(i, true, i, true, dq_dth);
      add(i, true, j, true, -dq_dth);
      // P_j and Q_j receive the reverse flow partials.
      add(j, false, i, false, rp_dvi);
      add(j, false, j, false, rp_dvj);
      add(j, false, i, true, rp_dth);
      add(j, false, j, true, -rp_dth);
      add(j, true, i, false, rq_dvi);
      add(j, true, j, false, rq_dvj);
      add(j, true, i, true, rq_dth);
      add(j, true, j, true, -rq_dth);
    }

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    Eigen::VectorXd step = lu.solve(f);
    if (!step.allFinite()) return result;  // singular Jacobian

    // Damped update: halve until the mismatch norm decreases.
    double damping = 1.0;
    for (int attempt = 0; attempt < 12; ++attempt) {
      PFState trial = result.state;
      for (int k = 0; k < u; ++k) {
        trial.v[unknown_bus[k]] -= damping * step[k];
        trial.theta[unknown_bus[k]] -= damping * step[u + k];
      }
      Eigen::VectorXd f_trial = mismatch(trial);
      if (f_trial.lpNorm<Eigen::Infinity>() < f.lpNorm<Eigen::Infinity>() ||
          attempt == 11) {
        result.state = trial;
        f = f_trial;
        break;
      }
      damping *= 0.5;
    }
  }
  result.mismatch = f.lpNorm<Eigen::Infinity>();
  result.iterations = max_iters;
  result.converged = result.mismatch <= tol;
  return result;
}

namespace {

void check_violation(std::vector<Violation>& out, const std::string& name, double value,
                     double lo, double hi, double threshold) {
  double range = std::min(hi - lo, 2.0 * kInf);
  if (range <= 0 || range >= kInf) range = std::max(1.0, std::abs(hi) + std::abs(lo));
  double slack = threshold * range;
  if (value < lo - slack) out.push_back({name, lo - value});
  if (value > hi + slack) out.push_back({name, value - hi});
}

}  // namespace

TopoEvalReport evaluate_topology(const Network& net, const GenNNModel& gennn,
                                 const Eigen::VectorXd& eps_solution,
                                 const TopoEvalOptions& options) {
  TopoEvalReport report;
  InputBox box = input_box(net, gennn.x_check, options.theta_bound);

  EncodeOptions base_opts;
  base_opts.theta_bound = options.theta_bound;
  MILPModel base = build_opf(net, gennn, box, base_opts);
  MILPSolution base_sol = solve_milp(base, options.limits);

  EncodeOptions fixed_opts;
  fixed_opts.theta_bound = options.theta_bound;
  fixed_opts.eps_override = eps_solution;
  MILPModel fixed = build_opf(net, gennn, box, fixed_opts);
  MILPSolution sol = solve_milp(fixed, options.limits);

  if (base_sol.status != MILPStatus::optimal || sol.status != MILPStatus::optimal) {
    report.solver_failure = true;
    return report;
  }
  report.base_cost = base_sol.objective;
  report.cost = sol.objective;
  report.cost_percent = std::abs(report.base_cost) > 1e-12
                            ? 100.0 * report.cost / report.base_cost
                            : 100.0;

  // Exact-model residuals and bound checks at the solution point.
  const int n = net.n_buses(), l = net.n_branches();
  PFState st;
  st.v.resize(n);
  st.theta.resize(n);
  for (int i = 0; i < n; ++i) {
    st.v[i] = sol.values[fixed.var_index("V_" + std::to_string(i + 1))];
    st.theta[i] = sol.values[fixed.var_index("th_" + std::to_string(i + 1))];
  }
  FlowVectors exact = evaluate_pf(net, st, eps_solution);
  double residual = 0;
  for (int k = 0; k < l; ++k) {
    static const char* names[4] = {"Pf_", "Qf_", "Pr_", "Qr_"};
    for (int o = 0; o < 4; ++o) {
      double milp_val = sol.values[fixed.var_index(names[o] + std::to_string(k + 1))];
      residual = std::max(residual, std::abs(milp_val - exact.z_pf[flow_row(k, o)]));
    }
  }
  for (int i = 0; i < n; ++i) {
    double p = sol.values[fixed.var_index("P_" + std::to_string(i + 1))];
    double q = sol.values[fixed.var_index("Q_" + std::to_string(i + 1))];
    residual = std::max(residual, std::abs(p - exact.z_inj[i]));
    residual = std::max(residual, std::abs(q - exact.z_inj[n + i]));
  }
  report.exact_residual = residual;

  // Operational limits evaluated on the exact flows of the proposed topology.
  for (int i = 0; i < n; ++i) {
    const Bus& bus = net.buses[i];
    check_violation(report.violations, "V_" + std::to_string(i + 1), st.v[i], bus.v_min,
                    bus.v_max, options.violation_threshold);
    check_violation(report.violations, "P_" + std::to_string(i + 1), exact.z_inj[i],
                    bus.p_min, bus.p_max, options.violation_threshold);
    check_violation(report.violations, "Q_" + std::to_string(i + 1), exact.z_inj[n + i],
                    bus.q_min, bus.q_max, options.violation_threshold);
  }
  for (int k = 0; k < l; ++k) {
    const Branch& br = net.branches[k];
    if (eps_solution[k] == 0.0) continue;
    check_violation(report.violations, "Pf_" + std::to_string(k + 1),
                    exact.z_pf[flow_row(k, 0)], -br.p_max, br.p_max,
                    options.violation_threshold);
    check_violation(report.violations, "Qf_" + std::to_string(k + 1),
                    exact.z_pf[flow_row(k, 1)], -br.q_max, br.q_max,
                    options.violation_threshold);
  }

  if (options.newton_probe) {
    Eigen::VectorXd p_set(n), q_set(n);
    for (int i = 0; i < n; ++i) {
      p_set[i] = exact.z_inj[i];
      q_set[i] = exact.z_inj[n + i];
    }
    NewtonResult nr = newton_pf(net, p_set, q_set, eps_solution, st);
    report.newton_converged = nr.converged;
    if (!nr.converged) report.solver_failure = true;
  }
  return report;
}

double energy_not_served(const Eigen::MatrixXd& shed_fraction,
                         const std::vector<int>& affected_buses,
                         const Eigen::VectorXd& p_demand, int horizon,
                         std::vector<std::string>* warnings) {
  double served_deficit = 0, total = 0;
  for (int t = 0; t < horizon; ++t) {
    for (int bus : affected_buses) {
      double x = shed_fraction(bus, t);
      served_deficit += (1.0 - x) * p_demand[bus];
      total += p_demand[bus];
    }
  }
  if (total <= 0) {
    if (warnings)
      warnings->push_back("energy_not_served: zero demand at affected buses");
    return 0.0;
  }
  return 100.0 * served_deficit / total;
}

std::vector<Eigen::VectorXd> demand_scenarios(const Network& net, double lo_pct,
                                              double hi_pct, int count,
                                              std::uint64_t seed) {
  if (!(lo_pct > 0 && lo_pct <= hi_pct))
    throw std::runtime_error("demand_scenarios: need 0 < lo <= hi");
  std::vector<Eigen::VectorXd> scenarios;
  scenarios.reserve(count);
  for (int s = 0; s < count; ++s) {
    SplitMix64 rng = stream_rng(seed, static_cast<std::uint64_t>(s));
    Eigen::VectorXd scale(net.n_buses());
    for (int i = 0; i < net.n_buses(); ++i)
      scale[i] = rng.uniform(lo_pct / 100.0, hi_pct / 100.0);
    scenarios.push_back(scale);
  }
  return scenarios;
}

}  // namespace gridnn
