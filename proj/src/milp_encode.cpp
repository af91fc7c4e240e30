#include "gridnn/milp_encode.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace gridnn {

namespace {

std::string tag(const std::string& base, int id, const std::string& suffix) {
  return base + std::to_string(id) + suffix;
}

/// Accumulates (variable, coeff) terms plus a constant that later moves to
/// the RHS. add_xtilde expands coefficient * x_tilde_n through the coordinate
/// substitution x_tilde = (V or theta_i - theta_j) - anchor.
struct Row {
  std::vector<LinTerm> terms;
  double constant = 0.0;

  void add(int var, double coeff) {
    if (coeff != 0.0) terms.push_back({var, coeff});
  }
};

struct Encoder {
  MILPModel& model;
  const GenNNModel& gennn;
  const Network& net;
  const InputBox& box;
  const std::string& suffix;
  PwlPfVars vars;

  void add_xtilde(Row& row, int coord, double coeff) const {
    if (coeff == 0.0) return;
    const int n = net.n_buses();
    if (coord < n) {
      row.add(vars.v[coord], coeff);
      row.constant -= coeff * gennn.x_check[coord];
    } else {
      int branch = coord - n;
      row.add(vars.theta[net.from_index(branch)], coeff);
      row.add(vars.theta[net.to_index(branch)], -coeff);
      row.constant -= coeff * gennn.x_check[coord];
    }
  }
};

}  // namespace

InputBox input_box(const Network& net, const Eigen::VectorXd& x_check,
                   double theta_bound) {
  const int n = net.n_buses(), l = net.n_branches();
  if (x_check.size() != n + l)
    throw std::runtime_error("input_box: anchor dimension mismatch");
  if (theta_bound <= 0) throw std::runtime_error("input_box: theta_bound must be positive");
  InputBox box;
  box.lo.resize(n + l);
  box.hi.resize(n + l);
  const int ref = net.ref_bus();
  for (int i = 0; i < n; ++i) {
    if (i == ref) {
      box.lo[i] = box.hi[i] = 0.0;
    } else {
      box.lo[i] = net.buses[i].v_min - x_check[i];
      box.hi[i] = net.buses[i].v_max - x_check[i];
    }
    if (box.lo[i] > box.hi[i])
      throw std::runtime_error("input_box: empty V range at bus " +
                               std::to_string(i + 1));
  }
  for (int k = 0; k < l; ++k) {
    double tmin = std::max(net.branches[k].theta_min, -theta_bound);
    double tmax = std::min(net.branches[k].theta_max, theta_bound);
    box.lo[n + k] = tmin - x_check[n + k];
    box.hi[n + k] = tmax - x_check[n + k];
    if (box.lo[n + k] > box.hi[n + k])
      throw std::runtime_error("input_box: empty theta range at branch " +
                               std::to_string(k + 1));
  }
  return box;
}

ReluBounds relu_bounds(const Eigen::MatrixXd& w1, const InputBox& box) {
  const int k_count = static_cast<int>(w1.rows());
  const int d = static_cast<int>(w1.cols());
  if (box.lo.size() != d) throw std::runtime_error("relu_bounds: box dimension mismatch");
  ReluBounds rb;
  rb.l.resize(d, k_count);
  rb.u.resize(d, k_count);
  for (int k = 0; k < k_count; ++k)
    for (int n = 0; n < d; ++n) {
      if (w1(k, n) >= 0.0) {
        rb.l(n, k) = box.lo[n];
        rb.u(n, k) = box.hi[n];
      } else {
        rb.l(n, k) = box.hi[n];
        rb.u(n, k) = box.lo[n];
      }
    }
  return rb;
}

PruneSets prune_sets(const Eigen::MatrixXd& w1, const Eigen::VectorXd& bias,
                     const ReluBounds& bounds) {
  PruneSets p;
  for (int k = 0; k < w1.rows(); ++k) {
    double hi = w1.row(k).dot(bounds.u.col(k)) + bias[k];
    double lo = w1.row(k).dot(bounds.l.col(k)) + bias[k];
    if (hi < 0.0)
      p.k0.push_back(k);
    else if (lo >= 0.0)
      p.k1.push_back(k);
  }
  return p;
}

PwlPfVars encode_pwlpf(MILPModel& model, const GenNNModel& gennn, const Network& net,
                       const InputBox& box, const ReluBounds& bounds,
                       const PruneSets& prune, const Eigen::VectorXd* eps_fixed,
                       const std::string& suffix) {
  const int n = net.n_buses(), l = net.n_branches();
  const int k_count = gennn.hidden();
  if (box.lo.size() != gennn.inputs())
    throw std::runtime_error("encode_pwlpf: box incompatible with checkpoint dims");
  if (gennn.inputs() != input_dim(net) || gennn.branch_count() != l)
    throw std::runtime_error("encode_pwlpf: model does not match network");

  Encoder enc{model, gennn, net, box, suffix, {}};
  PwlPfVars& v = enc.vars;
  v.suffix = suffix;
  const int ref = net.ref_bus();

  std::vector<char> in_k0(k_count, 0), in_k1(k_count, 0);
  for (int k : prune.k0) in_k0[k] = 1;
  for (int k : prune.k1) in_k1[k] = 1;

  // Variables. Bounds double as the box constraints for V; gamma bounds are
  // implied by gamma = 2V - V_check.
  v.v.resize(n);
  v.theta.resize(n);
  v.gamma.resize(n);
  for (int i = 0; i < n; ++i) {
    double lo = gennn.x_check[i] + box.lo[i], hi = gennn.x_check[i] + box.hi[i];
    v.v[i] = model.add_variable(tag("V_", i + 1, suffix), VarKind::continuous, lo, hi);
  }
  for (int i = 0; i < n; ++i) {
    double lo = (i == ref) ? 0.0 : -2 * 3.14159265358979323846;
    double hi = (i == ref) ? 0.0 : 2 * 3.14159265358979323846;
    v.theta[i] = model.add_variable(tag("th_", i + 1, suffix), VarKind::continuous, lo, hi);
  }
  for (int i = 0; i < n; ++i) {
    double lo = gennn.x_check[i] + 2 * box.lo[i], hi = gennn.x_check[i] + 2 * box.hi[i];
    v.gamma[i] = model.add_variable(tag("gam_", i + 1, suffix), VarKind::continuous, lo, hi);
  }
  v.rho.resize(l);
  v.pi.resize(l);
  for (int k = 0; k < l; ++k)
    v.rho[k] = model.add_variable(tag("rho_", k + 1, suffix), VarKind::continuous, -kInf, kInf);
  for (int k = 0; k < l; ++k)
    v.pi[k] = model.add_variable(tag("pi_", k + 1, suffix), VarKind::continuous, -kInf, kInf);
  v.flow.resize(l);
  static const char* flow_names[4] = {"Pf_", "Qf_", "Pr_", "Qr_"};
  for (int k = 0; k < l; ++k) {
    const Branch& br = net.branches[k];
    double pb = br.p_max, qb = br.q_max;
    v.flow[k][0] = model.add_variable(tag(flow_names[0], k + 1, suffix), VarKind::continuous, -pb, pb);
    v.flow[k][1] = model.add_variable(tag(flow_names[1], k + 1, suffix), VarKind::continuous, -qb, qb);
    v.flow[k][2] = model.add_variable(tag(flow_names[2], k + 1, suffix), VarKind::continuous, -pb, pb);
    v.flow[k][3] = model.add_variable(tag(flow_names[3], k + 1, suffix), VarKind::continuous, -qb, qb);
  }
  v.z1.resize(k_count);
  v.beta.assign(k_count, -1);
  for (int k = 0; k < k_count; ++k) {
    double ub = gennn.w1.row(k).dot(bounds.u.col(k)) + gennn.bias[k];
    double z_hi = in_k0[k] ? 0.0 : std::max(0.0, ub);
    v.z1[k] = model.add_variable(tag("z1_", k + 1, suffix), VarKind::continuous, 0.0, z_hi);
  }
  for (int k = 0; k < k_count; ++k)
    if (!in_k0[k] && !in_k1[k])
      v.beta[k] = model.add_variable(tag("beta_", k + 1, suffix), VarKind::binary, 0, 1);

  // Angle-difference ranges (the effective bounds the box was built from).
  for (int k = 0; k < l; ++k) {
    int i = net.from_index(k), j = net.to_index(k);
    double anchor = gennn.x_check[n + k];
    model.add_constraint(tag("thlo_", k + 1, suffix),
                         {{v.theta[i], 1.0}, {v.theta[j], -1.0}}, Sense::ge,
                         anchor + box.lo[n + k]);
    model.add_constraint(tag("thhi_", k + 1, suffix),
                         {{v.theta[i], 1.0}, {v.theta[j], -1.0}}, Sense::le,
                         anchor + box.hi[n + k]);
  }

  // ReLU rows. Unpruned neurons get the four-inequality big-M block (the
  // z1 >= 0 side lives in the variable bound); K1 neurons collapse to an
  // equality, K0 neurons are fixed at zero by their bounds.
  for (int k = 0; k < k_count; ++k) {
    if (in_k0[k]) continue;
    double wl = gennn.w1.row(k).dot(bounds.l.col(k));
    double wu = gennn.w1.row(k).dot(bounds.u.col(k));
    Row lower;  // z1 - W x_tilde >= b
    lower.add(v.z1[k], 1.0);
    for (int c = 0; c < gennn.inputs(); ++c) enc.add_xtilde(lower, c, -gennn.w1(k, c));
    if (in_k1[k]) {
      model.add_constraint(tag("zdef_", k + 1, suffix), lower.terms, Sense::eq,
                           gennn.bias[k] - lower.constant);
      continue;
    }
    model.add_constraint(tag("zlo_", k + 1, suffix), lower.terms, Sense::ge,
                         gennn.bias[k] - lower.constant);
    // z1 <= W x_tilde - W L (1 - beta) + b beta
    Row upper_on;
    upper_on.add(v.z1[k], 1.0);
    for (int c = 0; c < gennn.inputs(); ++c) enc.add_xtilde(upper_on, c, -gennn.w1(k, c));
    upper_on.add(v.beta[k], -(gennn.bias[k] + wl));
    model.add_constraint(tag("zon_", k + 1, suffix), upper_on.terms, Sense::le,
                         -wl - upper_on.constant);
    // z1 <= (W U + b) beta
    model.add_constraint(tag("zoff_", k + 1, suffix),
                         {{v.z1[k], 1.0}, {v.beta[k], -(wu + gennn.bias[k])}}, Sense::le,
                         0.0);
  }

  // rho/pi affine rows: rho = rho_check + J x_tilde + W2 z1.
  for (int k = 0; k < l; ++k) {
    Row row;
    row.add(v.rho[k], 1.0);
    for (int c = 0; c < gennn.inputs(); ++c) enc.add_xtilde(row, c, -gennn.j_check(k, c));
    for (int kk = 0; kk < k_count; ++kk) row.add(v.z1[kk], -gennn.w2(k, kk));
    model.add_constraint(tag("rdef_", k + 1, suffix), row.terms, Sense::eq,
                         gennn.f_check[k] - row.constant);
  }
  for (int k = 0; k < l; ++k) {
    Row row;
    row.add(v.pi[k], 1.0);
    for (int c = 0; c < gennn.inputs(); ++c)
      enc.add_xtilde(row, c, -gennn.j_check(l + k, c));
    for (int kk = 0; kk < k_count; ++kk) row.add(v.z1[kk], -gennn.w2(l + k, kk));
    model.add_constraint(tag("pdef_", k + 1, suffix), row.terms, Sense::eq,
                         gennn.f_check[l + k] - row.constant);
  }

  // gamma_hat = 2V - V_check
  for (int i = 0; i < n; ++i)
    model.add_constraint(tag("gdef_", i + 1, suffix),
                         {{v.gamma[i], 1.0}, {v.v[i], -2.0}}, Sense::eq,
                         -gennn.x_check[i]);

  // Per-direction flow definitions from the frozen physics maps.
  FlowMaps maps = assemble_flow_maps(net);
  for (int k = 0; k < l; ++k) {
    int i = net.from_index(k), j = net.to_index(k);
    static const char* row_names[4] = {"fPf_", "fQf_", "fPr_", "fQr_"};
    for (int o = 0; o < 4; ++o) {
      int r = flow_row(k, o);
      Row row;
      row.add(v.flow[k][o], 1.0);
      int gamma_bus = (o < 2) ? i : j;
      row.add(v.gamma[gamma_bus], -maps.w_gamma.coeff(r, gamma_bus));
      row.add(v.rho[k], -maps.w_rho.coeff(r, k));
      row.add(v.pi[k], -maps.w_pi.coeff(r, k));
      model.add_constraint(tag(row_names[o], k + 1, suffix), row.terms, Sense::eq, 0.0);
    }
  }

  // Injection balance with constant eps (fixed-topology problems).
  if (eps_fixed) {
    if (eps_fixed->size() != l)
      throw std::runtime_error("encode_pwlpf: eps dimension mismatch");
    v.p_inj.resize(n);
    v.q_inj.resize(n);
    for (int i = 0; i < n; ++i) {
      const Bus& bus = net.buses[i];
      v.p_inj[i] = model.add_variable(tag("P_", i + 1, suffix), VarKind::continuous,
                                      bus.p_min, bus.p_max);
      v.q_inj[i] = model.add_variable(tag("Q_", i + 1, suffix), VarKind::continuous,
                                      bus.q_min, bus.q_max);
    }
    for (int i = 0; i < n; ++i) {
      Row prow, qrow;
      prow.add(v.p_inj[i], 1.0);
      qrow.add(v.q_inj[i], 1.0);
      for (int k = 0; k < l; ++k) {
        double e = (*eps_fixed)[k];
        if (e == 0.0) continue;
        if (net.from_index(k) == i) {
          prow.add(v.flow[k][0], -e);
          qrow.add(v.flow[k][1], -e);
        }
        if (net.to_index(k) == i) {
          prow.add(v.flow[k][2], -e);
          qrow.add(v.flow[k][3], -e);
        }
      }
      model.add_constraint(tag("balP_", i + 1, suffix), prow.terms, Sense::eq, 0.0);
      model.add_constraint(tag("balQ_", i + 1, suffix), qrow.terms, Sense::eq, 0.0);
    }
  }
  return v;
}

namespace {

ReluBounds bounds_for(const GenNNModel& gennn, const InputBox& box) {
  return relu_bounds(gennn.w1, box);
}

PruneSets prune_for(const GenNNModel& gennn, const ReluBounds& rb, bool use_pruning) {
  if (!use_pruning) return {};
  return prune_sets(gennn.w1, gennn.bias, rb);
}

void add_cost_objective(MILPModel& model, const Network& net,
                        const std::vector<int>& p_inj) {
  model.objective_sense = ObjSense::minimize;
  for (int i = 0; i < net.n_buses(); ++i) {
    if (net.buses[i].cost_lin != 0.0)
      model.objective.push_back({p_inj[i], net.buses[i].cost_lin});
    model.objective_constant += net.buses[i].cost_const;
  }
}

/// Four big-M rows tying a switched flow h to its raw value w through the
/// status binary: h in [-M eps, M eps] and h in [w + M(eps-1), w - M(eps-1)].
void add_switch_rows(MILPModel& model, const std::string& base, int h, int w, int eps,
                     double big_m) {
  model.add_constraint(base + "_off_hi", {{h, 1.0}, {eps, -big_m}}, Sense::le, 0.0);
  model.add_constraint(base + "_off_lo", {{h, 1.0}, {eps, big_m}}, Sense::ge, 0.0);
  model.add_constraint(base + "_on_lo", {{h, 1.0}, {w, -1.0}, {eps, -big_m}}, Sense::ge,
                       -big_m);
  model.add_constraint(base + "_on_hi", {{h, 1.0}, {w, -1.0}, {eps, big_m}}, Sense::le,
                       big_m);
}

}  // namespace

MILPModel build_opf(const Network& net, const GenNNModel& gennn, const InputBox& box,
                    const EncodeOptions& options) {
  // Census (documented for the counting oracle), with B = K - |K0| - |K1|:
  //   variables   = 5N + 6L + K + B
  //   constraints = 3N + 8L + 3B + |K1|
  MILPModel model;
  ReluBounds rb = bounds_for(gennn, box);
  PruneSets prune = prune_for(gennn, rb, options.use_pruning);
  Eigen::VectorXd eps(net.n_branches());
  if (options.eps_override) {
    eps = *options.eps_override;
  } else {
    for (int k = 0; k < net.n_branches(); ++k) eps[k] = net.branches[k].status;
  }
  PwlPfVars vars = encode_pwlpf(model, gennn, net, box, rb, prune, &eps);
  add_cost_objective(model, net, vars.p_inj);
  model.validate();
  return model;
}

std::string ots_eps_name(int branch) { return "eps_" + std::to_string(branch + 1); }

MILPModel build_ots(const Network& net, const GenNNModel& gennn, const InputBox& box,
                    double alpha, const EncodeOptions& options) {
  if (alpha < 0) throw std::runtime_error("build_ots: alpha must be >= 0");
  const int n = net.n_buses(), l = net.n_branches();
  MILPModel model;
  ReluBounds rb = bounds_for(gennn, box);
  PruneSets prune = prune_for(gennn, rb, options.use_pruning);
  PwlPfVars vars = encode_pwlpf(model, gennn, net, box, rb, prune, nullptr);

  // Switchable branches get a status binary plus switched flow variables;
  // fixed branches enter the balance with their constant status.
  std::vector<int> eps_var(l, -1);
  std::vector<std::array<int, 4>> hat(l, {-1, -1, -1, -1});
  int n_switchable = 0;
  for (int k = 0; k < l; ++k) {
    if (!net.branches[k].switchable) continue;
    ++n_switchable;
    eps_var[k] = model.add_variable(ots_eps_name(k), VarKind::binary, 0, 1);
    const Branch& br = net.branches[k];
    static const char* names[4] = {"Phf_", "Qhf_", "Phr_", "Qhr_"};
    double big_m[4] = {br.p_max, br.q_max, br.p_max, br.q_max};
    for (int o = 0; o < 4; ++o) {
      hat[k][o] = model.add_variable(tag(names[o], k + 1, ""), VarKind::continuous,
                                     -big_m[o], big_m[o]);
      add_switch_rows(model, tag(names[o], k + 1, ""), hat[k][o], vars.flow[k][o],
                      eps_var[k], big_m[o]);
    }
  }

  vars.p_inj.resize(n);
  vars.q_inj.resize(n);
  for (int i = 0; i < n; ++i) {
    const Bus& bus = net.buses[i];
    vars.p_inj[i] = model.add_variable(tag("P_", i + 1, ""), VarKind::continuous,
                                       bus.p_min, bus.p_max);
    vars.q_inj[i] = model.add_variable(tag("Q_", i + 1, ""), VarKind::continuous,
                                       bus.q_min, bus.q_max);
  }
  for (int i = 0; i < n; ++i) {
    Row prow, qrow;
    prow.add(vars.p_inj[i], 1.0);
    qrow.add(vars.q_inj[i], 1.0);
    for (int k = 0; k < l; ++k) {
      bool from_here = net.from_index(k) == i, to_here = net.to_index(k) == i;
      if (!from_here && !to_here) continue;
      if (eps_var[k] >= 0) {
        if (from_here) {
          prow.add(hat[k][0], -1.0);
          qrow.add(hat[k][1], -1.0);
        }
        if (to_here) {
          prow.add(hat[k][2], -1.0);
          qrow.add(hat[k][3], -1.0);
        }
      } else {
        double e = net.branches[k].status;
        if (e == 0.0) continue;
        if (from_here) {
          prow.add(vars.flow[k][0], -e);
          qrow.add(vars.flow[k][1], -e);
        }
        if (to_here) {
          prow.add(vars.flow[k][2], -e);
          qrow.add(vars.flow[k][3], -e);
        }
      }
    }
    model.add_constraint(tag("balP_", i + 1, ""), prow.terms, Sense::eq, 0.0);
    model.add_constraint(tag("balQ_", i + 1, ""), qrow.terms, Sense::eq, 0.0);
  }

  // Switching budget: at most alpha lines out.
  Row budget;
  for (int k = 0; k < l; ++k)
    if (eps_var[k] >= 0) budget.add(eps_var[k], 1.0);
  model.add_constraint("budget", budget.terms, Sense::ge, n_switchable - alpha);

  add_cost_objective(model, net, vars.p_inj);
  model.validate();
  return model;
}

std::string rop_shed_name(int bus_id, int t) {
  return "xshed_" + std::to_string(bus_id) + "_t" + std::to_string(t);
}

std::string rop_eps_name(int branch, int t) {
  return "eps_" + std::to_string(branch + 1) + "_t" + std::to_string(t);
}

MILPModel build_rop(const Network& net, const GenNNModel& gennn, const InputBox& box,
                    const RopConfig& rop, const EncodeOptions& options) {
  const int n = net.n_buses(), l = net.n_branches();
  if (rop.horizon < 1) throw std::runtime_error("build_rop: horizon must be >= 1");
  std::set<int> damaged(rop.damaged.begin(), rop.damaged.end());
  for (int k : damaged)
    if (k < 0 || k >= l)
      throw std::runtime_error("build_rop: damaged branch " + std::to_string(k) +
                               " not in network");
  if (rop.eta * rop.horizon < static_cast<double>(damaged.size()))
    throw std::runtime_error(
        "build_rop: eta*T < damaged count; terminal full restoration infeasible");

  MILPModel model;
  ReluBounds rb = bounds_for(gennn, box);
  PruneSets prune = prune_for(gennn, rb, options.use_pruning);

  // Bus classification for the load model: buses with generation headroom
  // keep their injection bounds (x == 1); pure demand buses get a shedding
  // fraction scaling both P and Q.
  std::vector<bool> is_demand(n, false);
  for (int i = 0; i < n; ++i)
    is_demand[i] = net.buses[i].p_demand > 0.0 && net.buses[i].p_max <= 0.0;

  std::vector<std::vector<int>> eps_t(rop.horizon + 1);  // index by t = 1..T
  model.objective_sense = ObjSense::maximize;

  for (int t = 1; t <= rop.horizon; ++t) {
    std::string suffix = "_t" + std::to_string(t);
    PwlPfVars vars = encode_pwlpf(model, gennn, net, box, rb, prune, nullptr, suffix);

    eps_t[t].assign(l, -1);
    std::vector<std::array<int, 4>> hat(l, {-1, -1, -1, -1});
    for (int k : damaged) {
      bool last = (t == rop.horizon);
      eps_t[t][k] = model.add_variable(rop_eps_name(k, t), VarKind::binary,
                                       last ? 1.0 : 0.0, 1.0);  // eps_T = 1
      const Branch& br = net.branches[k];
      static const char* names[4] = {"Phf_", "Qhf_", "Phr_", "Qhr_"};
      double big_m[4] = {br.p_max, br.q_max, br.p_max, br.q_max};
      for (int o = 0; o < 4; ++o) {
        hat[k][o] = model.add_variable(tag(names[o], k + 1, suffix),
                                       VarKind::continuous, -big_m[o], big_m[o]);
        add_switch_rows(model, tag(names[o], k + 1, suffix), hat[k][o],
                        vars.flow[k][o], eps_t[t][k], big_m[o]);
      }
    }

    // Injections: generator buses bounded as parsed, demand buses tied to
    // the shedding fraction.
    vars.p_inj.resize(n);
    vars.q_inj.resize(n);
    std::vector<int> shed(n, -1);
    for (int i = 0; i < n; ++i) {
      const Bus& bus = net.buses[i];
      if (is_demand[i]) {
        shed[i] = model.add_variable(rop_shed_name(i + 1, t), VarKind::continuous, 0, 1);
        vars.p_inj[i] = model.add_variable(tag("P_", i + 1, suffix), VarKind::continuous,
                                           -bus.p_demand, 0.0);
        double q_lo = std::min(0.0, -bus.q_demand), q_hi = std::max(0.0, -bus.q_demand);
        vars.q_inj[i] = model.add_variable(tag("Q_", i + 1, suffix), VarKind::continuous,
                                           q_lo, q_hi);
        model.add_constraint(tag("shedP_", i + 1, suffix),
                             {{vars.p_inj[i], 1.0}, {shed[i], bus.p_demand}}, Sense::eq,
                             0.0);
        model.add_constraint(tag("shedQ_", i + 1, suffix),
                             {{vars.q_inj[i], 1.0}, {shed[i], bus.q_demand}}, Sense::eq,
                             0.0);
        model.objective.push_back({shed[i], bus.p_demand});
      } else {
        vars.p_inj[i] = model.add_variable(tag("P_", i + 1, suffix), VarKind::continuous,
                                           bus.p_min, bus.p_max);
        vars.q_inj[i] = model.add_variable(tag("Q_", i + 1, suffix), VarKind::continuous,
                                           bus.q_min, bus.q_max);
      }
    }
    for (int i = 0; i < n; ++i) {
      Row prow, qrow;
      prow.add(vars.p_inj[i], 1.0);
      qrow.add(vars.q_inj[i], 1.0);
      for (int k = 0; k < l; ++k) {
        bool from_here = net.from_index(k) == i, to_here = net.to_index(k) == i;
        if (!from_here && !to_here) continue;
        if (eps_t[t][k] >= 0) {
          if (from_here) {
            prow.add(hat[k][0], -1.0);
            qrow.add(hat[k][1], -1.0);
          }
          if (to_here) {
            prow.add(hat[k][2], -1.0);
            qrow.add(hat[k][3], -1.0);
          }
        } else {
          double e = net.branches[k].status;
          if (e == 0.0) continue;
          if (from_here) {
            prow.add(vars.flow[k][0], -e);
            qrow.add(vars.flow[k][1], -e);
          }
          if (to_here) {
            prow.add(vars.flow[k][2], -e);
            qrow.add(vars.flow[k][3], -e);
          }
        }
      }
      model.add_constraint(tag("balP_", i + 1, suffix), prow.terms, Sense::eq, 0.0);
      model.add_constraint(tag("balQ_", i + 1, suffix), qrow.terms, Sense::eq, 0.0);
    }

    // Per-period budget: R_t = R_0 + eta*t with R_0 the undamaged in-service
    // count, so the damaged lines alone obey sum(eps) <= eta*t.
    Row budget;
    for (int k : damaged) budget.add(eps_t[t][k], 1.0);
    model.add_constraint("budget" + suffix, budget.terms, Sense::le, rop.eta * t);

    // Monotone restoration.
    if (t > 1)
      for (int k : damaged)
        model.add_constraint(tag("mono_", k + 1, suffix),
                             {{eps_t[t][k], 1.0}, {eps_t[t - 1][k], -1.0}}, Sense::ge,
                             0.0);
  }

  model.validate();
  return model;
}

}  // namespace gridnn
