#include <doctest.h>

#include <set>

#include "gridnn/milp_encode.hpp"
#include "gridnn/milp_solve.hpp"
#include "test_helpers.hpp"

using namespace gridnn;
using namespace gridnn::testing;

namespace {

constexpr double kPi = 3.14159265358979323846;

GenNNModel random_model(const Network& net, int k, std::uint64_t seed, double scale) {
  Linearization lin = jacobian(net, build_input(net, flat_state(net)));
  GenNNModel m = make_gennn(net, lin, k);
  SplitMix64 rng(seed);
  for (int r = 0; r < m.w1.rows(); ++r)
    for (int c = 0; c < m.w1.cols(); ++c) m.w1(r, c) = rng.uniform(-scale, scale);
  for (int r = 0; r < m.w2.rows(); ++r)
    for (int c = 0; c < m.w2.cols(); ++c) m.w2(r, c) = rng.uniform(-scale, scale);
  for (int r = 0; r < m.bias.size(); ++r) m.bias[r] = rng.uniform(-scale, scale);
  return m;
}

/// Feasible interval for one z1 variable given fixed (V, theta, beta) values,
/// read off the emitted constraint rows and variable bounds. Returns an empty
/// (lo > hi) interval when the rows are inconsistent.
std::pair<double, double> z1_interval(const MILPModel& model, int z1_var,
                                      const Eigen::VectorXd& fixed_values,
                                      const std::vector<bool>& is_fixed) {
  double lo = model.variables[z1_var].lower;
  double hi = model.variables[z1_var].upper;
  for (const Constraint& con : model.constraints) {
    double z_coeff = 0.0, rest = 0.0;
    bool touches_unfixed = false;
    for (const LinTerm& t : con.terms) {
      if (t.var == z1_var) {
        z_coeff = t.coeff;
      } else if (is_fixed[t.var]) {
        rest += t.coeff * fixed_values[t.var];
      } else {
        touches_unfixed = true;
      }
    }
    if (z_coeff == 0.0 || touches_unfixed) continue;
    double bound = (con.rhs - rest) / z_coeff;
    bool flip = z_coeff < 0;
    switch (con.sense) {
      case Sense::le: (flip ? lo : hi) = flip ? std::max(lo, bound) : std::min(hi, bound); break;
      case Sense::ge: (flip ? hi : lo) = flip ? std::min(hi, bound) : std::max(lo, bound); break;
      case Sense::eq:
        lo = std::max(lo, bound);
        hi = std::min(hi, bound);
        break;
    }
  }
  return {lo, hi};
}

}  // namespace

TEST_CASE("input_box from operating limits") {
  ParseResult cr = load_case("case14.m");
  const Network& net = cr.net;
  Eigen::VectorXd x_check = build_input(net, *cr.anchor);
  InputBox box = input_box(net, x_check, kPi / 6);
  const int ref = net.ref_bus();
  for (int i = 0; i < net.n_buses(); ++i) {
    if (i == ref) {
      CHECK(box.lo[i] == 0.0);
      CHECK(box.hi[i] == 0.0);
    } else {
      CHECK(box.lo[i] == doctest::Approx(0.94 - x_check[i]));
      CHECK(box.hi[i] == doctest::Approx(1.06 - x_check[i]));
    }
  }
  // Branch limits are +-2pi in the case file, so +-pi/6 governs.
  for (int k = 0; k < net.n_branches(); ++k) {
    int c = net.n_buses() + k;
    CHECK(box.lo[c] == doctest::Approx(-kPi / 6 - x_check[c]));
    CHECK(box.hi[c] == doctest::Approx(kPi / 6 - x_check[c]));
  }

  // Anchor at V_check = 1 with [0.94, 1.06] limits gives [-0.06, +0.06].
  Network flat_net = net;
  Eigen::VectorXd flat_anchor = build_input(net, flat_state(net));
  InputBox fbox = input_box(flat_net, flat_anchor, kPi / 6);
  for (int i = 0; i < net.n_buses(); ++i) {
    if (i == ref) continue;
    CHECK(fbox.lo[i] == doctest::Approx(-0.06));
    CHECK(fbox.hi[i] == doctest::Approx(0.06));
  }
}

TEST_CASE("relu_bounds sign construction") {
  Eigen::MatrixXd w1(1, 2);
  w1 << 1.0, -1.0;
  InputBox box;
  box.lo = Eigen::VectorXd::Constant(2, -1.0);
  box.hi = Eigen::VectorXd::Constant(2, 1.0);
  ReluBounds rb = relu_bounds(w1, box);
  CHECK(rb.u(0, 0) == 1.0);
  CHECK(rb.u(1, 0) == -1.0);
  CHECK(rb.l(0, 0) == -1.0);
  CHECK(rb.l(1, 0) == 1.0);
  CHECK(w1.row(0).dot(rb.u.col(0)) == doctest::Approx(2.0));
  CHECK(w1.row(0).dot(rb.l.col(0)) == doctest::Approx(-2.0));

  Eigen::MatrixXd pos(1, 2);
  pos << 0.5, 2.0;  // all nonnegative weights take U = hi
  ReluBounds rbp = relu_bounds(pos, box);
  CHECK(rbp.u(0, 0) == box.hi[0]);
  CHECK(rbp.u(1, 0) == box.hi[1]);
}

TEST_CASE("relu bounds are valid over sampled box points") {
  SplitMix64 rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    int d = 2 + static_cast<int>(rng.below(4));
    int k = 1 + static_cast<int>(rng.below(4));
    Eigen::MatrixXd w1(k, d);
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < d; ++c) w1(r, c) = rng.uniform(-2.0, 2.0);
    InputBox box;
    box.lo.resize(d);
    box.hi.resize(d);
    for (int c = 0; c < d; ++c) {
      double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
      box.lo[c] = std::min(a, b);
      box.hi[c] = std::max(a, b);
    }
    ReluBounds rb = relu_bounds(w1, box);
    for (int probe = 0; probe < 100; ++probe) {
      Eigen::VectorXd x(d);
      for (int c = 0; c < d; ++c) x[c] = rng.uniform(box.lo[c], box.hi[c]);
      for (int r = 0; r < k; ++r) {
        double val = w1.row(r).dot(x);
        CHECK(val <= w1.row(r).dot(rb.u.col(r)) + 1e-12);
        CHECK(val >= w1.row(r).dot(rb.l.col(r)) - 1e-12);
      }
    }
  }
}

TEST_CASE("prune set arithmetic") {
  Eigen::MatrixXd w1(1, 2);
  w1 << 1.0, -1.0;
  InputBox box;
  box.lo = Eigen::VectorXd::Constant(2, -1.0);
  box.hi = Eigen::VectorXd::Constant(2, 1.0);
  ReluBounds rb = relu_bounds(w1, box);

  Eigen::VectorXd b(1);
  b << -3.0;  // WU + b = -1 < 0
  PruneSets p0 = prune_sets(w1, b, rb);
  CHECK(p0.k0 == std::vector<int>{0});
  CHECK(p0.k1.empty());

  b << 3.0;  // WL + b = 1 >= 0
  PruneSets p1 = prune_sets(w1, b, rb);
  CHECK(p1.k1 == std::vector<int>{0});
  CHECK(p1.k0.empty());

  b << 0.0;
  PruneSets pn = prune_sets(w1, b, rb);
  CHECK(pn.k0.empty());
  CHECK(pn.k1.empty());
}

TEST_CASE("encoding pins z1 to the forward pass (brute force over beta)") {
  SplitMix64 rng(7777);
  for (int instance = 0; instance < 6; ++instance) {
    Network net = two_bus(rng.uniform(0.5, 2.0), rng.uniform(-8.0, -2.0));
    if (instance % 2 == 1) net.branches.push_back(net.branches[0]);  // D = 4
    int k_count = 1 + static_cast<int>(rng.below(3));
    GenNNModel gennn = random_model(net, k_count, rng.next(), 2.0);
    Eigen::VectorXd x_check = gennn.x_check;
    InputBox box = input_box(net, x_check, kPi / 6);
    ReluBounds rb = relu_bounds(gennn.w1, box);
    PruneSets prune = prune_sets(gennn.w1, gennn.bias, rb);
    std::set<int> k0(prune.k0.begin(), prune.k0.end());
    std::set<int> k1(prune.k1.begin(), prune.k1.end());

    MILPModel model;
    PwlPfVars vars = encode_pwlpf(model, gennn, net, box, rb, prune, nullptr);
    model.validate();

    std::vector<bool> is_fixed(model.num_variables(), false);
    for (int i = 0; i < net.n_buses(); ++i) is_fixed[vars.v[i]] = is_fixed[vars.theta[i]] = true;
    for (int k = 0; k < k_count; ++k)
      if (vars.beta[k] >= 0) is_fixed[vars.beta[k]] = true;

    for (int point = 0; point < 40; ++point) {
      // Sample bus-level V and theta so parallel branches stay consistent.
      Eigen::VectorXd values = Eigen::VectorXd::Zero(model.num_variables());
      PFState st = flat_state(net);
      int ref = net.ref_bus();
      for (int i = 0; i < net.n_buses(); ++i) {
        if (i != ref) {
          st.v[i] = rng.uniform(x_check[i] + box.lo[i], x_check[i] + box.hi[i]);
          st.theta[i] = rng.uniform(-kPi / 12, kPi / 12);
        }
        values[vars.v[i]] = st.v[i];
        values[vars.theta[i]] = st.theta[i];
      }
      Eigen::VectorXd x = build_input(net, st);
      Eigen::VectorXd pre = gennn.w1 * (x - x_check) + gennn.bias;
      if (pre.cwiseAbs().minCoeff() < 1e-7) continue;  // beta ambiguity at 0
      Eigen::VectorXd relu = pre.cwiseMax(0.0);

      // Enumerate beta patterns over unpruned neurons.
      std::vector<int> free_betas;
      for (int k = 0; k < k_count; ++k)
        if (vars.beta[k] >= 0) free_betas.push_back(k);
      bool relu_admitted = false;
      for (long mask = 0; mask < (1L << free_betas.size()); ++mask) {
        for (std::size_t j = 0; j < free_betas.size(); ++j)
          values[vars.beta[free_betas[j]]] = (mask >> j) & 1 ? 1.0 : 0.0;
        bool feasible = true;
        bool pins_relu = true;
        for (int k = 0; k < k_count; ++k) {
          auto [lo, hi] = z1_interval(model, vars.z1[k], values, is_fixed);
          if (lo > hi + 1e-9) {
            feasible = false;
            break;
          }
          // Every feasible value must equal the forward pass.
          if (std::abs(lo - relu[k]) > 1e-8 || std::abs(hi - relu[k]) > 1e-8)
            pins_relu = false;
        }
        if (feasible) {
          CHECK(pins_relu);
          relu_admitted = true;
        }
      }
      CHECK(relu_admitted);
    }
  }
}

TEST_CASE("all neurons pruned leaves no network binaries") {
  Network net = two_bus();
  GenNNModel gennn = random_model(net, 3, 11, 0.5);
  gennn.bias << 10.0, -10.0, 12.0;  // far outside the box reach
  InputBox box = input_box(net, gennn.x_check, kPi / 6);
  ReluBounds rb = relu_bounds(gennn.w1, box);
  PruneSets prune = prune_sets(gennn.w1, gennn.bias, rb);
  CHECK(prune.k0.size() + prune.k1.size() == 3);
  MILPModel model = build_opf(net, gennn, box);
  CHECK(model.num_binaries() == 0);
}

TEST_CASE("pruned and unpruned encodings have equal optima") {
  SplitMix64 rng(31337);
  int pruned_something = 0;
  for (int trial = 0; trial < 12; ++trial) {
    Network net = two_bus(rng.uniform(0.5, 2.0), rng.uniform(-8.0, -2.0));
    net.branches[0].p_max = net.branches[0].q_max = 1e4;  // keep the block feasible
    GenNNModel gennn = random_model(net, 3, rng.next(), 3.0);
    // Push some biases so pruning fires often.
    for (int k = 0; k < 3; ++k)
      if (rng.below(2)) gennn.bias[k] += rng.uniform(-1.0, 1.0) * 2.0;
    InputBox box = input_box(net, gennn.x_check, kPi / 6);
    ReluBounds rb = relu_bounds(gennn.w1, box);
    PruneSets prune = prune_sets(gennn.w1, gennn.bias, rb);
    pruned_something += static_cast<int>(prune.k0.size() + prune.k1.size());

    MILPModel with_prune, without_prune;
    PwlPfVars vp = encode_pwlpf(with_prune, gennn, net, box, rb, prune, nullptr);
    PwlPfVars vn = encode_pwlpf(without_prune, gennn, net, box, rb, PruneSets{}, nullptr);

    auto randomize_objective = [&](MILPModel& m, const PwlPfVars& v, SplitMix64 r) {
      m.objective_sense = ObjSense::minimize;
      for (int i = 0; i < 2; ++i) {
        m.objective.push_back({v.v[i], r.uniform(-1.0, 1.0)});
        m.objective.push_back({v.theta[i], r.uniform(-1.0, 1.0)});
      }
      for (int k = 0; k < 3; ++k) m.objective.push_back({v.z1[k], r.uniform(-1.0, 1.0)});
    };
    SplitMix64 obj_rng(trial + 1);
    randomize_objective(with_prune, vp, obj_rng);
    randomize_objective(without_prune, vn, SplitMix64(obj_rng));

    MILPSolution a = solve_milp(with_prune);
    MILPSolution b = solve_milp(without_prune);
    REQUIRE(a.status == MILPStatus::optimal);
    REQUIRE(b.status == MILPStatus::optimal);
    CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-6));
  }
  CHECK(pruned_something > 0);
}

TEST_CASE("OPF census matches the documented formula") {
  ParseResult cr = load_case("case5.json");
  const Network& net = cr.net;
  GenNNModel gennn = random_model(net, 6, 3, 0.3);
  InputBox box = input_box(net, gennn.x_check, kPi / 6);
  ReluBounds rb = relu_bounds(gennn.w1, box);
  PruneSets prune = prune_sets(gennn.w1, gennn.bias, rb);
  MILPModel model = build_opf(net, gennn, box);
  int n = net.n_buses(), l = net.n_branches(), k = 6;
  int b_count = k - static_cast<int>(prune.k0.size() + prune.k1.size());
  CHECK(model.num_variables() == 5 * n + 6 * l + k + b_count);
  CHECK(model.num_binaries() == b_count);
  CHECK(model.num_constraints() ==
        3 * n + 8 * l + 3 * b_count + static_cast<int>(prune.k1.size()));
}

TEST_CASE("2-bus OPF matches an exhaustive grid search of the PWL model") {
  // W2 = 0 keeps the objective planar over the box, so the exhaustive grid
  // (which contains the box corners) finds the exact optimum.
  Network net = two_bus(1.0, -5.0);
  net.buses[0].cost_lin = 10.0;
  net.buses[0].p_min = -5;
  net.buses[0].p_max = 5;
  net.buses[1].p_min = -5;
  net.buses[1].p_max = 5;
  GenNNModel gennn = random_model(net, 3, 17, 0.8);
  gennn.w2.setZero();

  InputBox box = input_box(net, gennn.x_check, kPi / 6);
  MILPModel model = build_opf(net, gennn, box);
  MILPSolution sol = solve_milp(model);
  REQUIRE(sol.status == MILPStatus::optimal);

  const int steps = 200;
  double best = 1e300;
  for (int iv = 0; iv <= steps; ++iv)
    for (int it = 0; it <= steps; ++it) {
      PFState st = flat_state(net);
      st.v[1] = net.buses[1].v_min +
                (net.buses[1].v_max - net.buses[1].v_min) * iv / steps;
      st.theta[1] = -kPi / 6 + (kPi / 3) * it / steps;
      Layers layers = forward_single(gennn, build_input(net, st));
      double p1 = layers.z4(0, 0);
      double q1 = layers.z4(2, 0);
      double p2 = layers.z4(1, 0);
      double q2 = layers.z4(3, 0);
      auto ok = [&](double v, double lo, double hi) { return v >= lo - 1e-9 && v <= hi + 1e-9; };
      if (!ok(p1, net.buses[0].p_min, net.buses[0].p_max)) continue;
      if (!ok(p2, net.buses[1].p_min, net.buses[1].p_max)) continue;
      if (!ok(q1, net.buses[0].q_min, net.buses[0].q_max)) continue;
      if (!ok(q2, net.buses[1].q_min, net.buses[1].q_max)) continue;
      bool flows_ok = true;
      for (int o = 0; o < 4; ++o) {
        double limit = (o % 2 == 0) ? net.branches[0].p_max : net.branches[0].q_max;
        if (std::abs(layers.z3(o, 0)) > limit + 1e-9) flows_ok = false;
      }
      if (!flows_ok) continue;
      best = std::min(best, 10.0 * p1);
    }
  CHECK(sol.objective == doctest::Approx(best).epsilon(1e-4));

  // Zero-cost system: objective collapses to zero.
  Network free_net = net;
  free_net.buses[0].cost_lin = 0.0;
  MILPModel free_model = build_opf(free_net, random_model(free_net, 3, 17, 0.8), box);
  // Rebuild with the same anchor/weights but zero cost.
  MILPSolution free_sol = solve_milp(free_model);
  REQUIRE(free_sol.status == MILPStatus::optimal);
  CHECK(free_sol.objective == doctest::Approx(0.0));
}

TEST_CASE("OTS with alpha=0 equals OPF; switch rows behave at the poles") {
  ParseResult cr = load_case("case5.json");
  const Network& net = cr.net;
  Linearization lin = jacobian(net, build_input(net, *cr.anchor));
  GenNNModel gennn = make_gennn(net, lin, 6);
  SplitMix64 rng(21);
  for (int r = 0; r < gennn.w1.rows(); ++r)
    for (int c = 0; c < gennn.w1.cols(); ++c) gennn.w1(r, c) = rng.uniform(-0.1, 0.1);
  InputBox box = input_box(net, gennn.x_check, kPi / 6);

  MILPModel opf = build_opf(net, gennn, box);
  MILPSolution opf_sol = solve_milp(opf);
  REQUIRE(opf_sol.status == MILPStatus::optimal);

  MILPModel ots0 = build_ots(net, gennn, box, 0.0);
  MILPSolution ots0_sol = solve_milp(ots0);
  REQUIRE(ots0_sol.status == MILPStatus::optimal);
  CHECK(ots0_sol.objective == doctest::Approx(opf_sol.objective).epsilon(1e-6));
  for (int k = 0; k < net.n_branches(); ++k)
    CHECK(ots0_sol.values[ots0.var_index(ots_eps_name(k))] == doctest::Approx(1.0));

  MILPModel ots1 = build_ots(net, gennn, box, 1.0);
  MILPSolution ots1_sol = solve_milp(ots1);
  REQUIRE(ots1_sol.status == MILPStatus::optimal);
  CHECK(ots1_sol.objective <= opf_sol.objective + 1e-7);
  for (int k = 0; k < net.n_branches(); ++k) {
    double eps = ots1_sol.values[ots1.var_index(ots_eps_name(k))];
    double raw = ots1_sol.values[ots1.var_index("Pf_" + std::to_string(k + 1))];
    double hat = ots1_sol.values[ots1.var_index("Phf_" + std::to_string(k + 1))];
    if (eps < 0.5) {
      CHECK(std::abs(hat) <= 1e-6);  // eps = 0 forces the switched flow to zero
    } else {
      CHECK(hat == doctest::Approx(raw).epsilon(1e-6));  // eps = 1 collapses to P
    }
  }
}

TEST_CASE("ROP structure: terminal restoration, monotone budget, eta monotonicity") {
  ParseResult cr = load_case("case5.json");
  const Network& net = cr.net;
  Linearization lin = jacobian(net, build_input(net, *cr.anchor));
  GenNNModel gennn = make_gennn(net, lin, 6);
  SplitMix64 rng(23);
  for (int r = 0; r < gennn.w1.rows(); ++r)
    for (int c = 0; c < gennn.w1.cols(); ++c) gennn.w1(r, c) = rng.uniform(-0.05, 0.05);
  InputBox box = input_box(net, gennn.x_check, kPi / 6);

  RopConfig rop;
  rop.eta = 1;
  rop.horizon = 2;
  rop.damaged = {1, 3};

  SUBCASE("precondition: eta*T must cover the damage") {
    RopConfig bad = rop;
    bad.horizon = 1;
    CHECK_THROWS_AS(build_rop(net, gennn, box, bad), std::runtime_error);
    RopConfig unknown = rop;
    unknown.damaged = {99};
    CHECK_THROWS_AS(build_rop(net, gennn, box, unknown), std::runtime_error);
  }

  SUBCASE("solution restores everything and respects the per-period budget") {
    MILPModel model = build_rop(net, gennn, box, rop);
    MILPSolution sol = solve_milp(model);
    REQUIRE(sol.status == MILPStatus::optimal);
    double eps_t1_a = sol.values[model.var_index(rop_eps_name(1, 1))];
    double eps_t1_b = sol.values[model.var_index(rop_eps_name(3, 1))];
    double eps_t2_a = sol.values[model.var_index(rop_eps_name(1, 2))];
    double eps_t2_b = sol.values[model.var_index(rop_eps_name(3, 2))];
    CHECK(eps_t2_a == doctest::Approx(1.0));  // terminal condition
    CHECK(eps_t2_b == doctest::Approx(1.0));
    CHECK(eps_t1_a + eps_t1_b <= 1.0 + 1e-6);  // eta * 1
    CHECK(eps_t1_a <= eps_t2_a + 1e-9);        // monotone restoration
    CHECK(eps_t1_b <= eps_t2_b + 1e-9);

    // Generous limits: everything served, objective is total demand * T minus
    // the single period where one line is still out (may shed nothing if the
    // network tolerates it).
    double total_demand = 0;
    for (const Bus& bus : net.buses) total_demand += bus.p_demand;
    CHECK(sol.objective <= rop.horizon * total_demand + 1e-6);
    CHECK(sol.objective >= 0.0);
  }

  SUBCASE("optimum is nondecreasing in eta") {
    MILPModel m1 = build_rop(net, gennn, box, rop);
    RopConfig rop2 = rop;
    rop2.eta = 2;
    MILPModel m2 = build_rop(net, gennn, box, rop2);
    MILPSolution s1 = solve_milp(m1);
    MILPSolution s2 = solve_milp(m2);
    REQUIRE(s1.status == MILPStatus::optimal);
    REQUIRE(s2.status == MILPStatus::optimal);
    CHECK(s2.objective >= s1.objective - 1e-9);
  }

  SUBCASE("single damaged line with eta=1, T=1 restores immediately") {
    RopConfig tiny;
    tiny.eta = 1;
    tiny.horizon = 1;
    tiny.damaged = {2};
    MILPModel model = build_rop(net, gennn, box, tiny);
    MILPSolution sol = solve_milp(model);
    REQUIRE(sol.status == MILPStatus::optimal);
    CHECK(sol.values[model.var_index(rop_eps_name(2, 1))] == doctest::Approx(1.0));
    // Full topology and generous limits mean zero shedding.
    for (int i : {2, 4, 5}) {
      int var = model.var_index(rop_shed_name(i, 1));
      REQUIRE(var >= 0);
      CHECK(sol.values[var] == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("encode rejects mismatched boxes") {
  Network net = two_bus();
  GenNNModel gennn = random_model(net, 2, 5, 0.1);
  InputBox box;
  box.lo = Eigen::VectorXd::Constant(5, -1.0);
  box.hi = Eigen::VectorXd::Constant(5, 1.0);
  MILPModel model;
  ReluBounds rb;
  rb.l = Eigen::MatrixXd::Zero(5, 2);
  rb.u = Eigen::MatrixXd::Zero(5, 2);
  CHECK_THROWS_AS(encode_pwlpf(model, gennn, net, box, rb, PruneSets{}, nullptr),
                  std::runtime_error);
}
