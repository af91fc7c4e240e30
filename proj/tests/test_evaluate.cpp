#include <doctest.h>

#include "gridnn/evaluate.hpp"
#include "test_helpers.hpp"

using namespace gridnn;
using namespace gridnn::testing;

TEST_CASE("box_stats quartile ordering") {
  BoxStats s = box_stats({5, 1, 3, 2, 4});
  CHECK(s.median == doctest::Approx(3.0));
  CHECK(s.q1 == doctest::Approx(2.0));
  CHECK(s.q3 == doctest::Approx(4.0));
  CHECK(s.q1 <= s.median);
  CHECK(s.median <= s.q3);
  CHECK(s.whisker_lo == 1.0);
  CHECK(s.whisker_hi == 5.0);
  CHECK(s.max == 5.0);
}

TEST_CASE("exact-model predictor has identically zero flow error") {
  ParseResult cr = load_case("case5.json");
  const Network& net = cr.net;
  SampleRanges ranges;
  ranges.seed = 5;
  Dataset test = generate_dataset(net, *cr.anchor, ranges, 30);
  ErrorStats stats = flow_error_stats(exact_predictor(net), net, test);
  CHECK(stats.avg_flow_box.max <= 1e-10);
  CHECK(stats.max_flow_box.max <= 1e-10);
  ErrorStats rmse = injection_rmse(exact_predictor(net), net, test);
  CHECK(rmse.rmse_box.max <= 1e-12);
}

TEST_CASE("constant offset on unit-capacity flows gives exactly 1 percent") {
  Network net = two_bus();
  net.branches[0].p_max = 1.0;
  net.branches[0].q_max = 1.0;
  SampleRanges ranges;
  ranges.seed = 7;
  Dataset test = generate_dataset(net, flat_state(net), ranges, 10);
  Predictor offset = [&](const Eigen::VectorXd& x) {
    PFState st = unpack_input(net, x);
    FlowVectors fv = evaluate_pf(net, st, Eigen::VectorXd::Ones(1));
    fv.z_pf.array() += 0.01;
    return std::make_pair(fv.z_pf, fv.z_inj);
  };
  ErrorStats stats = flow_error_stats(offset, net, test);
  for (double v : stats.avg_flow_pct) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  for (double v : stats.max_flow_pct) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("single-entry injection error of e gives RMSE e/sqrt(2N)") {
  Network net = two_bus();
  SampleRanges ranges;
  ranges.seed = 9;
  Dataset test = generate_dataset(net, flat_state(net), ranges, 4);
  const double e = 0.3;
  Predictor bumped = [&](const Eigen::VectorXd& x) {
    PFState st = unpack_input(net, x);
    FlowVectors fv = evaluate_pf(net, st, Eigen::VectorXd::Ones(1));
    fv.z_inj[2] += e;
    return std::make_pair(fv.z_pf, fv.z_inj);
  };
  ErrorStats stats = injection_rmse(bumped, net, test);
  for (double v : stats.injection_rmse)
    CHECK(v == doctest::Approx(e / std::sqrt(4.0)).epsilon(1e-12));
}

TEST_CASE("zero-capacity entries are excluded with a warning") {
  Network net = two_bus();
  net.branches[0].q_max = 0.0;  // only checked by the error metric, not validate()
  SampleRanges ranges;
  ranges.seed = 11;
  Dataset test = generate_dataset(net, flat_state(net), ranges, 5);
  ErrorStats stats = flow_error_stats(exact_predictor(net), net, test);
  REQUIRE(!stats.warnings.empty());
  CHECK(stats.warnings[0].find("zero-capacity") != std::string::npos);
}

TEST_CASE("newton_pf: zero injections from a flat start converge immediately") {
  Network net = two_bus(1.0, -5.0, 0.0);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  NewtonResult res = newton_pf(net, zero, zero, Eigen::VectorXd::Ones(1),
                               flat_state(net));
  CHECK(res.converged);
  CHECK(res.iterations <= 1);
  CHECK((res.state.v.array() - 1.0).abs().maxCoeff() <= 1e-10);
}

TEST_CASE("newton_pf matches the closed-form 2-bus solution") {
  // Purely reactive branch: P2 = -b V2 sin(th2), Q2 = -b V2^2 + b V2 cos(th2).
  Network net = two_bus(0.0, -5.0, 0.0);
  const double p2 = -0.1, q2 = -0.05;
  Eigen::VectorXd p_set(2), q_set(2);
  p_set << 0.0, p2;
  q_set << 0.0, q2;
  NewtonResult res = newton_pf(net, p_set, q_set, Eigen::VectorXd::Ones(1),
                               flat_state(net));
  REQUIRE(res.converged);

  // Closed form: with c = V2 cos(th2), s = V2 sin(th2):
  //   s = p2 / 5,  c = V2^2 - q2/5,  u = V2^2 = c^2 + s^2  =>
  //   u^2 - (1 + 2 q2/5) u + (q2/5)^2 + (p2/5)^2 = 0, taking the high root.
  double s = p2 / 5.0;
  double bq = q2 / 5.0;
  double a_coeff = 1.0, b_coeff = -(1.0 + 2.0 * bq), c_coeff = bq * bq + s * s;
  double disc = b_coeff * b_coeff - 4 * a_coeff * c_coeff;
  REQUIRE(disc > 0);
  double u = (-b_coeff + std::sqrt(disc)) / 2.0;
  double v2_expected = std::sqrt(u);
  CHECK(res.state.v[1] == doctest::Approx(v2_expected).epsilon(1e-8));
  CHECK(std::sin(res.state.theta[1]) * res.state.v[1] == doctest::Approx(s).epsilon(1e-8));

  // Solution fed back through evaluate_pf reproduces the injections.
  FlowVectors fv = evaluate_pf(net, res.state, Eigen::VectorXd::Ones(1));
  CHECK(fv.z_inj[1] == doctest::Approx(p2).epsilon(1e-8));
  CHECK(fv.z_inj[3] == doctest::Approx(q2).epsilon(1e-8));
}

TEST_CASE("newton_pf reports non-convergence on an absurd load") {
  Network net = two_bus(1.0, -5.0, 0.0);
  Eigen::VectorXd p_set(2), q_set(2);
  p_set << 0.0, -50.0;  // far beyond the deliverable power
  q_set << 0.0, -50.0;
  NewtonResult res = newton_pf(net, p_set, q_set, Eigen::VectorXd::Ones(1),
                               flat_state(net));
  CHECK(!res.converged);
  CHECK(res.mismatch > 1.0);
}

TEST_CASE("evaluate_topology: all-ones topology scores exactly 100 percent") {
  ParseResult cr = load_case("case5.json");
  const Network& net = cr.net;
  Linearization lin = jacobian(net, build_input(net, *cr.anchor));
  GenNNModel gennn = make_gennn(net, lin, 6);
  SplitMix64 rng(15);
  for (int r = 0; r < gennn.w1.rows(); ++r)
    for (int c = 0; c < gennn.w1.cols(); ++c) gennn.w1(r, c) = rng.uniform(-0.05, 0.05);

  TopoEvalOptions options;
  TopoEvalReport report = evaluate_topology(net, gennn,
                                            Eigen::VectorXd::Ones(net.n_branches()),
                                            options);
  REQUIRE(!report.solver_failure);
  CHECK(report.cost_percent == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(report.cost == doctest::Approx(report.base_cost).epsilon(1e-9));
}

TEST_CASE("energy_not_served arithmetic and monotonicity") {
  Eigen::VectorXd demand(2);
  demand << 1.0, 3.0;
  std::vector<int> affected = {0, 1};

  Eigen::MatrixXd all_served = Eigen::MatrixXd::Ones(2, 1);
  CHECK(energy_not_served(all_served, affected, demand, 1) == doctest::Approx(0.0));

  Eigen::MatrixXd none_served = Eigen::MatrixXd::Zero(2, 1);
  CHECK(energy_not_served(none_served, affected, demand, 1) == doctest::Approx(100.0));

  Eigen::MatrixXd mixed(2, 1);
  mixed << 1.0, 0.5;
  CHECK(energy_not_served(mixed, affected, demand, 1) == doctest::Approx(37.5));

  // Nonincreasing in every shed fraction.
  Eigen::MatrixXd more = mixed;
  more(1, 0) = 0.75;
  CHECK(energy_not_served(more, affected, demand, 1) <=
        energy_not_served(mixed, affected, demand, 1));

  std::vector<std::string> warnings;
  Eigen::VectorXd no_demand = Eigen::VectorXd::Zero(2);
  CHECK(energy_not_served(mixed, affected, no_demand, 1, &warnings) == 0.0);
  CHECK(!warnings.empty());
}

TEST_CASE("demand_scenarios honors bounds and determinism") {
  ParseResult cr = load_case("case14.m");
  const Network& net = cr.net;

  auto nominal = demand_scenarios(net, 100.0, 100.0, 3, 1);
  for (const auto& scale : nominal)
    CHECK((scale.array() - 1.0).abs().maxCoeff() <= 1e-12);

  auto scenarios = demand_scenarios(net, 50.0, 200.0, 20, 77);
  for (const auto& scale : scenarios) {
    CHECK(scale.minCoeff() >= 0.5);
    CHECK(scale.maxCoeff() <= 2.0);
  }
  auto again = demand_scenarios(net, 50.0, 200.0, 20, 77);
  for (std::size_t s = 0; s < scenarios.size(); ++s)
    CHECK((scenarios[s] - again[s]).norm() == 0.0);
  CHECK_THROWS_AS(demand_scenarios(net, 0.0, 100.0, 2, 1), std::runtime_error);
}
