#include "gridnn/milp_solve.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "gridnn/case_io.hpp"

namespace gridnn {

namespace {

constexpr double kFeasTol = 1e-7;
constexpr double kOptTol = 1e-7;
constexpr double kPivotTol = 1e-9;
constexpr int kRefactorEvery = 64;

/// Equality computational form: [A I][x; s] = b with bounds on everything.
struct Computational {
  int m = 0;        // rows
  int n_struct = 0; // declared variables
  int total = 0;    // n_struct + m slacks
  Eigen::SparseMatrix<double> a;  // m x total, column-major
  Eigen::VectorXd b;
  Eigen::VectorXd cost;  // minimize convention; flipped for maximize models
  Eigen::VectorXd lo, hi;
  double obj_const = 0.0;
  bool maximize = false;
};

Computational to_computational(const MILPModel& model) {
  Computational c;
  c.m = model.num_constraints();
  c.n_struct = model.num_variables();
  c.total = c.n_struct + c.m;
  c.maximize = model.objective_sense == ObjSense::maximize;
  c.obj_const = model.objective_constant;

  c.b.resize(c.m);
  c.lo.resize(c.total);
  c.hi.resize(c.total);
  c.cost = Eigen::VectorXd::Zero(c.total);
  for (int v = 0; v < c.n_struct; ++v) {
    c.lo[v] = model.variables[v].lower;
    c.hi[v] = model.variables[v].upper;
  }
  for (const LinTerm& t : model.objective)
    c.cost[t.var] += c.maximize ? -t.coeff : t.coeff;

  std::vector<Eigen::Triplet<double>> trips;
  for (int r = 0; r < c.m; ++r) {
    const Constraint& con = model.constraints[r];
    for (const LinTerm& t : con.terms) trips.emplace_back(r, t.var, t.coeff);
    trips.emplace_back(r, c.n_struct + r, 1.0);
    c.b[r] = con.rhs;
    switch (con.sense) {
      case Sense::le: c.lo[c.n_struct + r] = 0.0; c.hi[c.n_struct + r] = kInf; break;
      case Sense::ge: c.lo[c.n_struct + r] = -kInf; c.hi[c.n_struct + r] = 0.0; break;
      case Sense::eq: c.lo[c.n_struct + r] = 0.0; c.hi[c.n_struct + r] = 0.0; break;
    }
  }
  c.a.resize(c.m, c.total);
  c.a.setFromTriplets(trips.begin(), trips.end());
  return c;
}

enum class VStat : char { basic, at_lower, at_upper, free_zero };

struct SimplexResult {
  LPStatus status = LPStatus::breakdown;
  double objective = 0.0;  // internal (minimize) objective, no constant
  Eigen::VectorXd x;       // all computational variables
  Eigen::VectorXd duals;   // y = Binv^T c_B
  long iterations = 0;
};

class Simplex {
 public:
  Simplex(const Computational& c, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi)
      : c_(c), lo_(lo), hi_(hi) {}

  SimplexResult run() {
    init();
    SimplexResult res;
    if (!solve_phase(true, res)) return res;
    if (infeasibility() > 1e-6) {
      res.status = LPStatus::infeasible;
      res.iterations = iters_;
      return res;
    }
    if (!solve_phase(false, res)) return res;
    if (infeasibility() > 1e-6) {  // phase-2 drift the pricing could not heal
      res.status = LPStatus::breakdown;
      res.iterations = iters_;
      return res;
    }
    res.status = LPStatus::optimal;
    res.objective = c_.cost.dot(x_);
    res.x = x_;
    Eigen::VectorXd cb(c_.m);
    for (int i = 0; i < c_.m; ++i) cb[i] = c_.cost[basis_[i]];
    res.duals = binv_.transpose() * cb;
    res.iterations = iters_;
    return res;
  }

 private:
  const Computational& c_;
  Eigen::VectorXd lo_, hi_;
  std::vector<int> basis_;
  std::vector<VStat> stat_;
  Eigen::VectorXd x_;
  Eigen::MatrixXd binv_;
  long iters_ = 0;
  int pivots_since_refactor_ = 0;

  void init() {
    basis_.resize(c_.m);
    stat_.assign(c_.total, VStat::at_lower);
    x_ = Eigen::VectorXd::Zero(c_.total);
    for (int v = 0; v < c_.total; ++v) {
      bool lo_fin = lo_[v] > -kInf, hi_fin = hi_[v] < kInf;
      if (!lo_fin && !hi_fin) {
        stat_[v] = VStat::free_zero;
        x_[v] = 0.0;
      } else if (lo_fin && (!hi_fin || std::abs(lo_[v]) <= std::abs(hi_[v]))) {
        stat_[v] = VStat::at_lower;
        x_[v] = lo_[v];
      } else {
        stat_[v] = VStat::at_upper;
        x_[v] = hi_[v];
      }
    }
    for (int r = 0; r < c_.m; ++r) {
      basis_[r] = c_.n_struct + r;
      stat_[c_.n_struct + r] = VStat::basic;
    }
    binv_ = Eigen::MatrixXd::Identity(c_.m, c_.m);
    recompute_basics();
  }

  void recompute_basics() {
    Eigen::VectorXd rhs = c_.b;
    for (int v = 0; v < c_.total; ++v)
      if (stat_[v] != VStat::basic && x_[v] != 0.0) rhs -= c_.a.col(v) * x_[v];
    Eigen::VectorXd xb = binv_ * rhs;
    for (int i = 0; i < c_.m; ++i) x_[basis_[i]] = xb[i];
  }

  bool refactorize() {
    Eigen::MatrixXd bmat(c_.m, c_.m);
    for (int i = 0; i < c_.m; ++i) bmat.col(i) = c_.a.col(basis_[i]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(bmat);
    binv_ = lu.inverse();
    if (!binv_.allFinite()) return false;
    pivots_since_refactor_ = 0;
    recompute_basics();
    return true;
  }

  double infeasibility() const {
    double total = 0;
    for (int i = 0; i < c_.m; ++i) {
      int v = basis_[i];
      total += std::max(0.0, lo_[v] - x_[v]) + std::max(0.0, x_[v] - hi_[v]);
    }
    return total;
  }

  /// Runs one simplex phase. Returns false (with res.status set) on
  /// infeasible/unbounded/breakdown outcomes that end the whole solve.
  bool solve_phase(bool phase1, SimplexResult& res) {
    const long iter_limit = 20000 + 200L * (c_.m + c_.total);
    long stalled = 0;
    bool bland = false;

    for (long iter = 0;; ++iter, ++iters_) {
      if (iter > iter_limit) {
        res.status = LPStatus::breakdown;
        res.iterations = iters_;
        return false;
      }
      if (phase1 && infeasibility() <= kFeasTol) return true;

      // Pricing vector for the current phase.
      Eigen::VectorXd d = Eigen::VectorXd::Zero(c_.m);
      bool any_infeasible = false;
      for (int i = 0; i < c_.m; ++i) {
        int v = basis_[i];
        if (x_[v] < lo_[v] - kFeasTol) {
          d[i] = -1.0;
          any_infeasible = true;
        } else if (x_[v] > hi_[v] + kFeasTol) {
          d[i] = 1.0;
          any_infeasible = true;
        } else if (!phase1) {
          d[i] = c_.cost[v];
        }
      }
      if (phase1 && !any_infeasible) return true;

      Eigen::VectorXd y = binv_.transpose() * d;
      Eigen::VectorXd aty = c_.a.transpose() * y;

      int enter = -1, direction = 0;
      double best_score = bland ? 0.0 : kOptTol;
      for (int v = 0; v < c_.total; ++v) {
        if (stat_[v] == VStat::basic) continue;
        if (lo_[v] == hi_[v]) continue;  // fixed variables can never move
        double rc = (phase1 ? 0.0 : c_.cost[v]) - aty[v];
        int dir = 0;
        if (stat_[v] == VStat::at_lower && rc < -kOptTol) dir = 1;
        else if (stat_[v] == VStat::at_upper && rc > kOptTol) dir = -1;
        else if (stat_[v] == VStat::free_zero && std::abs(rc) > kOptTol)
          dir = rc < 0 ? 1 : -1;
        if (dir == 0) continue;
        if (bland) {  // lowest eligible index
          enter = v;
          direction = dir;
          break;
        }
        if (std::abs(rc) > best_score) {
          best_score = std::abs(rc);
          enter = v;
          direction = dir;
        }
      }
      if (enter < 0) {
        if (phase1) {
          // No improving direction left; infeasibility is minimal.
          return infeasibility() <= kFeasTol ? true
                                             : (res.status = LPStatus::infeasible,
                                                res.iterations = iters_, false);
        }
        return true;  // phase 2 optimal
      }

      Eigen::VectorXd col = binv_ * c_.a.col(enter);

      // Ratio test: basics block at the bound they approach (infeasible ones
      // at the bound they violate); the entering variable blocks at its own
      // opposite bound.
      double t_max = std::numeric_limits<double>::infinity();
      int leave_pos = -1;
      double leave_to = 0.0;
      for (int i = 0; i < c_.m; ++i) {
        double rate = -direction * col[i];
        if (std::abs(rate) < kPivotTol) continue;
        int v = basis_[i];
        double limit = std::numeric_limits<double>::infinity();
        double target = 0.0;
        if (x_[v] < lo_[v] - kFeasTol) {  // below its lower bound
          if (rate > 0) {
            limit = (lo_[v] - x_[v]) / rate;
            target = lo_[v];
          }
        } else if (x_[v] > hi_[v] + kFeasTol) {  // above its upper bound
          if (rate < 0) {
            limit = (hi_[v] - x_[v]) / rate;
            target = hi_[v];
          }
        } else if (rate > 0 && hi_[v] < kInf) {
          limit = (hi_[v] - x_[v]) / rate;
          target = hi_[v];
        } else if (rate < 0 && lo_[v] > -kInf) {
          limit = (lo_[v] - x_[v]) / rate;
          target = lo_[v];
        }
        if (limit < t_max - 1e-12 ||
            (limit < t_max + 1e-12 && leave_pos >= 0 && basis_[i] < basis_[leave_pos])) {
          t_max = std::max(0.0, limit);
          leave_pos = i;
          leave_to = target;
        }
      }
      double flip_limit = std::numeric_limits<double>::infinity();
      if (lo_[enter] > -kInf && hi_[enter] < kInf) flip_limit = hi_[enter] - lo_[enter];
      bool bound_flip = flip_limit < t_max;
      if (bound_flip) t_max = flip_limit;

      if (!std::isfinite(t_max)) {
        if (phase1) {
          res.status = LPStatus::breakdown;
        } else {
          res.status = LPStatus::unbounded;
        }
        res.iterations = iters_;
        return false;
      }

      // Apply the step.
      x_[enter] += direction * t_max;
      for (int i = 0; i < c_.m; ++i) x_[basis_[i]] -= direction * t_max * col[i];

      if (bound_flip) {
        stat_[enter] = direction > 0 ? VStat::at_upper : VStat::at_lower;
        x_[enter] = direction > 0 ? hi_[enter] : lo_[enter];
      } else {
        int leave = basis_[leave_pos];
        double pivot = col[leave_pos];
        if (std::abs(pivot) < kPivotTol) {
          if (!refactorize()) {
            res.status = LPStatus::breakdown;
            res.iterations = iters_;
            return false;
          }
          continue;  // retry the iteration with a fresh inverse
        }
        x_[leave] = leave_to;
        stat_[leave] = (hi_[leave] < kInf && std::abs(leave_to - hi_[leave]) <
                        std::abs(leave_to - lo_[leave]))
                           ? VStat::at_upper
                           : VStat::at_lower;
        if (lo_[leave] <= -kInf && hi_[leave] >= kInf) stat_[leave] = VStat::free_zero;
        stat_[enter] = VStat::basic;
        basis_[leave_pos] = enter;
        // Product-form update of the explicit inverse.
        Eigen::RowVectorXd pivot_row = binv_.row(leave_pos) / pivot;
        for (int r = 0; r < c_.m; ++r) {
          if (r == leave_pos) continue;
          double factor = col[r];
          if (factor != 0.0) binv_.row(r) -= factor * pivot_row;
        }
        binv_.row(leave_pos) = pivot_row;
        if (++pivots_since_refactor_ >= kRefactorEvery) {
          if (!refactorize()) {
            res.status = LPStatus::breakdown;
            res.iterations = iters_;
            return false;
          }
        }
      }

      if (t_max < 1e-11) {
        if (++stalled > 2 * (c_.m + 10)) bland = true;
      } else {
        stalled = 0;
        bland = false;
      }
    }
  }
};

SimplexResult solve_internal(const Computational& c, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi) {
  Simplex simplex(c, lo, hi);
  return simplex.run();
}

LPSolution to_lp_solution(const Computational& c, const SimplexResult& res) {
  LPSolution out;
  out.iterations = res.iterations;
  switch (res.status) {
    case LPStatus::optimal: out.status = LPStatus::optimal; break;
    case LPStatus::infeasible: out.status = LPStatus::infeasible; break;
    case LPStatus::unbounded: out.status = LPStatus::unbounded; break;
    default: out.status = LPStatus::breakdown; return out;
  }
  if (res.status == LPStatus::optimal) {
    double internal = res.objective;
    out.objective = (c.maximize ? -internal : internal) + c.obj_const;
    out.values = res.x.head(c.n_struct);
    out.duals = c.maximize ? Eigen::VectorXd(-res.duals) : res.duals;
  }
  return out;
}

}  // namespace

LPSolution solve_lp(const MILPModel& model) {
  model.validate();
  Computational c = to_computational(model);
  SimplexResult res = solve_internal(c, c.lo, c.hi);
  return to_lp_solution(c, res);
}

namespace {

struct Node {
  std::vector<std::pair<int, double>> fixings;  // (binary var, 0 or 1)
  double bound;  // parent LP objective (internal minimize space)
  int depth;
  long id;
};

}  // namespace

MILPSolution solve_milp(const MILPModel& model, const SolveLimits& limits) {
  model.validate();
  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  Computational c = to_computational(model);
  std::vector<int> binaries;
  for (int v = 0; v < model.num_variables(); ++v)
    if (model.variables[v].kind == VarKind::binary) binaries.push_back(v);

  const double neg_inf = -std::numeric_limits<double>::infinity();
  MILPSolution out;
  bool have_incumbent = false;
  double incumbent = std::numeric_limits<double>::infinity();  // internal space
  Eigen::VectorXd incumbent_x;
  bool clean = true;  // no breakdowns / limits hit

  std::vector<Node> open;
  open.push_back({{}, neg_inf, 0, 0});
  long next_id = 1;
  long nodes = 0;

  auto finish = [&](MILPStatus status, double bound_internal) {
    out.status = status;
    out.node_count = nodes;
    out.wall_seconds = elapsed();
    if (have_incumbent) {
      out.objective = (c.maximize ? -incumbent : incumbent) + c.obj_const;
      out.values = incumbent_x;
      double bound_ext = (c.maximize ? -bound_internal : bound_internal) + c.obj_const;
      out.bound = bound_ext;
      out.gap = std::abs(out.objective - out.bound) / std::max(1.0, std::abs(out.objective));
    }
    return out;
  };

  while (!open.empty()) {
    if (nodes >= limits.max_nodes || elapsed() > limits.max_seconds) {
      double best_open = incumbent;
      for (const Node& nd : open) best_open = std::min(best_open, nd.bound);
      return finish(MILPStatus::limit, best_open);
    }

    // Node selection: plunge by depth until an incumbent exists, then best
    // bound; ties by insertion id for determinism.
    std::size_t pick = 0;
    for (std::size_t i = 1; i < open.size(); ++i) {
      const Node& a = open[i];
      const Node& best = open[pick];
      bool better;
      if (!have_incumbent) {
        better = a.depth > best.depth ||
                 (a.depth == best.depth &&
                  (a.bound < best.bound - 1e-12 ||
                   (std::abs(a.bound - best.bound) <= 1e-12 && a.id > best.id)));
      } else {
        better = a.bound < best.bound - 1e-12 ||
                 (std::abs(a.bound - best.bound) <= 1e-12 && a.id < best.id);
      }
      if (better) pick = i;
    }
    Node node = open[pick];
    open.erase(open.begin() + static_cast<long>(pick));

    double gap_abs =
        have_incumbent
            ? std::max(limits.target_gap * std::max(1.0, std::abs(incumbent)), 1e-9)
            : 0.0;
    if (have_incumbent && node.bound >= incumbent - gap_abs) continue;

    Eigen::VectorXd lo = c.lo, hi = c.hi;
    for (auto [v, val] : node.fixings) {
      lo[v] = val;
      hi[v] = val;
    }
    ++nodes;
    SimplexResult res = solve_internal(c, lo, hi);
    if (res.status == LPStatus::infeasible) continue;
    if (res.status == LPStatus::unbounded) {
      if (node.depth == 0 && !have_incumbent)
        throw std::runtime_error("solve_milp: relaxation is unbounded");
      clean = false;
      continue;
    }
    if (res.status != LPStatus::optimal) {
      clean = false;  // breakdown: cannot certify this subtree
      continue;
    }
    if (have_incumbent && res.objective >= incumbent - gap_abs) continue;

    // Integrality check on the binaries.
    int branch_var = -1;
    double branch_score = 1e-6;  // integrality tolerance
    for (int v : binaries) {
      double val = res.x[v];
      double frac = std::abs(val - std::round(val));
      if (frac > branch_score) {
        branch_score = frac;
        branch_var = v;
      }
    }
    if (branch_var < 0) {
      if (!have_incumbent || res.objective < incumbent) {
        have_incumbent = true;
        incumbent = res.objective;
        incumbent_x = res.x.head(c.n_struct);
        for (int v : binaries) incumbent_x[v] = std::round(incumbent_x[v]);
      }
      continue;
    }

    // Children: explore the rounding of the LP value first while plunging.
    double frac_val = res.x[branch_var];
    double first = std::round(frac_val) >= 0.5 ? 1.0 : 0.0;
    for (double val : {1.0 - first, first}) {
      Node child;
      child.fixings = node.fixings;
      child.fixings.push_back({branch_var, val});
      child.bound = res.objective;
      child.depth = node.depth + 1;
      child.id = next_id++;
      open.push_back(std::move(child));
    }
  }

  if (!have_incumbent)
    return finish(clean ? MILPStatus::infeasible : MILPStatus::limit, incumbent);
  return finish(clean ? MILPStatus::optimal : MILPStatus::feasible, incumbent);
}

MILPSolution solve_external(const MILPModel& model, const std::string& command_template,
                            const std::string& workdir) {
  model.validate();
  auto t0 = std::chrono::steady_clock::now();
  std::string mps_path = workdir + "/model.mps";
  std::string names_path = workdir + "/model_names.json";
  std::string sol_path = workdir + "/model.sol";
  write_text_file(mps_path, export_mps(model));
  write_text_file(names_path, mps_name_map(model));

  std::string command = command_template;
  auto replace_all = [&](const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = command.find(from, pos)) != std::string::npos) {
      command.replace(pos, from.size(), to);
      pos += to.size();
    }
  };
  replace_all("{mps}", mps_path);
  replace_all("{sol}", sol_path);

  int rc = std::system(command.c_str());
  if (rc != 0)
    throw ExternalSolverError(ExternalSolverError::Kind::nonzero_exit,
                              "external solver exited with code " + std::to_string(rc));

  std::ifstream in(sol_path);
  if (!in)
    throw ExternalSolverError(ExternalSolverError::Kind::missing_solution,
                              "solution file not written: " + sol_path);

  std::map<std::string, int> by_short, by_name;
  for (int v = 0; v < model.num_variables(); ++v) {
    by_short[mps_var_name(v)] = v;
    by_name[model.variables[v].name] = v;
  }

  Eigen::VectorXd values(model.num_variables());
  std::vector<bool> seen(model.num_variables(), false);
  bool have_obj = false;
  double objective = 0.0;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string name;
    if (!(ls >> name) || name[0] == '#') continue;
    double value;
    if (!(ls >> value))
      throw ExternalSolverError(ExternalSolverError::Kind::parse_error,
                                "unparsable solution line: " + line);
    if (name == "=obj=") {
      have_obj = true;
      objective = value;
      continue;
    }
    int idx = -1;
    if (auto it = by_short.find(name); it != by_short.end()) idx = it->second;
    else if (auto it2 = by_name.find(name); it2 != by_name.end()) idx = it2->second;
    if (idx < 0)
      throw ExternalSolverError(ExternalSolverError::Kind::parse_error,
                                "solution names unknown variable: " + name);
    values[idx] = value;
    seen[idx] = true;
  }
  for (int v = 0; v < model.num_variables(); ++v)
    if (!seen[v])
      throw ExternalSolverError(ExternalSolverError::Kind::missing_variable,
                                "solution missing variable " + model.variables[v].name);

  MILPSolution out;
  out.status = MILPStatus::optimal;
  out.values = values;
  out.objective = have_obj ? objective : model.eval_objective(values);
  out.bound = out.objective;
  out.gap = 0.0;
  out.node_count = 0;
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace gridnn
