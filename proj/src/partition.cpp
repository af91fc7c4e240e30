#include "gridnn/partition.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "gridnn/linearize.hpp"
#include "gridnn/rng.hpp"

namespace gridnn {

namespace {

double branch_weight(const Branch& br, LaplacianWeighting weighting) {
  if (weighting == LaplacianWeighting::unit) return 1.0;
  double y_mag = std::hypot(br.g, br.b);  // 1/|z|
  if (!std::isfinite(y_mag) || y_mag == 0.0)
    throw std::runtime_error("branch with zero impedance: infinite Laplacian weight");
  return y_mag;
}

double sq_dist(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  return (a - b).squaredNorm();
}

struct KmeansRun {
  std::vector<int> assignment;
  double inertia = std::numeric_limits<double>::infinity();
};

KmeansRun kmeans_once(const Eigen::MatrixXd& x, int a_count, SplitMix64& rng) {
  const int n = static_cast<int>(x.rows());
  Eigen::MatrixXd centroids(a_count, x.cols());

  // k-means++ seeding
  int first = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
  centroids.row(0) = x.row(first);
  Eigen::VectorXd d2(n);
  for (int i = 0; i < n; ++i) d2[i] = sq_dist(x.row(i), centroids.row(0));
  for (int c = 1; c < a_count; ++c) {
    double total = d2.sum();
    int pick = 0;
    if (total > 0) {
      double r = rng.uniform01() * total, acc = 0;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centroids.row(c) = x.row(pick);
    for (int i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], sq_dist(x.row(i), centroids.row(c)));
  }

  std::vector<int> assign(n, 0);
  const int max_iters = 200;
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(x.row(i), centroids.row(0));
      for (int c = 1; c < a_count; ++c) {
        double d = sq_dist(x.row(i), centroids.row(c));
        if (d < best_d - 1e-15) {  // ties keep the lowest centroid index
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(a_count, x.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(a_count);
    for (int i = 0; i < n; ++i) {
      sums.row(assign[i]) += x.row(i);
      counts[assign[i]] += 1;
    }
    for (int c = 0; c < a_count; ++c) {
      if (counts[c] > 0) {
        centroids.row(c) = sums.row(c) / counts[c];
      } else {
        // Empty cluster: re-seed at the point farthest from its centroid.
        int far = 0;
        double far_d = -1;
        for (int i = 0; i < n; ++i) {
          double d = sq_dist(x.row(i), centroids.row(assign[i]));
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centroids.row(c) = x.row(far);
        assign[far] = c;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
  }

  KmeansRun run;
  run.assignment = assign;
  run.inertia = 0;
  for (int i = 0; i < n; ++i) run.inertia += sq_dist(x.row(i), centroids.row(assign[i]));
  return run;
}

/// Largest-remainder apportionment of `total` into weighted shares.
std::vector<int> apportion(const std::vector<double>& weights, int total) {
  const int a_count = static_cast<int>(weights.size());
  double wsum = 0;
  for (double w : weights) wsum += w;
  std::vector<int> out(a_count, 0);
  if (wsum <= 0) wsum = 1;
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int a = 0; a < a_count; ++a) {
    double exact = total * weights[a] / wsum;
    out[a] = static_cast<int>(std::floor(exact));
    assigned += out[a];
    remainders.push_back({exact - out[a], a});
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& l, const auto& r) {
    if (l.first != r.first) return l.first > r.first;
    return l.second < r.second;
  });
  for (int i = 0; i < total - assigned; ++i) out[remainders[i].second] += 1;
  return out;
}

}  // namespace

Eigen::MatrixXd weighted_laplacian(const Network& net, LaplacianWeighting weighting) {
  const int n = net.n_buses();
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < net.n_branches(); ++k) {
    double w = branch_weight(net.branches[k], weighting);
    int i = net.from_index(k), j = net.to_index(k);
    lap(i, i) += w;
    lap(j, j) += w;
    lap(i, j) -= w;
    lap(j, i) -= w;
  }
  return lap;
}

Eigen::MatrixXd spectral_features(const Eigen::MatrixXd& laplacian, int C,
                                  std::vector<std::string>* warnings) {
  const int n = static_cast<int>(laplacian.rows());
  if (C >= n) throw std::runtime_error("spectral_features: C must be < N");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(laplacian);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("spectral_features: eigensolver failed");
  const Eigen::VectorXd& evals = solver.eigenvalues();  // ascending

  Eigen::MatrixXd features(n, C);
  for (int c = 0; c < C; ++c) {
    int idx = c + 1;  // skip the trivial s1 = 0 eigenpair
    Eigen::VectorXd vec = solver.eigenvectors().col(idx);
    vec.normalize();
    for (int i = 0; i < n; ++i) {
      if (vec[i] != 0.0) {
        if (vec[i] < 0.0) vec = -vec;
        break;
      }
    }
    features.col(c) = vec;
    if (warnings && idx + 1 < n && std::abs(evals[idx + 1] - evals[idx]) < 1e-12)
      warnings->push_back("repeated Laplacian eigenvalue near index " +
                          std::to_string(idx) + "; feature basis not unique");
  }
  return features;
}

std::vector<int> kmeans(const Eigen::MatrixXd& features, int A, std::uint64_t seed,
                        int restarts) {
  const int n = static_cast<int>(features.rows());
  if (A > n) throw std::runtime_error("kmeans: more clusters than points");
  if (A < 1) throw std::runtime_error("kmeans: need at least one cluster");
  if (restarts < 1) restarts = 1;
  KmeansRun best;
  for (int r = 0; r < restarts; ++r) {
    SplitMix64 rng = stream_rng(seed, static_cast<std::uint64_t>(r));
    KmeansRun run = kmeans_once(features, A, rng);
    if (run.inertia < best.inertia) best = run;  // strict <: ties keep earliest restart
  }
  return best.assignment;
}

Partition build_partition(const Network& net, int A, int C, std::uint64_t seed,
                          int K, const PartitionOptions& options) {
  const int n = net.n_buses(), l = net.n_branches();
  if (A > n) throw std::runtime_error("build_partition: A > N");
  if (A < 1) throw std::runtime_error("build_partition: A must be >= 1");

  Partition p;
  if (A == 1) {
    p.area_of_bus.assign(n, 0);
  } else {
    Eigen::MatrixXd lap = weighted_laplacian(net, options.weighting);
    Eigen::MatrixXd features = spectral_features(lap, C, nullptr);
    if (options.normalize_rows) {
      for (int i = 0; i < features.rows(); ++i) {
        double norm = features.row(i).norm();
        if (norm > 0) features.row(i) /= norm;
      }
    }
    p.area_of_bus = kmeans(features, A, seed, options.restarts);
  }

  p.area_of_branch.resize(l);
  for (int k = 0; k < l; ++k) {
    int ai = p.area_of_bus[net.from_index(k)];
    int aj = p.area_of_bus[net.to_index(k)];
    p.area_of_branch[k] = ai;  // tie-lines owned by the from-bus area
    if (ai != aj) p.tie_lines.push_back(k);
  }

  // Extra input coordinates per area: each owned tie-line contributes its
  // theta coordinate and the external end's V coordinate.
  p.external_inputs.assign(A, {});
  std::vector<std::set<int>> ext(A);
  for (int k : p.tie_lines) {
    int owner = p.area_of_branch[k];
    int i = net.from_index(k), j = net.to_index(k);
    int external_bus = (p.area_of_bus[i] == owner) ? j : i;
    ext[owner].insert(theta_coord(net, k));
    ext[owner].insert(v_coord(external_bus));
  }
  for (int a = 0; a < A; ++a)
    p.external_inputs[a].assign(ext[a].begin(), ext[a].end());

  std::vector<double> weights(A, 0.0);
  for (int a = 0; a < A; ++a) {
    if (options.allocation == NeuronAllocation::uniform) {
      weights[a] = 1.0;
    } else {
      double buses = 0, owned = 0;
      for (int i = 0; i < n; ++i)
        if (p.area_of_bus[i] == a) buses += 1;
      for (int k = 0; k < l; ++k)
        if (p.area_of_branch[k] == a) owned += 1;
      weights[a] = 2.0 * buses / 3.0 + owned / 3.0;
    }
  }
  p.neurons_per_area = apportion(weights, K);
  return p;
}

SparsityMasks sparsity_masks(const Partition& p, const Network& net) {
  const int n = net.n_buses(), l = net.n_branches();
  const int a_count = p.n_areas();
  int k_total = 0;
  for (int k : p.neurons_per_area) k_total += k;
  const int d = input_dim(net);

  // Input-coordinate set per area: own buses' V, owned branches' theta,
  // plus the tie-line extras.
  std::vector<std::vector<double>> area_inputs(a_count, std::vector<double>(d, 0.0));
  for (int i = 0; i < n; ++i) area_inputs[p.area_of_bus[i]][v_coord(i)] = 1.0;
  for (int k = 0; k < l; ++k)
    area_inputs[p.area_of_branch[k]][theta_coord(net, k)] = 1.0;
  for (int a = 0; a < a_count; ++a)
    for (int coord : p.external_inputs[a]) area_inputs[a][coord] = 1.0;

  SparsityMasks masks;
  masks.mask1 = Eigen::MatrixXd::Zero(k_total, d);
  masks.mask2 = Eigen::MatrixXd::Zero(2 * l, k_total);

  std::vector<int> block_start(a_count + 1, 0);
  for (int a = 0; a < a_count; ++a)
    block_start[a + 1] = block_start[a] + p.neurons_per_area[a];

  for (int a = 0; a < a_count; ++a)
    for (int row = block_start[a]; row < block_start[a + 1]; ++row)
      for (int c = 0; c < d; ++c) masks.mask1(row, c) = area_inputs[a][c];

  for (int k = 0; k < l; ++k) {
    int a = p.area_of_branch[k];
    for (int col = block_start[a]; col < block_start[a + 1]; ++col) {
      masks.mask2(k, col) = 1.0;      // rho row
      masks.mask2(l + k, col) = 1.0;  // pi row
    }
  }
  return masks;
}

double cut_weight(const Network& net, const std::vector<int>& area_of_bus,
                  LaplacianWeighting weighting) {
  double total = 0;
  for (int k = 0; k < net.n_branches(); ++k)
    if (area_of_bus[net.from_index(k)] != area_of_bus[net.to_index(k)])
      total += branch_weight(net.branches[k], weighting);
  return total;
}

std::string partition_to_json(const Partition& p) {
  nlohmann::json doc;
  doc["area_of_bus"] = p.area_of_bus;
  doc["area_of_branch"] = p.area_of_branch;
  doc["tie_lines"] = p.tie_lines;
  doc["external_inputs"] = p.external_inputs;
  doc["neurons_per_area"] = p.neurons_per_area;
  return doc.dump(2) + "\n";
}

Partition partition_from_json(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text);
  Partition p;
  p.area_of_bus = doc.at("area_of_bus").get<std::vector<int>>();
  p.area_of_branch = doc.at("area_of_branch").get<std::vector<int>>();
  p.tie_lines = doc.at("tie_lines").get<std::vector<int>>();
  p.external_inputs = doc.at("external_inputs").get<std::vector<std::vector<int>>>();
  p.neurons_per_area = doc.at("neurons_per_area").get<std::vector<int>>();
  return p;
}

}  // namespace gridnn
