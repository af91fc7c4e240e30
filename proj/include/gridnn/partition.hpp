#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gridnn/grid.hpp"

namespace gridnn {

struct Partition {
  std::vector<int> area_of_bus;                  // N, area ids in 0..A-1
  std::vector<int> area_of_branch;               // L, owning area per branch
  std::vector<int> tie_lines;                    // branch indices with endpoints in different areas
  std::vector<std::vector<int>> external_inputs; // per area: extra input coords (tie theta, external-end V)
  std::vector<int> neurons_per_area;             // A, sums to K

  int n_areas() const { return static_cast<int>(neurons_per_area.size()); }
};

/// 0/1-valued masks on the trainable weights. mask1 row k is the input set of
/// neuron k's area; mask2 rows for branch l (rho row l, pi row L+l) admit only
/// the owning area's neuron block.
struct SparsityMasks {
  Eigen::MatrixXd mask1;  // K x D
  Eigen::MatrixXd mask2;  // 2L x K
};

enum class LaplacianWeighting { electrical, unit };
enum class NeuronAllocation { size_weighted, uniform };

/// Weighted graph Laplacian; electrical weights are 1/|z| = |y| per branch,
/// parallel branches summed.
Eigen::MatrixXd weighted_laplacian(const Network& net, LaplacianWeighting weighting);

/// Unit-norm eigenvectors of the C smallest eigenvalues after the trivial
/// s1 = 0 (ascending order, deterministic sign: first nonzero component
/// positive). Dense symmetric eigensolver.
Eigen::MatrixXd spectral_features(const Eigen::MatrixXd& laplacian, int C,
                                  std::vector<std::string>* warnings = nullptr);

/// Lloyd's algorithm with k-means++ seeding; `restarts` independent runs keep
/// the minimum-inertia result (ties by restart index). Nearest-centroid ties
/// break toward the lowest centroid index.
std::vector<int> kmeans(const Eigen::MatrixXd& features, int A, std::uint64_t seed,
                        int restarts);

struct PartitionOptions {
  LaplacianWeighting weighting = LaplacianWeighting::electrical;
  NeuronAllocation allocation = NeuronAllocation::size_weighted;
  bool normalize_rows = false;  // row-normalize spectral features before k-means
  int restarts = 8;
};

Partition build_partition(const Network& net, int A, int C, std::uint64_t seed,
                          int K, const PartitionOptions& options = {});

SparsityMasks sparsity_masks(const Partition& partition, const Network& net);

/// Total weight of branches crossing areas; the objective spectral
/// partitioning approximately minimizes.
double cut_weight(const Network& net, const std::vector<int>& area_of_bus,
                  LaplacianWeighting weighting);

std::string partition_to_json(const Partition& p);
Partition partition_from_json(const std::string& text);

}  // namespace gridnn
