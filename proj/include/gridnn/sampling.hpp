#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>

#include "gridnn/grid.hpp"

namespace gridnn {

struct SampleRanges {
  double v_lo = 0.94;
  double v_hi = 1.06;
  double theta_half_width = 3.14159265358979323846 / 6.0;  // radians
  std::uint64_t seed = 0;
};

/// Column s of each matrix is sample s. Targets are exact evaluate_pf outputs
/// at the nominal topology (all eps = 1); net_hash binds the data to the
/// network it was generated from.
struct Dataset {
  int n_buses = 0;
  int n_branches = 0;
  SampleRanges ranges;
  std::uint64_t net_hash = 0;
  Eigen::MatrixXd v, theta;        // N x S inputs
  Eigen::MatrixXd gamma;           // N x S
  Eigen::MatrixXd rho, pi;         // L x S
  Eigen::MatrixXd z_pf;            // 4L x S
  Eigen::MatrixXd z_inj;           // 2N x S

  int size() const { return static_cast<int>(v.cols()); }
  PFState state(int s) const { return {v.col(s), theta.col(s)}; }
};

/// V_i ~ U[v_lo, v_hi] and theta_i ~ anchor + U[-w, +w] per non-reference
/// bus; the reference bus stays at its anchor values. Sample i draws from
/// stream (seed, i), so output is independent of generation order.
Dataset generate_dataset(const Network& net, const PFState& anchor,
                         const SampleRanges& ranges, int count);

/// Disjoint random split with sizes (floor(f*n), n - floor(f*n)).
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                  std::uint64_t seed);

// Binary dataset file: fixed header then little-endian doubles per sample.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

/// One row per sample; a sidecar JSON file documents the column schema.
void export_dataset_csv(const Dataset& ds, const std::string& csv_path,
                        const std::string& schema_path);

}  // namespace gridnn
