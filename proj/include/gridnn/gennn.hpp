#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridnn/grid.hpp"
#include "gridnn/linearize.hpp"
#include "gridnn/partition.hpp"
#include "gridnn/sampling.hpp"

namespace gridnn {

/// Injection assembly with per-branch status weights, kept as an explicit
/// entry list so z_inj accumulates in branch order (bit-identical to
/// evaluate_pf) and so eps can change at inference time without rebuilds.
struct InjectionMap {
  struct Entry {
    int row;     // injection row (P rows first, then Q rows)
    int col;     // z3 row index
    int branch;  // local branch index weighting the entry by eps[branch]
  };
  int n_rows = 0;
  int n_cols = 0;
  std::vector<Entry> entries;

  Eigen::MatrixXd apply(const Eigen::VectorXd& eps, const Eigen::MatrixXd& z3) const;
  Eigen::MatrixXd apply_transpose(const Eigen::VectorXd& eps,
                                  const Eigen::MatrixXd& grad_out) const;
};

/// Frozen linear maps of the generative layers. For the full-network model
/// the gamma slots are just the buses; decoupled sub-models carry the slots
/// (own + tie-external buses) they actually reference.
struct PhysicsMaps {
  Eigen::SparseMatrix<double> w_gamma;  // 4L x G
  Eigen::SparseMatrix<double> w_rho;    // 4L x L
  Eigen::SparseMatrix<double> w_pi;     // 4L x L
  InjectionMap psi;
  std::vector<int> v_pos;    // G: input coordinate holding each slot's V
  Eigen::VectorXd v_check;   // G: anchor V per slot
};

struct GenNNModel {
  // trainable
  Eigen::MatrixXd w1;   // K x D
  Eigen::VectorXd bias; // K
  Eigen::MatrixXd w2;   // 2L x K (rho rows then pi rows)
  // frozen anchor (Linearization restricted to this model's inputs/branches)
  Eigen::VectorXd x_check;  // D
  Eigen::VectorXd f_check;  // 2L
  Eigen::MatrixXd j_check;  // 2L x D
  // frozen physics
  PhysicsMaps phys;
  std::optional<SparsityMasks> masks;
  std::uint64_t net_hash = 0;

  int hidden() const { return static_cast<int>(w1.rows()); }
  int inputs() const { return static_cast<int>(w1.cols()); }
  int branch_count() const { return static_cast<int>(f_check.size()) / 2; }
  int injection_rows() const { return phys.psi.n_rows; }

  void apply_masks();
};

struct Layers {
  Eigen::MatrixXd z1;  // K x B
  Eigen::MatrixXd z2;  // 2L x B
  Eigen::MatrixXd z3;  // 4L x B
  Eigen::MatrixXd z4;  // 2M x B
};

struct Gradients {
  Eigen::MatrixXd d_w1;
  Eigen::VectorXd d_bias;
  Eigen::MatrixXd d_w2;
};

struct TrainConfig {
  int epochs = 5000;
  double learning_rate = 2.5e-3;
  double lambda = 10.0;
  int batch_size = 256;
  std::uint64_t seed = 0;
  double beta1 = 0.9, beta2 = 0.999, eps_adam = 1e-8;
};

/// Inputs packed as model input vectors plus the training targets.
struct TrainingData {
  Eigen::MatrixXd x;      // D x S
  Eigen::MatrixXd f;      // 2L x S, [rho; pi]
  Eigen::MatrixXd z_pf;   // 4L x S
  Eigen::MatrixXd z_inj;  // 2M x S
  int size() const { return static_cast<int>(x.cols()); }
};

struct TrainResult {
  std::vector<double> loss_history;  // mean minibatch loss per epoch
  std::vector<std::string> warnings;
};

struct DirectNNModel {
  Eigen::MatrixXd w_in;   // K x D
  Eigen::VectorXd b_in;   // K
  Eigen::MatrixXd w_out;  // (4L+2N) x K
  Eigen::VectorXd b_out;  // 4L+2N
  Eigen::VectorXd x_check;
  std::uint64_t net_hash = 0;
  int hidden() const { return static_cast<int>(w_in.rows()); }
};

/// Neuron-count default K = ceil(2N/3 + L/3); always overridable.
int hidden_size(int n_buses, int n_branches);

/// Zero-weight model wired to the network's frozen maps.
GenNNModel make_gennn(const Network& net, const Linearization& lin, int K,
                      std::optional<SparsityMasks> masks = std::nullopt);

TrainingData training_data(const Network& net, const Dataset& ds);

/// Layer evaluation; eps defaults to all-ones. x_tilde = x - x_check is
/// formed internally.
Layers forward(const GenNNModel& m, const Eigen::MatrixXd& x,
               const Eigen::VectorXd* eps = nullptr);
Layers forward_single(const GenNNModel& m, const Eigen::VectorXd& x,
                      const Eigen::VectorXd* eps = nullptr);

/// Mean over batch and coordinates of the two error terms:
/// ||f(x) - z2||^2 + lambda ||[z_pf; z_inj] - [z3; z4]||^2.
double loss(const GenNNModel& m, const TrainingData& data,
            const std::vector<int>& batch, double lambda);

/// Exact analytic gradients; masked coordinates are zero; the ReLU
/// subgradient at 0 is 0.
Gradients gradients(const GenNNModel& m, const TrainingData& data,
                    const std::vector<int>& batch, double lambda);

/// Adam with deterministic init and batch order derived from cfg.seed.
/// Throws on non-finite loss.
TrainResult train(GenNNModel& m, const TrainingData& data, const TrainConfig& cfg);

struct DecoupledResult {
  GenNNModel model;
  std::vector<TrainResult> per_area;
};

/// Decoupled training: one independent sub-problem per area (its neuron
/// block, input slice with tie extras, owned branches), then reassembly into
/// a single masked model. With A=1 the trajectory is identical to train().
DecoupledResult train_decoupled(const Partition& partition, const Network& net,
                                const Dataset& ds, const Linearization& lin,
                                const TrainConfig& cfg);

DirectNNModel train_direct(const Network& net, const Dataset& ds,
                           const Eigen::VectorXd& x_check, int K,
                           const TrainConfig& cfg, TrainResult* result = nullptr);

/// [z_pf; z_inj] prediction of the baseline model.
Eigen::VectorXd direct_predict(const DirectNNModel& m, const Eigen::VectorXd& x);

// Checkpoints (JSON; see README for the schema).
std::string gennn_to_json(const GenNNModel& m);
GenNNModel gennn_from_json(const std::string& text, const Network& net);
std::string direct_to_json(const DirectNNModel& m);
DirectNNModel direct_from_json(const std::string& text);

}  // namespace gridnn
