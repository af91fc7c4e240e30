#include "gridnn/gennn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "gridnn/hash.hpp"
#include "gridnn/rng.hpp"

namespace gridnn {

namespace {

using nlohmann::json;

std::vector<int> shuffled_indices(int count, SplitMix64& rng) {
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  for (int i = count - 1; i > 0; --i) {
    int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[i], order[j]);
  }
  return order;
}

/// Uniform(+-sqrt(6/(fan_in+fan_out))) init on every entry; the mask (when
/// present) zeroes the rest afterwards.
void glorot_init(Eigen::MatrixXd& w, SplitMix64& rng) {
  double bound = std::sqrt(6.0 / (w.rows() + w.cols()));
  for (int r = 0; r < w.rows(); ++r)
    for (int c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
}

struct Adam {
  Eigen::MatrixXd m, v;
  double beta1, beta2, eps;
  long t = 0;

  Adam(int rows, int cols, const TrainConfig& cfg)
      : m(Eigen::MatrixXd::Zero(rows, cols)),
        v(Eigen::MatrixXd::Zero(rows, cols)),
        beta1(cfg.beta1),
        beta2(cfg.beta2),
        eps(cfg.eps_adam) {}

  void step(Eigen::MatrixXd& w, const Eigen::MatrixXd& g, double lr) {
    ++t;
    m = beta1 * m + (1 - beta1) * g;
    v = beta2 * v + (1 - beta2) * g.cwiseProduct(g);
    double c1 = 1 - std::pow(beta1, t), c2 = 1 - std::pow(beta2, t);
    w -= (lr / c1) * (m.array() / ((v.array() / c2).sqrt() + eps)).matrix();
  }
};

Eigen::MatrixXd cols_of(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<int>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) out.col(c) = m.col(idx[c]);
  return out;
}

json triplets_of(const Eigen::MatrixXd& m) {
  json t = json::array();
  for (int c = 0; c < m.cols(); ++c)
    for (int r = 0; r < m.rows(); ++r)
      if (m(r, c) != 0.0) t.push_back({r, c, m(r, c)});
  return t;
}

Eigen::MatrixXd matrix_from_triplets(const json& t, int rows, int cols) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, cols);
  for (const auto& e : t) m(e[0].get<int>(), e[1].get<int>()) = e[2].get<double>();
  return m;
}

json vec_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vec_from_json(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<int>(v.size()));
}

}  // namespace

Eigen::MatrixXd InjectionMap::apply(const Eigen::VectorXd& eps,
                                    const Eigen::MatrixXd& z3) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_rows, z3.cols());
  for (const Entry& e : entries)
    out.row(e.row) += eps[e.branch] * z3.row(e.col);
  return out;
}

Eigen::MatrixXd InjectionMap::apply_transpose(const Eigen::VectorXd& eps,
                                              const Eigen::MatrixXd& grad_out) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_cols, grad_out.cols());
  for (const Entry& e : entries)
    out.row(e.col) += eps[e.branch] * grad_out.row(e.row);
  return out;
}

void GenNNModel::apply_masks() {
  if (!masks) return;
  w1 = w1.cwiseProduct(masks->mask1);
  w2 = w2.cwiseProduct(masks->mask2);
}

int hidden_size(int n_buses, int n_branches) {
  if (n_buses < 1 || n_branches < 1)
    throw std::runtime_error("hidden_size: need at least one bus and branch");
  return (2 * n_buses + n_branches + 2) / 3;  // ceil((2N + L)/3)
}

GenNNModel make_gennn(const Network& net, const Linearization& lin, int K,
                      std::optional<SparsityMasks> masks) {
  const int n = net.n_buses(), l = net.n_branches();
  const int d = input_dim(net);
  if (lin.x_check.size() != d) throw std::runtime_error("make_gennn: anchor mismatch");
  if (masks && (masks->mask1.rows() != K || masks->mask1.cols() != d ||
                masks->mask2.rows() != 2 * l || masks->mask2.cols() != K))
    throw std::runtime_error("make_gennn: mask dimensions mismatch");

  GenNNModel m;
  m.w1 = Eigen::MatrixXd::Zero(K, d);
  m.bias = Eigen::VectorXd::Zero(K);
  m.w2 = Eigen::MatrixXd::Zero(2 * l, K);
  m.x_check = lin.x_check;
  m.f_check = lin.f_check;
  m.j_check = lin.j_check;
  m.masks = std::move(masks);
  m.net_hash = net.digest();

  FlowMaps maps = assemble_flow_maps(net);
  m.phys.w_gamma = maps.w_gamma;
  m.phys.w_rho = maps.w_rho;
  m.phys.w_pi = maps.w_pi;
  m.phys.v_pos.resize(n);
  for (int i = 0; i < n; ++i) m.phys.v_pos[i] = v_coord(i);
  m.phys.v_check = lin.gamma_anchor;

  m.phys.psi.n_rows = 2 * n;
  m.phys.psi.n_cols = 4 * l;
  for (int k = 0; k < l; ++k) {
    int i = net.from_index(k), j = net.to_index(k);
    m.phys.psi.entries.push_back({i, flow_row(k, 0), k});
    m.phys.psi.entries.push_back({n + i, flow_row(k, 1), k});
    m.phys.psi.entries.push_back({j, flow_row(k, 2), k});
    m.phys.psi.entries.push_back({n + j, flow_row(k, 3), k});
  }
  return m;
}

TrainingData training_data(const Network& net, const Dataset& ds) {
  if (ds.net_hash != net.digest())
    throw std::runtime_error("dataset was generated from a different network");
  TrainingData data;
  const int s_count = ds.size();
  data.x.resize(input_dim(net), s_count);
  for (int s = 0; s < s_count; ++s) data.x.col(s) = build_input(net, ds.state(s));
  data.f.resize(2 * ds.n_branches, s_count);
  data.f.topRows(ds.n_branches) = ds.rho;
  data.f.bottomRows(ds.n_branches) = ds.pi;
  data.z_pf = ds.z_pf;
  data.z_inj = ds.z_inj;
  return data;
}

Layers forward(const GenNNModel& m, const Eigen::MatrixXd& x,
               const Eigen::VectorXd* eps) {
  const int l = m.branch_count();
  const int b = static_cast<int>(x.cols());
  if (x.rows() != m.inputs()) throw std::runtime_error("forward: input dim mismatch");
  Eigen::VectorXd ones;
  if (!eps) {
    ones = Eigen::VectorXd::Ones(l);
    eps = &ones;
  }

  Layers out;
  Eigen::MatrixXd x_tilde = x.colwise() - m.x_check;
  out.z1 = ((m.w1 * x_tilde).colwise() + m.bias).cwiseMax(0.0);
  out.z2 = ((m.j_check * x_tilde + m.w2 * out.z1).colwise() + m.f_check);

  Eigen::MatrixXd gamma_hat(m.phys.v_check.size(), b);
  for (int g = 0; g < gamma_hat.rows(); ++g)
    gamma_hat.row(g) = 2.0 * x.row(m.phys.v_pos[g]).array() - m.phys.v_check[g];

  out.z3 = m.phys.w_gamma * gamma_hat + m.phys.w_rho * out.z2.topRows(l) +
           m.phys.w_pi * out.z2.bottomRows(l);
  out.z4 = m.phys.psi.apply(*eps, out.z3);
  return out;
}

Layers forward_single(const GenNNModel& m, const Eigen::VectorXd& x,
                      const Eigen::VectorXd* eps) {
  return forward(m, Eigen::MatrixXd(x), eps);
}

double loss(const GenNNModel& m, const TrainingData& data,
            const std::vector<int>& batch, double lambda) {
  Eigen::MatrixXd x = cols_of(data.x, batch);
  Layers layers = forward(m, x);
  Eigen::MatrixXd f = cols_of(data.f, batch);
  Eigen::MatrixXd z_pf = cols_of(data.z_pf, batch);
  Eigen::MatrixXd z_inj = cols_of(data.z_inj, batch);
  const double b = static_cast<double>(batch.size());
  double term1 = (layers.z2 - f).squaredNorm() / (b * f.rows());
  double gen_rows = static_cast<double>(z_pf.rows() + z_inj.rows());
  double term2 = ((layers.z3 - z_pf).squaredNorm() + (layers.z4 - z_inj).squaredNorm()) /
                 (b * gen_rows);
  return term1 + lambda * term2;
}

namespace {

Gradients gradients_impl(const GenNNModel& m, const Eigen::MatrixXd& x,
                         const Eigen::MatrixXd& f, const Eigen::MatrixXd& z_pf,
                         const Eigen::MatrixXd& z_inj, double lambda) {
  const int l = m.branch_count();
  const double batch = static_cast<double>(x.cols());
  Eigen::VectorXd eps = Eigen::VectorXd::Ones(l);

  Eigen::MatrixXd x_tilde = x.colwise() - m.x_check;
  Eigen::MatrixXd pre = (m.w1 * x_tilde).colwise() + m.bias;
  Eigen::MatrixXd z1 = pre.cwiseMax(0.0);
  Eigen::MatrixXd z2 = (m.j_check * x_tilde + m.w2 * z1).colwise() + m.f_check;
  Eigen::MatrixXd gamma_hat(m.phys.v_check.size(), x.cols());
  for (int g = 0; g < gamma_hat.rows(); ++g)
    gamma_hat.row(g) = 2.0 * x.row(m.phys.v_pos[g]).array() - m.phys.v_check[g];
  Eigen::MatrixXd z3 = m.phys.w_gamma * gamma_hat + m.phys.w_rho * z2.topRows(l) +
                       m.phys.w_pi * z2.bottomRows(l);
  Eigen::MatrixXd z4 = m.phys.psi.apply(eps, z3);

  double gen_rows = static_cast<double>(z_pf.rows() + z_inj.rows());
  Eigen::MatrixXd g4 = (2.0 * lambda / (batch * gen_rows)) * (z4 - z_inj);
  Eigen::MatrixXd g3 = (2.0 * lambda / (batch * gen_rows)) * (z3 - z_pf) +
                       m.phys.psi.apply_transpose(eps, g4);
  Eigen::MatrixXd g2 = (2.0 / (batch * f.rows())) * (z2 - f);
  g2.topRows(l) += m.phys.w_rho.transpose() * g3;
  g2.bottomRows(l) += m.phys.w_pi.transpose() * g3;

  Gradients g;
  g.d_w2 = g2 * z1.transpose();
  Eigen::MatrixXd g1 =
      (m.w2.transpose() * g2).cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
  g.d_w1 = g1 * x_tilde.transpose();
  g.d_bias = g1.rowwise().sum();
  if (m.masks) {
    g.d_w1 = g.d_w1.cwiseProduct(m.masks->mask1);
    g.d_w2 = g.d_w2.cwiseProduct(m.masks->mask2);
  }
  return g;
}

}  // namespace

Gradients gradients(const GenNNModel& m, const TrainingData& data,
                    const std::vector<int>& batch, double lambda) {
  return gradients_impl(m, cols_of(data.x, batch), cols_of(data.f, batch),
                        cols_of(data.z_pf, batch), cols_of(data.z_inj, batch), lambda);
}

TrainResult train(GenNNModel& m, const TrainingData& data, const TrainConfig& cfg) {
  if (data.x.rows() != m.inputs() || data.f.rows() != 2 * m.branch_count() ||
      data.z_inj.rows() != m.injection_rows())
    throw std::runtime_error("train: data does not match model dimensions");
  if (cfg.epochs <= 0 || cfg.learning_rate <= 0 || cfg.batch_size <= 0)
    throw std::runtime_error("train: config values must be positive");
  if (cfg.lambda < 0) throw std::runtime_error("train: lambda must be >= 0");

  SplitMix64 init_rng = stream_rng(cfg.seed, 0);
  glorot_init(m.w1, init_rng);
  glorot_init(m.w2, init_rng);
  m.bias.setZero();
  m.apply_masks();

  Adam adam_w1(static_cast<int>(m.w1.rows()), static_cast<int>(m.w1.cols()), cfg);
  Adam adam_b(static_cast<int>(m.bias.size()), 1, cfg);
  Adam adam_w2(static_cast<int>(m.w2.rows()), static_cast<int>(m.w2.cols()), cfg);

  TrainResult result;
  const int s_count = data.size();
  const int batch_size = std::min(cfg.batch_size, s_count);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    SplitMix64 rng = stream_rng(cfg.seed, 1 + static_cast<std::uint64_t>(epoch));
    std::vector<int> order = shuffled_indices(s_count, rng);
    double epoch_loss = 0;
    int batches = 0;
    for (int start = 0; start < s_count; start += batch_size) {
      int end = std::min(start + batch_size, s_count);
      std::vector<int> batch(order.begin() + start, order.begin() + end);
      Eigen::MatrixXd xb = cols_of(data.x, batch);
      Eigen::MatrixXd fb = cols_of(data.f, batch);
      Eigen::MatrixXd pfb = cols_of(data.z_pf, batch);
      Eigen::MatrixXd injb = cols_of(data.z_inj, batch);

      Gradients g = gradients_impl(m, xb, fb, pfb, injb, cfg.lambda);
      adam_w1.step(m.w1, g.d_w1, cfg.learning_rate);
      Eigen::MatrixXd bias_m(m.bias), bias_g(g.d_bias);
      adam_b.step(bias_m, bias_g, cfg.learning_rate);
      m.bias = bias_m;
      adam_w2.step(m.w2, g.d_w2, cfg.learning_rate);
      m.apply_masks();

      epoch_loss += loss(m, data, batch, cfg.lambda);
      ++batches;
    }
    double mean_loss = epoch_loss / batches;
    if (!std::isfinite(mean_loss))
      throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch) +
                               " (value " + std::to_string(mean_loss) + ")");
    result.loss_history.push_back(mean_loss);
  }
  return result;
}

namespace {

/// Ascending list of global input coordinates visible to an area.
std::vector<int> area_input_coords(const Partition& p, const Network& net, int area) {
  std::vector<int> coords;
  for (int i = 0; i < net.n_buses(); ++i)
    if (p.area_of_bus[i] == area) coords.push_back(v_coord(i));
  for (int k = 0; k < net.n_branches(); ++k)
    if (p.area_of_branch[k] == area) coords.push_back(theta_coord(net, k));
  for (int c : p.external_inputs[area]) coords.push_back(c);
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  return coords;
}

}  // namespace

namespace {

GenNNModel assemble_sub_model(const Partition& p, const Network& net,
                              const Linearization& lin, int area, int k_area,
                              const std::vector<int>& coords,
                              const std::vector<int>& own_branches,
                              const std::vector<int>& own_buses) {
  const int d_sub = static_cast<int>(coords.size());
  const int l_sub = static_cast<int>(own_branches.size());
  const int n_own = static_cast<int>(own_buses.size());
  const int big_l = net.n_branches();

  std::vector<int> coord_pos(input_dim(net), -1);
  for (int c = 0; c < d_sub; ++c) coord_pos[coords[c]] = c;
  std::vector<int> branch_pos(big_l, -1);
  for (int k = 0; k < l_sub; ++k) branch_pos[own_branches[k]] = k;
  std::vector<int> bus_pos(net.n_buses(), -1);
  for (int i = 0; i < n_own; ++i) bus_pos[own_buses[i]] = i;

  GenNNModel sub;
  sub.w1 = Eigen::MatrixXd::Zero(k_area, d_sub);
  sub.bias = Eigen::VectorXd::Zero(k_area);
  sub.w2 = Eigen::MatrixXd::Zero(2 * l_sub, k_area);
  sub.x_check.resize(d_sub);
  for (int c = 0; c < d_sub; ++c) sub.x_check[c] = lin.x_check[coords[c]];
  sub.f_check.resize(2 * l_sub);
  sub.j_check = Eigen::MatrixXd::Zero(2 * l_sub, d_sub);
  for (int k = 0; k < l_sub; ++k) {
    int kg = own_branches[k];
    sub.f_check[k] = lin.f_check[kg];
    sub.f_check[l_sub + k] = lin.f_check[big_l + kg];
    for (int c = 0; c < d_sub; ++c) {
      sub.j_check(k, c) = lin.j_check(kg, coords[c]);
      sub.j_check(l_sub + k, c) = lin.j_check(big_l + kg, coords[c]);
    }
  }

  // Gamma slots: sending-end buses of owned branches (from and to).
  std::vector<int> slot_of_bus(net.n_buses(), -1);
  std::vector<int> slot_bus;
  auto slot = [&](int bus) {
    if (slot_of_bus[bus] < 0) {
      slot_of_bus[bus] = static_cast<int>(slot_bus.size());
      slot_bus.push_back(bus);
    }
    return slot_of_bus[bus];
  };
  std::vector<Eigen::Triplet<double>> tg, tr, tp;
  for (int k = 0; k < l_sub; ++k) {
    const Branch& br = net.branches[own_branches[k]];
    int si = slot(net.from_index(own_branches[k]));
    int sj = slot(net.to_index(own_branches[k]));
    double a = br.tap;
    tg.emplace_back(flow_row(k, 0), si, br.g / (a * a) + br.g_sh);
    tr.emplace_back(flow_row(k, 0), k, -br.g / a);
    tp.emplace_back(flow_row(k, 0), k, -br.b / a);
    tg.emplace_back(flow_row(k, 1), si, -(br.b / (a * a) + br.b_sh));
    tr.emplace_back(flow_row(k, 1), k, br.b / a);
    tp.emplace_back(flow_row(k, 1), k, -br.g / a);
    tg.emplace_back(flow_row(k, 2), sj, br.g + br.g_sh);
    tr.emplace_back(flow_row(k, 2), k, -br.g);
    tp.emplace_back(flow_row(k, 2), k, br.b);
    tg.emplace_back(flow_row(k, 3), sj, -(br.b + br.b_sh));
    tr.emplace_back(flow_row(k, 3), k, br.b);
    tp.emplace_back(flow_row(k, 3), k, br.g);
  }
  const int g_count = static_cast<int>(slot_bus.size());
  sub.phys.w_gamma.resize(4 * l_sub, g_count);
  sub.phys.w_rho.resize(4 * l_sub, l_sub);
  sub.phys.w_pi.resize(4 * l_sub, l_sub);
  sub.phys.w_gamma.setFromTriplets(tg.begin(), tg.end());
  sub.phys.w_rho.setFromTriplets(tr.begin(), tr.end());
  sub.phys.w_pi.setFromTriplets(tp.begin(), tp.end());
  sub.phys.v_pos.resize(g_count);
  sub.phys.v_check.resize(g_count);
  for (int g = 0; g < g_count; ++g) {
    int pos = coord_pos[v_coord(slot_bus[g])];
    if (pos < 0) throw std::logic_error("gamma slot bus missing from area inputs");
    sub.phys.v_pos[g] = pos;
    sub.phys.v_check[g] = lin.x_check[v_coord(slot_bus[g])];
  }

  // Injection rows over own buses, columns over owned branch flows only;
  // foreign tie-line contributions live in the owning area's sub-problem.
  sub.phys.psi.n_rows = 2 * n_own;
  sub.phys.psi.n_cols = 4 * l_sub;
  for (int k = 0; k < l_sub; ++k) {
    int i = net.from_index(own_branches[k]), j = net.to_index(own_branches[k]);
    if (bus_pos[i] >= 0) {
      sub.phys.psi.entries.push_back({bus_pos[i], flow_row(k, 0), k});
      sub.phys.psi.entries.push_back({n_own + bus_pos[i], flow_row(k, 1), k});
    }
    if (bus_pos[j] >= 0) {
      sub.phys.psi.entries.push_back({bus_pos[j], flow_row(k, 2), k});
      sub.phys.psi.entries.push_back({n_own + bus_pos[j], flow_row(k, 3), k});
    }
  }
  sub.net_hash = net.digest();
  return sub;
}

}  // namespace

DecoupledResult train_decoupled(const Partition& p, const Network& net,
                                const Dataset& ds, const Linearization& lin,
                                const TrainConfig& cfg) {
  const int n = net.n_buses(), l = net.n_branches();
  const int a_count = p.n_areas();
  SparsityMasks masks = sparsity_masks(p, net);
  int k_total = 0;
  for (int k : p.neurons_per_area) k_total += k;

  TrainingData full = training_data(net, ds);
  DecoupledResult out;
  out.model = make_gennn(net, lin, k_total, masks);
  out.per_area.resize(a_count);

  std::vector<int> block_start(a_count + 1, 0);
  for (int a = 0; a < a_count; ++a)
    block_start[a + 1] = block_start[a] + p.neurons_per_area[a];

  for (int a = 0; a < a_count; ++a) {
    std::vector<int> coords = area_input_coords(p, net, a);
    std::vector<int> own_branches, own_buses;
    for (int k = 0; k < l; ++k)
      if (p.area_of_branch[k] == a) own_branches.push_back(k);
    for (int i = 0; i < n; ++i)
      if (p.area_of_bus[i] == a) own_buses.push_back(i);

    if (own_branches.empty()) {
      out.per_area[a].warnings.push_back("area " + std::to_string(a) +
                                         " owns no branches; trained trivially");
      continue;
    }
    if (p.neurons_per_area[a] == 0) {
      out.per_area[a].warnings.push_back("area " + std::to_string(a) +
                                         " has no neurons; linearization only");
      continue;
    }

    GenNNModel sub = assemble_sub_model(p, net, lin, a, p.neurons_per_area[a], coords,
                                        own_branches, own_buses);

    // Restrict the dataset: input slice, own-branch targets, and the own-bus
    // injection partial sums recomputed from the true flows of owned branches.
    TrainingData data;
    const int s_count = ds.size();
    const int l_sub = static_cast<int>(own_branches.size());
    data.x.resize(coords.size(), s_count);
    for (std::size_t c = 0; c < coords.size(); ++c) data.x.row(c) = full.x.row(coords[c]);
    data.f.resize(2 * l_sub, s_count);
    data.z_pf.resize(4 * l_sub, s_count);
    for (int k = 0; k < l_sub; ++k) {
      data.f.row(k) = full.f.row(own_branches[k]);
      data.f.row(l_sub + k) = full.f.row(l + own_branches[k]);
      for (int o = 0; o < 4; ++o)
        data.z_pf.row(flow_row(k, o)) = full.z_pf.row(flow_row(own_branches[k], o));
    }
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(l_sub);
    data.z_inj = sub.phys.psi.apply(ones, data.z_pf);

    out.per_area[a] = train(sub, data, cfg);

    // Scatter the trained block back into the assembled masked model.
    for (int r = 0; r < sub.w1.rows(); ++r)
      for (std::size_t c = 0; c < coords.size(); ++c)
        out.model.w1(block_start[a] + r, coords[c]) = sub.w1(r, static_cast<int>(c));
    out.model.bias.segment(block_start[a], p.neurons_per_area[a]) = sub.bias;
    for (int k = 0; k < l_sub; ++k)
      for (int c = 0; c < sub.w2.cols(); ++c) {
        out.model.w2(own_branches[k], block_start[a] + c) = sub.w2(k, c);
        out.model.w2(l + own_branches[k], block_start[a] + c) = sub.w2(l_sub + k, c);
      }
  }
  out.model.apply_masks();
  return out;
}

DirectNNModel train_direct(const Network& net, const Dataset& ds,
                           const Eigen::VectorXd& x_check, int K,
                           const TrainConfig& cfg, TrainResult* result) {
  TrainingData data = training_data(net, ds);
  const int d = static_cast<int>(data.x.rows());
  const int out_dim = static_cast<int>(data.z_pf.rows() + data.z_inj.rows());
  if (x_check.size() != d) throw std::runtime_error("train_direct: anchor mismatch");

  DirectNNModel m;
  m.x_check = x_check;
  m.net_hash = net.digest();
  m.w_in.resize(K, d);
  m.b_in = Eigen::VectorXd::Zero(K);
  m.w_out.resize(out_dim, K);
  m.b_out = Eigen::VectorXd::Zero(out_dim);
  SplitMix64 init_rng = stream_rng(cfg.seed, 0);
  glorot_init(m.w_in, init_rng);
  glorot_init(m.w_out, init_rng);

  Eigen::MatrixXd target(out_dim, data.size());
  target.topRows(data.z_pf.rows()) = data.z_pf;
  target.bottomRows(data.z_inj.rows()) = data.z_inj;

  Adam adam_win(K, d, cfg), adam_bin(K, 1, cfg), adam_wout(out_dim, K, cfg),
      adam_bout(out_dim, 1, cfg);

  const int s_count = data.size();
  const int batch_size = std::min(cfg.batch_size, s_count);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    SplitMix64 rng = stream_rng(cfg.seed, 1 + static_cast<std::uint64_t>(epoch));
    std::vector<int> order = shuffled_indices(s_count, rng);
    double epoch_loss = 0;
    int batches = 0;
    for (int start = 0; start < s_count; start += batch_size) {
      int end = std::min(start + batch_size, s_count);
      std::vector<int> batch(order.begin() + start, order.begin() + end);
      Eigen::MatrixXd xb = cols_of(data.x, batch).colwise() - m.x_check;
      Eigen::MatrixXd tb = cols_of(target, batch);
      double bsz = static_cast<double>(batch.size());

      Eigen::MatrixXd pre = (m.w_in * xb).colwise() + m.b_in;
      Eigen::MatrixXd h = pre.cwiseMax(0.0);
      Eigen::MatrixXd y = (m.w_out * h).colwise() + m.b_out;
      Eigen::MatrixXd gy = (2.0 / (bsz * out_dim)) * (y - tb);

      Eigen::MatrixXd d_wout = gy * h.transpose();
      Eigen::VectorXd d_bout = gy.rowwise().sum();
      Eigen::MatrixXd gh = (m.w_out.transpose() * gy)
                               .cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
      Eigen::MatrixXd d_win = gh * xb.transpose();
      Eigen::VectorXd d_bin = gh.rowwise().sum();

      adam_win.step(m.w_in, d_win, cfg.learning_rate);
      Eigen::MatrixXd bin_m(m.b_in), bin_g(d_bin);
      adam_bin.step(bin_m, bin_g, cfg.learning_rate);
      m.b_in = bin_m;
      adam_wout.step(m.w_out, d_wout, cfg.learning_rate);
      Eigen::MatrixXd bout_m(m.b_out), bout_g(d_bout);
      adam_bout.step(bout_m, bout_g, cfg.learning_rate);
      m.b_out = bout_m;

      Eigen::MatrixXd res = ((m.w_out * ((m.w_in * xb).colwise() + m.b_in).cwiseMax(0.0))
                                 .colwise() +
                             m.b_out) -
                            tb;
      epoch_loss += res.squaredNorm() / (bsz * out_dim);
      ++batches;
    }
    double mean_loss = epoch_loss / batches;
    if (!std::isfinite(mean_loss))
      throw std::runtime_error("train_direct: loss diverged at epoch " +
                               std::to_string(epoch));
    if (result) result->loss_history.push_back(mean_loss);
  }
  return m;
}

Eigen::VectorXd direct_predict(const DirectNNModel& m, const Eigen::VectorXd& x) {
  Eigen::VectorXd x_tilde = x - m.x_check;
  Eigen::VectorXd h = (m.w_in * x_tilde + m.b_in).cwiseMax(0.0);
  return m.w_out * h + m.b_out;
}

std::string gennn_to_json(const GenNNModel& m) {
  json doc;
  doc["format"] = "gridnn-checkpoint";
  doc["kind"] = "gennn";
  doc["version"] = 1;
  doc["k"] = m.hidden();
  doc["d"] = m.inputs();
  doc["l"] = m.branch_count();
  doc["net_hash"] = hex_digest(m.net_hash);
  doc["x_check"] = vec_json(m.x_check);
  doc["f_check"] = vec_json(m.f_check);
  doc["j_check"] = triplets_of(m.j_check);
  doc["w1"] = triplets_of(m.w1);
  doc["b"] = vec_json(m.bias);
  doc["w2"] = triplets_of(m.w2);
  if (m.masks) {
    doc["mask1"] = triplets_of(m.masks->mask1);
    doc["mask2"] = triplets_of(m.masks->mask2);
  }
  return doc.dump() + "\n";
}

GenNNModel gennn_from_json(const std::string& text, const Network& net) {
  json doc = json::parse(text);
  if (doc.value("kind", "") != "gennn")
    throw std::runtime_error("checkpoint is not a gennn model");
  if (doc.at("net_hash").get<std::string>() != hex_digest(net.digest()))
    throw std::runtime_error("checkpoint was trained on a different network");
  const int k = doc.at("k").get<int>();
  const int d = doc.at("d").get<int>();
  const int l = doc.at("l").get<int>();
  if (d != input_dim(net) || l != net.n_branches())
    throw std::runtime_error("checkpoint dimensions do not match network");

  Linearization lin;
  lin.x_check = vec_from_json(doc.at("x_check"));
  lin.f_check = vec_from_json(doc.at("f_check"));
  lin.j_check = matrix_from_triplets(doc.at("j_check"), 2 * l, d);
  lin.gamma_anchor = lin.x_check.head(net.n_buses());

  std::optional<SparsityMasks> masks;
  if (doc.contains("mask1")) {
    SparsityMasks ms;
    ms.mask1 = matrix_from_triplets(doc.at("mask1"), k, d);
    ms.mask2 = matrix_from_triplets(doc.at("mask2"), 2 * l, k);
    masks = std::move(ms);
  }
  GenNNModel m = make_gennn(net, lin, k, std::move(masks));
  m.w1 = matrix_from_triplets(doc.at("w1"), k, d);
  m.bias = vec_from_json(doc.at("b"));
  m.w2 = matrix_from_triplets(doc.at("w2"), 2 * l, k);
  return m;
}

std::string direct_to_json(const DirectNNModel& m) {
  json doc;
  doc["format"] = "gridnn-checkpoint";
  doc["kind"] = "direct";
  doc["version"] = 1;
  doc["k"] = m.hidden();
  doc["d"] = static_cast<int>(m.w_in.cols());
  doc["out_dim"] = static_cast<int>(m.w_out.rows());
  doc["net_hash"] = hex_digest(m.net_hash);
  doc["x_check"] = vec_json(m.x_check);
  doc["w_in"] = triplets_of(m.w_in);
  doc["b_in"] = vec_json(m.b_in);
  doc["w_out"] = triplets_of(m.w_out);
  doc["b_out"] = vec_json(m.b_out);
  return doc.dump() + "\n";
}

DirectNNModel direct_from_json(const std::string& text) {
  json doc = json::parse(text);
  if (doc.value("kind", "") != "direct")
    throw std::runtime_error("checkpoint is not a direct model");
  DirectNNModel m;
  int k = doc.at("k").get<int>();
  int d = doc.at("d").get<int>();
  int out_dim = doc.at("out_dim").get<int>();
  m.x_check = vec_from_json(doc.at("x_check"));
  m.w_in = matrix_from_triplets(doc.at("w_in"), k, d);
  m.b_in = vec_from_json(doc.at("b_in"));
  m.w_out = matrix_from_triplets(doc.at("w_out"), out_dim, k);
  m.b_out = vec_from_json(doc.at("b_out"));
  std::uint64_t h = 0;
  std::string hex = doc.at("net_hash").get<std::string>();
  for (char c : hex) h = (h << 4) | static_cast<std::uint64_t>(
                             c <= '9' ? c - '0' : c - 'a' + 10);
  m.net_hash = h;
  return m;
}

}  // namespace gridnn
