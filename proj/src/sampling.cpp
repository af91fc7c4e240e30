#include "gridnn/sampling.hpp"

#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "gridnn/rng.hpp"

namespace gridnn {

namespace {

void fill_targets(const Network& net, Dataset& ds) {
  const int s_count = ds.size();
  Eigen::VectorXd eps = Eigen::VectorXd::Ones(net.n_branches());
  for (int s = 0; s < s_count; ++s) {
    PFState st = ds.state(s);
    NonlinearTerms t = nonlinear_terms(net, st);
    FlowVectors fv = evaluate_pf(net, st, eps);
    ds.gamma.col(s) = t.gamma;
    ds.rho.col(s) = t.rho;
    ds.pi.col(s) = t.pi;
    ds.z_pf.col(s) = fv.z_pf;
    ds.z_inj.col(s) = fv.z_inj;
  }
}

void resize(Dataset& ds, int n, int l, int count) {
  ds.n_buses = n;
  ds.n_branches = l;
  ds.v.resize(n, count);
  ds.theta.resize(n, count);
  ds.gamma.resize(n, count);
  ds.rho.resize(l, count);
  ds.pi.resize(l, count);
  ds.z_pf.resize(4 * l, count);
  ds.z_inj.resize(2 * n, count);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

double get_f64(std::istream& in) {
  std::uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

constexpr char kMagic[8] = {'G', 'N', 'N', 'D', 'S', 'E', 'T', '1'};

}  // namespace

Dataset generate_dataset(const Network& net, const PFState& anchor,
                         const SampleRanges& ranges, int count) {
  if (count <= 0) throw std::runtime_error("generate_dataset: count must be positive");
  if (ranges.v_lo >= ranges.v_hi)
    throw std::runtime_error("generate_dataset: v_lo must be < v_hi");
  if (ranges.theta_half_width <= 0)
    throw std::runtime_error("generate_dataset: theta_half_width must be positive");
  if (anchor.v.size() != net.n_buses())
    throw std::runtime_error("generate_dataset: anchor dimension mismatch");

  const int n = net.n_buses();
  const int ref = net.ref_bus();
  Dataset ds;
  resize(ds, n, net.n_branches(), count);
  ds.ranges = ranges;
  ds.net_hash = net.digest();

  for (int s = 0; s < count; ++s) {
    SplitMix64 rng = stream_rng(ranges.seed, static_cast<std::uint64_t>(s));
    for (int i = 0; i < n; ++i)
      ds.v(i, s) = (i == ref) ? anchor.v[i] : rng.uniform(ranges.v_lo, ranges.v_hi);
    for (int i = 0; i < n; ++i)
      ds.theta(i, s) = (i == ref)
                           ? anchor.theta[i]
                           : anchor.theta[i] + rng.uniform(-ranges.theta_half_width,
                                                           ranges.theta_half_width);
  }
  fill_targets(net, ds);
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                  std::uint64_t seed) {
  if (ds.size() == 0) throw std::runtime_error("split: empty dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::runtime_error("split: train_fraction must be in (0,1)");
  const int total = ds.size();
  const int n_train = static_cast<int>(train_fraction * total);

  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng = stream_rng(seed, 0);
  for (int i = total - 1; i > 0; --i) {
    int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[i], order[j]);
  }

  auto take = [&](int begin, int end) {
    Dataset out;
    resize(out, ds.n_buses, ds.n_branches, end - begin);
    out.ranges = ds.ranges;
    out.net_hash = ds.net_hash;
    for (int s = begin; s < end; ++s) {
      int src = order[s], dst = s - begin;
      out.v.col(dst) = ds.v.col(src);
      out.theta.col(dst) = ds.theta.col(src);
      out.gamma.col(dst) = ds.gamma.col(src);
      out.rho.col(dst) = ds.rho.col(src);
      out.pi.col(dst) = ds.pi.col(src);
      out.z_pf.col(dst) = ds.z_pf.col(src);
      out.z_inj.col(dst) = ds.z_inj.col(src);
    }
    return out;
  };
  return {take(0, n_train), take(n_train, total)};
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  out.write(kMagic, 8);
  put_u64(out, static_cast<std::uint64_t>(ds.n_buses));
  put_u64(out, static_cast<std::uint64_t>(ds.n_branches));
  put_u64(out, static_cast<std::uint64_t>(ds.size()));
  put_u64(out, ds.ranges.seed);
  put_f64(out, ds.ranges.v_lo);
  put_f64(out, ds.ranges.v_hi);
  put_f64(out, ds.ranges.theta_half_width);
  put_u64(out, ds.net_hash);
  for (int s = 0; s < ds.size(); ++s) {
    for (int i = 0; i < ds.n_buses; ++i) put_f64(out, ds.v(i, s));
    for (int i = 0; i < ds.n_buses; ++i) put_f64(out, ds.theta(i, s));
    for (int i = 0; i < ds.n_buses; ++i) put_f64(out, ds.gamma(i, s));
    for (int i = 0; i < ds.n_branches; ++i) put_f64(out, ds.rho(i, s));
    for (int i = 0; i < ds.n_branches; ++i) put_f64(out, ds.pi(i, s));
    for (int i = 0; i < 4 * ds.n_branches; ++i) put_f64(out, ds.z_pf(i, s));
    for (int i = 0; i < 2 * ds.n_buses; ++i) put_f64(out, ds.z_inj(i, s));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a dataset file: " + path);
  Dataset ds;
  int n = static_cast<int>(get_u64(in));
  int l = static_cast<int>(get_u64(in));
  int count = static_cast<int>(get_u64(in));
  ds.ranges.seed = get_u64(in);
  ds.ranges.v_lo = get_f64(in);
  ds.ranges.v_hi = get_f64(in);
  ds.ranges.theta_half_width = get_f64(in);
  std::uint64_t net_hash = get_u64(in);
  resize(ds, n, l, count);
  ds.net_hash = net_hash;
  for (int s = 0; s < count; ++s) {
    for (int i = 0; i < n; ++i) ds.v(i, s) = get_f64(in);
    for (int i = 0; i < n; ++i) ds.theta(i, s) = get_f64(in);
    for (int i = 0; i < n; ++i) ds.gamma(i, s) = get_f64(in);
    for (int i = 0; i < l; ++i) ds.rho(i, s) = get_f64(in);
    for (int i = 0; i < l; ++i) ds.pi(i, s) = get_f64(in);
    for (int i = 0; i < 4 * l; ++i) ds.z_pf(i, s) = get_f64(in);
    for (int i = 0; i < 2 * n; ++i) ds.z_inj(i, s) = get_f64(in);
  }
  if (!in) throw std::runtime_error("dataset file truncated: " + path);
  return ds;
}

void export_dataset_csv(const Dataset& ds, const std::string& csv_path,
                        const std::string& schema_path) {
  std::vector<std::string> columns;
  auto add = [&](const std::string& prefix, int count) {
    for (int i = 0; i < count; ++i) columns.push_back(prefix + std::to_string(i + 1));
  };
  add("v_", ds.n_buses);
  add("theta_", ds.n_buses);
  add("gamma_", ds.n_buses);
  add("rho_", ds.n_branches);
  add("pi_", ds.n_branches);
  for (int k = 0; k < ds.n_branches; ++k) {
    std::string id = std::to_string(k + 1);
    columns.push_back("p_fwd_" + id);
    columns.push_back("q_fwd_" + id);
    columns.push_back("p_rev_" + id);
    columns.push_back("q_rev_" + id);
  }
  add("p_inj_", ds.n_buses);
  add("q_inj_", ds.n_buses);

  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write csv: " + csv_path);
  out.precision(17);
  for (std::size_t c = 0; c < columns.size(); ++c)
    out << (c ? "," : "") << columns[c];
  out << "\n";
  for (int s = 0; s < ds.size(); ++s) {
    bool first = true;
    auto row = [&](const Eigen::MatrixXd& m) {
      for (int i = 0; i < m.rows(); ++i) {
        out << (first ? "" : ",") << m(i, s);
        first = false;
      }
    };
    row(ds.v);
    row(ds.theta);
    row(ds.gamma);
    row(ds.rho);
    row(ds.pi);
    row(ds.z_pf);
    row(ds.z_inj);
    out << "\n";
  }

  nlohmann::json schema;
  schema["columns"] = columns;
  schema["rows"] = ds.size();
  schema["net_hash"] = ds.net_hash;
  schema["units"] = {{"v", "pu"}, {"theta", "rad"}, {"flows", "pu"}, {"injections", "pu"}};
  std::ofstream sout(schema_path, std::ios::binary);
  if (!sout) throw std::runtime_error("cannot write schema: " + schema_path);
  sout << schema.dump(2) << "\n";
}

}  // namespace gridnn
