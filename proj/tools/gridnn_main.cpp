// gridnn command-line front end: case conversion, dataset generation,
// partitioning, training, MILP encoding, solving, and evaluation. Every
// subcommand writes its outputs plus a manifest.json (config, seeds, input
// digests) under --out; seeded stages are bit-reproducible.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "gridnn/case_io.hpp"
#include "gridnn/evaluate.hpp"
#include "gridnn/gennn.hpp"
#include "gridnn/grid.hpp"
#include "gridnn/hash.hpp"
#include "gridnn/linearize.hpp"
#include "gridnn/milp_encode.hpp"
#include "gridnn/milp_model.hpp"
#include "gridnn/milp_solve.hpp"
#include "gridnn/partition.hpp"
#include "gridnn/sampling.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gridnn;

namespace {

constexpr const char* kVersion = "gridnn 0.1.0";
constexpr double kPi = 3.14159265358979323846;

/// JSON config files with flag overrides (flags win, CLI11 semantics).
class ConfigJson : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j;
    for (const CLI::Option* opt : app->get_options({})) {
      if (!opt->get_lnames().empty() && opt->get_configurable()) {
        std::string name = opt->get_lnames()[0];
        if (opt->get_type_size() != 0) {
          if (opt->count() == 1) j[name] = opt->results().at(0);
          else if (opt->count() > 1) j[name] = opt->results();
          else if (default_also && !opt->get_default_str().empty())
            j[name] = opt->get_default_str();
        } else if (opt->count() > 0) {
          j[name] = true;
        }
      }
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    input >> j;
    return walk(j, "", {});
  }

 private:
  std::vector<CLI::ConfigItem> walk(const json& j, const std::string& name,
                                    std::vector<std::string> prefix) const {
    std::vector<CLI::ConfigItem> results;
    if (j.is_object()) {
      if (!name.empty()) prefix.push_back(name);
      for (auto it = j.begin(); it != j.end(); ++it) {
        auto sub = walk(it.value(), it.key(), prefix);
        results.insert(results.end(), sub.begin(), sub.end());
      }
    } else if (!name.empty()) {
      results.emplace_back();
      CLI::ConfigItem& item = results.back();
      item.name = name;
      item.parents = std::move(prefix);
      if (j.is_boolean()) {
        item.inputs = {j.get<bool>() ? "true" : "false"};
      } else if (j.is_string()) {
        item.inputs = {j.get<std::string>()};
      } else if (j.is_number()) {
        std::ostringstream ss;
        ss.precision(17);
        ss << j.get<double>();
        item.inputs = {ss.str()};
      } else {
        throw CLI::ConversionError("unsupported JSON config value for " + name);
      }
    }
    return results;
  }
};

struct Manifest {
  std::string command;
  json config = json::object();
  std::map<std::string, std::string> inputs;  // path -> digest
  json extra = json::object();

  void input(const std::string& path) {
    std::string bytes = read_text_file(path);
    inputs[path] = hex_digest(Fnv64().bytes(bytes.data(), bytes.size()).value());
  }

  void write(const fs::path& out_dir) const {
    json doc;
    doc["command"] = command;
    doc["config"] = config;
    doc["inputs"] = inputs;
    doc["version"] = kVersion;
    if (!extra.empty()) doc["results"] = extra;
    write_text_file((out_dir / "manifest.json").string(), doc.dump(2) + "\n");
  }
};

fs::path ensure_out(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

ParseResult load_case_file(const std::string& path, Manifest* manifest = nullptr) {
  if (manifest) manifest->input(path);
  ParseResult result = parse_case(read_text_file(path), format_from_path(path));
  print_warnings(result.warnings);
  return result;
}

PFState anchor_state(const ParseResult& cr, const std::string& mode) {
  if (mode == "flat" || !cr.anchor) {
    PFState flat;
    flat.v = Eigen::VectorXd::Ones(cr.net.n_buses());
    flat.theta = Eigen::VectorXd::Zero(cr.net.n_buses());
    if (mode == "stored" && !cr.anchor)
      std::cerr << "warning: case has no stored solution; using flat anchor\n";
    return flat;
  }
  return *cr.anchor;
}

json solution_json(const MILPModel& model, const MILPSolution& sol) {
  json doc;
  switch (sol.status) {
    case MILPStatus::optimal: doc["status"] = "optimal"; break;
    case MILPStatus::feasible: doc["status"] = "feasible"; break;
    case MILPStatus::infeasible: doc["status"] = "infeasible"; break;
    case MILPStatus::limit: doc["status"] = "limit"; break;
  }
  doc["node_count"] = sol.node_count;
  if (sol.values.size() > 0) {
    doc["objective"] = sol.objective;
    doc["bound"] = sol.bound;
    doc["gap"] = sol.gap;
    json values = json::object();
    for (int v = 0; v < model.num_variables(); ++v)
      values[model.variables[v].name] = sol.values[v];
    doc["values"] = values;
  }
  return doc;
}

json box_json(const BoxStats& box) {
  return {{"median", box.median}, {"q1", box.q1},          {"q3", box.q3},
          {"whisker_lo", box.whisker_lo}, {"whisker_hi", box.whisker_hi},
          {"mean", box.mean},     {"max", box.max}};
}

std::vector<int> parse_index_list(const std::string& csv) {
  std::vector<int> out;
  std::istringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok) - 1);  // 1-based on the CLI
  return out;
}

// --- subcommand payloads ----------------------------------------------------

struct CaseConvertArgs {
  std::string in, format = "auto", out;
};

int run_case_convert(const CaseConvertArgs& args) {
  Manifest manifest;
  manifest.command = "case convert";
  manifest.config = {{"in", args.in}, {"format", args.format}};
  manifest.input(args.in);

  CaseFormat fmt = args.format == "json"       ? CaseFormat::native_json
                   : args.format == "matpower" ? CaseFormat::matpower_subset
                                               : format_from_path(args.in);
  ParseResult result = parse_case(read_text_file(args.in), fmt);
  print_warnings(result.warnings);

  fs::path out = ensure_out(args.out);
  write_text_file((out / "case.json").string(), to_native_json(result.net, result.anchor));
  manifest.extra["warnings"] = result.warnings;
  manifest.extra["n_buses"] = result.net.n_buses();
  manifest.extra["n_branches"] = result.net.n_branches();
  manifest.extra["net_hash"] = hex_digest(result.net.digest());
  manifest.write(out);
  std::cout << "wrote " << (out / "case.json").string() << "\n";
  return 0;
}

struct DataGenArgs {
  std::string case_path, anchor = "stored", out;
  int count = 10000;
  double v_lo = 0.94, v_hi = 1.06, theta_width = kPi / 6;
  std::uint64_t seed = 0;
  bool csv = false;
};

int run_data_gen(const DataGenArgs& args) {
  Manifest manifest;
  manifest.command = "data gen";
  manifest.config = {{"case", args.case_path}, {"count", args.count},
                     {"v_lo", args.v_lo},      {"v_hi", args.v_hi},
                     {"theta_width", args.theta_width}, {"seed", args.seed},
                     {"anchor", args.anchor}};
  ParseResult cr = load_case_file(args.case_path, &manifest);

  SampleRanges ranges;
  ranges.v_lo = args.v_lo;
  ranges.v_hi = args.v_hi;
  ranges.theta_half_width = args.theta_width;
  ranges.seed = args.seed;
  Dataset ds = generate_dataset(cr.net, anchor_state(cr, args.anchor), ranges, args.count);

  fs::path out = ensure_out(args.out);
  save_dataset(ds, (out / "dataset.bin").string());
  if (args.csv)
    export_dataset_csv(ds, (out / "dataset.csv").string(),
                       (out / "dataset_schema.json").string());
  manifest.extra["samples"] = ds.size();
  manifest.extra["net_hash"] = hex_digest(ds.net_hash);
  manifest.write(out);
  std::cout << "wrote " << (out / "dataset.bin").string() << " (" << ds.size()
            << " samples)\n";
  return 0;
}

struct DataSplitArgs {
  std::string data, out;
  double fraction = 0.9;
  std::uint64_t seed = 0;
};

int run_data_split(const DataSplitArgs& args) {
  Manifest manifest;
  manifest.command = "data split";
  manifest.config = {{"data", args.data}, {"fraction", args.fraction}, {"seed", args.seed}};
  manifest.input(args.data);

  Dataset ds = load_dataset(args.data);
  auto [train_set, test_set] = split(ds, args.fraction, args.seed);
  fs::path out = ensure_out(args.out);
  save_dataset(train_set, (out / "train.bin").string());
  save_dataset(test_set, (out / "test.bin").string());
  manifest.extra["train"] = train_set.size();
  manifest.extra["test"] = test_set.size();
  manifest.write(out);
  std::cout << "split " << ds.size() << " -> " << train_set.size() << " train, "
            << test_set.size() << " test\n";
  return 0;
}

struct PartitionArgs {
  std::string case_path, out;
  int areas = 0, features = 0, neurons = 0, restarts = 8;
  std::uint64_t seed = 0;
  bool uniform_neurons = false, unit_weights = false, normalize_rows = false;
};

int run_partition(const PartitionArgs& args) {
  Manifest manifest;
  manifest.command = "partition";
  ParseResult cr = load_case_file(args.case_path, &manifest);
  const Network& net = cr.net;

  int areas = args.areas > 0 ? args.areas : std::max(1, net.n_buses() / 25);
  int features = args.features > 0
                     ? args.features
                     : std::max(1, static_cast<int>(std::ceil(std::log2(areas))));
  int neurons = args.neurons > 0 ? args.neurons
                                 : hidden_size(net.n_buses(), net.n_branches());
  manifest.config = {{"case", args.case_path}, {"areas", areas},
                     {"features", features},   {"neurons", neurons},
                     {"seed", args.seed},      {"restarts", args.restarts},
                     {"uniform_neurons", args.uniform_neurons},
                     {"unit_weights", args.unit_weights},
                     {"normalize_rows", args.normalize_rows}};

  PartitionOptions options;
  options.weighting = args.unit_weights ? LaplacianWeighting::unit
                                        : LaplacianWeighting::electrical;
  options.allocation = args.uniform_neurons ? NeuronAllocation::uniform
                                            : NeuronAllocation::size_weighted;
  options.normalize_rows = args.normalize_rows;
  options.restarts = args.restarts;
  Partition p = build_partition(net, areas, features, args.seed, neurons, options);

  fs::path out = ensure_out(args.out);
  write_text_file((out / "partition.json").string(), partition_to_json(p));
  manifest.extra["tie_lines"] = static_cast<int>(p.tie_lines.size());
  manifest.extra["cut_weight"] = cut_weight(net, p.area_of_bus, options.weighting);
  manifest.write(out);
  std::cout << "partitioned into " << areas << " areas (" << p.tie_lines.size()
            << " tie-lines)\n";
  return 0;
}

struct TrainArgs {
  std::string variant;  // full | sparse | decoupled | direct
  std::string case_path, data, partition_path, anchor = "stored", out;
  int k = 0, epochs = 5000, batch = 256;
  double lr = 2.5e-3, lambda = 10.0;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& args) {
  Manifest manifest;
  manifest.command = "train " + args.variant;
  ParseResult cr = load_case_file(args.case_path, &manifest);
  manifest.input(args.data);
  const Network& net = cr.net;
  Dataset ds = load_dataset(args.data);

  int k = args.k > 0 ? args.k : hidden_size(net.n_buses(), net.n_branches());
  manifest.config = {{"case", args.case_path}, {"data", args.data},
                     {"variant", args.variant}, {"k", k},
                     {"epochs", args.epochs},   {"lr", args.lr},
                     {"lambda", args.lambda},   {"batch", args.batch},
                     {"seed", args.seed},       {"anchor", args.anchor}};
  if (!args.partition_path.empty()) {
    manifest.input(args.partition_path);
    manifest.config["partition"] = args.partition_path;
  }

  TrainConfig cfg;
  cfg.epochs = args.epochs;
  cfg.learning_rate = args.lr;
  cfg.lambda = args.lambda;
  cfg.batch_size = args.batch;
  cfg.seed = args.seed;

  Linearization lin = jacobian(net, build_input(net, anchor_state(cr, args.anchor)));
  fs::path out = ensure_out(args.out);
  std::vector<double> history;

  if (args.variant == "direct") {
    TrainResult result;
    DirectNNModel m = train_direct(net, ds, lin.x_check, k, cfg, &result);
    write_text_file((out / "checkpoint.json").string(), direct_to_json(m));
    history = result.loss_history;
  } else if (args.variant == "full") {
    GenNNModel m = make_gennn(net, lin, k);
    TrainResult result = train(m, training_data(net, ds), cfg);
    write_text_file((out / "checkpoint.json").string(), gennn_to_json(m));
    history = result.loss_history;
  } else {
    if (args.partition_path.empty())
      throw std::runtime_error("train " + args.variant + " requires --partition");
    Partition p = partition_from_json(read_text_file(args.partition_path));
    int k_partition = 0;
    for (int kk : p.neurons_per_area) k_partition += kk;
    if (args.k > 0 && args.k != k_partition)
      throw std::runtime_error("--k disagrees with the partition's neuron total");
    if (args.variant == "sparse") {
      SparsityMasks masks = sparsity_masks(p, net);
      GenNNModel m = make_gennn(net, lin, k_partition, masks);
      TrainResult result = train(m, training_data(net, ds), cfg);
      write_text_file((out / "checkpoint.json").string(), gennn_to_json(m));
      history = result.loss_history;
    } else if (args.variant == "decoupled") {
      DecoupledResult dec = train_decoupled(p, net, ds, lin, cfg);
      for (const TrainResult& r : dec.per_area) print_warnings(r.warnings);
      write_text_file((out / "checkpoint.json").string(), gennn_to_json(dec.model));
      // Epoch-wise sum of the per-area losses.
      history.assign(args.epochs, 0.0);
      for (const TrainResult& r : dec.per_area)
        for (std::size_t e = 0; e < r.loss_history.size(); ++e)
          history[e] += r.loss_history[e];
    } else {
      throw std::runtime_error("unknown train variant: " + args.variant);
    }
  }

  std::ostringstream csv;
  csv.precision(17);
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < history.size(); ++e) csv << e + 1 << "," << history[e] << "\n";
  write_text_file((out / "loss_history.csv").string(), csv.str());
  if (!history.empty()) manifest.extra["final_loss"] = history.back();
  manifest.write(out);
  std::cout << "trained " << args.variant << " model (K=" << k << ") -> "
            << (out / "checkpoint.json").string() << "\n";
  return 0;
}

struct EncodeArgs {
  std::string problem;  // opf | ots | rop
  std::string case_path, checkpoint, out, damaged;
  double theta_bound = kPi / 6, alpha = 0.0, eta = 1.0;
  int horizon = 1;
  bool no_prune = false;
};

int run_encode(const EncodeArgs& args) {
  Manifest manifest;
  manifest.command = "encode " + args.problem;
  ParseResult cr = load_case_file(args.case_path, &manifest);
  manifest.input(args.checkpoint);
  const Network& net = cr.net;
  GenNNModel gennn = gennn_from_json(read_text_file(args.checkpoint), net);

  manifest.config = {{"case", args.case_path},   {"checkpoint", args.checkpoint},
                     {"problem", args.problem},  {"theta_bound", args.theta_bound},
                     {"alpha", args.alpha},      {"eta", args.eta},
                     {"horizon", args.horizon},  {"damaged", args.damaged},
                     {"no_prune", args.no_prune}};

  EncodeOptions options;
  options.theta_bound = args.theta_bound;
  options.use_pruning = !args.no_prune;
  InputBox box = input_box(net, gennn.x_check, args.theta_bound);

  MILPModel model;
  if (args.problem == "opf") {
    model = build_opf(net, gennn, box, options);
  } else if (args.problem == "ots") {
    model = build_ots(net, gennn, box, args.alpha, options);
  } else if (args.problem == "rop") {
    RopConfig rop;
    rop.eta = args.eta;
    rop.horizon = args.horizon;
    rop.damaged = parse_index_list(args.damaged);
    model = build_rop(net, gennn, box, rop, options);
  } else {
    throw std::runtime_error("unknown encode problem: " + args.problem);
  }

  ReluBounds rb = relu_bounds(gennn.w1, box);
  PruneSets prune = options.use_pruning ? prune_sets(gennn.w1, gennn.bias, rb)
                                        : PruneSets{};
  fs::path out = ensure_out(args.out);
  write_text_file((out / "model.mps").string(), export_mps(model));
  write_text_file((out / "model_names.json").string(), mps_name_map(model));
  manifest.extra["variables"] = model.num_variables();
  manifest.extra["constraints"] = model.num_constraints();
  manifest.extra["binaries"] = model.num_binaries();
  manifest.extra["pruned_inactive"] = static_cast<int>(prune.k0.size());
  manifest.extra["pruned_active"] = static_cast<int>(prune.k1.size());
  manifest.write(out);
  std::cout << "encoded " << args.problem << ": " << model.num_variables()
            << " vars, " << model.num_constraints() << " rows, "
            << model.num_binaries() << " binaries\n";
  return 0;
}

struct SolveArgs {
  std::string engine;  // embedded | external
  std::string mps, names, command, workdir, out;
  long max_nodes = 200000;
  double max_seconds = 900.0, gap = 0.0;
};

int run_solve(const SolveArgs& args) {
  Manifest manifest;
  manifest.command = "solve " + args.engine;
  manifest.config = {{"mps", args.mps},       {"names", args.names},
                     {"max_nodes", args.max_nodes}, {"max_seconds", args.max_seconds},
                     {"gap", args.gap}};
  manifest.input(args.mps);
  if (!args.names.empty()) manifest.input(args.names);

  std::string names_text = args.names.empty() ? "" : read_text_file(args.names);
  MILPModel model = parse_mps(read_text_file(args.mps), names_text);

  MILPSolution sol;
  if (args.engine == "embedded") {
    SolveLimits limits;
    limits.max_nodes = args.max_nodes;
    limits.max_seconds = args.max_seconds;
    limits.target_gap = args.gap;
    sol = solve_milp(model, limits);
  } else if (args.engine == "external") {
    if (args.command.empty())
      throw std::runtime_error("solve external requires --command");
    manifest.config["command"] = args.command;
    std::string workdir = args.workdir.empty() ? args.out : args.workdir;
    ensure_out(workdir);
    sol = solve_external(model, args.command, workdir);
  } else {
    throw std::runtime_error("unknown solve engine: " + args.engine);
  }

  fs::path out = ensure_out(args.out);
  write_text_file((out / "solution.json").string(), solution_json(model, sol).dump(2) + "\n");
  manifest.write(out);
  std::cerr << "solve: " << sol.node_count << " nodes, " << sol.wall_seconds << " s\n";
  std::cout << "status " << solution_json(model, sol)["status"].get<std::string>();
  if (sol.values.size() > 0) std::cout << ", objective " << sol.objective;
  std::cout << "\n";
  return sol.status == MILPStatus::optimal || sol.status == MILPStatus::feasible ? 0 : 1;
}

struct EvalPfArgs {
  std::string case_path, checkpoint, data, out;
};

int run_eval_pf(const EvalPfArgs& args) {
  Manifest manifest;
  manifest.command = "eval pf-error";
  manifest.config = {{"case", args.case_path}, {"checkpoint", args.checkpoint},
                     {"data", args.data}};
  ParseResult cr = load_case_file(args.case_path, &manifest);
  manifest.input(args.checkpoint);
  manifest.input(args.data);
  const Network& net = cr.net;
  Dataset test = load_dataset(args.data);

  std::string checkpoint_text = read_text_file(args.checkpoint);
  json checkpoint_doc = json::parse(checkpoint_text);
  std::string kind = checkpoint_doc.value("kind", "gennn");

  Predictor predict;
  GenNNModel gennn;
  DirectNNModel direct;
  double consistency = 0.0;
  if (kind == "direct") {
    direct = direct_from_json(checkpoint_text);
    if (direct.net_hash != net.digest())
      throw std::runtime_error("checkpoint was trained on a different network");
    predict = make_predictor(direct, 4 * net.n_branches());
    // The baseline has no structural tie; report its inconsistency.
    Eigen::SparseMatrix<double> psi =
        assemble_injection_map(net, Eigen::VectorXd::Ones(net.n_branches()));
    for (int s = 0; s < test.size(); ++s) {
      auto [z_pf, z_inj] = predict(build_input(net, test.state(s)));
      consistency = std::max(consistency,
                             (z_inj - psi * z_pf).lpNorm<Eigen::Infinity>());
    }
  } else {
    gennn = gennn_from_json(checkpoint_text, net);
    predict = make_predictor(gennn);
    Eigen::SparseMatrix<double> psi =
        assemble_injection_map(net, Eigen::VectorXd::Ones(net.n_branches()));
    for (int s = 0; s < test.size(); ++s) {
      auto [z_pf, z_inj] = predict(build_input(net, test.state(s)));
      consistency = std::max(consistency,
                             (z_inj - psi * z_pf).lpNorm<Eigen::Infinity>());
    }
  }

  ErrorStats flows = flow_error_stats(predict, net, test);
  ErrorStats rmse = injection_rmse(predict, net, test);
  print_warnings(flows.warnings);

  json report;
  report["model_kind"] = kind;
  report["samples"] = test.size();
  report["avg_flow_error_pct"] = box_json(flows.avg_flow_box);
  report["max_flow_error_pct"] = box_json(flows.max_flow_box);
  report["injection_rmse"] = box_json(rmse.rmse_box);
  report["consistency_residual_inf"] = consistency;

  fs::path out = ensure_out(args.out);
  write_text_file((out / "report.json").string(), report.dump(2) + "\n");
  std::ostringstream csv;
  csv.precision(17);
  csv << "sample,avg_flow_error_pct,max_flow_error_pct,injection_rmse\n";
  for (int s = 0; s < test.size(); ++s)
    csv << s << "," << flows.avg_flow_pct[s] << "," << flows.max_flow_pct[s] << ","
        << rmse.injection_rmse[s] << "\n";
  write_text_file((out / "report.csv").string(), csv.str());
  manifest.extra["mean_avg_flow_error_pct"] = flows.avg_flow_box.mean;
  manifest.extra["mean_injection_rmse"] = rmse.rmse_box.mean;
  manifest.write(out);
  std::cout << "pf-error: mean avg flow error " << flows.avg_flow_box.mean
            << "%, mean injection RMSE " << rmse.rmse_box.mean << "\n";
  return 0;
}

struct EvalTopologyArgs {
  std::string case_path, checkpoint, out;
  double alpha = 1.0, lo_pct = 50.0, hi_pct = 200.0, theta_bound = kPi / 6;
  int scenarios = 10;
  std::uint64_t seed = 0;
  bool newton_probe = false;
};

int run_eval_topology(const EvalTopologyArgs& args) {
  Manifest manifest;
  manifest.command = "eval topology";
  manifest.config = {{"case", args.case_path}, {"checkpoint", args.checkpoint},
                     {"alpha", args.alpha},    {"scenarios", args.scenarios},
                     {"lo_pct", args.lo_pct},  {"hi_pct", args.hi_pct},
                     {"seed", args.seed},      {"newton_probe", args.newton_probe}};
  ParseResult cr = load_case_file(args.case_path, &manifest);
  manifest.input(args.checkpoint);
  const Network& net = cr.net;
  GenNNModel gennn = gennn_from_json(read_text_file(args.checkpoint), net);

  Eigen::VectorXd nominal_p(net.n_buses()), nominal_q(net.n_buses());
  for (int i = 0; i < net.n_buses(); ++i) {
    nominal_p[i] = net.buses[i].p_demand;
    nominal_q[i] = net.buses[i].q_demand;
  }
  auto scenarios = demand_scenarios(net, args.lo_pct, args.hi_pct, args.scenarios,
                                    args.seed);

  TopoEvalOptions options;
  options.theta_bound = args.theta_bound;
  options.newton_probe = args.newton_probe;

  json rows = json::array();
  std::ostringstream csv;
  csv.precision(17);
  csv << "scenario,cost_percent,solver_failure,violations,exact_residual,switched_out\n";
  int failures = 0, improved = 0;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    Network scaled = net.with_demands(nominal_p.cwiseProduct(scenarios[s]),
                                      nominal_q.cwiseProduct(scenarios[s]));
    InputBox box = input_box(scaled, gennn.x_check, args.theta_bound);
    EncodeOptions encode_options;
    encode_options.theta_bound = args.theta_bound;
    MILPModel ots = build_ots(scaled, gennn, box, args.alpha, encode_options);
    MILPSolution ots_sol = solve_milp(ots, options.limits);

    json row;
    row["scenario"] = s;
    if (ots_sol.status != MILPStatus::optimal) {
      ++failures;
      row["solver_failure"] = true;
      rows.push_back(row);
      csv << s << ",,true,,,\n";
      continue;
    }
    Eigen::VectorXd eps(net.n_branches());
    int switched_out = 0;
    for (int k = 0; k < net.n_branches(); ++k) {
      int var = ots.var_index(ots_eps_name(k));
      eps[k] = var >= 0 ? std::round(ots_sol.values[var]) : net.branches[k].status;
      if (eps[k] == 0.0) ++switched_out;
    }
    TopoEvalReport report = evaluate_topology(scaled, gennn, eps, options);
    if (report.solver_failure) ++failures;
    if (!report.solver_failure && report.cost_percent < 100.0 - 1e-6) ++improved;
    row["cost_percent"] = report.cost_percent;
    row["solver_failure"] = report.solver_failure;
    row["violations"] = static_cast<int>(report.violations.size());
    row["exact_residual"] = report.exact_residual;
    row["switched_out"] = switched_out;
    rows.push_back(row);
    csv << s << "," << report.cost_percent << ","
        << (report.solver_failure ? "true" : "false") << ","
        << report.violations.size() << "," << report.exact_residual << ","
        << switched_out << "\n";
  }

  json report;
  report["protocol"] = "pwl-opf-fixed-topology";  // substitute for an AC-OPF re-run
  report["alpha"] = args.alpha;
  report["scenarios"] = rows;
  report["failures"] = failures;
  report["improved_scenarios"] = improved;

  fs::path out = ensure_out(args.out);
  write_text_file((out / "report.json").string(), report.dump(2) + "\n");
  write_text_file((out / "report.csv").string(), csv.str());
  manifest.extra["failures"] = failures;
  manifest.extra["improved_scenarios"] = improved;
  manifest.write(out);
  std::cout << "topology eval: " << scenarios.size() << " scenarios, " << failures
            << " failures, " << improved << " improved\n";
  return 0;
}

struct EvalRopArgs {
  std::string case_path, checkpoint, out, damaged;
  double eta = 1.0, lo_pct = 100.0, hi_pct = 100.0, theta_bound = kPi / 6;
  int horizon = 1, scenarios = 1;
  std::uint64_t seed = 0;
};

int run_eval_rop(const EvalRopArgs& args) {
  Manifest manifest;
  manifest.command = "eval rop";
  manifest.config = {{"case", args.case_path}, {"checkpoint", args.checkpoint},
                     {"eta", args.eta},        {"horizon", args.horizon},
                     {"damaged", args.damaged}, {"scenarios", args.scenarios},
                     {"lo_pct", args.lo_pct},  {"hi_pct", args.hi_pct},
                     {"seed", args.seed}};
  ParseResult cr = load_case_file(args.case_path, &manifest);
  manifest.input(args.checkpoint);
  const Network& net = cr.net;
  GenNNModel gennn = gennn_from_json(read_text_file(args.checkpoint), net);

  RopConfig rop;
  rop.eta = args.eta;
  rop.horizon = args.horizon;
  rop.damaged = parse_index_list(args.damaged);

  // Damage-affected buses: demand buses incident to a damaged line.
  std::vector<int> affected;
  for (int k : rop.damaged) {
    for (int bus : {net.from_index(k), net.to_index(k)}) {
      if (net.buses[bus].p_demand > 0.0 &&
          std::find(affected.begin(), affected.end(), bus) == affected.end())
        affected.push_back(bus);
    }
  }
  std::sort(affected.begin(), affected.end());

  Eigen::VectorXd nominal_p(net.n_buses()), nominal_q(net.n_buses());
  for (int i = 0; i < net.n_buses(); ++i) {
    nominal_p[i] = net.buses[i].p_demand;
    nominal_q[i] = net.buses[i].q_demand;
  }
  auto scenarios = demand_scenarios(net, args.lo_pct, args.hi_pct, args.scenarios,
                                    args.seed);

  json rows = json::array();
  std::ostringstream csv;
  csv.precision(17);
  csv << "scenario,energy_not_served_pct,solver_failure\n";
  int failures = 0;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    Network scaled = net.with_demands(nominal_p.cwiseProduct(scenarios[s]),
                                      nominal_q.cwiseProduct(scenarios[s]));
    InputBox box = input_box(scaled, gennn.x_check, args.theta_bound);
    EncodeOptions encode_options;
    encode_options.theta_bound = args.theta_bound;
    MILPModel model = build_rop(scaled, gennn, box, rop, encode_options);
    MILPSolution sol = solve_milp(model);

    json row;
    row["scenario"] = s;
    if (sol.status != MILPStatus::optimal && sol.status != MILPStatus::feasible) {
      ++failures;
      row["solver_failure"] = true;
      rows.push_back(row);
      csv << s << ",,true\n";
      continue;
    }
    Eigen::MatrixXd shed = Eigen::MatrixXd::Ones(net.n_buses(), rop.horizon);
    for (int t = 1; t <= rop.horizon; ++t)
      for (int i = 0; i < net.n_buses(); ++i) {
        int var = model.var_index(rop_shed_name(i + 1, t));
        if (var >= 0) shed(i, t - 1) = sol.values[var];
      }
    Eigen::VectorXd scenario_demand = nominal_p.cwiseProduct(scenarios[s]);
    std::vector<std::string> warnings;
    double ens = energy_not_served(shed, affected, scenario_demand, rop.horizon,
                                   &warnings);
    print_warnings(warnings);
    row["energy_not_served_pct"] = ens;
    row["solver_failure"] = false;
    rows.push_back(row);
    csv << s << "," << ens << ",false\n";
  }

  json report;
  report["protocol"] = "pwl-rop";
  report["eta"] = args.eta;
  report["horizon"] = args.horizon;
  report["affected_buses"] = affected;
  report["scenarios"] = rows;
  report["failures"] = failures;

  fs::path out = ensure_out(args.out);
  write_text_file((out / "report.json").string(), report.dump(2) + "\n");
  write_text_file((out / "report.csv").string(), csv.str());
  manifest.extra["failures"] = failures;
  manifest.write(out);
  std::cout << "rop eval: " << scenarios.size() << " scenarios, " << failures
            << " failures\n";
  return 0;
}

struct ReportArgs {
  std::vector<std::string> in;
  std::string out;
};

int run_report(const ReportArgs& args) {
  Manifest manifest;
  manifest.command = "report";
  json merged = json::array();
  std::ostringstream csv;
  csv << "source,kind,summary\n";
  for (const std::string& dir : args.in) {
    fs::path report_path = fs::path(dir) / "report.json";
    if (!fs::exists(report_path)) {
      std::cerr << "warning: no report.json under " << dir << "\n";
      continue;
    }
    manifest.input(report_path.string());
    json doc = json::parse(read_text_file(report_path.string()));
    json entry;
    entry["source"] = dir;
    entry["report"] = doc;
    merged.push_back(entry);
    std::string kind = doc.contains("model_kind")  ? "pf-error"
                       : doc.contains("alpha")     ? "topology"
                       : doc.contains("horizon")   ? "rop"
                                                   : "unknown";
    std::string summary;
    if (kind == "pf-error")
      summary = "mean_avg_flow_pct=" +
                std::to_string(doc["avg_flow_error_pct"]["mean"].get<double>());
    else if (kind == "topology")
      summary = "improved=" + std::to_string(doc["improved_scenarios"].get<int>());
    else if (kind == "rop")
      summary = "failures=" + std::to_string(doc["failures"].get<int>());
    csv << dir << "," << kind << "," << summary << "\n";
  }
  manifest.config = {{"in", args.in}};
  fs::path out = ensure_out(args.out);
  write_text_file((out / "summary.json").string(), merged.dump(2) + "\n");
  write_text_file((out / "summary.csv").string(), csv.str());
  manifest.write(out);
  std::cout << "merged " << merged.size() << " reports\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Piecewise-linear power-flow surrogates and grid topology optimization"};
  app.config_formatter(std::make_shared<ConfigJson>());
  app.set_config("--config", "", "JSON config file (flags win)");
  app.require_subcommand(1);

  // case
  auto* case_cmd = app.add_subcommand("case", "Case file tools");
  case_cmd->require_subcommand(1);
  CaseConvertArgs case_args;
  auto* convert = case_cmd->add_subcommand("convert", "Convert a case to native JSON");
  convert->add_option("--in", case_args.in, "Input case file")->required();
  convert->add_option("--format", case_args.format, "auto|json|matpower");
  convert->add_option("--out", case_args.out, "Output directory")->required();

  // data
  auto* data_cmd = app.add_subcommand("data", "Dataset tools");
  data_cmd->require_subcommand(1);
  DataGenArgs gen_args;
  auto* gen = data_cmd->add_subcommand("gen", "Sample a training dataset");
  gen->add_option("--case", gen_args.case_path)->required();
  gen->add_option("--count", gen_args.count);
  gen->add_option("--v-lo", gen_args.v_lo);
  gen->add_option("--v-hi", gen_args.v_hi);
  gen->add_option("--theta-width", gen_args.theta_width);
  gen->add_option("--seed", gen_args.seed)->required();
  gen->add_option("--anchor", gen_args.anchor, "stored|flat");
  gen->add_flag("--csv", gen_args.csv, "Also export CSV");
  gen->add_option("--out", gen_args.out)->required();

  DataSplitArgs split_args;
  auto* split_cmd = data_cmd->add_subcommand("split", "Train/test split");
  split_cmd->add_option("--data", split_args.data)->required();
  split_cmd->add_option("--fraction", split_args.fraction);
  split_cmd->add_option("--seed", split_args.seed)->required();
  split_cmd->add_option("--out", split_args.out)->required();

  // partition
  PartitionArgs part_args;
  auto* part_cmd = app.add_subcommand("partition", "Spectral area partitioning");
  part_cmd->add_option("--case", part_args.case_path)->required();
  part_cmd->add_option("--areas", part_args.areas);
  part_cmd->add_option("--features", part_args.features);
  part_cmd->add_option("--neurons", part_args.neurons);
  part_cmd->add_option("--restarts", part_args.restarts);
  part_cmd->add_option("--seed", part_args.seed)->required();
  part_cmd->add_flag("--uniform-neurons", part_args.uniform_neurons);
  part_cmd->add_flag("--unit-weights", part_args.unit_weights);
  part_cmd->add_flag("--normalize-rows", part_args.normalize_rows);
  part_cmd->add_option("--out", part_args.out)->required();

  // train
  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a surrogate");
  train_cmd->add_option("variant", train_args.variant, "full|sparse|decoupled|direct")
      ->required();
  train_cmd->add_option("--case", train_args.case_path)->required();
  train_cmd->add_option("--data", train_args.data)->required();
  train_cmd->add_option("--partition", train_args.partition_path);
  train_cmd->add_option("--k", train_args.k);
  train_cmd->add_option("--epochs", train_args.epochs);
  train_cmd->add_option("--lr", train_args.lr);
  train_cmd->add_option("--lambda", train_args.lambda);
  train_cmd->add_option("--batch", train_args.batch);
  train_cmd->add_option("--seed", train_args.seed)->required();
  train_cmd->add_option("--anchor", train_args.anchor, "stored|flat");
  train_cmd->add_option("--out", train_args.out)->required();

  // encode
  EncodeArgs encode_args;
  auto* encode_cmd = app.add_subcommand("encode", "Compile a MILP");
  encode_cmd->add_option("problem", encode_args.problem, "opf|ots|rop")->required();
  encode_cmd->add_option("--case", encode_args.case_path)->required();
  encode_cmd->add_option("--checkpoint", encode_args.checkpoint)->required();
  encode_cmd->add_option("--theta-bound", encode_args.theta_bound);
  encode_cmd->add_option("--alpha", encode_args.alpha);
  encode_cmd->add_option("--eta", encode_args.eta);
  encode_cmd->add_option("--horizon", encode_args.horizon);
  encode_cmd->add_option("--damaged", encode_args.damaged,
                         "Comma-separated 1-based branch ids");
  encode_cmd->add_flag("--no-prune", encode_args.no_prune);
  encode_cmd->add_option("--out", encode_args.out)->required();

  // solve
  SolveArgs solve_args;
  auto* solve_cmd = app.add_subcommand("solve", "Solve an encoded MILP");
  solve_cmd->add_option("engine", solve_args.engine, "embedded|external")->required();
  solve_cmd->add_option("--mps", solve_args.mps)->required();
  solve_cmd->add_option("--names", solve_args.names);
  solve_cmd->add_option("--max-nodes", solve_args.max_nodes);
  solve_cmd->add_option("--max-seconds", solve_args.max_seconds);
  solve_cmd->add_option("--gap", solve_args.gap);
  solve_cmd->add_option("--command", solve_args.command,
                        "External command with {mps} and {sol} placeholders");
  solve_cmd->add_option("--workdir", solve_args.workdir);
  solve_cmd->add_option("--out", solve_args.out)->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluation suites");
  eval_cmd->require_subcommand(1);
  EvalPfArgs pf_args;
  auto* pf_cmd = eval_cmd->add_subcommand("pf-error", "Approximation error statistics");
  pf_cmd->add_option("--case", pf_args.case_path)->required();
  pf_cmd->add_option("--checkpoint", pf_args.checkpoint)->required();
  pf_cmd->add_option("--data", pf_args.data)->required();
  pf_cmd->add_option("--out", pf_args.out)->required();

  EvalTopologyArgs topo_args;
  auto* topo_cmd = eval_cmd->add_subcommand("topology", "OTS topology scoring");
  topo_cmd->add_option("--case", topo_args.case_path)->required();
  topo_cmd->add_option("--checkpoint", topo_args.checkpoint)->required();
  topo_cmd->add_option("--alpha", topo_args.alpha);
  topo_cmd->add_option("--scenarios", topo_args.scenarios);
  topo_cmd->add_option("--lo-pct", topo_args.lo_pct);
  topo_cmd->add_option("--hi-pct", topo_args.hi_pct);
  topo_cmd->add_option("--seed", topo_args.seed)->required();
  topo_cmd->add_flag("--newton-probe", topo_args.newton_probe);
  topo_cmd->add_option("--out", topo_args.out)->required();

  EvalRopArgs rop_args;
  auto* rop_cmd = eval_cmd->add_subcommand("rop", "Restoration ordering scoring");
  rop_cmd->add_option("--case", rop_args.case_path)->required();
  rop_cmd->add_option("--checkpoint", rop_args.checkpoint)->required();
  rop_cmd->add_option("--eta", rop_args.eta);
  rop_cmd->add_option("--horizon", rop_args.horizon);
  rop_cmd->add_option("--damaged", rop_args.damaged)->required();
  rop_cmd->add_option("--scenarios", rop_args.scenarios);
  rop_cmd->add_option("--lo-pct", rop_args.lo_pct);
  rop_cmd->add_option("--hi-pct", rop_args.hi_pct);
  rop_cmd->add_option("--seed", rop_args.seed)->required();
  rop_cmd->add_option("--out", rop_args.out)->required();

  // report
  ReportArgs report_args;
  auto* report_cmd = app.add_subcommand("report", "Merge evaluation reports");
  report_cmd->add_option("--in", report_args.in, "Report directories")->required();
  report_cmd->add_option("--out", report_args.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (convert->parsed()) return run_case_convert(case_args);
    if (gen->parsed()) return run_data_gen(gen_args);
    if (split_cmd->parsed()) return run_data_split(split_args);
    if (part_cmd->parsed()) return run_partition(part_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (encode_cmd->parsed()) return run_encode(encode_args);
    if (solve_cmd->parsed()) return run_solve(solve_args);
    if (pf_cmd->parsed()) return run_eval_pf(pf_args);
    if (topo_cmd->parsed()) return run_eval_topology(topo_args);
    if (rop_cmd->parsed()) return run_eval_rop(rop_args);
    if (report_cmd->parsed()) return run_report(report_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 2;
}
