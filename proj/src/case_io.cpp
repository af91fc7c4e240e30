#include "gridnn/case_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gridnn {

namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

Network network_from_json(const json& doc, std::vector<std::string>& warnings,
                          std::optional<PFState>& anchor) {
  Network net;
  net.base_mva = doc.value("base_mva", 100.0);
  if (!doc.contains("buses") || !doc.contains("branches"))
    throw std::runtime_error("native case must contain 'buses' and 'branches'");

  std::map<int, int> id_to_index;
  for (const auto& jb : doc.at("buses")) {
    Bus bus;
    bus.id = jb.at("id").get<int>();
    bus.v_min = jb.value("v_min", 0.9);
    bus.v_max = jb.value("v_max", 1.1);
    bus.p_min = jb.value("p_min", 0.0);
    bus.p_max = jb.value("p_max", 0.0);
    bus.q_min = jb.value("q_min", 0.0);
    bus.q_max = jb.value("q_max", 0.0);
    bus.p_demand = jb.value("p_demand", 0.0);
    bus.q_demand = jb.value("q_demand", 0.0);
    bus.cost_lin = jb.value("cost_lin", 0.0);
    bus.cost_const = jb.value("cost_const", 0.0);
    bus.is_ref = jb.value("is_ref", false);
    if (id_to_index.count(bus.id))
      throw std::runtime_error("duplicate bus id " + std::to_string(bus.id));
    id_to_index[bus.id] = static_cast<int>(net.buses.size());
    net.buses.push_back(bus);
  }

  auto lookup = [&](int id) {
    auto it = id_to_index.find(id);
    if (it == id_to_index.end())
      throw std::runtime_error("unknown bus " + std::to_string(id));
    return it->second;
  };

  for (const auto& jb : doc.at("branches")) {
    Branch br;
    br.from = lookup(jb.at("from").get<int>()) + 1;
    br.to = lookup(jb.at("to").get<int>()) + 1;
    br.g = jb.at("g").get<double>();
    br.b = jb.at("b").get<double>();
    br.g_sh = jb.value("g_sh", 0.0);
    br.b_sh = jb.value("b_sh", 0.0);
    br.tap = jb.value("tap", 1.0);
    br.p_max = jb.value("p_max", 1.0);
    br.q_max = jb.value("q_max", 1.0);
    br.theta_min = jb.value("theta_min", -kPi / 6);
    br.theta_max = jb.value("theta_max", kPi / 6);
    br.switchable = jb.value("switchable", false);
    br.status = jb.value("status", 1);
    net.branches.push_back(br);
  }

  // Buses may appear with arbitrary distinct ids; renumber to 1..N in file
  // order (branch endpoints were already remapped through the lookup).
  bool renumbered = false;
  for (int i = 0; i < net.n_buses(); ++i) {
    if (net.buses[i].id != i + 1) renumbered = true;
    net.buses[i].id = i + 1;
  }
  if (renumbered) warnings.push_back("bus ids renumbered to 1..N in file order");

  if (doc.contains("anchor")) {
    const auto& ja = doc.at("anchor");
    PFState st;
    auto v = ja.at("v").get<std::vector<double>>();
    auto th = ja.at("theta").get<std::vector<double>>();
    if (static_cast<int>(v.size()) != net.n_buses() ||
        static_cast<int>(th.size()) != net.n_buses())
      throw std::runtime_error("anchor dimension mismatch");
    st.v = Eigen::Map<Eigen::VectorXd>(v.data(), v.size());
    st.theta = Eigen::Map<Eigen::VectorXd>(th.data(), th.size());
    anchor = st;
  }
  return net;
}

// --- MATPOWER subset -------------------------------------------------------

std::string strip_matlab_comments(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto pos = line.find('%');
    if (pos != std::string::npos) line.erase(pos);
    out += line;
    out += '\n';
  }
  return out;
}

/// Extracts the numeric matrix assigned to `mpc.<name> = [ ... ];`.
std::vector<std::vector<double>> read_matrix(const std::string& text,
                                             const std::string& name,
                                             bool required) {
  std::string key = "mpc." + name;
  auto pos = text.find(key);
  while (pos != std::string::npos) {
    auto eq = text.find('=', pos + key.size());
    auto open = text.find('[', pos);
    // Guard against names that prefix other names (e.g. "bus" vs "bus_name").
    bool clean = eq != std::string::npos && open != std::string::npos;
    if (clean) {
      std::string between = text.substr(pos + key.size(), eq - pos - key.size());
      clean = between.find_first_not_of(" \t") == std::string::npos;
    }
    if (clean) break;
    pos = text.find(key, pos + key.size());
  }
  if (pos == std::string::npos) {
    if (required) throw std::runtime_error("missing mpc." + name + " table");
    return {};
  }
  auto open = text.find('[', pos);
  auto close = text.find(']', open);
  if (open == std::string::npos || close == std::string::npos)
    throw std::runtime_error("malformed mpc." + name + " table");
  std::string body = text.substr(open + 1, close - open - 1);
  for (char& c : body)
    if (c == ';') c = '\n';

  std::vector<std::vector<double>> rows;
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!row.empty()) rows.push_back(row);
  }
  return rows;
}

double read_scalar(const std::string& text, const std::string& name, double fallback) {
  std::string key = "mpc." + name;
  auto pos = text.find(key);
  if (pos == std::string::npos) return fallback;
  auto eq = text.find('=', pos);
  if (eq == std::string::npos) return fallback;
  return std::strtod(text.c_str() + eq + 1, nullptr);
}

Network network_from_matpower(const std::string& raw,
                              std::vector<std::string>& warnings,
                              std::optional<PFState>& anchor) {
  std::string text = strip_matlab_comments(raw);
  double base = read_scalar(text, "baseMVA", 100.0);

  auto bus_tab = read_matrix(text, "bus", true);
  auto branch_tab = read_matrix(text, "branch", true);
  auto gen_tab = read_matrix(text, "gen", false);
  auto gencost_tab = read_matrix(text, "gencost", false);

  Network net;
  net.base_mva = base;

  std::map<int, int> id_to_index;
  PFState stored;
  stored.v.resize(static_cast<int>(bus_tab.size()));
  stored.theta.resize(static_cast<int>(bus_tab.size()));
  bool renumbered = false;

  for (const auto& row : bus_tab) {
    if (row.size() < 13) throw std::runtime_error("mpc.bus row too short");
    Bus bus;
    int orig_id = static_cast<int>(row[0]);
    int bus_type = static_cast<int>(row[1]);
    bus.p_demand = row[2] / base;
    bus.q_demand = row[3] / base;
    // GS/BS bus shunts are not part of the model; warn when present.
    if (row[4] != 0.0 || row[5] != 0.0)
      warnings.push_back("bus " + std::to_string(orig_id) +
                         ": GS/BS bus shunt ignored");
    bus.v_max = row[11];
    bus.v_min = row[12];
    bus.is_ref = (bus_type == 3);
    // Without generator rows the bus is a fixed injection (-demand).
    bus.p_min = bus.p_max = -bus.p_demand;
    bus.q_min = bus.q_max = -bus.q_demand;
    if (id_to_index.count(orig_id))
      throw std::runtime_error("duplicate bus id " + std::to_string(orig_id));
    int idx = static_cast<int>(net.buses.size());
    id_to_index[orig_id] = idx;
    if (orig_id != idx + 1) renumbered = true;
    bus.id = idx + 1;
    stored.v[idx] = row[7];
    stored.theta[idx] = row[8] * kPi / 180.0;
    net.buses.push_back(bus);
  }
  if (renumbered) warnings.push_back("bus ids renumbered to 1..N in file order");

  auto lookup = [&](double id) {
    auto it = id_to_index.find(static_cast<int>(id));
    if (it == id_to_index.end())
      throw std::runtime_error("unknown bus " + std::to_string(static_cast<int>(id)));
    return it->second;
  };

  for (const auto& row : branch_tab) {
    if (row.size() < 13) throw std::runtime_error("mpc.branch row too short");
    Branch br;
    br.from = lookup(row[0]) + 1;
    br.to = lookup(row[1]) + 1;
    double r = row[2], x = row[3];
    double z2 = r * r + x * x;
    if (z2 == 0.0) throw std::runtime_error("branch with zero series impedance");
    br.g = r / z2;
    br.b = -x / z2;
    br.g_sh = 0.0;
    br.b_sh = row[4] / 2.0;  // total line charging split across both ends
    double rate = row[5];
    if (rate == 0.0) {
      rate = 100.0 * base;  // MATPOWER 0 = unlimited; keep big-M finite
      warnings.push_back("branch " + std::to_string(net.n_branches() + 1) +
                         ": RATE_A=0 treated as " + std::to_string(rate) + " MVA");
    }
    br.p_max = rate / base;
    br.q_max = rate / base;
    br.tap = row[8] == 0.0 ? 1.0 : row[8];
    if (row[9] != 0.0)
      warnings.push_back("branch " + std::to_string(net.n_branches() + 1) +
                         ": phase shift ignored");
    br.status = static_cast<int>(row[10]);
    double ang_min = row[11] * kPi / 180.0;
    double ang_max = row[12] * kPi / 180.0;
    // MATPOWER uses 0 or +-360 for "unconstrained".
    br.theta_min = (ang_min == 0.0 || ang_min <= -2 * kPi) ? -2 * kPi : ang_min;
    br.theta_max = (ang_max == 0.0 || ang_max >= 2 * kPi) ? 2 * kPi : ang_max;
    br.switchable = true;
    net.branches.push_back(br);
  }

  // Merge generators per bus into aggregate injection bounds; demand moves
  // into the bounds (injection = generation - demand).
  struct GenAgg {
    double p_min = 0, p_max = 0, q_min = 0, q_max = 0;
    double cost_weight = 0, cost_lin = 0, cost_const = 0;
    int count = 0;
  };
  std::map<int, GenAgg> agg;
  for (std::size_t gi = 0; gi < gen_tab.size(); ++gi) {
    const auto& row = gen_tab[gi];
    if (row.size() < 10) throw std::runtime_error("mpc.gen row too short");
    int idx = lookup(row[0]);
    if (row.size() > 7 && row[7] <= 0) continue;  // out-of-service generator
    GenAgg& a = agg[idx];
    a.q_max += row[3] / base;
    a.q_min += row[4] / base;
    a.p_max += row[8] / base;
    a.p_min += row[9] / base;
    a.count += 1;
    if (gi < gencost_tab.size()) {
      const auto& cost = gencost_tab[gi];
      if (cost.size() < 5) throw std::runtime_error("mpc.gencost row too short");
      int model = static_cast<int>(cost[0]);
      double lin = 0.0, cnst = 0.0;
      if (model == 2) {
        int ncost = static_cast<int>(cost[3]);
        // Coefficients are in descending order c_{n-1} .. c_0, $/MW^k.
        if (ncost >= 1) cnst = cost[4 + ncost - 1];
        if (ncost >= 2) lin = cost[4 + ncost - 2] * base;
        if (ncost >= 3 && cost[4 + ncost - 3] != 0.0)
          warnings.push_back("gen at bus " + std::to_string(static_cast<int>(row[0])) +
                             ": quadratic cost term dropped");
        for (int kk = 0; kk + 3 < ncost; ++kk)
          if (cost[4 + kk] != 0.0)
            warnings.push_back("gen at bus " + std::to_string(static_cast<int>(row[0])) +
                               ": cost term of order > 2 dropped");
      } else if (model == 1) {
        // Piecewise-linear: approximate with the endpoint slope.
        int npts = static_cast<int>(cost[3]);
        if (npts >= 2 && cost.size() >= static_cast<std::size_t>(4 + 2 * npts)) {
          double p0 = cost[4], f0 = cost[5];
          double p1 = cost[4 + 2 * (npts - 1)], f1 = cost[5 + 2 * (npts - 1)];
          if (p1 != p0) lin = (f1 - f0) / (p1 - p0) * base;
          cnst = f0 - lin * p0 / base;
        }
        warnings.push_back("gen at bus " + std::to_string(static_cast<int>(row[0])) +
                           ": piecewise-linear cost approximated by endpoint slope");
      }
      double w = std::max(row[8], 0.0);
      a.cost_weight += w;
      a.cost_lin += lin * (w > 0 ? w : 1.0);
      a.cost_const += cnst;
    }
  }
  for (auto& [idx, a] : agg) {
    Bus& bus = net.buses[idx];
    bus.p_min = a.p_min - bus.p_demand;
    bus.p_max = a.p_max - bus.p_demand;
    bus.q_min = a.q_min - bus.q_demand;
    bus.q_max = a.q_max - bus.q_demand;
    double denom = a.cost_weight > 0 ? a.cost_weight : a.count;
    bus.cost_lin = denom > 0 ? a.cost_lin / denom : 0.0;
    bus.cost_const = a.cost_const;
  }

  anchor = stored;
  return net;
}

}  // namespace

ParseResult parse_case(const std::string& text, CaseFormat format) {
  ParseResult result;
  if (format == CaseFormat::native_json) {
    json doc = json::parse(text);
    result.net = network_from_json(doc, result.warnings, result.anchor);
  } else {
    result.net = network_from_matpower(text, result.warnings, result.anchor);
  }
  auto w = result.net.validate();
  result.warnings.insert(result.warnings.end(), w.begin(), w.end());
  return result;
}

std::string to_native_json(const Network& net, const std::optional<PFState>& anchor) {
  json doc;
  doc["base_mva"] = net.base_mva;
  doc["buses"] = json::array();
  for (const Bus& bus : net.buses) {
    doc["buses"].push_back({{"id", bus.id},
                            {"v_min", bus.v_min},
                            {"v_max", bus.v_max},
                            {"p_min", bus.p_min},
                            {"p_max", bus.p_max},
                            {"q_min", bus.q_min},
                            {"q_max", bus.q_max},
                            {"p_demand", bus.p_demand},
                            {"q_demand", bus.q_demand},
                            {"cost_lin", bus.cost_lin},
                            {"cost_const", bus.cost_const},
                            {"is_ref", bus.is_ref}});
  }
  doc["branches"] = json::array();
  for (const Branch& br : net.branches) {
    doc["branches"].push_back({{"from", br.from},
                               {"to", br.to},
                               {"g", br.g},
                               {"b", br.b},
                               {"g_sh", br.g_sh},
                               {"b_sh", br.b_sh},
                               {"tap", br.tap},
                               {"p_max", br.p_max},
                               {"q_max", br.q_max},
                               {"theta_min", br.theta_min},
                               {"theta_max", br.theta_max},
                               {"switchable", br.switchable},
                               {"status", br.status}});
  }
  if (anchor) {
    doc["anchor"] = {
        {"v", std::vector<double>(anchor->v.data(), anchor->v.data() + anchor->v.size())},
        {"theta", std::vector<double>(anchor->theta.data(),
                                      anchor->theta.data() + anchor->theta.size())}};
  }
  return doc.dump(2) + "\n";
}

CaseFormat format_from_path(const std::string& path) {
  if (path.size() >= 2 && path.substr(path.size() - 2) == ".m")
    return CaseFormat::matpower_subset;
  return CaseFormat::native_json;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
}

}  // namespace gridnn
