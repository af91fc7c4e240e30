#include "gridnn/milp_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gridnn {

int MILPModel::add_variable(const std::string& name, VarKind kind, double lower,
                            double upper) {
  if (var_names_.count(name))
    throw std::runtime_error("duplicate variable name: " + name);
  if (kind == VarKind::binary) {
    lower = std::max(lower, 0.0);
    upper = std::min(upper, 1.0);
  }
  if (lower > upper)
    throw std::runtime_error("variable " + name + ": lower > upper");
  int idx = num_variables();
  variables.push_back({name, kind, lower, upper});
  var_names_[name] = idx;
  return idx;
}

void MILPModel::add_constraint(const std::string& name, std::vector<LinTerm> terms,
                               Sense sense, double rhs) {
  if (con_names_.count(name))
    throw std::runtime_error("duplicate constraint name: " + name);
  for (const LinTerm& t : terms)
    if (t.var < 0 || t.var >= num_variables())
      throw std::runtime_error("constraint " + name + " references unknown variable");
  con_names_[name] = num_constraints();
  constraints.push_back({name, std::move(terms), sense, rhs});
}

int MILPModel::var_index(const std::string& name) const {
  auto it = var_names_.find(name);
  return it == var_names_.end() ? -1 : it->second;
}

int MILPModel::num_binaries() const {
  int count = 0;
  for (const Variable& v : variables)
    if (v.kind == VarKind::binary) ++count;
  return count;
}

void MILPModel::validate() const {
  for (const Variable& v : variables) {
    if (v.lower > v.upper)
      throw std::runtime_error("variable " + v.name + ": lower > upper");
    if (v.kind == VarKind::binary && (v.lower < 0.0 || v.upper > 1.0))
      throw std::runtime_error("binary " + v.name + " with bounds outside [0,1]");
  }
  for (const Constraint& c : constraints)
    for (const LinTerm& t : c.terms)
      if (t.var < 0 || t.var >= num_variables())
        throw std::runtime_error("constraint " + c.name + " references unknown variable");
  for (const LinTerm& t : objective)
    if (t.var < 0 || t.var >= num_variables())
      throw std::runtime_error("objective references unknown variable");
}

double MILPModel::eval_objective(const Eigen::VectorXd& values) const {
  double total = objective_constant;
  for (const LinTerm& t : objective) total += t.coeff * values[t.var];
  return total;
}

// --- MPS -------------------------------------------------------------------

namespace {

std::string fixed_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

/// Classic fixed-field layout: fields at columns 2, 5, 15, 25, 40, 50.
std::string mps_line(const std::string& f1, const std::string& f2,
                     const std::string& f3 = "", const std::string& f4 = "",
                     const std::string& f5 = "", const std::string& f6 = "") {
  std::string line(1, ' ');
  auto pad_to = [&](std::size_t col) {
    if (line.size() < col) line.append(col - line.size(), ' ');
    else line.push_back(' ');
  };
  line += f1;
  pad_to(4);
  line += f2;
  if (!f3.empty()) {
    pad_to(14);
    line += f3;
  }
  if (!f4.empty()) {
    pad_to(24);
    line += f4;
  }
  if (!f5.empty()) {
    pad_to(39);
    line += f5;
  }
  if (!f6.empty()) {
    pad_to(49);
    line += f6;
  }
  return line + "\n";
}

}  // namespace

std::string mps_var_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "X%07d", index + 1);
  return buf;
}

std::string mps_row_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "R%07d", index + 1);
  return buf;
}

std::string export_mps(const MILPModel& model) {
  model.validate();
  std::ostringstream out;
  out << "NAME          GRIDNN\n";
  out << "OBJSENSE\n    "
      << (model.objective_sense == ObjSense::maximize ? "MAX" : "MIN") << "\n";
  out << "ROWS\n";
  out << mps_line("N", "OBJ");
  for (int r = 0; r < model.num_constraints(); ++r) {
    const char* sense = model.constraints[r].sense == Sense::le   ? "L"
                        : model.constraints[r].sense == Sense::eq ? "E"
                                                                  : "G";
    out << mps_line(sense, mps_row_name(r));
  }

  // Column-major coefficient lists in declaration order.
  std::vector<std::vector<std::pair<int, double>>> columns(model.num_variables());
  for (int r = 0; r < model.num_constraints(); ++r)
    for (const LinTerm& t : model.constraints[r].terms)
      columns[t.var].push_back({r, t.coeff});
  std::vector<double> obj_coeff(model.num_variables(), 0.0);
  for (const LinTerm& t : model.objective) obj_coeff[t.var] += t.coeff;

  out << "COLUMNS\n";
  bool in_integer = false;
  int marker = 0;
  for (int v = 0; v < model.num_variables(); ++v) {
    bool is_binary = model.variables[v].kind == VarKind::binary;
    if (is_binary && !in_integer) {
      out << mps_line("", "MARKER" + std::to_string(marker++), "'MARKER'", "",
                      "'INTORG'");
      in_integer = true;
    } else if (!is_binary && in_integer) {
      out << mps_line("", "MARKER" + std::to_string(marker++), "'MARKER'", "",
                      "'INTEND'");
      in_integer = false;
    }
    std::string name = mps_var_name(v);
    if (obj_coeff[v] != 0.0)
      out << mps_line("", name, "OBJ", fixed_num(obj_coeff[v]));
    for (const auto& [row, coeff] : columns[v])
      out << mps_line("", name, mps_row_name(row), fixed_num(coeff));
    if (obj_coeff[v] == 0.0 && columns[v].empty())
      out << mps_line("", name, "OBJ", "0");
  }
  if (in_integer)
    out << mps_line("", "MARKER" + std::to_string(marker++), "'MARKER'", "", "'INTEND'");

  out << "RHS\n";
  if (model.objective_constant != 0.0)
    out << mps_line("", "RHS", "OBJ", fixed_num(-model.objective_constant));
  for (int r = 0; r < model.num_constraints(); ++r)
    if (model.constraints[r].rhs != 0.0)
      out << mps_line("", "RHS", mps_row_name(r), fixed_num(model.constraints[r].rhs));

  out << "BOUNDS\n";
  for (int v = 0; v < model.num_variables(); ++v) {
    const Variable& var = model.variables[v];
    std::string name = mps_var_name(v);
    bool lo_inf = var.lower <= -kInf, up_inf = var.upper >= kInf;
    if (lo_inf && up_inf) {
      out << mps_line("FR", "BND", name);
    } else if (var.lower == var.upper) {
      out << mps_line("FX", "BND", name, fixed_num(var.lower));
    } else {
      if (lo_inf)
        out << mps_line("MI", "BND", name);
      else if (var.lower != 0.0 || var.kind == VarKind::binary)
        out << mps_line("LO", "BND", name, fixed_num(var.lower));
      if (!up_inf) out << mps_line("UP", "BND", name, fixed_num(var.upper));
    }
  }
  out << "ENDATA\n";
  return out.str();
}

std::string mps_name_map(const MILPModel& model) {
  nlohmann::json doc;
  doc["objective_row"] = "OBJ";
  nlohmann::json vars = nlohmann::json::object();
  for (int v = 0; v < model.num_variables(); ++v)
    vars[mps_var_name(v)] = model.variables[v].name;
  nlohmann::json rows = nlohmann::json::object();
  for (int r = 0; r < model.num_constraints(); ++r)
    rows[mps_row_name(r)] = model.constraints[r].name;
  doc["variables"] = vars;
  doc["rows"] = rows;
  return doc.dump(2) + "\n";
}

MILPModel parse_mps(const std::string& text, const std::string& name_map_json) {
  std::map<std::string, std::string> var_names, row_names;
  if (!name_map_json.empty()) {
    auto doc = nlohmann::json::parse(name_map_json);
    for (auto& [k, v] : doc.at("variables").items()) var_names[k] = v.get<std::string>();
    for (auto& [k, v] : doc.at("rows").items()) row_names[k] = v.get<std::string>();
  }
  auto original_var = [&](const std::string& s) {
    auto it = var_names.find(s);
    return it == var_names.end() ? s : it->second;
  };
  auto original_row = [&](const std::string& s) {
    auto it = row_names.find(s);
    return it == row_names.end() ? s : it->second;
  };

  MILPModel model;
  std::map<std::string, int> row_index;
  std::map<std::string, Sense> row_sense;
  std::vector<std::string> row_order;
  std::map<std::string, std::vector<LinTerm>> row_terms;
  std::map<std::string, double> row_rhs;
  std::map<std::string, int> var_index;

  enum Section { none, objsense, rows, columns, rhs, bounds, done };
  Section section = none;
  bool in_integer = false;

  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '*') continue;
    if (line[0] != ' ') {
      std::istringstream hs(line);
      std::string head;
      hs >> head;
      if (head == "NAME") section = none;
      else if (head == "OBJSENSE") section = objsense;
      else if (head == "ROWS") section = rows;
      else if (head == "COLUMNS") section = columns;
      else if (head == "RHS") section = rhs;
      else if (head == "RANGES") throw std::runtime_error("RANGES section unsupported");
      else if (head == "BOUNDS") section = bounds;
      else if (head == "ENDATA") section = done;
      else throw std::runtime_error("unknown MPS section: " + head);
      continue;
    }
    std::istringstream fs(line);
    std::vector<std::string> f;
    std::string tok;
    while (fs >> tok) f.push_back(tok);
    if (f.empty()) continue;

    switch (section) {
      case objsense:
        model.objective_sense = (f[0] == "MAX") ? ObjSense::maximize : ObjSense::minimize;
        break;
      case rows: {
        if (f.size() < 2) throw std::runtime_error("bad ROWS line: " + line);
        if (f[0] == "N") break;  // objective row
        Sense s = f[0] == "L" ? Sense::le : f[0] == "E" ? Sense::eq : Sense::ge;
        row_sense[f[1]] = s;
        row_order.push_back(f[1]);
        break;
      }
      case columns: {
        if (std::find(f.begin(), f.end(), "'MARKER'") != f.end()) {
          in_integer = (f.back() == "'INTORG'");
          break;
        }
        if (f.size() < 3) throw std::runtime_error("bad COLUMNS line: " + line);
        const std::string& vname = f[0];
        if (!var_index.count(vname)) {
          var_index[vname] = model.add_variable(
              original_var(vname), in_integer ? VarKind::binary : VarKind::continuous,
              in_integer ? 0.0 : -kInf, in_integer ? 1.0 : kInf);
          if (!in_integer) {
            // MPS default bounds for continuous columns are [0, +inf).
            model.variables[var_index[vname]].lower = 0.0;
            model.variables[var_index[vname]].upper = kInf;
          }
        }
        for (std::size_t i = 1; i + 1 < f.size(); i += 2) {
          double coeff = std::strtod(f[i + 1].c_str(), nullptr);
          if (coeff == 0.0) continue;
          if (f[i] == "OBJ")
            model.objective.push_back({var_index[vname], coeff});
          else
            row_terms[f[i]].push_back({var_index[vname], coeff});
        }
        break;
      }
      case rhs: {
        for (std::size_t i = 1; i + 1 < f.size(); i += 2) {
          double v = std::strtod(f[i + 1].c_str(), nullptr);
          if (f[i] == "OBJ")
            model.objective_constant = -v;
          else
            row_rhs[f[i]] = v;
        }
        break;
      }
      case bounds: {
        if (f.size() < 3) throw std::runtime_error("bad BOUNDS line: " + line);
        const std::string& kind = f[0];
        auto it = var_index.find(f[2]);
        if (it == var_index.end())
          throw std::runtime_error("BOUNDS references unknown column " + f[2]);
        Variable& var = model.variables[it->second];
        double v = f.size() > 3 ? std::strtod(f[3].c_str(), nullptr) : 0.0;
        if (kind == "UP") var.upper = v;
        else if (kind == "LO") var.lower = v;
        else if (kind == "FX") var.lower = var.upper = v;
        else if (kind == "FR") { var.lower = -kInf; var.upper = kInf; }
        else if (kind == "MI") var.lower = -kInf;
        else if (kind == "PL") var.upper = kInf;
        else if (kind == "BV") { var.kind = VarKind::binary; var.lower = 0; var.upper = 1; }
        else throw std::runtime_error("unsupported bound type " + kind);
        break;
      }
      default:
        break;
    }
  }

  for (const std::string& rname : row_order) {
    auto terms = row_terms.count(rname) ? row_terms[rname] : std::vector<LinTerm>{};
    double rv = row_rhs.count(rname) ? row_rhs[rname] : 0.0;
    model.add_constraint(original_row(rname), std::move(terms), row_sense[rname], rv);
  }
  model.validate();
  return model;
}

}  // namespace gridnn
