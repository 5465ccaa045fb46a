#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dpn/core.hpp"
#include "dpn/model.hpp"
#include "dpn/potential.hpp"

namespace dpn {

namespace detail {

using nlohmann::json;

inline VarId lookup_var(const DpnModel& m, const json& name, const std::string& where) {
  if (!name.is_string()) throw FormatError(where + ": variable reference must be a string");
  auto id = m.find(name.get<std::string>());
  if (!id) throw FormatError(where + ": unknown variable '" + name.get<std::string>() + "'");
  return *id;
}

/// Edges `[[child, parent...], ...]` as (parent, child) pairs in listed order.
inline std::vector<std::pair<VarId, VarId>> parse_edges(const DpnModel& m, const json& j, const std::string& where) {
  std::vector<std::pair<VarId, VarId>> out;
  if (j.is_null()) return out;
  if (!j.is_array()) throw FormatError(where + ".edges must be an array");
  for (const auto& e : j) {
    if (!e.is_array() || e.empty()) throw FormatError(where + ".edges entries must be [child, parents...]");
    VarId child = lookup_var(m, e[0], where + ".edges");
    for (std::size_t i = 1; i < e.size(); ++i) out.push_back({lookup_var(m, e[i], where + ".edges"), child});
  }
  return out;
}

inline SliceSpec parse_slice(const DpnModel& m, const json& j, const std::string& where,
                             const std::vector<TemporalEdge>* temporal) {
  if (!j.is_object()) throw FormatError(where + " must be an object");
  SliceSpec s;
  for (VarId v = 0; v < m.var_count(); ++v) s.variables.push_back(v);
  s.intra_edges = parse_edges(m, j.value("edges", json()), where);
  if (!j.contains("cpts") || !j["cpts"].is_object()) throw FormatError(where + ".cpts must be an object");
  for (const auto& [name, table] : j["cpts"].items()) {
    VarId child = lookup_var(m, json(name), where + ".cpts");
    Cpt c;
    c.child = child;
    if (temporal)
      for (const auto& e : *temporal)
        if (e.to == child) c.parents.push_back({e.from, e.lag});
    for (const auto& [p, ch] : s.intra_edges)
      if (ch == child) c.parents.push_back({p, 0});
    if (!table.is_array()) throw FormatError(where + ".cpts." + name + " must be an array of numbers");
    for (const auto& x : table) {
      if (!x.is_number()) throw FormatError(where + ".cpts." + name + " must be an array of numbers");
      c.table.push_back(x.get<double>());
    }
    s.cpts.push_back(std::move(c));
  }
  return s;
}

}  // namespace detail

/// Parse a model document.  Structural problems that validate_model can
/// describe (bad tables, cycles, lags) are left for it; unknown names and
/// wrong JSON shapes raise FormatError.
inline DpnModel parse_model(const std::string& text) {
  using detail::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed JSON: ") + e.what());
  }
  try {
    if (!j.is_object()) throw FormatError("model document must be a JSON object");
    DpnModel m;
    if (!j.contains("variables") || !j["variables"].is_array()) throw FormatError("'variables' must be an array");
    for (const auto& v : j["variables"]) {
      if (!v.is_object() || !v.contains("name") || !v.contains("states"))
        throw FormatError("each variable needs 'name' and 'states'");
      Variable var;
      var.name = v["name"].get<std::string>();
      for (const auto& st : v["states"]) var.states.push_back(st.get<std::string>());
      m.variables.push_back(std::move(var));
    }
    if (!j.contains("initial")) throw FormatError("missing 'initial'");
    if (!j.contains("transition")) throw FormatError("missing 'transition'");
    m.initial = detail::parse_slice(m, j["initial"], "initial", nullptr);
    const json& tr = j["transition"];
    if (tr.contains("temporal_edges")) {
      if (!tr["temporal_edges"].is_array()) throw FormatError("transition.temporal_edges must be an array");
      for (const auto& e : tr["temporal_edges"]) {
        if (!e.is_array() || e.size() < 2 || e.size() > 3)
          throw FormatError("temporal edges must be [previous, current] or [previous, current, lag]");
        TemporalEdge te{detail::lookup_var(m, e[0], "transition.temporal_edges"),
                        detail::lookup_var(m, e[1], "transition.temporal_edges"), 1};
        if (e.size() == 3) te.lag = e[2].get<std::size_t>();
        m.transition.temporal_edges.push_back(te);
      }
    }
    m.transition.slice = detail::parse_slice(m, tr, "transition", &m.transition.temporal_edges);
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("unexpected value type: ") + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read '" + path + "'");
  return ss.str();
}

inline DpnModel load_model(const std::string& path) { return parse_model(read_file(path)); }

/// One finding per non-blank line: {"t","var","state"} or {"t","var","likelihood"}.
inline std::vector<Evidence> parse_evidence(const DpnModel& m, const std::string& text) {
  using detail::json;
  std::vector<Evidence> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "evidence line " + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(where + ": malformed JSON: " + e.what());
    }
    try {
      if (!j.is_object() || !j.contains("t") || !j.contains("var"))
        throw FormatError(where + ": needs 't' and 'var'");
      if (!j["t"].is_number_integer() || j["t"].get<long long>() < 0)
        throw FormatError(where + ": 't' must be a non-negative integer");
      Evidence e;
      e.t = j["t"].get<std::size_t>();
      e.var = detail::lookup_var(m, j["var"], where);
      const Variable& var = m.variables[e.var];
      if (j.contains("state") == j.contains("likelihood"))
        throw FormatError(where + ": give exactly one of 'state' or 'likelihood'");
      if (j.contains("state")) {
        std::string s = j["state"].get<std::string>();
        auto it = std::find(var.states.begin(), var.states.end(), s);
        if (it == var.states.end()) throw FormatError(where + ": '" + s + "' is not a state of '" + var.name + "'");
        e.finding = Finding::hard_state(static_cast<std::size_t>(it - var.states.begin()));
      } else {
        std::vector<double> w = j["likelihood"].get<std::vector<double>>();
        if (w.size() != var.card()) throw FormatError(where + ": likelihood length differs from the state count");
        bool positive = false;
        for (double x : w) {
          if (!(x >= 0.0) || !std::isfinite(x)) throw FormatError(where + ": likelihood entries must be >= 0");
          positive = positive || x > 0.0;
        }
        if (!positive) throw FormatError(where + ": likelihood needs a positive entry");
        e.finding = Finding::likelihood(std::move(w));
      }
      out.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw FormatError(where + ": unexpected value type: " + e.what());
    }
  }
  return out;
}

inline std::vector<Evidence> load_evidence(const DpnModel& m, const std::string& path) {
  return parse_evidence(m, read_file(path));
}

}  // namespace dpn
