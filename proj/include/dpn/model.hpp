#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dpn/core.hpp"
#include "dpn/graph.hpp"
#include "dpn/potential.hpp"

namespace dpn {

struct Variable {
  std::string name;
  std::vector<std::string> states;

  std::size_t card() const { return states.size(); }
};

/// A conditioning variable of a CPT.  lag 0 is the same slice, lag 1 the
/// previous one.
struct ParentRef {
  VarId var;
  std::size_t lag = 0;

  friend bool operator==(const ParentRef&, const ParentRef&) = default;
};

/// Conditional probability table.  The flat table lists parents slowest in
/// declared order and the child state fastest.
struct Cpt {
  VarId child;
  std::vector<ParentRef> parents;
  std::vector<double> table;
};

struct SliceSpec {
  std::vector<VarId> variables;
  std::vector<std::pair<VarId, VarId>> intra_edges;  ///< (parent, child)
  std::vector<Cpt> cpts;

  const Cpt* cpt_for(VarId v) const {
    for (const auto& c : cpts)
      if (c.child == v) return &c;
    return nullptr;
  }
};

struct TemporalEdge {
  VarId from;  ///< variable in slice t - lag
  VarId to;    ///< variable in slice t
  std::size_t lag = 1;
};

struct TransitionSpec {
  SliceSpec slice;
  std::vector<TemporalEdge> temporal_edges;
};

struct DpnModel {
  std::vector<Variable> variables;
  SliceSpec initial;
  TransitionSpec transition;

  std::size_t var_count() const { return variables.size(); }
  Vertex vertex(std::size_t t, VarId v) const { return t * variables.size() + v; }
  std::size_t slice_of(Vertex v) const { return v / variables.size(); }
  VarId var_of(Vertex v) const { return v % variables.size(); }
  std::size_t card(VarId v) const { return variables[v].card(); }

  std::optional<VarId> find(const std::string& name) const {
    for (VarId i = 0; i < variables.size(); ++i)
      if (variables[i].name == name) return i;
    return std::nullopt;
  }

  std::string label(Vertex v) const {
    return variables[var_of(v)].name + "@" + std::to_string(slice_of(v));
  }
};

/// A finding for variable `var` in slice `t`.
struct Evidence {
  std::size_t t;
  VarId var;
  Finding finding;
};

namespace detail {

inline std::string describe_config(const DpnModel& m, const std::vector<ParentRef>& parents,
                                   std::size_t row) {
  std::vector<std::size_t> states(parents.size());
  for (std::size_t i = parents.size(); i-- > 0;) {
    std::size_t c = m.card(parents[i].var);
    states[i] = row % c;
    row /= c;
  }
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < parents.size(); ++i) {
    const auto& var = m.variables[parents[i].var];
    if (i) os << ", ";
    os << var.name << (parents[i].lag ? "@t-" + std::to_string(parents[i].lag) : "") << "="
       << var.states[states[i]];
  }
  os << "]";
  return os.str();
}

inline void validate_slice(const DpnModel& m, const SliceSpec& s, const std::vector<TemporalEdge>* temporal,
                           const std::string& where, std::vector<std::string>& out) {
  const std::size_t n = m.var_count();
  std::set<VarId> present;
  for (VarId v : s.variables) {
    if (v >= n) {
      out.push_back(where + ": slice references undeclared variable id " + std::to_string(v));
      continue;
    }
    if (!present.insert(v).second) out.push_back(where + ": variable '" + m.variables[v].name + "' listed twice");
  }
  if (present.size() != n && std::all_of(s.variables.begin(), s.variables.end(), [&](VarId v) { return v < n; }))
    out.push_back(where + ": every declared variable must be present in the slice");

  Dag dag;
  for (VarId v : present) dag.vertices.insert(v);
  std::map<VarId, std::set<VarId>> intra_parents;
  for (const auto& [p, c] : s.intra_edges) {
    if (!present.count(p) || !present.count(c)) {
      out.push_back(where + ": intra-slice edge references a variable outside the slice");
      continue;
    }
    if (p == c) {
      out.push_back(where + ": self-loop on '" + m.variables[p].name + "'");
      continue;
    }
    dag.arcs.insert({p, c});
    intra_parents[c].insert(p);
  }
  if (!is_acyclic(dag)) out.push_back(where + ": intra-slice edges contain a cycle");

  std::map<VarId, std::set<VarId>> temporal_parents;
  if (temporal) {
    for (const auto& e : *temporal) {
      if (e.from >= n || e.to >= n) {
        out.push_back(where + ": temporal edge references an undeclared variable");
        continue;
      }
      if (e.lag != 1) {
        out.push_back(where + ": temporal edge " + m.variables[e.from].name + "@t-" + std::to_string(e.lag) +
                      " -> " + m.variables[e.to].name + "@t violates the Markov order 1 restriction");
        continue;
      }
      temporal_parents[e.to].insert(e.from);
    }
  }

  std::map<VarId, std::size_t> cpt_count;
  for (const auto& c : s.cpts) {
    if (c.child >= n) {
      out.push_back(where + ": cpt for undeclared variable id " + std::to_string(c.child));
      continue;
    }
    const std::string& name = m.variables[c.child].name;
    ++cpt_count[c.child];
    std::set<VarId> lag0, lag1;
    bool parents_ok = true;
    for (const auto& p : c.parents) {
      if (p.var >= n) {
        out.push_back(where + ": cpt for '" + name + "' has an undeclared parent");
        parents_ok = false;
      } else if (p.lag == 0) {
        lag0.insert(p.var);
      } else if (p.lag == 1 && temporal) {
        lag1.insert(p.var);
      } else if (p.lag == 1) {
        out.push_back(where + ": cpt for '" + name + "' conditions on a previous slice in the initial slice");
        parents_ok = false;
      } else {
        out.push_back(where + ": cpt for '" + name + "' conditions on slice t-" + std::to_string(p.lag) +
                      ", violating the Markov order 1 restriction");
        parents_ok = false;
      }
    }
    if (lag0.size() + lag1.size() != c.parents.size() && parents_ok) {
      out.push_back(where + ": cpt for '" + name + "' lists a parent twice");
      parents_ok = false;
    }
    if (lag0 != intra_parents[c.child])
      out.push_back(where + ": cpt for '" + name + "' does not match its intra-slice parents");
    if (temporal && lag1 != temporal_parents[c.child])
      out.push_back(where + ": cpt for '" + name + "' does not match its temporal parents");
    if (!parents_ok) continue;
    std::size_t rows = 1;
    for (const auto& p : c.parents) rows *= m.card(p.var);
    std::size_t card = m.card(c.child);
    if (c.table.size() != rows * card) {
      out.push_back(where + ": cpt for '" + name + "' has " + std::to_string(c.table.size()) + " entries, expected " +
                    std::to_string(rows * card));
      continue;
    }
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      bool range_ok = true;
      for (std::size_t k = 0; k < card; ++k) {
        double v = c.table[r * card + k];
        if (!(v >= 0.0 && v <= 1.0)) range_ok = false;
        sum += v;
      }
      if (!range_ok)
        out.push_back(where + ": cpt for '" + name + "' has an entry outside [0, 1] at parent configuration " +
                      describe_config(m, c.parents, r));
      else if (std::abs(sum - 1.0) > 1e-12)
        out.push_back(where + ": cpt for '" + name + "' at parent configuration " + describe_config(m, c.parents, r) +
                      " sums to " + std::to_string(sum));
    }
  }
  for (VarId v : present)
    if (cpt_count[v] != 1)
      out.push_back(where + ": variable '" + m.variables[v].name + "' needs exactly one cpt, found " +
                    std::to_string(cpt_count[v]));
}

}  // namespace detail

/// Every violated structural or numerical invariant, as readable text.
inline std::vector<std::string> validate_model(const DpnModel& m) {
  std::vector<std::string> out;
  if (m.variables.empty()) out.push_back("model declares no variables");
  std::set<std::string> names;
  for (const auto& v : m.variables) {
    if (!names.insert(v.name).second) out.push_back("variable name '" + v.name + "' declared twice");
    if (v.states.empty()) out.push_back("variable '" + v.name + "' has no states");
    std::set<std::string> labels(v.states.begin(), v.states.end());
    if (labels.size() != v.states.size()) out.push_back("variable '" + v.name + "' has duplicate state labels");
  }
  if (!out.empty()) return out;
  detail::validate_slice(m, m.initial, nullptr, "initial", out);
  detail::validate_slice(m, m.transition.slice, &m.transition.temporal_edges, "transition", out);
  return out;
}

/// Violations of a slice override used in place of the transition template.
inline std::vector<std::string> validate_transition(const DpnModel& m, const TransitionSpec& spec) {
  std::vector<std::string> out;
  detail::validate_slice(m, spec.slice, &spec.temporal_edges, "override", out);
  return out;
}

/// CPT of `c` for slice `t` as a table over unrolled vertices, domain order
/// (parents..., child).
inline PotentialTable family_table(const DpnModel& m, std::size_t t, const Cpt& c) {
  Domain dom;
  for (const auto& p : c.parents) {
    if (p.lag > t) throw PreconditionError("parent lies before slice 0");
    dom.push_back({m.vertex(t - p.lag, p.var), m.card(p.var)});
  }
  dom.push_back({m.vertex(t, c.child), m.card(c.child)});
  return PotentialTable(std::move(dom), c.table);
}

/// Interface of slice t under a given slice structure: the slice-t vertices
/// adjacent to slice t-1 in the moral graph.  These are the targets of
/// temporal edges plus their same-slice co-parents.
inline VertexSet interface_of(const DpnModel& m, const TransitionSpec& spec, std::size_t t) {
  VertexSet out;
  if (t == 0) return out;
  for (const auto& c : spec.slice.cpts) {
    bool temporal = std::any_of(c.parents.begin(), c.parents.end(), [](const ParentRef& p) { return p.lag == 1; });
    if (!temporal) continue;
    out.insert(m.vertex(t, c.child));
    for (const auto& p : c.parents)
      if (p.lag == 0) out.insert(m.vertex(t, p.var));
  }
  return out;
}

inline VertexSet interface_of(const DpnModel& m, std::size_t t) { return interface_of(m, m.transition, t); }

struct UnrolledNetwork {
  std::size_t t_first = 0;
  std::size_t t_last = 0;
  Dag dag;
  std::map<Vertex, std::size_t> cards;
  std::vector<PotentialTable> cpts;  ///< one per vertex whose parents are all inside the range
  std::vector<std::pair<Vertex, Vertex>> temporal_arcs;
  std::vector<std::pair<Vertex, Vertex>> dangling;  ///< (parent outside the range, child)
};

/// Unroll slices [t_first, t_last].  Slice 0 uses the initial spec, every
/// other slice the transition template.  Temporal parents of slice t_first
/// (when t_first > 0) are reported as dangling and their CPTs omitted.
inline UnrolledNetwork unroll(const DpnModel& m, std::size_t t_first, std::size_t t_last) {
  if (t_first > t_last) throw PreconditionError("unroll: inverted slice range");
  UnrolledNetwork net;
  net.t_first = t_first;
  net.t_last = t_last;
  for (std::size_t t = t_first; t <= t_last; ++t) {
    const SliceSpec& s = t == 0 ? m.initial : m.transition.slice;
    for (VarId v : s.variables) {
      net.dag.vertices.insert(m.vertex(t, v));
      net.cards[m.vertex(t, v)] = m.card(v);
    }
    for (const auto& c : s.cpts) {
      Vertex child = m.vertex(t, c.child);
      bool complete = true;
      for (const auto& p : c.parents) {
        if (p.lag == 0) {
          net.dag.arcs.insert({m.vertex(t, p.var), child});
        } else if (t == t_first) {
          net.dangling.push_back({m.vertex(t - p.lag, p.var), child});
          complete = false;
        } else {
          net.dag.arcs.insert({m.vertex(t - p.lag, p.var), child});
          net.temporal_arcs.push_back({m.vertex(t - p.lag, p.var), child});
        }
      }
      if (complete) net.cpts.push_back(family_table(m, t, c));
    }
  }
  return net;
}

/// Variables of a slice in an order where intra-slice parents come first.
inline std::vector<VarId> slice_topological_order(const SliceSpec& s) {
  Dag d;
  for (VarId v : s.variables) d.vertices.insert(v);
  for (const auto& e : s.intra_edges) d.arcs.insert(e);
  auto order = topological_order(d);
  if (order.empty() && !s.variables.empty()) throw ModelError("slice structure has a cycle");
  return order;
}

}  // namespace dpn
