#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpn/core.hpp"

namespace dpn {

/// Simple undirected graph without self-loops.
class UGraph {
 public:
  UGraph() = default;

  void add_vertex(Vertex v) { adj_.try_emplace(v); }

  void add_edge(Vertex a, Vertex b) {
    if (a == b) throw StructureError("self-loop on vertex " + std::to_string(a));
    if (!has_vertex(a) || !has_vertex(b)) throw StructureError("edge references an absent vertex");
    adj_[a].insert(b);
    adj_[b].insert(a);
  }

  /// Make every pair of `s` adjacent.
  void complete(const VertexSet& s) {
    for (auto i = s.begin(); i != s.end(); ++i)
      for (auto j = std::next(i); j != s.end(); ++j) add_edge(*i, *j);
  }

  void remove_vertex(Vertex v) {
    auto it = adj_.find(v);
    if (it == adj_.end()) return;
    for (Vertex u : it->second) adj_[u].erase(v);
    adj_.erase(it);
  }

  bool has_vertex(Vertex v) const { return adj_.count(v) != 0; }

  bool has_edge(Vertex a, Vertex b) const {
    auto it = adj_.find(a);
    return it != adj_.end() && it->second.count(b) != 0;
  }

  const std::set<Vertex>& neighbors(Vertex v) const {
    auto it = adj_.find(v);
    if (it == adj_.end()) throw StructureError("vertex " + std::to_string(v) + " not in graph");
    return it->second;
  }

  VertexSet vertices() const {
    VertexSet s;
    for (const auto& [v, _] : adj_) s.insert(v);
    return s;
  }

  std::set<Edge> edges() const {
    std::set<Edge> out;
    for (const auto& [v, nb] : adj_)
      for (Vertex u : nb)
        if (v < u) out.insert({v, u});
    return out;
  }

  std::size_t num_vertices() const { return adj_.size(); }

  std::size_t num_edges() const {
    std::size_t n = 0;
    for (const auto& [_, nb] : adj_) n += nb.size();
    return n / 2;
  }

  UGraph induced(const VertexSet& keep) const {
    UGraph g;
    for (Vertex v : keep)
      if (has_vertex(v)) g.add_vertex(v);
    for (Vertex v : keep) {
      if (!has_vertex(v)) continue;
      for (Vertex u : neighbors(v))
        if (keep.count(u)) g.adj_[v].insert(u);
    }
    return g;
  }

  friend bool operator==(const UGraph&, const UGraph&) = default;

 private:
  std::map<Vertex, std::set<Vertex>> adj_;
};

/// Directed graph; arcs are (parent, child).
struct Dag {
  VertexSet vertices;
  std::set<std::pair<Vertex, Vertex>> arcs;

  std::vector<Vertex> parents(Vertex v) const {
    std::vector<Vertex> out;
    for (const auto& [p, c] : arcs)
      if (c == v) out.push_back(p);
    return out;
  }
};

/// Kahn's algorithm; empty result if the graph has a cycle.
inline std::vector<Vertex> topological_order(const Dag& d) {
  std::map<Vertex, std::size_t> indeg;
  std::map<Vertex, std::vector<Vertex>> children;
  for (Vertex v : d.vertices) indeg[v] = 0;
  for (const auto& [p, c] : d.arcs) {
    ++indeg[c];
    children[p].push_back(c);
  }
  std::set<Vertex> ready;
  for (const auto& [v, n] : indeg)
    if (n == 0) ready.insert(v);
  std::vector<Vertex> out;
  while (!ready.empty()) {
    Vertex v = *ready.begin();
    ready.erase(ready.begin());
    out.push_back(v);
    for (Vertex c : children[v])
      if (--indeg[c] == 0) ready.insert(c);
  }
  if (out.size() != indeg.size()) out.clear();
  return out;
}

inline bool is_acyclic(const Dag& d) { return d.vertices.empty() || !topological_order(d).empty(); }

inline UGraph moralize(const Dag& d) {
  for (const auto& [p, c] : d.arcs)
    if (!d.vertices.count(p) || !d.vertices.count(c))
      throw StructureError("arc references an absent vertex");
  if (!is_acyclic(d)) throw StructureError("moralize: input graph has a cycle");
  UGraph g;
  for (Vertex v : d.vertices) g.add_vertex(v);
  std::map<Vertex, VertexSet> parents;
  for (const auto& [p, c] : d.arcs) {
    g.add_edge(p, c);
    parents[c].insert(p);
  }
  for (const auto& [c, ps] : parents) g.complete(ps);
  return g;
}

inline bool is_complete(const UGraph& g, const VertexSet& s) {
  for (auto i = s.begin(); i != s.end(); ++i)
    for (auto j = std::next(i); j != s.end(); ++j)
      if (!g.has_edge(*i, *j)) return false;
  return true;
}

struct EliminationStep {
  UGraph graph;
  std::set<Edge> fills;
};

inline EliminationStep eliminate(const UGraph& g, Vertex v) {
  const auto& nb = g.neighbors(v);
  EliminationStep out{g, {}};
  for (auto i = nb.begin(); i != nb.end(); ++i)
    for (auto j = std::next(i); j != nb.end(); ++j)
      if (!g.has_edge(*i, *j)) {
        out.fills.insert({*i, *j});
        out.graph.add_edge(*i, *j);
      }
  out.graph.remove_vertex(v);
  return out;
}

/// Fill edges T(G_#) produced by eliminating in `order`.
inline std::set<Edge> fill_in(const UGraph& g, std::span<const Vertex> order) {
  UGraph work = g;
  std::set<Edge> fills;
  for (Vertex v : order) {
    auto step = eliminate(work, v);
    fills.insert(step.fills.begin(), step.fills.end());
    work = std::move(step.graph);
  }
  return fills;
}

/// True iff a path a = x1, ..., xk = b exists whose interior vertices are all
/// ordered before both endpoints.  Equivalent to {a, b} in E u T(G_#).
inline bool fill_characterization_check(const UGraph& g, std::span<const Vertex> order, Vertex a,
                                        Vertex b) {
  if (a == b) throw PreconditionError("fill_characterization_check: endpoints coincide");
  std::map<Vertex, std::size_t> rank;
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = i;
  if (!rank.count(a) || !rank.count(b)) throw PreconditionError("endpoint not in elimination order");
  std::size_t bound = std::min(rank[a], rank[b]);
  std::set<Vertex> seen{a};
  std::deque<Vertex> queue{a};
  while (!queue.empty()) {
    Vertex v = queue.front();
    queue.pop_front();
    for (Vertex u : g.neighbors(v)) {
      if (u == b) return true;
      if (rank.at(u) < bound && seen.insert(u).second) queue.push_back(u);
    }
  }
  return false;
}

enum class Heuristic { MinFill, MinWeight, GivenOrder };

inline std::string to_string(Heuristic h) {
  switch (h) {
    case Heuristic::MinFill: return "min-fill";
    case Heuristic::MinWeight: return "min-weight";
    case Heuristic::GivenOrder: return "given-order";
  }
  return "?";
}

inline Heuristic parse_heuristic(const std::string& s) {
  if (s == "min-fill") return Heuristic::MinFill;
  if (s == "min-weight") return Heuristic::MinWeight;
  if (s == "given-order") return Heuristic::GivenOrder;
  throw PreconditionError("unknown triangulation heuristic '" + s + "'");
}

struct Triangulation {
  std::set<Edge> fill_edges;       ///< includes interface_edges
  std::set<Edge> interface_edges;  ///< edges added to complete block interfaces
  std::vector<Vertex> order;
  std::vector<VertexSet> cliques;  ///< maximal cliques in creation order
};

namespace detail {

/// Eliminate one vertex from `work`, recording fills and the clique it forms.
inline void eliminate_into(std::map<Vertex, std::set<Vertex>>& work, Vertex v, std::set<Edge>& fills,
                           std::vector<VertexSet>& cliques) {
  const std::set<Vertex> nb = work.at(v);
  for (auto i = nb.begin(); i != nb.end(); ++i)
    for (auto j = std::next(i); j != nb.end(); ++j)
      if (!work[*i].count(*j)) {
        work[*i].insert(*j);
        work[*j].insert(*i);
        fills.insert({*i, *j});
      }
  for (Vertex u : nb) work[u].erase(v);
  work.erase(v);
  VertexSet c = nb;
  c.insert(v);
  for (const auto& k : cliques)
    if (is_subset(c, k)) return;
  cliques.push_back(std::move(c));
}

inline std::size_t fill_count(const std::map<Vertex, std::set<Vertex>>& work, Vertex v) {
  const auto& nb = work.at(v);
  std::size_t n = 0;
  for (auto i = nb.begin(); i != nb.end(); ++i)
    for (auto j = std::next(i); j != nb.end(); ++j)
      if (!work.at(*i).count(*j)) ++n;
  return n;
}

inline double clique_weight(const std::map<Vertex, std::set<Vertex>>& work, Vertex v,
                            const std::map<Vertex, double>& weights) {
  auto w = [&](Vertex u) {
    auto it = weights.find(u);
    return it == weights.end() ? 1.0 : it->second;
  };
  double p = w(v);
  for (Vertex u : work.at(v)) p *= w(u);
  return p;
}

}  // namespace detail

/// Constrained triangulation: blocks are eliminated strictly in the given
/// order.  Before elimination, the interface of every block (its vertices
/// adjacent to earlier blocks) is completed, so each block boundary ends up
/// a complete separator.  `prefix` fixes the elimination order of a set of
/// leading blocks (or of everything, for GivenOrder); remaining vertices are
/// chosen greedily.
inline Triangulation triangulate_constrained(const UGraph& g, const std::vector<std::vector<Vertex>>& blocks,
                                             Heuristic heuristic, const std::map<Vertex, double>& weights,
                                             std::span<const Vertex> prefix = {}) {
  std::map<Vertex, std::size_t> block_of;
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (Vertex v : blocks[b]) {
      if (!g.has_vertex(v)) throw PreconditionError("block vertex " + std::to_string(v) + " not in graph");
      if (!block_of.emplace(v, b).second) throw PreconditionError("blocks overlap at vertex " + std::to_string(v));
    }
  if (block_of.size() != g.num_vertices()) throw PreconditionError("blocks do not cover the vertex set");
  if (heuristic == Heuristic::GivenOrder && prefix.size() != g.num_vertices())
    throw PreconditionError("given-order heuristic requires a complete order");

  // The prefix must be a sequence of whole leading blocks in block order.
  std::size_t prefix_blocks = 0;
  {
    std::size_t covered = 0;
    std::size_t last = 0;
    std::set<Vertex> seen;
    for (Vertex v : prefix) {
      auto it = block_of.find(v);
      if (it == block_of.end() || !seen.insert(v).second) throw PreconditionError("invalid prefix order");
      if (it->second < last) throw PreconditionError("order does not respect the block constraint");
      last = it->second;
    }
    while (prefix_blocks < blocks.size() && covered < prefix.size()) covered += blocks[prefix_blocks++].size();
    if (covered != prefix.size()) throw PreconditionError("prefix order must cover whole leading blocks");
    for (std::size_t b = 0; b < prefix_blocks; ++b)
      for (Vertex v : blocks[b])
        if (!seen.count(v)) throw PreconditionError("prefix order must cover whole leading blocks");
  }

  std::map<Vertex, std::set<Vertex>> work;
  for (Vertex v : g.vertices()) work[v] = g.neighbors(v);

  Triangulation out;
  for (std::size_t b = 1; b < blocks.size(); ++b) {
    VertexSet iface;
    for (Vertex v : blocks[b])
      for (Vertex u : work[v])
        if (block_of[u] < b && g.has_edge(u, v)) iface.insert(v);
    for (auto i = iface.begin(); i != iface.end(); ++i)
      for (auto j = std::next(i); j != iface.end(); ++j)
        if (!work[*i].count(*j)) {
          work[*i].insert(*j);
          work[*j].insert(*i);
          out.interface_edges.insert({*i, *j});
        }
  }
  out.fill_edges = out.interface_edges;

  for (Vertex v : prefix) {
    out.order.push_back(v);
    detail::eliminate_into(work, v, out.fill_edges, out.cliques);
  }
  for (std::size_t b = prefix_blocks; b < blocks.size(); ++b) {
    std::set<Vertex> remaining(blocks[b].begin(), blocks[b].end());
    while (!remaining.empty()) {
      Vertex best = *remaining.begin();
      double best_w = 0;
      std::size_t best_f = 0;
      bool first = true;
      for (Vertex v : remaining) {
        double w = detail::clique_weight(work, v, weights);
        std::size_t f = detail::fill_count(work, v);
        bool better;
        if (first) {
          better = true;
        } else if (heuristic == Heuristic::MinFill) {
          better = f < best_f || (f == best_f && w < best_w);
        } else {
          better = w < best_w || (w == best_w && f < best_f);
        }
        if (better) {
          best = v;
          best_w = w;
          best_f = f;
          first = false;
        }
      }
      remaining.erase(best);
      out.order.push_back(best);
      detail::eliminate_into(work, best, out.fill_edges, out.cliques);
    }
  }
  return out;
}

/// Maximal cliques of a triangulated graph in elimination-creation order.
/// Throws if `order` is not perfect for `g`.
inline std::vector<VertexSet> maximal_cliques(const UGraph& g, std::span<const Vertex> order) {
  if (order.size() != g.num_vertices()) throw PreconditionError("order does not cover the graph");
  std::map<Vertex, std::set<Vertex>> work;
  for (Vertex v : g.vertices()) work[v] = g.neighbors(v);
  std::set<Edge> fills;
  std::vector<VertexSet> cliques;
  for (Vertex v : order) {
    if (!work.count(v)) throw PreconditionError("order repeats or misses vertices");
    detail::eliminate_into(work, v, fills, cliques);
    if (!fills.empty()) throw StructureError("elimination order is not perfect");
  }
  return cliques;
}

/// Maximum cardinality search; true iff the graph is chordal.
inline bool is_triangulated(const UGraph& g) {
  std::map<Vertex, std::size_t> label;
  for (Vertex v : g.vertices()) label[v] = 0;
  std::vector<Vertex> visit;
  std::set<Vertex> numbered;
  while (visit.size() < g.num_vertices()) {
    Vertex best = 0;
    std::size_t best_l = 0;
    bool found = false;
    for (const auto& [v, l] : label)
      if (!numbered.count(v) && (!found || l > best_l)) {
        best = v;
        best_l = l;
        found = true;
      }
    numbered.insert(best);
    visit.push_back(best);
    for (Vertex u : g.neighbors(best))
      if (!numbered.count(u)) ++label[u];
  }
  std::reverse(visit.begin(), visit.end());
  return fill_in(g, visit).empty();
}

}  // namespace dpn
