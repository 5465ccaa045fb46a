#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "dpn/core.hpp"
#include "dpn/potential.hpp"

namespace dpn {

struct Clique {
  VertexSet vars;
  PotentialTable table;  ///< domain in ascending vertex order
};

struct Sepset {
  std::size_t a;
  std::size_t b;
  VertexSet vars;
  PotentialTable table;
};

struct JournalEntry {
  Vertex vertex;
  Finding finding;
};

struct PropagationResult {
  double normalization = 1.0;  ///< probability of all evidence absorbed so far
  double log_normalization = 0.0;
  bool calibrated = false;
};

/// Junction tree with HUGIN-style clique and sepset potentials.  The joint
/// is exp(log_mass) * prod(clique tables) / prod(sepset tables); propagation
/// rescales the tables to unit mass and accumulates the scale in log_mass.
class JunctionTree {
 public:
  JunctionTree() = default;

  /// Skeleton with unity tables.  `edges` must form a spanning tree.
  static JunctionTree from_structure(std::vector<VertexSet> cliques,
                                     const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                     const std::map<Vertex, std::size_t>& cards) {
    if (cliques.empty()) throw StructureError("junction tree needs at least one clique");
    JunctionTree t;
    t.adj_.resize(cliques.size());
    for (auto& c : cliques) {
      for (Vertex v : c) {
        auto it = cards.find(v);
        if (it == cards.end()) throw StructureError("no cardinality for vertex " + std::to_string(v));
        t.cards_[v] = it->second;
      }
      PotentialTable table = PotentialTable::unity(t.domain_of(c));
      t.cliques_.push_back({std::move(c), std::move(table)});
    }
    for (auto [a, b] : edges) {
      if (a >= t.cliques_.size() || b >= t.cliques_.size() || a == b) throw StructureError("invalid tree edge");
      VertexSet s = intersect(t.cliques_[a].vars, t.cliques_[b].vars);
      PotentialTable table = PotentialTable::unity(t.domain_of(s));
      t.adj_[a].push_back(t.sepsets_.size());
      t.adj_[b].push_back(t.sepsets_.size());
      t.sepsets_.push_back({a, b, std::move(s), std::move(table)});
    }
    if (!t.is_tree()) throw StructureError("clique edges do not form a spanning tree");
    return t;
  }

  std::size_t size() const { return cliques_.size(); }
  const std::vector<Clique>& cliques() const { return cliques_; }
  const std::vector<Sepset>& sepsets() const { return sepsets_; }
  const Clique& clique(std::size_t i) const { return cliques_.at(i); }
  const Sepset& sepset(std::size_t i) const { return sepsets_.at(i); }
  const std::vector<std::size_t>& incident(std::size_t clique) const { return adj_.at(clique); }
  const std::map<Vertex, std::size_t>& cards() const { return cards_; }
  std::size_t card(Vertex v) const { return cards_.at(v); }

  std::size_t neighbor(std::size_t sepset, std::size_t from) const {
    const auto& s = sepsets_.at(sepset);
    return s.a == from ? s.b : s.a;
  }

  Domain domain_of(const VertexSet& s) const {
    Domain d;
    for (Vertex v : s) d.push_back({v, cards_.at(v)});
    return d;
  }

  void set_clique_table(std::size_t i, const PotentialTable& t) {
    if (t.variables() != cliques_.at(i).vars) throw DomainError("table domain differs from clique");
    cliques_[i].table = canonical(t);
    calibrated_ = false;
  }

  void set_sepset_table(std::size_t i, const PotentialTable& t) {
    if (t.variables() != sepsets_.at(i).vars) throw DomainError("table domain differs from sepset");
    sepsets_[i].table = canonical(t);
    calibrated_ = false;
  }

  /// Multiply `t` into clique i (t's domain must be a subset of the clique).
  void multiply_into(std::size_t i, const PotentialTable& t) {
    if (!is_subset(t.variables(), cliques_.at(i).vars)) throw DomainError("table does not fit clique");
    cliques_[i].table = multiply(cliques_[i].table, t);
    calibrated_ = false;
  }

  /// Divide clique i by `t` (t's domain must be a subset of the clique).
  void divide_into(std::size_t i, const PotentialTable& t) {
    cliques_.at(i).table = divide(cliques_[i].table, t);
    calibrated_ = false;
  }

  /// Earliest clique containing `s`.
  std::optional<std::size_t> first_containing(const VertexSet& s) const {
    for (std::size_t i = 0; i < cliques_.size(); ++i)
      if (is_subset(s, cliques_[i].vars)) return i;
    return std::nullopt;
  }

  /// Smallest (by state space) clique containing `s`; ties go to the earliest.
  std::optional<std::size_t> smallest_containing(const VertexSet& s) const {
    std::optional<std::size_t> best;
    std::size_t best_size = 0;
    for (std::size_t i = 0; i < cliques_.size(); ++i) {
      if (!is_subset(s, cliques_[i].vars)) continue;
      std::size_t sz = cliques_[i].table.size();
      if (!best || sz < best_size) {
        best = i;
        best_size = sz;
      }
    }
    return best;
  }

  /// Multiply a table into the earliest clique containing its domain.
  std::size_t attach(const PotentialTable& t) {
    auto host = first_containing(t.variables());
    if (!host) throw StructureError("no clique contains the table domain");
    multiply_into(*host, t);
    return *host;
  }

  void enter_evidence(Vertex v, const Finding& f) {
    auto host = smallest_containing({v});
    if (!host) throw PreconditionError("evidence variable " + std::to_string(v) + " not in any clique");
    cliques_[*host].table = reduce_by_evidence(cliques_[*host].table, v, f);
    journal_.push_back({v, f});
    calibrated_ = false;
  }

  const std::vector<JournalEntry>& journal() const { return journal_; }
  void set_journal(std::vector<JournalEntry> j) { journal_ = std::move(j); }

  /// Collect to `root` (default: the latest clique) then distribute.
  PropagationResult propagate(std::optional<std::size_t> root = std::nullopt) {
    std::size_t r = root.value_or(cliques_.size() - 1);
    if (r >= cliques_.size()) throw PreconditionError("propagation root out of range");
    std::set<std::size_t> all;
    for (std::size_t i = 0; i < cliques_.size(); ++i) all.insert(i);
    run_two_phase(r, all);
    double mass = cliques_[r].table.sum();
    if (!(mass > 0.0)) throw ZeroMassError("evidence has zero probability under the model");
    for (auto& c : cliques_) scale(c.table, mass);
    for (auto& s : sepsets_) scale(s.table, mass);
    log_mass_ += std::log(mass);
    calibrated_ = true;
    journal_.clear();
    return {std::exp(log_mass_), log_mass_, true};
  }

  /// Propagate only inside a connected set of cliques, first absorbing the
  /// current messages of adjacent cliques outside it.  Exact when the rest of
  /// the tree is calibrated and unaffected by what changed inside.
  PropagationResult propagate_subtree(const std::set<std::size_t>& subtree) {
    if (subtree.empty()) throw PreconditionError("empty subtree");
    for (std::size_t i : subtree)
      if (i >= cliques_.size()) throw PreconditionError("subtree clique out of range");
    if (!connected_within(subtree)) throw PreconditionError("clique set is not a connected subtree");
    for (std::size_t i : subtree)
      for (std::size_t s : adj_[i]) {
        std::size_t j = neighbor(s, i);
        if (!subtree.count(j)) pass(j, i, s);
      }
    std::size_t r = *subtree.rbegin();
    run_two_phase(r, subtree);
    double mass = cliques_[r].table.sum();
    if (!(mass > 0.0)) throw ZeroMassError("evidence has zero probability under the model");
    journal_.clear();
    calibrated_ = check_calibration(1e-10);
    return {std::exp(log_mass_) * mass, log_mass_ + std::log(mass), calibrated_};
  }

  bool calibrated() const { return calibrated_; }
  void mark_calibrated(bool c) { calibrated_ = c; }
  double log_mass() const { return log_mass_; }
  void set_log_mass(double m) { log_mass_ = m; }

  /// Normalized marginal over `vars`, taken from the smallest containing clique.
  PotentialTable query_marginal(const VertexSet& vars) const {
    if (!calibrated_) throw PreconditionError("query on an uncalibrated junction tree");
    auto host = smallest_containing(vars);
    if (!host) throw PreconditionError("query variables are not covered by a single clique");
    return normalize(marginalize(cliques_[*host].table, vars)).first;
  }

  /// Largest disagreement between a sepset's two endpoint marginals.
  double calibration_error() const {
    double worst = 0.0;
    for (const auto& s : sepsets_) {
      auto ma = marginalize(cliques_[s.a].table, s.vars);
      auto mb = marginalize(cliques_[s.b].table, s.vars);
      double za = ma.sum(), zb = mb.sum();
      if (za <= 0.0 || zb <= 0.0) return std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < ma.size(); ++i) worst = std::max(worst, std::abs(ma[i] / za - mb[i] / zb));
    }
    return worst;
  }

  bool check_calibration(double tol = 1e-10) const { return calibration_error() <= tol; }

  bool is_tree() const {
    if (sepsets_.size() + 1 != cliques_.size()) return false;
    std::set<std::size_t> all;
    for (std::size_t i = 0; i < cliques_.size(); ++i) all.insert(i);
    return connected_within(all);
  }

  /// For every vertex, the cliques containing it form a connected subtree.
  bool has_junction_property() const {
    std::map<Vertex, std::set<std::size_t>> holders;
    for (std::size_t i = 0; i < cliques_.size(); ++i)
      for (Vertex v : cliques_[i].vars) holders[v].insert(i);
    for (const auto& [v, h] : holders)
      if (!connected_within(h)) return false;
    for (const auto& s : sepsets_)
      if (s.vars != intersect(cliques_[s.a].vars, cliques_[s.b].vars)) return false;
    return true;
  }

  bool connected_within(const std::set<std::size_t>& nodes) const {
    if (nodes.empty()) return true;
    std::set<std::size_t> seen{*nodes.begin()};
    std::vector<std::size_t> stack{*nodes.begin()};
    while (!stack.empty()) {
      std::size_t i = stack.back();
      stack.pop_back();
      for (std::size_t s : adj_[i]) {
        std::size_t j = neighbor(s, i);
        if (nodes.count(j) && seen.insert(j).second) stack.push_back(j);
      }
    }
    return seen.size() == nodes.size();
  }

  std::size_t total_table_size() const {
    std::size_t n = 0;
    for (const auto& c : cliques_) n += c.table.size();
    return n;
  }

  /// Parent of every clique when the tree is rooted at `root` (root maps to itself),
  /// plus a pre-order visiting sequence.
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> rooted(std::size_t root) const {
    std::vector<std::size_t> parent(cliques_.size(), root);
    std::vector<std::size_t> pre;
    std::vector<bool> seen(cliques_.size(), false);
    std::vector<std::size_t> stack{root};
    seen[root] = true;
    while (!stack.empty()) {
      std::size_t i = stack.back();
      stack.pop_back();
      pre.push_back(i);
      const auto& inc = adj_[i];
      for (auto it = inc.rbegin(); it != inc.rend(); ++it) {
        std::size_t j = neighbor(*it, i);
        if (!seen[j]) {
          seen[j] = true;
          parent[j] = i;
          stack.push_back(j);
        }
      }
    }
    return {parent, pre};
  }

  /// Sepset index joining two adjacent cliques.
  std::optional<std::size_t> sepset_between(std::size_t a, std::size_t b) const {
    for (std::size_t s : adj_.at(a))
      if (neighbor(s, a) == b) return s;
    return std::nullopt;
  }

  friend bool operator==(const JunctionTree& x, const JunctionTree& y) {
    if (x.cliques_.size() != y.cliques_.size() || x.sepsets_.size() != y.sepsets_.size()) return false;
    for (std::size_t i = 0; i < x.cliques_.size(); ++i)
      if (x.cliques_[i].vars != y.cliques_[i].vars || !(x.cliques_[i].table == y.cliques_[i].table)) return false;
    for (std::size_t i = 0; i < x.sepsets_.size(); ++i) {
      const auto& a = x.sepsets_[i];
      const auto& b = y.sepsets_[i];
      if (a.a != b.a || a.b != b.b || a.vars != b.vars || !(a.table == b.table)) return false;
    }
    if (x.journal_.size() != y.journal_.size()) return false;
    for (std::size_t i = 0; i < x.journal_.size(); ++i)
      if (x.journal_[i].vertex != y.journal_[i].vertex || !(x.journal_[i].finding == y.journal_[i].finding))
        return false;
    return x.cards_ == y.cards_ && x.log_mass_ == y.log_mass_ && x.calibrated_ == y.calibrated_;
  }

  /// Restore full state (used by deserialization).
  static JunctionTree restore(std::vector<Clique> cliques, std::vector<Sepset> sepsets,
                              std::map<Vertex, std::size_t> cards, std::vector<JournalEntry> journal,
                              double log_mass, bool calibrated) {
    JunctionTree t;
    t.cliques_ = std::move(cliques);
    t.sepsets_ = std::move(sepsets);
    t.cards_ = std::move(cards);
    t.journal_ = std::move(journal);
    t.log_mass_ = log_mass;
    t.calibrated_ = calibrated;
    t.adj_.assign(t.cliques_.size(), {});
    for (std::size_t s = 0; s < t.sepsets_.size(); ++s) {
      if (t.sepsets_[s].a >= t.cliques_.size() || t.sepsets_[s].b >= t.cliques_.size())
        throw StructureError("sepset references an absent clique");
      t.adj_[t.sepsets_[s].a].push_back(s);
      t.adj_[t.sepsets_[s].b].push_back(s);
    }
    if (!t.is_tree()) throw StructureError("restored cliques do not form a tree");
    return t;
  }

 private:
  static void scale(PotentialTable& t, double mass) {
    for (double& v : t.mutable_values()) v /= mass;
  }

  /// Message from clique `from` to clique `to` through sepset `s`.
  void pass(std::size_t from, std::size_t to, std::size_t s) {
    PotentialTable fresh = marginalize(cliques_[from].table, sepsets_[s].vars);
    PotentialTable ratio = divide(fresh, sepsets_[s].table);
    cliques_[to].table = multiply(cliques_[to].table, ratio);
    sepsets_[s].table = std::move(fresh);
  }

  void run_two_phase(std::size_t root, const std::set<std::size_t>& nodes) {
    // Iterative DFS restricted to `nodes`.
    std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> pre;  // (node, parent, sepset)
    std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> stack{{root, root, 0}};
    std::set<std::size_t> seen{root};
    while (!stack.empty()) {
      auto cur = stack.back();
      stack.pop_back();
      pre.push_back(cur);
      std::size_t i = std::get<0>(cur);
      for (std::size_t s : adj_[i]) {
        std::size_t j = neighbor(s, i);
        if (nodes.count(j) && seen.insert(j).second) stack.push_back({j, i, s});
      }
    }
    for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
      auto [node, parent, s] = *it;
      if (node != root) pass(node, parent, s);
    }
    for (const auto& [node, parent, s] : pre)
      if (node != root) pass(parent, node, s);
  }

  std::vector<Clique> cliques_;
  std::vector<Sepset> sepsets_;
  std::vector<std::vector<std::size_t>> adj_;
  std::map<Vertex, std::size_t> cards_;
  std::vector<JournalEntry> journal_;
  double log_mass_ = 0.0;
  bool calibrated_ = false;
};

/// Maximum-weight spanning tree over the clique intersection graph.  Weight
/// is |C n D|; ties go to the larger intersection state space, then to
/// `preferred` pairs, then to lexicographically smaller (i, j).  Pairs with
/// empty intersections join otherwise disconnected parts.
inline std::vector<std::pair<std::size_t, std::size_t>> spanning_tree_edges(
    const std::vector<VertexSet>& cliques, const std::map<Vertex, std::size_t>& cards,
    const std::set<std::pair<std::size_t, std::size_t>>& preferred = {}) {
  struct Candidate {
    std::size_t weight;
    double space;
    bool preferred;
    std::size_t i, j;
  };
  std::vector<Candidate> cand;
  for (std::size_t i = 0; i < cliques.size(); ++i)
    for (std::size_t j = i + 1; j < cliques.size(); ++j) {
      VertexSet s = intersect(cliques[i], cliques[j]);
      double space = 1.0;
      for (Vertex v : s) space *= static_cast<double>(cards.at(v));
      cand.push_back({s.size(), s.empty() ? 0.0 : space, preferred.count({i, j}) != 0, i, j});
    }
  std::stable_sort(cand.begin(), cand.end(), [](const Candidate& x, const Candidate& y) {
    if (x.weight != y.weight) return x.weight > y.weight;
    if (x.space != y.space) return x.space > y.space;
    if (x.preferred != y.preferred) return x.preferred;
    return std::tie(x.i, x.j) < std::tie(y.i, y.j);
  });
  std::vector<std::size_t> uf(cliques.size());
  std::iota(uf.begin(), uf.end(), 0);
  auto find = [&](std::size_t x) {
    while (uf[x] != x) x = uf[x] = uf[uf[x]];
    return x;
  };
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& c : cand) {
    std::size_t a = find(c.i), b = find(c.j);
    if (a == b) continue;
    uf[a] = b;
    edges.push_back({c.i, c.j});
  }
  return edges;
}

/// Junction tree over the maximal cliques of a triangulated graph, with
/// unity potentials.
inline JunctionTree build_tree(const std::vector<VertexSet>& cliques, const std::map<Vertex, std::size_t>& cards,
                               const std::set<std::pair<std::size_t, std::size_t>>& preferred = {}) {
  JunctionTree t = JunctionTree::from_structure(cliques, spanning_tree_edges(cliques, cards, preferred), cards);
  if (!t.has_junction_property()) throw StructureError("clique set admits no junction tree");
  return t;
}

/// Both trees calibrated and agreeing on the normalized marginal of `shared`.
inline bool is_jointly_calibrated(const JunctionTree& a, const JunctionTree& b, const VertexSet& shared,
                                  double tol = 1e-10) {
  auto ha = a.smallest_containing(shared);
  auto hb = b.smallest_containing(shared);
  if (!ha || !hb) throw PreconditionError("shared set is not covered by a clique of each tree");
  if (!a.check_calibration(tol) || !b.check_calibration(tol)) return false;
  auto ma = normalize(marginalize(a.clique(*ha).table, shared)).first;
  auto mb = normalize(marginalize(b.clique(*hb).table, shared)).first;
  return max_abs_diff(ma, mb) <= tol;
}

}  // namespace dpn
