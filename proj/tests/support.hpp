#pragma once

// Test-only oracles.  None of them use the library's table algebra or graph
// code: factors here carry their own indexing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "dpn/forecast.hpp"
#include "dpn/graph.hpp"
#include "dpn/jtree.hpp"
#include "dpn/model.hpp"
#include "dpn/potential.hpp"
#include "dpn/smooth.hpp"
#include "dpn/window.hpp"

namespace oracle {

using dpn::Finding;
using dpn::Vertex;

/// Factor with first variable slowest.
struct Factor {
  std::vector<Vertex> vars;
  std::vector<std::size_t> cards;
  std::vector<double> vals;

  std::size_t size() const {
    std::size_t n = 1;
    for (auto c : cards) n *= c;
    return n;
  }
  std::size_t index(const std::map<Vertex, std::size_t>& a) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < vars.size(); ++i) idx = idx * cards[i] + a.at(vars[i]);
    return idx;
  }
  double at(const std::map<Vertex, std::size_t>& a) const { return vals[index(a)]; }
};

inline std::vector<std::size_t> decode(std::size_t idx, const std::vector<std::size_t>& cards) {
  std::vector<std::size_t> s(cards.size());
  for (std::size_t i = cards.size(); i-- > 0;) {
    s[i] = idx % cards[i];
    idx /= cards[i];
  }
  return s;
}

inline Factor evidence_factor(Vertex v, std::size_t card, const Finding& f) {
  Factor e{{v}, {card}, std::vector<double>(card)};
  for (std::size_t s = 0; s < card; ++s) e.vals[s] = f.weight(s);
  return e;
}

inline Factor product(const Factor& a, const Factor& b) {
  Factor out;
  out.vars = a.vars;
  out.cards = a.cards;
  for (std::size_t i = 0; i < b.vars.size(); ++i)
    if (std::find(out.vars.begin(), out.vars.end(), b.vars[i]) == out.vars.end()) {
      out.vars.push_back(b.vars[i]);
      out.cards.push_back(b.cards[i]);
    }
  out.vals.resize(out.size());
  std::map<Vertex, std::size_t> asg;
  for (std::size_t i = 0; i < out.vals.size(); ++i) {
    auto s = decode(i, out.cards);
    for (std::size_t k = 0; k < s.size(); ++k) asg[out.vars[k]] = s[k];
    out.vals[i] = a.at(asg) * b.at(asg);
  }
  return out;
}

inline Factor sum_out(const Factor& a, Vertex v) {
  Factor out;
  for (std::size_t i = 0; i < a.vars.size(); ++i)
    if (a.vars[i] != v) {
      out.vars.push_back(a.vars[i]);
      out.cards.push_back(a.cards[i]);
    }
  out.vals.assign(out.size(), 0.0);
  std::map<Vertex, std::size_t> asg;
  for (std::size_t i = 0; i < a.vals.size(); ++i) {
    auto s = decode(i, a.cards);
    for (std::size_t k = 0; k < s.size(); ++k) asg[a.vars[k]] = s[k];
    out.vals[out.vars.empty() ? 0 : out.index(asg)] += a.vals[i];
  }
  return out;
}

/// Variable elimination: unnormalized marginal over `target` (or the total
/// mass when target is absent), eliminating the cheapest variable first.
inline Factor eliminate_all_but(std::vector<Factor> fs, std::optional<Vertex> target) {
  for (;;) {
    std::map<Vertex, std::set<Vertex>> nb;
    for (const auto& f : fs)
      for (Vertex v : f.vars) {
        auto& s = nb[v];
        for (Vertex u : f.vars)
          if (u != v) s.insert(u);
      }
    std::optional<Vertex> pick;
    std::size_t best = 0;
    for (const auto& [v, s] : nb) {
      if (target && v == *target) continue;
      if (!pick || s.size() < best) {
        pick = v;
        best = s.size();
      }
    }
    if (!pick) break;
    Factor acc{{}, {}, {1.0}};
    std::vector<Factor> rest;
    for (auto& f : fs) {
      if (std::find(f.vars.begin(), f.vars.end(), *pick) != f.vars.end())
        acc = product(acc, f);
      else
        rest.push_back(std::move(f));
    }
    rest.push_back(sum_out(acc, *pick));
    fs = std::move(rest);
  }
  Factor acc{{}, {}, {1.0}};
  for (const auto& f : fs) acc = product(acc, f);
  return acc;
}

struct Posterior {
  std::vector<double> p;
  double mass = 0.0;
};

inline Posterior posterior(const std::vector<Factor>& fs, Vertex v) {
  Factor m = eliminate_all_but(fs, v);
  Posterior out;
  out.mass = std::accumulate(m.vals.begin(), m.vals.end(), 0.0);
  for (double x : m.vals) out.p.push_back(x / out.mass);
  return out;
}

inline double evidence_mass(const std::vector<Factor>& fs) {
  Factor m = eliminate_all_but(fs, std::nullopt);
  return std::accumulate(m.vals.begin(), m.vals.end(), 0.0);
}

// ---------------------------------------------------------------- static nets

struct StaticNet {
  std::vector<std::size_t> cards;
  std::vector<std::vector<Vertex>> parents;  ///< per child, in table order
  std::vector<Factor> cpts;                  ///< vars = parents..., child
};

inline std::vector<double> random_cpt(std::mt19937_64& rng, std::size_t rows, std::size_t card,
                                      double zero_prob = 0.0) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<double> t(rows * card);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t k = 0; k < card; ++k) {
      double x = (k > 0 && coin(rng) < zero_prob) ? 0.0 : u(rng);
      t[r * card + k] = x;
      sum += x;
    }
    for (std::size_t k = 0; k < card; ++k) t[r * card + k] /= sum;
  }
  return t;
}

inline StaticNet random_static(std::mt19937_64& rng, std::size_t n, double edge_prob = 0.4) {
  StaticNet net;
  std::uniform_int_distribution<std::size_t> card(2, 3);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<Vertex> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  net.cards.resize(n);
  for (auto& c : net.cards) c = card(rng);
  net.parents.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (net.parents[perm[i]].size() < 3 && coin(rng) < edge_prob) net.parents[perm[i]].push_back(perm[j]);
  for (Vertex v = 0; v < n; ++v) {
    Factor f;
    std::size_t rows = 1;
    for (Vertex p : net.parents[v]) {
      f.vars.push_back(p);
      f.cards.push_back(net.cards[p]);
      rows *= net.cards[p];
    }
    f.vars.push_back(v);
    f.cards.push_back(net.cards[v]);
    f.vals = random_cpt(rng, rows, net.cards[v]);
    net.cpts.push_back(std::move(f));
  }
  return net;
}

/// Posterior marginals and evidence mass by full joint enumeration.
inline std::pair<std::vector<std::vector<double>>, double> enumerate(const StaticNet& net,
                                                                    const std::map<Vertex, Finding>& ev) {
  const std::size_t n = net.cards.size();
  std::vector<std::vector<double>> acc(n);
  for (std::size_t v = 0; v < n; ++v) acc[v].assign(net.cards[v], 0.0);
  std::size_t total = 1;
  for (auto c : net.cards) total *= c;
  double mass = 0.0;
  std::map<Vertex, std::size_t> asg;
  for (std::size_t i = 0; i < total; ++i) {
    auto s = decode(i, net.cards);
    for (std::size_t k = 0; k < n; ++k) asg[k] = s[k];
    double p = 1.0;
    for (const auto& f : net.cpts) p *= f.at(asg);
    for (const auto& [v, f] : ev) p *= f.weight(asg[v]);
    mass += p;
    for (std::size_t k = 0; k < n; ++k) acc[k][s[k]] += p;
  }
  for (auto& a : acc)
    for (double& x : a) x /= mass;
  return {acc, mass};
}

/// The library's junction-tree path for a static network.
inline dpn::JunctionTree compile_static(const StaticNet& net, dpn::Heuristic h = dpn::Heuristic::MinFill) {
  dpn::Dag d;
  std::map<Vertex, std::size_t> cards;
  std::map<Vertex, double> weights;
  std::vector<Vertex> block;
  for (Vertex v = 0; v < net.cards.size(); ++v) {
    d.vertices.insert(v);
    cards[v] = net.cards[v];
    weights[v] = static_cast<double>(net.cards[v]);
    block.push_back(v);
    for (Vertex p : net.parents[v]) d.arcs.insert({p, v});
  }
  auto g = dpn::moralize(d);
  auto tri = dpn::triangulate_constrained(g, {block}, h, weights);
  auto t = dpn::build_tree(tri.cliques, cards);
  for (const auto& f : net.cpts) {
    dpn::Domain dom;
    for (std::size_t i = 0; i < f.vars.size(); ++i) dom.push_back({f.vars[i], f.cards[i]});
    t.attach(dpn::PotentialTable(dom, f.vals));
  }
  return t;
}

// --------------------------------------------------------------- DBN models

inline std::shared_ptr<const dpn::DpnModel> make_hmm() {
  using namespace dpn;
  DpnModel m;
  m.variables = {{"x", {"s0", "s1"}}, {"y", {"o0", "o1"}}};
  m.initial.variables = {0, 1};
  m.initial.intra_edges = {{0, 1}};
  m.initial.cpts = {{0, {}, {0.5, 0.5}}, {1, {{0, 0}}, {0.9, 0.1, 0.2, 0.8}}};
  m.transition.slice.variables = {0, 1};
  m.transition.slice.intra_edges = {{0, 1}};
  m.transition.slice.cpts = {{0, {{0, 1}}, {0.7, 0.3, 0.3, 0.7}}, {1, {{0, 0}}, {0.9, 0.1, 0.2, 0.8}}};
  m.transition.temporal_edges = {{0, 0, 1}};
  return std::make_shared<const DpnModel>(std::move(m));
}

inline const double kTrans[2][2] = {{0.7, 0.3}, {0.3, 0.7}};
inline const double kEmit[2][2] = {{0.9, 0.1}, {0.2, 0.8}};

/// Filtered P(x_t | y_0..t) for every t.
inline std::vector<std::array<double, 2>> hmm_forward(const std::vector<int>& obs) {
  std::vector<std::array<double, 2>> out;
  std::array<double, 2> a{0.5, 0.5};
  for (std::size_t t = 0; t < obs.size(); ++t) {
    if (t > 0) {
      std::array<double, 2> n{};
      for (int j = 0; j < 2; ++j) n[j] = a[0] * kTrans[0][j] + a[1] * kTrans[1][j];
      a = n;
    }
    for (int j = 0; j < 2; ++j) a[j] *= kEmit[j][obs[t]];
    double z = a[0] + a[1];
    a[0] /= z;
    a[1] /= z;
    out.push_back(a);
  }
  return out;
}

/// Smoothed P(x_t | y_0..T-1) for every t.
inline std::vector<std::array<double, 2>> hmm_forward_backward(const std::vector<int>& obs) {
  auto fwd = hmm_forward(obs);
  const std::size_t T = obs.size();
  std::vector<std::array<double, 2>> beta(T, {1.0, 1.0});
  for (std::size_t t = T - 1; t-- > 0;) {
    for (int i = 0; i < 2; ++i) {
      double s = 0.0;
      for (int j = 0; j < 2; ++j) s += kTrans[i][j] * kEmit[j][obs[t + 1]] * beta[t + 1][j];
      beta[t][i] = s;
    }
    double z = beta[t][0] + beta[t][1];
    beta[t][0] /= z;
    beta[t][1] /= z;
  }
  std::vector<std::array<double, 2>> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    double a = fwd[t][0] * beta[t][0], b = fwd[t][1] * beta[t][1];
    out[t] = {a / (a + b), b / (a + b)};
  }
  return out;
}

/// Random first-order DBN with `nvar` variables per slice.
inline std::shared_ptr<const dpn::DpnModel> random_dbn(std::mt19937_64& rng, std::size_t nvar,
                                                       double intra_prob = 0.4, double temporal_prob = 0.35,
                                                       double zero_prob = 0.0) {
  using namespace dpn;
  DpnModel m;
  std::uniform_int_distribution<std::size_t> card(2, 3);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::size_t i = 0; i < nvar; ++i) {
    Variable v;
    v.name = "v" + std::to_string(i);
    for (std::size_t s = 0, c = card(rng); s < c; ++s) v.states.push_back("s" + std::to_string(s));
    m.variables.push_back(v);
  }
  std::vector<VarId> perm(nvar);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::pair<VarId, VarId>> intra;
  for (std::size_t i = 0; i < nvar; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (coin(rng) < intra_prob) intra.push_back({perm[j], perm[i]});
  std::vector<TemporalEdge> temporal;
  for (VarId a = 0; a < nvar; ++a)
    for (VarId b = 0; b < nvar; ++b)
      if (coin(rng) < temporal_prob) temporal.push_back({a, b, 1});
  if (temporal.empty()) temporal.push_back({perm[0], perm[0], 1});

  auto build = [&](bool with_temporal) {
    SliceSpec s;
    for (VarId v = 0; v < nvar; ++v) s.variables.push_back(v);
    s.intra_edges = intra;
    for (VarId v = 0; v < nvar; ++v) {
      Cpt c;
      c.child = v;
      if (with_temporal)
        for (const auto& e : temporal)
          if (e.to == v) c.parents.push_back({e.from, 1});
      for (const auto& [p, ch] : intra)
        if (ch == v) c.parents.push_back({p, 0});
      std::size_t rows = 1;
      for (const auto& p : c.parents) rows *= m.card(p.var);
      c.table = random_cpt(rng, rows, m.card(v), zero_prob);
      s.cpts.push_back(std::move(c));
    }
    return s;
  };
  m.initial = build(false);
  m.transition.slice = build(true);
  m.transition.temporal_edges = temporal;
  return std::make_shared<const DpnModel>(std::move(m));
}

/// Factors of the unrolled network over slices [0, last].
inline std::vector<Factor> unroll_factors(const dpn::DpnModel& m, std::size_t last,
                                          const std::map<std::size_t, dpn::TransitionSpec>& overrides = {}) {
  std::vector<Factor> fs;
  for (std::size_t t = 0; t <= last; ++t) {
    const dpn::SliceSpec* s = &m.initial;
    if (t > 0) {
      auto it = overrides.find(t);
      s = it == overrides.end() ? &m.transition.slice : &it->second.slice;
    }
    for (const auto& c : s->cpts) {
      Factor f;
      for (const auto& p : c.parents) {
        f.vars.push_back(m.vertex(t - p.lag, p.var));
        f.cards.push_back(m.card(p.var));
      }
      f.vars.push_back(m.vertex(t, c.child));
      f.cards.push_back(m.card(c.child));
      f.vals = c.table;
      fs.push_back(std::move(f));
    }
  }
  return fs;
}

struct Obs {
  std::size_t t;
  dpn::VarId var;
  Finding f;
};

inline std::vector<Factor> with_evidence(const dpn::DpnModel& m, std::vector<Factor> fs, const std::vector<Obs>& obs) {
  for (const auto& o : obs) fs.push_back(evidence_factor(m.vertex(o.t, o.var), m.card(o.var), o.f));
  return fs;
}

/// Random findings: hard with probability 1/2, otherwise soft.
inline Finding random_finding(std::mt19937_64& rng, std::size_t card) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < 0.5) return Finding::hard_state(std::uniform_int_distribution<std::size_t>(0, card - 1)(rng));
  std::vector<double> w(card);
  for (auto& x : w) x = 0.1 + u(rng);
  return Finding::likelihood(w);
}

inline double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

// ----------------------------------------------------------- graph oracles

/// Maximal cliques by subset enumeration (|V| <= ~12): a complete subset is
/// maximal when no outside vertex is adjacent to all of it.
inline std::set<dpn::VertexSet> brute_maximal_cliques(const dpn::UGraph& g) {
  const dpn::VertexSet all = g.vertices();
  std::vector<Vertex> vs(all.begin(), all.end());
  const std::size_t n = vs.size();
  std::vector<std::uint32_t> adj(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && g.has_edge(vs[i], vs[j])) adj[i] |= 1u << j;
  std::set<dpn::VertexSet> out;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    bool complete = true;
    for (std::size_t i = 0; i < n && complete; ++i)
      if ((mask >> i & 1) && (adj[i] | (1u << i)) != ((adj[i] | (1u << i)) | mask)) complete = false;
    if (!complete) continue;
    bool maximal = true;
    for (std::size_t i = 0; i < n && maximal; ++i)
      if (!(mask >> i & 1) && (adj[i] & mask) == mask) maximal = false;
    if (!maximal) continue;
    dpn::VertexSet s;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) s.insert(vs[i]);
    out.insert(s);
  }
  return out;
}

/// Fills of eliminating `order` on `g`, computed with adjacency bitmasks.
inline std::size_t brute_fill_count(const dpn::UGraph& g, const std::vector<Vertex>& order) {
  std::map<Vertex, std::size_t> idx;
  for (std::size_t i = 0; i < order.size(); ++i) idx[order[i]] = i;
  std::vector<std::uint32_t> adj(order.size(), 0);
  for (const auto& [a, b] : g.edges()) {
    adj[idx[a]] |= 1u << idx[b];
    adj[idx[b]] |= 1u << idx[a];
  }
  std::size_t fills = 0;
  std::uint32_t alive = (order.size() == 32) ? ~0u : ((1u << order.size()) - 1);
  for (std::size_t i = 0; i < order.size(); ++i) {
    alive &= ~(1u << i);
    std::uint32_t nb = adj[i] & alive;
    for (std::size_t a = 0; a < order.size(); ++a)
      if (nb >> a & 1)
        for (std::size_t b = a + 1; b < order.size(); ++b)
          if ((nb >> b & 1) && !(adj[a] >> b & 1)) {
            adj[a] |= 1u << b;
            adj[b] |= 1u << a;
            ++fills;
          }
  }
  return fills;
}

}  // namespace oracle
