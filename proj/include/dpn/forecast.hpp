#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dpn/core.hpp"
#include "dpn/jtree.hpp"
#include "dpn/model.hpp"
#include "dpn/potential.hpp"
#include "dpn/window.hpp"

namespace dpn {

enum class ForecastMethod { Exact, MonteCarlo, Linear };

inline std::string to_string(ForecastMethod m) {
  switch (m) {
    case ForecastMethod::Exact: return "exact";
    case ForecastMethod::MonteCarlo: return "mc";
    case ForecastMethod::Linear: return "linear";
  }
  return "?";
}

inline ForecastMethod parse_forecast_method(const std::string& s) {
  if (s == "exact") return ForecastMethod::Exact;
  if (s == "mc" || s == "monte-carlo") return ForecastMethod::MonteCarlo;
  if (s == "linear") return ForecastMethod::Linear;
  throw PreconditionError("unknown forecast method '" + s + "' (expected exact, mc or linear)");
}

struct ForecastTarget {
  std::size_t offset = 1;  ///< slices past the newest window slice
  VarId var = 0;
};

struct ForecastQuery {
  std::size_t horizon = 1;
  std::vector<ForecastTarget> targets;  ///< empty: every variable at every offset
  ForecastMethod method = ForecastMethod::Exact;
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
};

struct ForecastDistribution {
  ForecastTarget target;
  std::size_t t = 0;
  std::vector<double> p;
  std::vector<double> std_error;  ///< Monte Carlo only
};

struct ForecastResult {
  ForecastMethod method = ForecastMethod::Exact;
  bool approximate = false;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::string generator;
  std::vector<ForecastDistribution> items;
};

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so trajectories are independent substreams.
class CounterRng {
 public:
  static constexpr const char* name = "splitmix64-counter/1";

  CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(mix(seed ^ mix(stream + 0x632BE59BD9B4E019ULL))) {}

  std::uint64_t next() { return mix(key_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

namespace detail {

inline std::vector<ForecastTarget> resolve_targets(const Window& w, const ForecastQuery& q) {
  if (q.horizon == 0) throw PreconditionError("forecast horizon must be at least 1");
  if (q.method == ForecastMethod::MonteCarlo && q.samples == 0)
    throw PreconditionError("Monte Carlo forecasting needs at least one sample");
  if (!w.calibrated()) throw PreconditionError("forecasting requires a calibrated window; propagate first");
  std::vector<ForecastTarget> out = q.targets;
  if (out.empty())
    for (std::size_t k = 1; k <= q.horizon; ++k)
      for (VarId v = 0; v < w.model().var_count(); ++v) out.push_back({k, v});
  for (const auto& t : out) {
    if (t.offset == 0 || t.offset > q.horizon)
      throw PreconditionError("forecast target offset " + std::to_string(t.offset) + " is outside 1.." +
                              std::to_string(q.horizon));
    if (t.var >= w.model().var_count()) throw PreconditionError("unknown forecast variable id");
  }
  return out;
}

inline std::size_t draw(const std::vector<double>& cumulative, double u) {
  double x = u * cumulative.back();
  for (std::size_t i = 0; i < cumulative.size(); ++i)
    if (x < cumulative[i]) return i;
  // Rounding put x at the top: take the last state with mass.
  for (std::size_t i = cumulative.size(); i-- > 1;)
    if (cumulative[i] > cumulative[i - 1]) return i;
  return 0;
}

/// Forward sampler over a calibrated tree: the root clique joint first,
/// then each clique conditioned on what its parent already fixed.
class TreeSampler {
 public:
  TreeSampler(const JunctionTree& t, const VertexSet& wanted) : tree_(t) {
    auto [parent, pre] = t.rooted(0);
    (void)parent;
    VertexSet covered;
    // A pre-order prefix is a subtree whose cliques each meet the earlier
    // ones only in the sepset to their parent.
    for (std::size_t c : pre) {
      order_.push_back(c);
      for (Vertex v : t.clique(c).vars) covered.insert(v);
      if (is_subset(wanted, covered)) break;
    }
  }

  void sample(CounterRng& rng, std::map<Vertex, std::size_t>& out) const {
    out.clear();
    for (std::size_t c : order_) {
      const PotentialTable& tab = tree_.clique(c).table;
      const Domain& dom = tab.domain();
      auto strides = tab.strides();
      std::vector<double> cum(tab.size());
      double acc = 0.0;
      for (std::size_t i = 0; i < tab.size(); ++i) {
        bool ok = true;
        for (std::size_t d = 0; d < dom.size() && ok; ++d) {
          auto it = out.find(dom[d].id);
          if (it != out.end() && (i / strides[d]) % dom[d].card != it->second) ok = false;
        }
        if (ok) acc += tab[i];
        cum[i] = acc;
      }
      if (!(acc > 0.0)) throw ZeroMassError("sampling from a zero-mass clique");
      std::size_t idx = draw(cum, rng.uniform());
      for (std::size_t d = 0; d < dom.size(); ++d) out[dom[d].id] = (idx / strides[d]) % dom[d].card;
    }
  }

 private:
  const JunctionTree& tree_;
  std::vector<std::size_t> order_;
};

}  // namespace detail

/// Expand a copy of the window by the horizon and read the targets.
inline ForecastResult forecast_exact(const Window& w, const ForecastQuery& q) {
  auto targets = detail::resolve_targets(w, q);
  Window copy = w;
  copy.expand(q.horizon);
  copy.propagate();
  ForecastResult r;
  r.method = ForecastMethod::Exact;
  for (const auto& t : targets) {
    std::size_t slice = w.t_high() + t.offset;
    r.items.push_back({t, slice, copy.marginal(slice, t.var).values(), {}});
  }
  return r;
}

/// Ancestral sampling of the horizon slices, seeded by joint samples of the
/// newest window slice's temporal parents.
inline ForecastResult forecast_mc(const Window& w, const ForecastQuery& q) {
  auto targets = detail::resolve_targets(w, q);
  const DpnModel& m = w.model();
  const TransitionSpec& spec = m.transition;
  const std::size_t nvar = m.var_count();
  const std::size_t t0 = w.t_high();

  VertexSet boundary;
  for (const auto& e : spec.temporal_edges) boundary.insert(m.vertex(t0, e.from));

  // Boundary distribution: one clique's joint when possible.
  std::optional<PotentialTable> joint;
  std::vector<double> joint_cum;
  std::optional<detail::TreeSampler> sampler;
  if (!boundary.empty()) {
    if (w.tree().smallest_containing(boundary)) {
      joint = w.tree().query_marginal(boundary);
      double acc = 0.0;
      for (double p : joint->values()) joint_cum.push_back(acc += p);
    } else {
      sampler.emplace(w.tree(), boundary);
    }
  }

  struct Step {
    VarId var;
    std::vector<ParentRef> parents;
    std::vector<std::size_t> parent_cards;
    const std::vector<double>* table;
    std::size_t card;
  };
  std::vector<Step> steps;
  for (VarId v : slice_topological_order(spec.slice)) {
    const Cpt* c = spec.slice.cpt_for(v);
    Step s{v, c->parents, {}, &c->table, m.card(v)};
    for (const auto& p : c->parents) s.parent_cards.push_back(m.card(p.var));
    steps.push_back(std::move(s));
  }

  std::vector<std::vector<std::vector<std::size_t>>> counts(q.horizon + 1,
                                                           std::vector<std::vector<std::size_t>>(nvar));
  for (const auto& t : targets) counts[t.offset][t.var].assign(m.card(t.var), 0);

  std::vector<std::size_t> prev(nvar, 0), cur(nvar, 0);
  std::map<Vertex, std::size_t> assignment;
  for (std::size_t n = 0; n < q.samples; ++n) {
    CounterRng rng(q.seed, n);
    if (joint) {
      std::size_t idx = detail::draw(joint_cum, rng.uniform());
      const Domain& dom = joint->domain();
      auto strides = joint->strides();
      for (std::size_t d = 0; d < dom.size(); ++d) prev[m.var_of(dom[d].id)] = (idx / strides[d]) % dom[d].card;
    } else if (sampler) {
      sampler->sample(rng, assignment);
      for (Vertex v : boundary) prev[m.var_of(v)] = assignment.at(v);
    }
    for (std::size_t k = 1; k <= q.horizon; ++k) {
      for (const auto& s : steps) {
        std::size_t row = 0;
        for (std::size_t i = 0; i < s.parents.size(); ++i)
          row = row * s.parent_cards[i] + (s.parents[i].lag ? prev[s.parents[i].var] : cur[s.parents[i].var]);
        const double* probs = s.table->data() + row * s.card;
        double u = rng.uniform(), acc = 0.0;
        std::size_t pick = s.card - 1;
        for (std::size_t x = 0; x < s.card; ++x) {
          acc += probs[x];
          if (u < acc) {
            pick = x;
            break;
          }
        }
        cur[s.var] = pick;
      }
      for (VarId v = 0; v < nvar; ++v)
        if (!counts[k][v].empty()) ++counts[k][v][cur[v]];
      std::swap(prev, cur);
    }
  }

  ForecastResult r;
  r.method = ForecastMethod::MonteCarlo;
  r.approximate = true;
  r.samples = q.samples;
  r.seed = q.seed;
  r.generator = CounterRng::name;
  const double total = static_cast<double>(q.samples);
  for (const auto& t : targets) {
    ForecastDistribution d{t, t0 + t.offset, {}, {}};
    for (std::size_t c : counts[t.offset][t.var]) {
      double p = static_cast<double>(c) / total;
      d.p.push_back(p);
      d.std_error.push_back(std::sqrt(p * (1.0 - p) / total));
    }
    r.items.push_back(std::move(d));
  }
  return r;
}

/// Propagate per-variable marginals through the template, treating every
/// variable's parents as independent.
inline ForecastResult forecast_linear(const Window& w, const ForecastQuery& q) {
  auto targets = detail::resolve_targets(w, q);
  const DpnModel& m = w.model();
  const TransitionSpec& spec = m.transition;
  const std::size_t nvar = m.var_count();
  const std::size_t t0 = w.t_high();

  std::vector<std::vector<double>> prev(nvar), cur(nvar);
  for (VarId v = 0; v < nvar; ++v) prev[v] = w.marginal(t0, v).values();
  std::vector<std::vector<std::vector<double>>> at(q.horizon + 1);
  auto order = slice_topological_order(spec.slice);
  for (std::size_t k = 1; k <= q.horizon; ++k) {
    for (VarId v : order) {
      const Cpt* c = spec.slice.cpt_for(v);
      std::size_t card = m.card(v);
      std::vector<double> out(card, 0.0);
      std::size_t rows = c->table.size() / card;
      for (std::size_t row = 0; row < rows; ++row) {
        double weight = 1.0;
        std::size_t rest = row;
        for (std::size_t i = c->parents.size(); i-- > 0;) {
          const auto& p = c->parents[i];
          std::size_t pc = m.card(p.var);
          weight *= (p.lag ? prev : cur)[p.var][rest % pc];
          rest /= pc;
        }
        if (weight == 0.0) continue;
        for (std::size_t x = 0; x < card; ++x) out[x] += weight * c->table[row * card + x];
      }
      cur[v] = std::move(out);
    }
    at[k] = cur;
    std::swap(prev, cur);
  }

  ForecastResult r;
  r.method = ForecastMethod::Linear;
  r.approximate = true;
  for (const auto& t : targets) r.items.push_back({t, t0 + t.offset, at[t.offset][t.var], {}});
  return r;
}

inline ForecastResult forecast(const Window& w, const ForecastQuery& q) {
  switch (q.method) {
    case ForecastMethod::Exact: return forecast_exact(w, q);
    case ForecastMethod::MonteCarlo: return forecast_mc(w, q);
    case ForecastMethod::Linear: return forecast_linear(w, q);
  }
  throw PreconditionError("unknown forecast method");
}

}  // namespace dpn
