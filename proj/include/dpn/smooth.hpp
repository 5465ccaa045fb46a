#pragma once

#include <cmath>
#include <cstddef>

#include "dpn/core.hpp"
#include "dpn/jtree.hpp"
#include "dpn/potential.hpp"
#include "dpn/window.hpp"

namespace dpn {

/// Cliques sharing the interface I between model n-1 and model n (1-based).
struct InterfaceCliquePair {
  std::size_t older = 0;  ///< model index n - 1
  std::size_t older_clique = 0;
  std::size_t newer = 0;  ///< model index n
  std::size_t newer_clique = 0;
  VertexSet shared;
};

inline InterfaceCliquePair interface_cliques(const ModelSeries& s, std::size_t n) {
  if (n < 2 || n > s.model_count())
    throw PreconditionError("interface cliques exist for models 2.." + std::to_string(s.model_count()) + ", got " +
                            std::to_string(n));
  const ArchivedModel& older = s.archived()[n - 2];
  InterfaceCliquePair p;
  p.older = n - 1;
  p.newer = n;
  p.older_clique = older.out_clique;
  p.shared = older.out_interface;
  if (n == s.model_count()) {
    auto c = s.window().incoming_clique();
    if (!c) throw StructureError("window has no incoming interface clique");
    p.newer_clique = *c;
  } else {
    const ArchivedModel& newer = s.archived()[n - 1];
    if (!newer.in_clique) throw StructureError("archived model has no incoming interface clique");
    p.newer_clique = *newer.in_clique;
  }
  return p;
}

namespace detail {

inline const JunctionTree& model_tree(const ModelSeries& s, std::size_t n) {
  return n == s.model_count() ? s.window().tree() : s.archived()[n - 1].smoothed;
}

inline PotentialTable interface_marginal(const JunctionTree& t, std::size_t clique, const VertexSet& shared) {
  return normalize(marginalize(t.clique(clique).table, shared)).first;
}

}  // namespace detail

/// Carry the window's evidence back to archived model n (1-based, n < N).
/// Archived models already smoothed at the current revision are skipped.
inline void smooth_to(ModelSeries& s, std::size_t n) {
  const std::size_t count = s.model_count();
  if (n < 1 || n >= count)
    throw PreconditionError("smoothing target must be an archived model 1.." + std::to_string(count - 1));
  if (!s.window().calibrated()) s.window().propagate();
  for (std::size_t i = count; i > n; --i) {
    ArchivedModel& older = s.archived()[i - 2];
    if (older.smoothed_revision == s.revision() && older.smoothed.calibrated()) continue;
    InterfaceCliquePair p = interface_cliques(s, i);
    const JunctionTree& newer = detail::model_tree(s, i);
    PotentialTable num = detail::interface_marginal(newer, p.newer_clique, p.shared);
    PotentialTable den = detail::interface_marginal(older.tree, p.older_clique, p.shared);
    older.smoothed = older.tree;
    older.smoothed.multiply_into(p.older_clique, divide(num, den));
    older.smoothed.set_log_mass(newer.log_mass());
    older.smoothed.propagate();
    older.received = std::move(num);
    older.smoothed_revision = s.revision();
  }
}

/// Posterior of (t, var) given all evidence entered so far.
inline PotentialTable query_smoothed(ModelSeries& s, std::size_t t, VarId var) {
  if (var >= s.model().var_count()) throw PreconditionError("unknown variable id " + std::to_string(var));
  std::size_t owner = s.owner_of(t);
  if (owner == s.model_count()) {
    if (!s.window().calibrated()) s.window().propagate();
    return s.window().marginal(t, var);
  }
  ArchivedModel& am = s.archived()[owner - 1];
  if (am.smoothed_revision != s.revision() || !am.smoothed.calibrated()) smooth_to(s, owner);
  return am.smoothed.query_marginal({s.model().vertex(t, var)});
}

/// Push model n's interface marginal forward into model n + 1.  Returns
/// the largest entry change of the interface marginal it replaced.
inline double transfer_forward(ModelSeries& s, std::size_t n) {
  const std::size_t count = s.model_count();
  if (n < 1 || n >= count) throw PreconditionError("forward transfer source must be an archived model");
  InterfaceCliquePair p = interface_cliques(s, n + 1);
  const ArchivedModel& older = s.archived()[n - 1];
  PotentialTable num = detail::interface_marginal(older.smoothed, p.older_clique, p.shared);
  PotentialTable den = detail::interface_marginal(detail::model_tree(s, n + 1), p.newer_clique, p.shared);
  double change = max_abs_diff(num, den);
  PotentialTable ratio = divide(num, den);
  if (n + 1 == count) {
    s.window().absorb_incoming(ratio);
  } else {
    JunctionTree& newer = s.archived()[n].smoothed;
    newer.multiply_into(p.newer_clique, ratio);
    newer.propagate();
  }
  return change;
}

}  // namespace dpn
