#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dpn/core.hpp"
#include "dpn/graph.hpp"
#include "dpn/jtree.hpp"
#include "dpn/model.hpp"
#include "dpn/potential.hpp"

namespace dpn {

struct WindowOptions {
  Heuristic heuristic = Heuristic::MinWeight;
  std::size_t cell_cap = 10'000'000;  ///< max total clique table cells
};

struct ExpansionReport {
  std::size_t first_slice = 0;
  std::size_t last_slice = 0;
  std::vector<std::size_t> surviving;  ///< new indices of cliques carried over unchanged
  std::vector<std::size_t> created;    ///< new indices of cliques that did not exist before
  std::vector<std::size_t> old_host;   ///< for each old clique, a new clique containing it
  bool old_cliques_contained = true;
  std::size_t table_cells = 0;
};

struct ReductionReport {
  std::size_t first_slice = 0;  ///< archived range
  std::size_t last_slice = 0;
  VertexSet interface;
  bool hub_created = false;     ///< a standalone interface clique joined the boundary cliques
  bool window_rebuilt = false;  ///< rewiring failed verification; spanning-tree rebuild used
  bool archive_hub = false;     ///< archived side needed an added interface clique
  bool archive_rebuilt = false;
};

/// A model cut off the window.  `tree` is frozen at reduction; `smoothed`
/// is the copy that backward smoothing updates.
struct ArchivedModel {
  std::size_t t_low = 0;
  std::size_t t_high = 0;
  JunctionTree tree;
  JunctionTree smoothed;
  std::uint64_t smoothed_revision = 0;
  VertexSet out_interface;  ///< interface of t_high + 1
  std::size_t out_clique = 0;
  VertexSet in_interface;  ///< interface of t_low (empty for the first model)
  std::optional<std::size_t> in_clique;
  std::optional<PotentialTable> received;  ///< last interface marginal received while smoothing
};

namespace detail {

inline double table_cells(const std::vector<VertexSet>& cliques, const std::map<Vertex, std::size_t>& cards) {
  double total = 0.0;
  for (const auto& c : cliques) {
    double n = 1.0;
    for (Vertex v : c) n *= static_cast<double>(cards.at(v));
    total += n;
  }
  return total;
}

inline void check_cap(double cells, std::size_t cap) {
  if (cap > 0 && cells > static_cast<double>(cap))
    throw ResourceError("junction tree would need " + std::to_string(static_cast<std::uint64_t>(cells)) +
                        " table cells, above the cap of " + std::to_string(cap) +
                        "; use the mc or linear forecast method or raise the cap");
}

struct SplitResult {
  JunctionTree window;
  JunctionTree archive;
  bool hub = false;
  bool window_rebuilt = false;
  bool archive_hub = false;
  bool archive_rebuilt = false;
};

using IndexEdge = std::pair<std::size_t, std::size_t>;

/// Fill `t`'s tables from `src`: clique tables by index map, sepset tables
/// from `kept` where given, otherwise the marginal of the first endpoint.
inline void fill_tables(JunctionTree& t, const std::vector<PotentialTable>& clique_tables,
                        const std::map<IndexEdge, PotentialTable>& kept) {
  for (std::size_t i = 0; i < t.size(); ++i) t.set_clique_table(i, clique_tables[i]);
  for (std::size_t s = 0; s < t.sepsets().size(); ++s) {
    const auto& sep = t.sepset(s);
    auto it = kept.find({std::min(sep.a, sep.b), std::max(sep.a, sep.b)});
    t.set_sepset_table(s, it != kept.end() ? it->second : marginalize(clique_tables[sep.a], sep.vars));
  }
}

/// Tree over `cliques` from the given edges if they form a junction tree,
/// otherwise from a maximum spanning tree preferring those edges.
inline JunctionTree assemble(const std::vector<VertexSet>& cliques, const std::vector<PotentialTable>& tables,
                             const std::vector<IndexEdge>& edges, const std::map<IndexEdge, PotentialTable>& kept,
                             const std::map<Vertex, std::size_t>& cards, bool& rebuilt) {
  rebuilt = false;
  try {
    JunctionTree t = JunctionTree::from_structure(cliques, edges, cards);
    if (t.has_junction_property()) {
      fill_tables(t, tables, kept);
      return t;
    }
  } catch (const StructureError&) {
  }
  rebuilt = true;
  std::set<IndexEdge> preferred;
  for (const auto& [e, table] : kept) preferred.insert(e);
  JunctionTree t = JunctionTree::from_structure(cliques, spanning_tree_edges(cliques, cards, preferred), cards);
  if (!t.has_junction_property()) throw StructureError("reduction produced no junction tree");
  std::map<IndexEdge, PotentialTable> usable;
  for (const auto& sep : t.sepsets()) {
    IndexEdge e{std::min(sep.a, sep.b), std::max(sep.a, sep.b)};
    if (auto it = kept.find(e); it != kept.end() && it->second.variables() == sep.vars) usable.insert(*it);
  }
  fill_tables(t, tables, usable);
  return t;
}

/// Cut a calibrated tree into the part meeting `eliminated` and the rest,
/// reconnecting the rest around the interface `iface`.
inline SplitResult split_tree(const JunctionTree& t, const VertexSet& eliminated, const VertexSet& iface) {
  const std::size_t n = t.size();
  std::vector<bool> old_side(n, false);
  std::vector<std::size_t> c1, c2;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& vars = t.clique(i).vars;
    old_side[i] = std::any_of(vars.begin(), vars.end(), [&](Vertex v) { return eliminated.count(v) != 0; });
    (old_side[i] ? c1 : c2).push_back(i);
  }
  if (c1.empty()) throw StructureError("no clique meets the slices to eliminate");

  std::set<std::size_t> boundary;
  for (const auto& s : t.sepsets())
    if (old_side[s.a] != old_side[s.b]) boundary.insert(old_side[s.a] ? s.b : s.a);

  auto source = t.smallest_containing(iface);
  if (!source) throw StructureError("interface is not covered by a window clique");
  PotentialTable hub_table = marginalize(t.clique(*source).table, iface);

  std::optional<std::size_t> anchor;
  for (std::size_t b : boundary) {
    if (!is_subset(iface, t.clique(b).vars)) continue;
    if (!anchor || t.clique(b).table.size() < t.clique(*anchor).table.size()) anchor = b;
  }

  SplitResult out;
  out.hub = !anchor;

  // Window side.
  {
    std::vector<VertexSet> cliques;
    std::vector<PotentialTable> tables;
    std::map<std::size_t, std::size_t> pos;
    if (out.hub) {
      cliques.push_back(iface);
      tables.push_back(hub_table);
    }
    for (std::size_t i : c2) {
      pos[i] = cliques.size();
      cliques.push_back(t.clique(i).vars);
      tables.push_back(t.clique(i).table);
    }
    std::vector<IndexEdge> edges;
    std::map<IndexEdge, PotentialTable> kept;
    for (const auto& s : t.sepsets()) {
      if (old_side[s.a] || old_side[s.b]) continue;
      IndexEdge e{std::min(pos[s.a], pos[s.b]), std::max(pos[s.a], pos[s.b])};
      edges.push_back(e);
      kept.emplace(e, s.table);
    }
    std::size_t hub_index = out.hub ? 0 : pos[*anchor];
    for (std::size_t b : boundary) {
      if (!out.hub && b == *anchor) continue;
      IndexEdge e{std::min(hub_index, pos[b]), std::max(hub_index, pos[b])};
      edges.push_back(e);
      kept.emplace(e, marginalize(t.clique(b).table, intersect(cliques[hub_index], t.clique(b).vars)));
    }
    out.window = assemble(cliques, tables, edges, kept, t.cards(), out.window_rebuilt);
    out.window.set_log_mass(t.log_mass());
    out.window.mark_calibrated(t.calibrated());
  }

  // Archived side.
  {
    std::vector<VertexSet> cliques;
    std::vector<PotentialTable> tables;
    std::map<std::size_t, std::size_t> pos;
    bool contains = false;
    for (std::size_t i : c1) {
      pos[i] = cliques.size();
      cliques.push_back(t.clique(i).vars);
      tables.push_back(t.clique(i).table);
      contains = contains || is_subset(iface, t.clique(i).vars);
    }
    std::vector<IndexEdge> edges;
    std::map<IndexEdge, PotentialTable> kept;
    for (const auto& s : t.sepsets()) {
      if (!old_side[s.a] || !old_side[s.b]) continue;
      IndexEdge e{std::min(pos[s.a], pos[s.b]), std::max(pos[s.a], pos[s.b])};
      edges.push_back(e);
      kept.emplace(e, s.table);
    }
    if (!contains) {
      out.archive_hub = true;
      cliques.push_back(iface);
      tables.push_back(hub_table);
    }
    out.archive = assemble(cliques, tables, edges, kept, t.cards(), out.archive_rebuilt);
    out.archive.set_log_mass(t.log_mass());
    out.archive.mark_calibrated(t.calibrated());
  }
  return out;
}

}  // namespace detail

/// The current model: a junction tree over slices [t_low, t_high].
///
/// Two trees with identical structure are kept.  `tree()` carries every
/// finding; the prior tree carries the information of archived slices only,
/// so window findings can be replaced or retracted by rebuilding from it.
class Window {
 public:
  static Window init(std::shared_ptr<const DpnModel> model, std::size_t width, WindowOptions opts = {}) {
    if (!model) throw PreconditionError("no model");
    auto violations = validate_model(*model);
    if (!violations.empty()) {
      std::string msg = "invalid model:";
      for (const auto& v : violations) msg += "\n  " + v;
      throw ModelError(msg);
    }
    if (width == 0) throw PreconditionError("window width must be at least 1");
    Window w;
    w.model_ = std::move(model);
    w.opts_ = opts;
    w.t_low_ = 0;
    w.t_high_ = width - 1;
    const DpnModel& m = *w.model_;

    UnrolledNetwork net = unroll(m, 0, width - 1);
    UGraph moral = moralize(net.dag);
    std::vector<Vertex> given;
    for (Vertex v : moral.vertices()) given.push_back(v);
    Triangulation tri = triangulate_constrained(moral, w.blocks(0, width - 1), opts.heuristic, weights_of(net.cards),
                                                opts.heuristic == Heuristic::GivenOrder ? std::span<const Vertex>(given)
                                                                                        : std::span<const Vertex>());
    detail::check_cap(detail::table_cells(tri.cliques, net.cards), opts.cell_cap);
    for (const auto& [a, b] : tri.fill_edges) moral.add_edge(a, b);
    w.graph_ = std::move(moral);
    w.order_ = tri.order;

    JunctionTree t = build_tree(tri.cliques, net.cards);
    for (const auto& cpt : net.cpts) t.attach(cpt);
    w.prior_ = t;
    w.tree_ = std::move(t);
    w.propagate();
    return w;
  }

  const DpnModel& model() const { return *model_; }
  std::shared_ptr<const DpnModel> model_ptr() const { return model_; }
  const WindowOptions& options() const { return opts_; }
  void set_cell_cap(std::size_t cap) { opts_.cell_cap = cap; }
  const JunctionTree& tree() const { return tree_; }
  const JunctionTree& prior_tree() const { return prior_; }
  const UGraph& graph() const { return graph_; }
  const std::vector<Vertex>& order() const { return order_; }
  std::size_t t_low() const { return t_low_; }
  std::size_t t_high() const { return t_high_; }
  std::size_t width() const { return t_high_ - t_low_ + 1; }
  bool calibrated() const { return tree_.calibrated(); }
  const std::map<Vertex, Finding>& findings() const { return findings_; }
  const std::map<std::size_t, TransitionSpec>& overrides() const { return overrides_; }

  bool contains_slice(std::size_t t) const { return t >= t_low_ && t <= t_high_; }

  const SliceSpec& slice_spec(std::size_t t) const {
    if (t == 0) return model_->initial;
    return transition_at(t).slice;
  }

  const TransitionSpec& transition_at(std::size_t t) const {
    auto it = overrides_.find(t);
    return it == overrides_.end() ? model_->transition : it->second;
  }

  VertexSet interface(std::size_t t) const {
    if (t == 0) return {};
    return interface_of(*model_, transition_at(t), t);
  }

  /// Smallest window clique containing int(t_low); absent when t_low = 0.
  std::optional<std::size_t> incoming_clique() const {
    if (t_low_ == 0) return std::nullopt;
    return tree_.smallest_containing(interface(t_low_));
  }

  /// Propagation root: the clique hosting the newest slice's interface.
  std::size_t root_clique() const {
    VertexSet iface = interface(t_high_);
    if (!iface.empty())
      if (auto c = tree_.smallest_containing(iface)) return *c;
    return tree_.size() - 1;
  }

  ExpansionReport expand(std::size_t k, const TransitionSpec* override_spec = nullptr) {
    if (k == 0) throw PreconditionError("expansion needs at least one slice");
    const DpnModel& m = *model_;
    if (override_spec) {
      auto violations = validate_transition(m, *override_spec);
      if (!violations.empty()) {
        std::string msg = "invalid slice override:";
        for (const auto& v : violations) msg += "\n  " + v;
        throw ModelError(msg);
      }
    }
    const std::size_t first = t_high_ + 1, last = t_high_ + k;
    const TransitionSpec& spec = override_spec ? *override_spec : m.transition;

    std::map<Vertex, std::size_t> cards = tree_.cards();
    UGraph hybrid = graph_;
    std::vector<PotentialTable> families;
    for (std::size_t s = first; s <= last; ++s) {
      for (VarId v : spec.slice.variables) {
        hybrid.add_vertex(m.vertex(s, v));
        cards[m.vertex(s, v)] = m.card(v);
      }
      for (const auto& c : spec.slice.cpts) {
        families.push_back(family_table(m, s, c));
        hybrid.complete(families.back().variables());
      }
    }

    std::vector<Vertex> prefix = order_;
    if (opts_.heuristic == Heuristic::GivenOrder)
      for (std::size_t s = first; s <= last; ++s)
        for (VarId v = 0; v < m.var_count(); ++v) prefix.push_back(m.vertex(s, v));
    Triangulation tri =
        triangulate_constrained(hybrid, blocks(t_low_, last), opts_.heuristic, weights_of(cards), prefix);
    double cells = detail::table_cells(tri.cliques, cards);
    detail::check_cap(cells, opts_.cell_cap);

    ExpansionReport rep;
    rep.first_slice = first;
    rep.last_slice = last;
    rep.table_cells = static_cast<std::size_t>(cells);

    const auto& old = tree_.cliques();
    std::map<VertexSet, std::size_t> new_index;
    for (std::size_t j = 0; j < tri.cliques.size(); ++j) new_index[tri.cliques[j]] = j;
    std::vector<std::optional<std::size_t>> same(old.size());
    rep.old_host.assign(old.size(), 0);
    for (std::size_t i = 0; i < old.size(); ++i) {
      if (auto it = new_index.find(old[i].vars); it != new_index.end()) same[i] = it->second;
      std::optional<std::size_t> host;
      for (std::size_t j = 0; j < tri.cliques.size() && !host; ++j)
        if (is_subset(old[i].vars, tri.cliques[j])) host = j;
      if (!host) throw StructureError("an old clique is not contained in any new clique");
      rep.old_host[i] = *host;
    }
    std::set<std::size_t> surviving;
    for (const auto& s : same)
      if (s) surviving.insert(*s);
    for (std::size_t j = 0; j < tri.cliques.size(); ++j) (surviving.count(j) ? rep.surviving : rep.created).push_back(j);

    std::set<std::pair<std::size_t, std::size_t>> preferred;
    for (const auto& s : tree_.sepsets())
      if (same[s.a] && same[s.b]) preferred.insert({std::min(*same[s.a], *same[s.b]), std::max(*same[s.a], *same[s.b])});
    JunctionTree skeleton = JunctionTree::from_structure(
        tri.cliques, spanning_tree_edges(tri.cliques, cards, preferred), cards);
    if (!skeleton.has_junction_property()) throw StructureError("expanded clique set admits no junction tree");

    bool touched_survivor = false;
    auto fold = [&](const JunctionTree& src) {
      JunctionTree nt = skeleton;
      for (std::size_t i = 0; i < old.size(); ++i)
        if (same[i]) nt.set_clique_table(*same[i], src.clique(i).table);
      for (std::size_t i = 0; i < old.size(); ++i)
        if (!same[i]) nt.multiply_into(rep.old_host[i], src.clique(i).table);
      for (const auto& s : src.sepsets()) {
        if (same[s.a] && same[s.b]) {
          if (auto ns = nt.sepset_between(*same[s.a], *same[s.b])) {
            nt.set_sepset_table(*ns, s.table);
            continue;
          }
        }
        std::size_t target;
        if (!same[s.b]) {
          target = rep.old_host[s.b];
        } else if (!same[s.a]) {
          target = rep.old_host[s.a];
        } else {
          target = *same[s.a];
          touched_survivor = true;
        }
        nt.divide_into(target, s.table);
      }
      for (const auto& f : families) nt.attach(f);
      nt.set_log_mass(src.log_mass());
      return nt;
    };

    bool was_calibrated = tree_.calibrated() && tree_.journal().empty();
    JunctionTree next = fold(tree_);
    next.set_journal(tree_.journal());
    prior_ = fold(prior_);
    tree_ = std::move(next);

    for (const auto& [a, b] : tri.fill_edges) hybrid.add_edge(a, b);
    graph_ = std::move(hybrid);
    order_ = tri.order;
    t_high_ = last;
    if (override_spec)
      for (std::size_t s = first; s <= last; ++s) overrides_[s] = *override_spec;

    std::set<std::size_t> created(rep.created.begin(), rep.created.end());
    pending_subtree_.reset();
    if (was_calibrated && !touched_survivor && !created.empty() && tree_.connected_within(created))
      pending_subtree_ = created;
    return rep;
  }

  /// Calibrate the window.  Directly after an expansion of a calibrated
  /// window only the new cliques are propagated.
  PropagationResult propagate() {
    if (pending_subtree_) {
      auto subtree = *pending_subtree_;
      pending_subtree_.reset();
      PropagationResult r = tree_.propagate_subtree(subtree);
      if (r.calibrated) return r;
    }
    return tree_.propagate(root_clique());
  }

  PropagationResult propagate_full() {
    pending_subtree_.reset();
    return tree_.propagate(root_clique());
  }

  /// Enter or replace the finding for (t, var).  Replacing rebuilds the
  /// window potentials from the prior tree.
  void enter_evidence(std::size_t t, VarId var, const Finding& f) {
    if (var >= model_->var_count()) throw PreconditionError("unknown variable id " + std::to_string(var));
    if (t < t_low_)
      throw PreconditionError("slice " + std::to_string(t) +
                              " is archived; new evidence is accepted for window slices only (smoothing carries "
                              "window evidence backward)");
    if (t > t_high_)
      throw PreconditionError("slice " + std::to_string(t) + " lies beyond the window (newest slice " +
                              std::to_string(t_high_) + ")");
    check_finding(f, model_->card(var));
    Vertex v = model_->vertex(t, var);
    pending_subtree_.reset();
    auto it = findings_.find(v);
    if (it != findings_.end()) {
      it->second = f;
      rebuild_from_prior();
    } else {
      findings_.emplace(v, f);
      tree_.enter_evidence(v, f);
    }
  }

  /// Remove the finding for (t, var); false if there was none.
  bool retract_evidence(std::size_t t, VarId var) {
    if (t < t_low_) throw PreconditionError("slice " + std::to_string(t) + " is archived; its evidence is frozen");
    if (var >= model_->var_count()) throw PreconditionError("unknown variable id " + std::to_string(var));
    if (findings_.erase(model_->vertex(t, var)) == 0) return false;
    pending_subtree_.reset();
    rebuild_from_prior();
    return true;
  }

  /// Multiply a table into the incoming interface clique and recalibrate.
  void absorb_incoming(const PotentialTable& factor) {
    auto c = incoming_clique();
    if (!c) throw PreconditionError("the window has no incoming interface");
    tree_.multiply_into(*c, factor);
    propagate_full();
  }

  PotentialTable marginal(std::size_t t, VarId var) const {
    if (!contains_slice(t)) throw PreconditionError("slice " + std::to_string(t) + " is outside the window");
    return tree_.query_marginal({model_->vertex(t, var)});
  }

  /// Split off the k oldest slices.  Returns the archived model.
  std::pair<ArchivedModel, ReductionReport> reduce(std::size_t k) {
    if (k == 0 || k >= width())
      throw PreconditionError("reduction by " + std::to_string(k) + " slices needs 1 <= k < width (" +
                              std::to_string(width()) + ")");
    if (!tree_.calibrated()) throw PreconditionError("reduction requires a calibrated window; propagate first");
    const DpnModel& m = *model_;
    const std::size_t t = t_low_ + k;
    VertexSet eliminated;
    for (std::size_t s = t_low_; s < t; ++s)
      for (VarId v = 0; v < m.var_count(); ++v) eliminated.insert(m.vertex(s, v));
    VertexSet iface = interface(t);

    detail::SplitResult work = detail::split_tree(tree_, eliminated, iface);

    JunctionTree prior = prior_;
    bool absorbed = false;
    for (const auto& [v, f] : findings_)
      if (eliminated.count(v)) {
        prior.enter_evidence(v, f);
        absorbed = true;
      }
    if (absorbed || !prior.calibrated()) prior.propagate();
    detail::SplitResult base = detail::split_tree(prior, eliminated, iface);

    ReductionReport rep;
    rep.first_slice = t_low_;
    rep.last_slice = t - 1;
    rep.interface = iface;
    rep.hub_created = work.hub;
    rep.window_rebuilt = work.window_rebuilt;
    rep.archive_hub = work.archive_hub;
    rep.archive_rebuilt = work.archive_rebuilt;

    ArchivedModel am;
    am.t_low = t_low_;
    am.t_high = t - 1;
    // tree: evidence up to t - 1 only; smoothed: everything entered so far.
    am.tree = std::move(base.archive);
    am.smoothed = std::move(work.archive);
    am.out_interface = iface;
    am.out_clique = *am.tree.smallest_containing(iface);
    if (t_low_ > 0) {
      am.in_interface = interface(t_low_);
      am.in_clique = am.tree.smallest_containing(am.in_interface);
      if (!am.in_clique) throw StructureError("incoming interface is not covered by an archived clique");
    }

    VertexSet remaining;
    for (Vertex v : graph_.vertices())
      if (!eliminated.count(v)) remaining.insert(v);
    graph_ = graph_.induced(remaining);
    std::erase_if(order_, [&](Vertex v) { return eliminated.count(v) != 0; });
    std::erase_if(findings_, [&](const auto& e) { return eliminated.count(e.first) != 0; });
    std::erase_if(overrides_, [&](const auto& e) { return e.first < t; });
    tree_ = std::move(work.window);
    prior_ = std::move(base.window);
    pending_subtree_.reset();
    t_low_ = t;
    return {std::move(am), rep};
  }

  /// Structural invariants of the window; empty when all hold.
  std::vector<std::string> check_invariants() const {
    std::vector<std::string> out;
    const DpnModel& m = *model_;
    for (const auto& c : tree_.cliques())
      for (Vertex v : c.vars)
        if (!contains_slice(m.slice_of(v))) out.push_back("clique holds a vertex outside the window");
    if (!tree_.is_tree()) out.push_back("cliques do not form a tree");
    if (!tree_.has_junction_property()) out.push_back("junction property fails");
    for (std::size_t s = t_low_; s <= t_high_; ++s)
      if (s > 0 && !is_complete(graph_, interface(s)))
        out.push_back("interface of slice " + std::to_string(s) + " is not complete");
    try {
      maximal_cliques(graph_, order_);
    } catch (const Error&) {
      out.push_back("stored elimination order is not perfect for the window graph");
    }
    for (const auto& c : tree_.cliques())
      if (!is_complete(graph_, c.vars)) out.push_back("clique is not complete in the window graph");
    if (!(prior_.size() == tree_.size())) out.push_back("prior tree structure diverged");
    return out;
  }

  /// Reassemble a window from stored state.
  static Window restore(std::shared_ptr<const DpnModel> model, WindowOptions opts, std::size_t t_low,
                        std::size_t t_high, UGraph graph, std::vector<Vertex> order, JunctionTree tree,
                        JunctionTree prior, std::map<Vertex, Finding> findings,
                        std::map<std::size_t, TransitionSpec> overrides) {
    Window w;
    w.model_ = std::move(model);
    w.opts_ = opts;
    w.t_low_ = t_low;
    w.t_high_ = t_high;
    w.graph_ = std::move(graph);
    w.order_ = std::move(order);
    w.tree_ = std::move(tree);
    w.prior_ = std::move(prior);
    w.findings_ = std::move(findings);
    w.overrides_ = std::move(overrides);
    return w;
  }

 private:
  Window() = default;

  static std::map<Vertex, double> weights_of(const std::map<Vertex, std::size_t>& cards) {
    std::map<Vertex, double> w;
    for (const auto& [v, c] : cards) w[v] = static_cast<double>(c);
    return w;
  }

  std::vector<std::vector<Vertex>> blocks(std::size_t from, std::size_t to) const {
    std::vector<std::vector<Vertex>> out;
    for (std::size_t s = from; s <= to; ++s) {
      out.emplace_back();
      for (VarId v = 0; v < model_->var_count(); ++v) out.back().push_back(model_->vertex(s, v));
    }
    return out;
  }

  static void check_finding(const Finding& f, std::size_t card) {
    if (f.hard) {
      if (f.state >= card) throw PreconditionError("state index out of range");
      return;
    }
    if (f.weights.size() != card) throw PreconditionError("likelihood length differs from the cardinality");
    bool positive = false;
    for (double w : f.weights) {
      if (!std::isfinite(w) || w < 0.0) throw PreconditionError("likelihood entries must be finite and >= 0");
      positive = positive || w > 0.0;
    }
    if (!positive) throw PreconditionError("likelihood needs at least one positive entry");
  }

  void rebuild_from_prior() {
    tree_ = prior_;
    tree_.set_journal({});
    for (const auto& [v, f] : findings_) tree_.enter_evidence(v, f);
    tree_.mark_calibrated(false);
  }

  std::shared_ptr<const DpnModel> model_;
  WindowOptions opts_;
  JunctionTree tree_;
  JunctionTree prior_;
  UGraph graph_;
  std::vector<Vertex> order_;
  std::size_t t_low_ = 0;
  std::size_t t_high_ = 0;
  std::map<Vertex, Finding> findings_;
  std::map<std::size_t, TransitionSpec> overrides_;
  std::optional<std::set<std::size_t>> pending_subtree_;
};

/// The archived models P_1..P_{N-1} plus the window P_N.
class ModelSeries {
 public:
  static ModelSeries init(std::shared_ptr<const DpnModel> model, std::size_t width, WindowOptions opts = {}) {
    ModelSeries s;
    s.window_ = Window::init(std::move(model), width, opts);
    return s;
  }

  const DpnModel& model() const { return window_->model(); }
  const Window& window() const { return *window_; }
  Window& window() { return *window_; }
  const std::vector<ArchivedModel>& archived() const { return archived_; }
  std::vector<ArchivedModel>& archived() { return archived_; }
  std::size_t model_count() const { return archived_.size() + 1; }
  std::uint64_t revision() const { return revision_; }

  ExpansionReport expand(std::size_t k, const TransitionSpec* override_spec = nullptr) {
    return window_->expand(k, override_spec);
  }

  PropagationResult propagate() { return window_->propagate(); }

  ReductionReport reduce(std::size_t k) {
    auto [am, rep] = window_->reduce(k);
    am.smoothed_revision = revision_;
    archived_.push_back(std::move(am));
    return rep;
  }

  /// Expand, propagate, reduce by k; k = 0 does nothing.
  void advance(std::size_t k) {
    if (k == 0) return;
    expand(k);
    propagate();
    reduce(k);
  }

  void enter_evidence(const Evidence& e) {
    window_->enter_evidence(e.t, e.var, e.finding);
    ++revision_;
  }

  bool retract_evidence(std::size_t t, VarId var) {
    bool removed = window_->retract_evidence(t, var);
    if (removed) ++revision_;
    return removed;
  }

  /// 1-based index of the model holding slice t.
  std::size_t owner_of(std::size_t t) const {
    if (t > window_->t_high()) throw PreconditionError("slice " + std::to_string(t) + " is beyond the window");
    for (std::size_t i = 0; i < archived_.size(); ++i)
      if (t >= archived_[i].t_low && t <= archived_[i].t_high) return i + 1;
    return model_count();
  }

  static ModelSeries restore(Window w, std::vector<ArchivedModel> archived, std::uint64_t revision) {
    ModelSeries s;
    s.window_ = std::move(w);
    s.archived_ = std::move(archived);
    s.revision_ = revision;
    return s;
  }

 private:
  ModelSeries() = default;

  std::optional<Window> window_;
  std::vector<ArchivedModel> archived_;
  std::uint64_t revision_ = 0;
};

}  // namespace dpn
