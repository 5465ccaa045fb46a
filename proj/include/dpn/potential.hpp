#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpn/core.hpp"

namespace dpn {

/// One variable of a table domain.
struct DomainVar {
  Vertex id;
  std::size_t card;

  friend bool operator==(const DomainVar&, const DomainVar&) = default;
};

using Domain = std::vector<DomainVar>;

/// A finding on a single variable: either a hard state or a likelihood vector.
struct Finding {
  bool hard = true;
  std::size_t state = 0;
  std::vector<double> weights;

  static Finding hard_state(std::size_t s) { return Finding{true, s, {}}; }
  static Finding likelihood(std::vector<double> w) { return Finding{false, 0, std::move(w)}; }

  /// Weight applied to `s`, given the variable cardinality.
  double weight(std::size_t s) const { return hard ? (s == state ? 1.0 : 0.0) : weights[s]; }

  friend bool operator==(const Finding&, const Finding&) = default;
};

/// Dense non-negative table over a set of discrete variables.  The first
/// domain variable varies slowest, the last fastest.
class PotentialTable {
 public:
  PotentialTable() : values_{1.0} {}

  PotentialTable(Domain domain, std::vector<double> values)
      : domain_(std::move(domain)), values_(std::move(values)) {
    std::size_t n = 1;
    for (std::size_t i = 0; i < domain_.size(); ++i) {
      if (domain_[i].card == 0) throw DomainError("variable with zero cardinality");
      for (std::size_t j = 0; j < i; ++j)
        if (domain_[j].id == domain_[i].id) throw DomainError("duplicate variable in domain");
      n *= domain_[i].card;
    }
    if (values_.size() != n)
      throw DomainError("table length " + std::to_string(values_.size()) +
                        " does not match domain size " + std::to_string(n));
    for (double v : values_)
      if (!std::isfinite(v) || v < 0.0) throw DomainError("table entries must be finite and >= 0");
  }

  static PotentialTable unity(Domain domain) {
    std::size_t n = 1;
    for (const auto& d : domain) n *= d.card;
    return PotentialTable(std::move(domain), std::vector<double>(n, 1.0));
  }

  const Domain& domain() const { return domain_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  double sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

  bool contains(Vertex id) const { return position(id) < domain_.size(); }

  std::size_t position(Vertex id) const {
    for (std::size_t i = 0; i < domain_.size(); ++i)
      if (domain_[i].id == id) return i;
    return domain_.size();
  }

  VertexSet variables() const {
    VertexSet s;
    for (const auto& d : domain_) s.insert(d.id);
    return s;
  }

  /// Row-major strides (last variable has stride 1).
  std::vector<std::size_t> strides() const {
    std::vector<std::size_t> s(domain_.size(), 1);
    for (std::size_t i = domain_.size(); i-- > 1;) s[i - 1] = s[i] * domain_[i].card;
    return s;
  }

  friend bool operator==(const PotentialTable&, const PotentialTable&) = default;

 private:
  Domain domain_;
  std::vector<double> values_;
};

namespace detail {

/// Walks every configuration of `full` while tracking the flat index of the
/// projected configuration in each table of `subs`.
class JointWalker {
 public:
  JointWalker(const Domain& full, std::span<const Domain* const> subs)
      : cards_(full.size()), counter_(full.size(), 0), sub_index_(subs.size(), 0),
        strides_(subs.size(), std::vector<std::size_t>(full.size(), 0)) {
    for (std::size_t i = 0; i < full.size(); ++i) cards_[i] = full[i].card;
    for (std::size_t s = 0; s < subs.size(); ++s) {
      const Domain& sub = *subs[s];
      std::size_t stride = 1;
      for (std::size_t j = sub.size(); j-- > 0;) {
        for (std::size_t i = 0; i < full.size(); ++i)
          if (full[i].id == sub[j].id) strides_[s][i] = stride;
        stride *= sub[j].card;
      }
    }
  }

  std::size_t sub(std::size_t s) const { return sub_index_[s]; }

  /// Advance to the next configuration; false after the last one.
  bool next() {
    for (std::size_t i = cards_.size(); i-- > 0;) {
      if (++counter_[i] < cards_[i]) {
        for (std::size_t s = 0; s < sub_index_.size(); ++s) sub_index_[s] += strides_[s][i];
        return true;
      }
      counter_[i] = 0;
      for (std::size_t s = 0; s < sub_index_.size(); ++s)
        sub_index_[s] -= strides_[s][i] * (cards_[i] - 1);
    }
    return false;
  }

 private:
  std::vector<std::size_t> cards_;
  std::vector<std::size_t> counter_;
  std::vector<std::size_t> sub_index_;
  std::vector<std::vector<std::size_t>> strides_;
};

inline void check_cardinalities(const Domain& a, const Domain& b) {
  for (const auto& x : a)
    for (const auto& y : b)
      if (x.id == y.id && x.card != y.card)
        throw DomainError("cardinality conflict for variable " + std::to_string(x.id));
}

}  // namespace detail

/// Product over the ordered union of both domains (a's order, then b's new
/// variables).
inline PotentialTable multiply(const PotentialTable& a, const PotentialTable& b) {
  detail::check_cardinalities(a.domain(), b.domain());
  Domain dom = a.domain();
  for (const auto& d : b.domain())
    if (!a.contains(d.id)) dom.push_back(d);
  std::size_t n = 1;
  for (const auto& d : dom) n *= d.card;
  std::vector<double> out(n);
  const Domain* subs[] = {&a.domain(), &b.domain()};
  detail::JointWalker w(dom, subs);
  std::size_t i = 0;
  do {
    out[i++] = a[w.sub(0)] * b[w.sub(1)];
  } while (w.next());
  return PotentialTable(std::move(dom), std::move(out));
}

/// Sum out every variable not in `keep`.  The result keeps a's variable order.
inline PotentialTable marginalize(const PotentialTable& a, const VertexSet& keep) {
  for (Vertex v : keep)
    if (!a.contains(v)) throw DomainError("marginalize: variable " + std::to_string(v) + " not in domain");
  Domain dom;
  for (const auto& d : a.domain())
    if (keep.count(d.id)) dom.push_back(d);
  if (dom.size() == a.domain().size()) return a;
  std::size_t n = 1;
  for (const auto& d : dom) n *= d.card;
  std::vector<double> out(n, 0.0);
  const Domain* subs[] = {&dom};
  detail::JointWalker w(a.domain(), subs);
  std::size_t i = 0;
  do {
    out[w.sub(0)] += a[i++];
  } while (w.next());
  return PotentialTable(std::move(dom), std::move(out));
}

/// Pointwise a / b with 0/0 := 0.  b's domain must be a subset of a's.
inline PotentialTable divide(const PotentialTable& a, const PotentialTable& b) {
  detail::check_cardinalities(a.domain(), b.domain());
  for (const auto& d : b.domain())
    if (!a.contains(d.id)) throw DomainError("divide: divisor domain is not a subset");
  std::vector<double> out(a.size());
  const Domain* subs[] = {&b.domain()};
  detail::JointWalker w(a.domain(), subs);
  std::size_t i = 0;
  do {
    double num = a[i];
    double den = b[w.sub(0)];
    if (den == 0.0) {
      if (num != 0.0) throw DivisionError("division of a positive entry by zero");
      out[i] = 0.0;
    } else {
      out[i] = num / den;
    }
    ++i;
  } while (w.next());
  return PotentialTable(a.domain(), std::move(out));
}

/// Scale to unit mass; returns the table and its original mass.
inline std::pair<PotentialTable, double> normalize(const PotentialTable& a) {
  double mass = a.sum();
  if (!(mass > 0.0)) throw ZeroMassError("cannot normalize a table with zero total mass");
  std::vector<double> out = a.values();
  for (double& v : out) v /= mass;
  return {PotentialTable(a.domain(), std::move(out)), mass};
}

/// Multiply every slice of `v` by the finding's weight for that state.
inline PotentialTable reduce_by_evidence(const PotentialTable& a, Vertex v, const Finding& f) {
  std::size_t pos = a.position(v);
  if (pos == a.domain().size()) throw DomainError("evidence variable not in table domain");
  std::size_t card = a.domain()[pos].card;
  if (f.hard ? f.state >= card : f.weights.size() != card)
    throw DomainError("finding does not match cardinality " + std::to_string(card));
  std::size_t stride = a.strides()[pos];
  std::vector<double> out = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= f.weight((i / stride) % card);
  return PotentialTable(a.domain(), std::move(out));
}

/// Same table with its variables permuted into `order` (same variable set).
inline PotentialTable reorder(const PotentialTable& a, const Domain& order) {
  if (order.size() != a.domain().size()) throw DomainError("reorder: domain mismatch");
  for (const auto& d : order) {
    std::size_t p = a.position(d.id);
    if (p == a.domain().size() || a.domain()[p].card != d.card)
      throw DomainError("reorder: domain mismatch");
  }
  std::vector<double> out(a.size());
  const Domain* subs[] = {&a.domain()};
  detail::JointWalker w(order, subs);
  std::size_t i = 0;
  do {
    out[i++] = a[w.sub(0)];
  } while (w.next());
  return PotentialTable(order, std::move(out));
}

/// Ascending-vertex-id variable order.
inline PotentialTable canonical(const PotentialTable& a) {
  Domain order = a.domain();
  std::sort(order.begin(), order.end(), [](const DomainVar& x, const DomainVar& y) { return x.id < y.id; });
  return reorder(a, order);
}

/// Compares after canonical reordering; |x - y| <= tol * max(1, |x|, |y|).
inline bool approx_equal(const PotentialTable& a, const PotentialTable& b, double tol) {
  if (a.variables() != b.variables()) return false;
  PotentialTable ca = canonical(a);
  PotentialTable cb = canonical(b);
  if (ca.domain() != cb.domain()) return false;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    double scale = std::max({1.0, std::abs(ca[i]), std::abs(cb[i])});
    if (std::abs(ca[i] - cb[i]) > tol * scale) return false;
  }
  return true;
}

/// Largest absolute entrywise difference after canonical reordering.
inline double max_abs_diff(const PotentialTable& a, const PotentialTable& b) {
  PotentialTable ca = canonical(a);
  PotentialTable cb = canonical(b);
  if (ca.domain() != cb.domain()) throw DomainError("max_abs_diff: domain mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < ca.size(); ++i) m = std::max(m, std::abs(ca[i] - cb[i]));
  return m;
}

}  // namespace dpn
