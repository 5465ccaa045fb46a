#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dpn {

/// Identifier of a declared variable (index into DpnModel::variables).
using VarId = std::size_t;

/// Identifier of an unrolled vertex: slice * variable_count + variable.
/// Ascending vertex order is therefore slice-major, which is the canonical
/// domain order used throughout the library.
using Vertex = std::size_t;

using VertexSet = std::set<Vertex>;

/// Unordered vertex pair stored as (min, max).
using Edge = std::pair<Vertex, Vertex>;

inline Edge make_edge(Vertex a, Vertex b) { return a < b ? Edge{a, b} : Edge{b, a}; }

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition of an operation (bad arguments, wrong state).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Table domains that cannot be combined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Evidence contradicts the model: total mass is zero.
class ZeroMassError : public Error {
 public:
  using Error::Error;
};

/// x / 0 with x > 0 during table division.
class DivisionError : public Error {
 public:
  using Error::Error;
};

/// Structural failure (cycle, non-triangulated input, broken tree).
class StructureError : public Error {
 public:
  using Error::Error;
};

/// Clique state space exceeds the configured cap.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// Invalid model definition.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable input file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File cannot be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

inline bool is_subset(const VertexSet& a, const VertexSet& b) {
  for (Vertex v : a)
    if (!b.count(v)) return false;
  return true;
}

inline VertexSet intersect(const VertexSet& a, const VertexSet& b) {
  VertexSet out;
  for (Vertex v : a)
    if (b.count(v)) out.insert(v);
  return out;
}

}  // namespace dpn
