#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <zlib.h>

#include "dpn/core.hpp"
#include "dpn/graph.hpp"
#include "dpn/jtree.hpp"
#include "dpn/model.hpp"
#include "dpn/potential.hpp"
#include "dpn/window.hpp"

// Layout: "DPNSERIE", u16 major, u16 minor, u64 payload length, payload,
// u32 CRC-32 of everything before it.  All integers little-endian, doubles
// as their IEEE-754 bit patterns.

namespace dpn {

inline constexpr std::uint16_t kSeriesMajor = 1;
inline constexpr std::uint16_t kSeriesMinor = 0;
inline constexpr char kSeriesMagic[8] = {'D', 'P', 'N', 'S', 'E', 'R', 'I', 'E'};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t x) { buf_.push_back(static_cast<char>(x)); }
  void u16(std::uint16_t x) { put(x, 2); }
  void u32(std::uint32_t x) { put(x, 4); }
  void u64(std::uint64_t x) { put(x, 8); }
  void f64(double x) { u64(std::bit_cast<std::uint64_t>(x)); }
  void boolean(bool b) { u8(b ? 1 : 0); }
  void str(const std::string& s) {
    u64(s.size());
    buf_ += s;
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  std::string& bytes() { return buf_; }

 private:
  void put(std::uint64_t x, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const char* p, std::size_t n) : p_(p), n_(n) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool boolean() { return u8() != 0; }
  std::size_t count() {
    std::uint64_t c = u64();
    if (c > n_ - pos_) throw FormatError("series payload is inconsistent");
    return static_cast<std::size_t>(c);
  }
  std::string str() {
    std::size_t n = count();
    const char* p = take(n);
    return std::string(p, n);
  }
  bool done() const { return pos_ == n_; }

 private:
  const char* take(std::size_t n) {
    if (n > n_ - pos_) throw FormatError("series payload ends early");
    const char* p = p_ + pos_;
    pos_ += n;
    return p;
  }
  std::uint64_t get(int n) {
    const char* p = take(static_cast<std::size_t>(n));
    std::uint64_t x = 0;
    for (int i = 0; i < n; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return x;
  }
  const char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

inline void put_set(ByteWriter& w, const VertexSet& s) {
  w.u64(s.size());
  for (Vertex v : s) w.u64(v);
}
inline VertexSet get_set(ByteReader& r) {
  VertexSet s;
  for (std::size_t n = r.count(); n-- > 0;) s.insert(r.u64());
  return s;
}

inline void put_doubles(ByteWriter& w, const std::vector<double>& v) {
  w.u64(v.size());
  for (double x : v) w.f64(x);
}
inline std::vector<double> get_doubles(ByteReader& r) {
  std::vector<double> v(r.count());
  for (double& x : v) x = r.f64();
  return v;
}

inline void put_table(ByteWriter& w, const PotentialTable& t) {
  w.u64(t.domain().size());
  for (const auto& d : t.domain()) {
    w.u64(d.id);
    w.u64(d.card);
  }
  put_doubles(w, t.values());
}
inline PotentialTable get_table(ByteReader& r) {
  Domain d(r.count());
  for (auto& x : d) {
    x.id = r.u64();
    x.card = r.u64();
  }
  return PotentialTable(std::move(d), get_doubles(r));
}

inline void put_finding(ByteWriter& w, const Finding& f) {
  w.boolean(f.hard);
  w.u64(f.state);
  put_doubles(w, f.weights);
}
inline Finding get_finding(ByteReader& r) {
  Finding f;
  f.hard = r.boolean();
  f.state = r.u64();
  f.weights = get_doubles(r);
  return f;
}

inline void put_tree(ByteWriter& w, const JunctionTree& t) {
  w.u64(t.cliques().size());
  for (const auto& c : t.cliques()) {
    put_set(w, c.vars);
    put_table(w, c.table);
  }
  w.u64(t.sepsets().size());
  for (const auto& s : t.sepsets()) {
    w.u64(s.a);
    w.u64(s.b);
    put_set(w, s.vars);
    put_table(w, s.table);
  }
  w.u64(t.cards().size());
  for (const auto& [v, c] : t.cards()) {
    w.u64(v);
    w.u64(c);
  }
  w.u64(t.journal().size());
  for (const auto& j : t.journal()) {
    w.u64(j.vertex);
    put_finding(w, j.finding);
  }
  w.f64(t.log_mass());
  w.boolean(t.calibrated());
}
inline JunctionTree get_tree(ByteReader& r) {
  std::vector<Clique> cliques(r.count());
  for (auto& c : cliques) {
    c.vars = get_set(r);
    c.table = get_table(r);
  }
  std::vector<Sepset> sepsets(r.count());
  for (auto& s : sepsets) {
    s.a = r.u64();
    s.b = r.u64();
    s.vars = get_set(r);
    s.table = get_table(r);
  }
  std::map<Vertex, std::size_t> cards;
  for (std::size_t n = r.count(); n-- > 0;) {
    Vertex v = r.u64();
    cards[v] = r.u64();
  }
  std::vector<JournalEntry> journal(r.count());
  for (auto& j : journal) {
    j.vertex = r.u64();
    j.finding = get_finding(r);
  }
  double log_mass = r.f64();
  bool calibrated = r.boolean();
  return JunctionTree::restore(std::move(cliques), std::move(sepsets), std::move(cards), std::move(journal),
                               log_mass, calibrated);
}

inline void put_slice(ByteWriter& w, const SliceSpec& s) {
  w.u64(s.variables.size());
  for (VarId v : s.variables) w.u64(v);
  w.u64(s.intra_edges.size());
  for (const auto& [p, c] : s.intra_edges) {
    w.u64(p);
    w.u64(c);
  }
  w.u64(s.cpts.size());
  for (const auto& c : s.cpts) {
    w.u64(c.child);
    w.u64(c.parents.size());
    for (const auto& p : c.parents) {
      w.u64(p.var);
      w.u64(p.lag);
    }
    put_doubles(w, c.table);
  }
}
inline SliceSpec get_slice(ByteReader& r) {
  SliceSpec s;
  s.variables.resize(r.count());
  for (auto& v : s.variables) v = r.u64();
  s.intra_edges.resize(r.count());
  for (auto& [p, c] : s.intra_edges) {
    p = r.u64();
    c = r.u64();
  }
  s.cpts.resize(r.count());
  for (auto& c : s.cpts) {
    c.child = r.u64();
    c.parents.resize(r.count());
    for (auto& p : c.parents) {
      p.var = r.u64();
      p.lag = r.u64();
    }
    c.table = get_doubles(r);
  }
  return s;
}

inline void put_transition(ByteWriter& w, const TransitionSpec& t) {
  put_slice(w, t.slice);
  w.u64(t.temporal_edges.size());
  for (const auto& e : t.temporal_edges) {
    w.u64(e.from);
    w.u64(e.to);
    w.u64(e.lag);
  }
}
inline TransitionSpec get_transition(ByteReader& r) {
  TransitionSpec t;
  t.slice = get_slice(r);
  t.temporal_edges.resize(r.count());
  for (auto& e : t.temporal_edges) {
    e.from = r.u64();
    e.to = r.u64();
    e.lag = r.u64();
  }
  return t;
}

inline void put_model(ByteWriter& w, const DpnModel& m) {
  w.u64(m.variables.size());
  for (const auto& v : m.variables) {
    w.str(v.name);
    w.u64(v.states.size());
    for (const auto& s : v.states) w.str(s);
  }
  put_slice(w, m.initial);
  put_transition(w, m.transition);
}
inline DpnModel get_model(ByteReader& r) {
  DpnModel m;
  m.variables.resize(r.count());
  for (auto& v : m.variables) {
    v.name = r.str();
    v.states.resize(r.count());
    for (auto& s : v.states) s = r.str();
  }
  m.initial = get_slice(r);
  m.transition = get_transition(r);
  return m;
}

inline void put_archived(ByteWriter& w, const ArchivedModel& a) {
  w.u64(a.t_low);
  w.u64(a.t_high);
  put_tree(w, a.tree);
  put_tree(w, a.smoothed);
  w.u64(a.smoothed_revision);
  put_set(w, a.out_interface);
  w.u64(a.out_clique);
  put_set(w, a.in_interface);
  w.boolean(a.in_clique.has_value());
  w.u64(a.in_clique.value_or(0));
  w.boolean(a.received.has_value());
  if (a.received) put_table(w, *a.received);
}
inline ArchivedModel get_archived(ByteReader& r) {
  ArchivedModel a;
  a.t_low = r.u64();
  a.t_high = r.u64();
  a.tree = get_tree(r);
  a.smoothed = get_tree(r);
  a.smoothed_revision = r.u64();
  a.out_interface = get_set(r);
  a.out_clique = r.u64();
  a.in_interface = get_set(r);
  bool has_in = r.boolean();
  std::size_t in = r.u64();
  if (has_in) a.in_clique = in;
  if (r.boolean()) a.received = get_table(r);
  return a;
}

inline std::uint32_t crc(const std::string& bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    uInt chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(bytes.data() + off), chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

}  // namespace detail

inline std::string serialize_series(const ModelSeries& s) {
  detail::ByteWriter p;
  detail::put_model(p, s.model());
  const Window& w = s.window();
  p.u8(static_cast<std::uint8_t>(w.options().heuristic));
  p.u64(w.options().cell_cap);
  p.u64(w.t_low());
  p.u64(w.t_high());
  detail::put_set(p, w.graph().vertices());
  auto edges = w.graph().edges();
  p.u64(edges.size());
  for (const auto& [a, b] : edges) {
    p.u64(a);
    p.u64(b);
  }
  p.u64(w.order().size());
  for (Vertex v : w.order()) p.u64(v);
  detail::put_tree(p, w.tree());
  detail::put_tree(p, w.prior_tree());
  p.u64(w.findings().size());
  for (const auto& [v, f] : w.findings()) {
    p.u64(v);
    detail::put_finding(p, f);
  }
  p.u64(w.overrides().size());
  for (const auto& [t, spec] : w.overrides()) {
    p.u64(t);
    detail::put_transition(p, spec);
  }
  p.u64(s.archived().size());
  for (const auto& a : s.archived()) detail::put_archived(p, a);
  p.u64(s.revision());

  detail::ByteWriter out;
  out.raw(kSeriesMagic, sizeof kSeriesMagic);
  out.u16(kSeriesMajor);
  out.u16(kSeriesMinor);
  out.u64(p.bytes().size());
  out.raw(p.bytes().data(), p.bytes().size());
  out.u32(detail::crc(out.bytes()));
  return std::move(out.bytes());
}

inline ModelSeries deserialize_series(const std::string& bytes) {
  constexpr std::size_t header = sizeof kSeriesMagic + 2 + 2 + 8;
  if (bytes.size() < sizeof kSeriesMagic || std::memcmp(bytes.data(), kSeriesMagic, sizeof kSeriesMagic) != 0)
    throw FormatError("not a series file (bad magic)");
  if (bytes.size() < header) throw FormatError("series file is truncated: checksum verification failed");
  detail::ByteReader h(bytes.data() + sizeof kSeriesMagic, header - sizeof kSeriesMagic);
  std::uint16_t major = h.u16();
  std::uint16_t minor = h.u16();
  std::uint64_t length = h.u64();
  if (major != kSeriesMajor)
    throw FormatError("series format version " + std::to_string(major) + "." + std::to_string(minor) +
                      " is not supported (this build reads major version " + std::to_string(kSeriesMajor) + ")");
  if (length > bytes.size() || bytes.size() - header < length + 4)
    throw FormatError("series file is truncated: checksum verification failed");
  if (bytes.size() != header + length + 4) throw FormatError("series file has trailing bytes: checksum verification failed");
  detail::ByteReader tail(bytes.data() + header + length, 4);
  if (tail.u32() != detail::crc(bytes.substr(0, header + length)))
    throw FormatError("series file is corrupted: checksum mismatch");

  detail::ByteReader r(bytes.data() + header, static_cast<std::size_t>(length));
  auto model = std::make_shared<const DpnModel>(detail::get_model(r));
  WindowOptions opts;
  std::uint8_t heuristic = r.u8();
  if (heuristic > static_cast<std::uint8_t>(Heuristic::GivenOrder)) throw FormatError("unknown heuristic code");
  opts.heuristic = static_cast<Heuristic>(heuristic);
  opts.cell_cap = r.u64();
  std::size_t t_low = r.u64();
  std::size_t t_high = r.u64();
  UGraph g;
  for (Vertex v : detail::get_set(r)) g.add_vertex(v);
  for (std::size_t n = r.count(); n-- > 0;) {
    Vertex a = r.u64();
    Vertex b = r.u64();
    g.add_edge(a, b);
  }
  std::vector<Vertex> order(r.count());
  for (auto& v : order) v = r.u64();
  JunctionTree tree = detail::get_tree(r);
  JunctionTree prior = detail::get_tree(r);
  std::map<Vertex, Finding> findings;
  for (std::size_t n = r.count(); n-- > 0;) {
    Vertex v = r.u64();
    findings[v] = detail::get_finding(r);
  }
  std::map<std::size_t, TransitionSpec> overrides;
  for (std::size_t n = r.count(); n-- > 0;) {
    std::size_t t = r.u64();
    overrides[t] = detail::get_transition(r);
  }
  std::vector<ArchivedModel> archived(r.count());
  for (auto& a : archived) a = detail::get_archived(r);
  std::uint64_t revision = r.u64();
  if (!r.done()) throw FormatError("series payload has unread bytes");
  Window w = Window::restore(model, opts, t_low, t_high, std::move(g), std::move(order), std::move(tree),
                             std::move(prior), std::move(findings), std::move(overrides));
  return ModelSeries::restore(std::move(w), std::move(archived), revision);
}

inline void save_series(const ModelSeries& s, const std::string& path) {
  std::string bytes = serialize_series(s);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write '" + path + "'");
}

inline ModelSeries load_series(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_series(bytes);
}

}  // namespace dpn
