#pragma once

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wardrop_lab/core.hpp"
#include "wardrop_lab/network.hpp"
#include "wardrop_lab/od_entropy.hpp"

namespace wlab {
namespace io {

[[noreturn]] inline void parse_fail(const std::string& file, int line,
                                    const std::string& what) {
  fail(ErrorCode::ParseError,
       file + ":" + std::to_string(line) + ": " + what);
}

namespace detail {

inline std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream in(line);
  std::string t;
  while (in >> t) {
    if (t[0] == '#') break;  // comment till end of line
    toks.push_back(t);
  }
  return toks;
}

inline double to_real(const std::string& tok, const std::string& file,
                      int line) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || tok.empty() || errno == ERANGE)
    parse_fail(file, line, "expected a real number, got '" + tok + "'");
  return v;
}

inline long long to_count(const std::string& tok, const std::string& file,
                          int line) {
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(tok.c_str(), &end, 10);
  if (end != tok.c_str() + tok.size() || tok.empty() || errno == ERANGE)
    parse_fail(file, line, "expected an integer, got '" + tok + "'");
  return v;
}

inline std::uint64_t to_u64(const std::string& tok, const std::string& file,
                            int line) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
  if (end != tok.c_str() + tok.size() || tok.empty() || errno == ERANGE ||
      tok[0] == '-')
    parse_fail(file, line, "expected an unsigned integer, got '" + tok + "'");
  return v;
}

inline int to_id(const std::string& tok, const std::string& file, int line) {
  const long long v = to_count(tok, file, line);
  if (v < std::numeric_limits<int>::min() ||
      v > std::numeric_limits<int>::max())
    parse_fail(file, line, "id out of range: " + tok);
  return static_cast<int>(v);
}

}  // namespace detail

/// Optional simulation directive inside a zone file:
///   chain pL <value> seed <u64> steps <count>
struct ChainDirective {
  double base_rate = 1.0;
  std::uint64_t seed = 0;
  long long steps = 0;
};

struct ZoneFile {
  od::ZoneData data;
  std::optional<ChainDirective> chain;
};

/// Zone file: `zones <n>` header, n `zone <i> <L_i> <W_i>` lines, n
/// `costrow <i> <c_i1> ... <c_in>` lines, `#` comments, indices 1-based.
inline ZoneFile parse_zone_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ParseError, path + ": cannot open");
  ZoneFile zf;
  std::size_t n = 0;
  bool have_header = false;
  std::vector<bool> zone_seen, row_seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = detail::tokenize(line);
    if (toks.empty()) continue;
    const std::string& kind = toks[0];
    if (kind == "zones") {
      if (have_header) parse_fail(path, lineno, "duplicate zones header");
      if (toks.size() != 2) parse_fail(path, lineno, "usage: zones <n>");
      const long long v = detail::to_count(toks[1], path, lineno);
      if (v < 1) parse_fail(path, lineno, "zone count must be >= 1");
      n = static_cast<std::size_t>(v);
      zf.data.residents.assign(n, 0.0);
      zf.data.workers.assign(n, 0.0);
      zf.data.cost = Matrix(n, n, 0.0);
      zone_seen.assign(n, false);
      row_seen.assign(n, false);
      have_header = true;
    } else if (kind == "zone") {
      if (!have_header) parse_fail(path, lineno, "zone before zones header");
      if (toks.size() != 4)
        parse_fail(path, lineno, "usage: zone <i> <L_i> <W_i>");
      const long long i = detail::to_count(toks[1], path, lineno);
      if (i < 1 || i > static_cast<long long>(n))
        parse_fail(path, lineno, "zone index out of range");
      if (zone_seen[i - 1]) parse_fail(path, lineno, "duplicate zone line");
      zone_seen[i - 1] = true;
      zf.data.residents[i - 1] = detail::to_real(toks[2], path, lineno);
      zf.data.workers[i - 1] = detail::to_real(toks[3], path, lineno);
    } else if (kind == "costrow") {
      if (!have_header)
        parse_fail(path, lineno, "costrow before zones header");
      if (toks.size() != n + 2)
        parse_fail(path, lineno,
                   "costrow needs " + std::to_string(n) + " values");
      const long long i = detail::to_count(toks[1], path, lineno);
      if (i < 1 || i > static_cast<long long>(n))
        parse_fail(path, lineno, "costrow index out of range");
      if (row_seen[i - 1]) parse_fail(path, lineno, "duplicate costrow line");
      row_seen[i - 1] = true;
      for (std::size_t j = 0; j < n; ++j)
        zf.data.cost(i - 1, j) = detail::to_real(toks[j + 2], path, lineno);
    } else if (kind == "chain") {
      if (toks.size() != 7 || toks[1] != "pL" || toks[3] != "seed" ||
          toks[5] != "steps")
        parse_fail(path, lineno,
                   "usage: chain pL <value> seed <u64> steps <count>");
      ChainDirective cd;
      cd.base_rate = detail::to_real(toks[2], path, lineno);
      cd.seed = detail::to_u64(toks[4], path, lineno);
      cd.steps = detail::to_count(toks[6], path, lineno);
      if (!(cd.base_rate > 0.0))
        parse_fail(path, lineno, "chain pL must be positive");
      if (cd.steps < 0) parse_fail(path, lineno, "chain steps must be >= 0");
      zf.chain = cd;
    } else {
      parse_fail(path, lineno, "unknown directive '" + kind + "'");
    }
  }
  if (!have_header) fail(ErrorCode::ParseError, path + ": no zones header");
  for (std::size_t i = 0; i < n; ++i) {
    if (!zone_seen[i])
      fail(ErrorCode::ParseError,
           path + ": missing zone line " + std::to_string(i + 1));
    if (!row_seen[i])
      fail(ErrorCode::ParseError,
           path + ": missing costrow line " + std::to_string(i + 1));
  }
  zf.data.validate();
  return zf;
}

struct NetworkFile {
  net::Network network;
  std::vector<net::Route> routes;  // explicit route lines, may be empty
};

/// Builds the route set a network file implies: explicit `route` lines win,
/// otherwise exhaustive enumeration.
inline net::RouteSet route_set_of(const NetworkFile& nf) {
  if (!nf.routes.empty()) return net::make_route_set(nf.network, nf.routes);
  return net::enumerate_routes(nf.network);
}

/// Network file, line-oriented, `#` comments:
///   node <id>
///   edge <id> <tail> <head> <a> <b> <k>
///   od <origin> <dest> <demand>
///   route <od-index> <edge-id> <edge-id> ...     (od-index 1-based)
inline NetworkFile parse_network_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ParseError, path + ": cannot open");
  NetworkFile nf;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = detail::tokenize(line);
    if (toks.empty()) continue;
    const std::string& kind = toks[0];
    if (kind == "node") {
      if (toks.size() != 2) parse_fail(path, lineno, "usage: node <id>");
      const int id = detail::to_id(toks[1], path, lineno);
      if (nf.network.has_node(id))
        parse_fail(path, lineno, "duplicate node " + toks[1]);
      nf.network.nodes.push_back(id);
    } else if (kind == "edge") {
      if (toks.size() != 7)
        parse_fail(path, lineno, "usage: edge <id> <tail> <head> <a> <b> <k>");
      net::Edge e;
      e.id = detail::to_id(toks[1], path, lineno);
      e.tail = detail::to_id(toks[2], path, lineno);
      e.head = detail::to_id(toks[3], path, lineno);
      e.latency.a = detail::to_real(toks[4], path, lineno);
      e.latency.b = detail::to_real(toks[5], path, lineno);
      e.latency.k = detail::to_real(toks[6], path, lineno);
      nf.network.edges.push_back(e);
    } else if (kind == "od") {
      if (toks.size() != 4)
        parse_fail(path, lineno, "usage: od <origin> <dest> <demand>");
      net::OdPair od;
      od.origin = detail::to_id(toks[1], path, lineno);
      od.dest = detail::to_id(toks[2], path, lineno);
      od.demand = detail::to_real(toks[3], path, lineno);
      nf.network.od_pairs.push_back(od);
    } else if (kind == "route") {
      if (toks.size() < 3)
        parse_fail(path, lineno, "usage: route <od-index> <edge-id> ...");
      net::Route r;
      const long long w = detail::to_count(toks[1], path, lineno);
      if (w < 1) parse_fail(path, lineno, "route od-index is 1-based");
      r.od = static_cast<std::size_t>(w - 1);
      for (std::size_t i = 2; i < toks.size(); ++i)
        r.edge_ids.push_back(detail::to_id(toks[i], path, lineno));
      nf.routes.push_back(std::move(r));
    } else {
      parse_fail(path, lineno, "unknown directive '" + kind + "'");
    }
  }
  if (nf.network.nodes.empty())
    fail(ErrorCode::ParseError, path + ": no nodes");
  nf.network.validate();
  for (const net::Route& r : nf.routes)
    if (r.od >= nf.network.od_pairs.size())
      fail(ErrorCode::ParseError,
           path + ": route references missing OD pair " +
               std::to_string(r.od + 1));
  return nf;
}

/// Every number in emitted JSON/CSV goes through this: 12 significant
/// digits, so identical invocations are byte-identical.
inline std::string fmt(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string fmt(long long v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }

inline std::string json_array(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += fmt(v[i]);
  }
  return s + "]";
}

inline std::string json_matrix(const Matrix& m) {
  std::string s = "[";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (i) s += ", ";
    s += "[";
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) s += ", ";
      s += fmt(m(i, j));
    }
    s += "]";
  }
  return s + "]";
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::BadArgument, path + ": cannot write");
  out << text;
  if (!out) fail(ErrorCode::BadArgument, path + ": write failed");
}

}  // namespace io
}  // namespace wlab
