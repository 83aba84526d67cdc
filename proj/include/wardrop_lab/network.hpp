#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "wardrop_lab/core.hpp"

namespace wlab {
namespace net {

/// Link travel time tau(y) = a + b * y^k. Nondecreasing and continuous on
/// y >= 0 as long as a, b >= 0 and k > 0, which validate() enforces.
struct LatencyFn {
  double a = 0.0;
  double b = 0.0;
  double k = 1.0;

  double operator()(double y) const { return a + b * std::pow(y, k); }

  /// integral of tau from 0 to y, the per-edge term of the potential
  double integral(double y) const {
    return a * y + b * std::pow(y, k + 1.0) / (k + 1.0);
  }

  void validate() const {
    if (!(a >= 0.0) || !(b >= 0.0) || !(k > 0.0))
      fail(ErrorCode::DomainError,
           "latency a + b*y^k needs a >= 0, b >= 0, k > 0");
  }
};

struct Edge {
  int id = 0;
  int tail = 0;
  int head = 0;
  LatencyFn latency;
};

struct OdPair {
  int origin = 0;
  int dest = 0;
  double demand = 0.0;
};

/// Directed multigraph with latency functions and OD demands. Parallel
/// edges are first-class: two edges may share both endpoints and still be
/// distinct route segments.
struct Network {
  std::vector<int> nodes;
  std::vector<Edge> edges;
  std::vector<OdPair> od_pairs;

  bool has_node(int id) const {
    return std::find(nodes.begin(), nodes.end(), id) != nodes.end();
  }

  std::size_t edge_index(int id) const {
    for (std::size_t e = 0; e < edges.size(); ++e)
      if (edges[e].id == id) return e;
    fail(ErrorCode::BadArgument, "unknown edge id " + std::to_string(id));
  }

  void validate() const {
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const Edge& ed = edges[e];
      ed.latency.validate();
      if (!has_node(ed.tail) || !has_node(ed.head))
        fail(ErrorCode::BadArgument,
             "edge " + std::to_string(ed.id) + " references a missing node");
      for (std::size_t f = e + 1; f < edges.size(); ++f)
        if (edges[f].id == ed.id)
          fail(ErrorCode::BadArgument,
               "duplicate edge id " + std::to_string(ed.id));
    }
    for (const OdPair& od : od_pairs) {
      if (!has_node(od.origin) || !has_node(od.dest))
        fail(ErrorCode::BadArgument, "OD pair references a missing node");
      if (!(od.demand >= 0.0))
        fail(ErrorCode::DomainError, "OD demand must be nonnegative");
      if (od.origin == od.dest)
        fail(ErrorCode::DomainError, "OD origin equals destination");
    }
  }
};

/// A route is an edge-id sequence, never a vertex sequence: with parallel
/// edges the vertices alone do not determine the path.
struct Route {
  int id = 0;               // position in RouteSet::routes
  std::size_t od = 0;       // index into Network::od_pairs
  std::vector<int> edge_ids;
};

struct RouteSet {
  std::vector<Route> routes;
  std::vector<std::vector<std::size_t>> by_od;  // route indices per OD pair
  std::vector<std::vector<std::size_t>> edge_idx;  // per route, edge positions
  Matrix theta;  // |E| x |P| incidence, delta_ep

  std::size_t size() const { return routes.size(); }
};

/// Validates the edge sequences and assembles incidence structure. Routes
/// keep the order given; ids are reassigned to positions.
inline RouteSet make_route_set(const Network& net, std::vector<Route> routes) {
  RouteSet rs;
  rs.by_od.resize(net.od_pairs.size());
  rs.edge_idx.resize(routes.size());
  for (std::size_t p = 0; p < routes.size(); ++p) {
    Route& r = routes[p];
    r.id = static_cast<int>(p);
    if (r.od >= net.od_pairs.size())
      fail(ErrorCode::BadArgument, "route references a missing OD pair");
    const OdPair& od = net.od_pairs[r.od];
    if (r.edge_ids.empty())
      fail(ErrorCode::BadArgument, "route must contain at least one edge");
    int at = od.origin;
    for (int eid : r.edge_ids) {
      const std::size_t e = net.edge_index(eid);
      if (net.edges[e].tail != at)
        fail(ErrorCode::BadArgument,
             "route for OD " + std::to_string(r.od) +
                 " is not connected tail-to-head at edge " +
                 std::to_string(eid));
      at = net.edges[e].head;
      rs.edge_idx[p].push_back(e);
    }
    if (at != od.dest)
      fail(ErrorCode::BadArgument,
           "route for OD " + std::to_string(r.od) +
               " does not end at the destination");
    rs.by_od[r.od].push_back(p);
  }
  rs.routes = std::move(routes);
  rs.theta = Matrix(net.edges.size(), rs.routes.size(), 0.0);
  for (std::size_t p = 0; p < rs.routes.size(); ++p)
    for (std::size_t e : rs.edge_idx[p]) rs.theta(e, p) = 1.0;
  return rs;
}

/// All simple directed paths per OD pair (no repeated vertices; parallel
/// edges give distinct paths), in lexicographic order of their edge-id
/// sequences. On networks with more than 12 edges an OD whose route count
/// exceeds `max_routes_per_od` aborts with RouteExplosion; at 12 edges or
/// fewer the cap is ignored, since tests rely on exhaustive enumeration.
inline RouteSet enumerate_routes(const Network& net,
                                 std::size_t max_routes_per_od = 10000) {
  net.validate();
  const bool exhaustive = net.edges.size() <= 12;

  // outgoing edges per node, sorted by edge id so DFS emits lexicographic
  std::vector<std::vector<std::size_t>> out;
  out.resize(net.nodes.size());
  std::vector<int> node_ids = net.nodes;
  std::sort(node_ids.begin(), node_ids.end());
  auto node_slot = [&](int id) {
    return static_cast<std::size_t>(
        std::lower_bound(node_ids.begin(), node_ids.end(), id) -
        node_ids.begin());
  };
  std::vector<std::size_t> order(net.edges.size());
  for (std::size_t e = 0; e < net.edges.size(); ++e) order[e] = e;
  std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    return net.edges[l].id < net.edges[r].id;
  });
  for (std::size_t e : order) out[node_slot(net.edges[e].tail)].push_back(e);

  std::vector<Route> routes;
  for (std::size_t w = 0; w < net.od_pairs.size(); ++w) {
    const OdPair& od = net.od_pairs[w];
    const std::size_t before = routes.size();
    std::vector<bool> visited(node_ids.size(), false);
    std::vector<int> path;
    auto dfs = [&](auto&& self, int node) -> void {
      if (node == od.dest) {
        routes.push_back({0, w, path});
        if (!exhaustive && routes.size() - before > max_routes_per_od)
          fail(ErrorCode::RouteExplosion,
               "OD pair " + std::to_string(w) + " has more than " +
                   std::to_string(max_routes_per_od) +
                   " routes; provide explicit route lines");
        return;
      }
      visited[node_slot(node)] = true;
      for (std::size_t e : out[node_slot(node)]) {
        if (visited[node_slot(net.edges[e].head)]) continue;
        path.push_back(net.edges[e].id);
        self(self, net.edges[e].head);
        path.pop_back();
      }
      visited[node_slot(node)] = false;
    };
    dfs(dfs, od.origin);
    if (routes.size() == before)
      fail(ErrorCode::NoRouteForOD,
           "no route from " + std::to_string(od.origin) + " to " +
               std::to_string(od.dest));
  }
  return make_route_set(net, std::move(routes));
}

/// y = Theta x
inline std::vector<double> edge_flows(const RouteSet& rs,
                                      const std::vector<double>& x) {
  if (x.size() != rs.size())
    fail(ErrorCode::DimensionMismatch,
         "edge_flows: " + std::to_string(x.size()) + " flows for " +
             std::to_string(rs.size()) + " routes");
  std::vector<double> y(rs.theta.rows(), 0.0);
  for (std::size_t p = 0; p < rs.size(); ++p)
    for (std::size_t e : rs.edge_idx[p]) y[e] += x[p];
  return y;
}

inline std::vector<double> edge_latencies(const Network& net,
                                          const std::vector<double>& y) {
  std::vector<double> tau(net.edges.size());
  for (std::size_t e = 0; e < net.edges.size(); ++e)
    tau[e] = net.edges[e].latency(y[e]);
  return tau;
}

/// G = Theta^T tau(Theta x)
inline std::vector<double> route_costs(const Network& net, const RouteSet& rs,
                                       const std::vector<double>& x) {
  const std::vector<double> tau = edge_latencies(net, edge_flows(rs, x));
  std::vector<double> g(rs.size(), 0.0);
  for (std::size_t p = 0; p < rs.size(); ++p)
    for (std::size_t e : rs.edge_idx[p]) g[p] += tau[e];
  return g;
}

}  // namespace net
}  // namespace wlab
