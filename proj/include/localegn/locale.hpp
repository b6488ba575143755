#pragma once

#include <algorithm>
#include <limits>
#include <queue>
#include <span>
#include <vector>

#include "localegn/errors.hpp"
#include "localegn/graph.hpp"

namespace localegn {

inline constexpr double kInfDist = std::numeric_limits<double>::infinity();
inline constexpr std::size_t kNoHop = std::numeric_limits<std::size_t>::max();

/// All-pairs shortest paths by distance, with the edge count of the chosen
/// path. Ties in distance break toward fewer hops, so the hop always belongs
/// to a distance-shortest path.
struct HopTable {
    std::size_t num_nodes = 0;
    std::vector<double> dist;     // row-major num_nodes x num_nodes
    std::vector<std::size_t> hop; // kNoHop where unreachable

    double distance(std::size_t i, std::size_t j) const { return dist[i * num_nodes + j]; }
    std::size_t hops(std::size_t i, std::size_t j) const { return hop[i * num_nodes + j]; }
};

/// Dijkstra per source over the (distance, hops) lexicographic order.
inline HopTable hop_and_distance(const DirectedGraph& g) {
    for (double d : g.distance_km)
        if (d < 0.0) throw DataError("hop_and_distance: negative edge distance");
    HopTable t;
    t.num_nodes = g.num_nodes;
    t.dist.assign(g.num_nodes * g.num_nodes, kInfDist);
    t.hop.assign(g.num_nodes * g.num_nodes, kNoHop);
    const auto out = g.out_edges();

    using State = std::pair<std::pair<double, std::size_t>, std::size_t>; // ((dist,hops), node)
    for (std::size_t src = 0; src < g.num_nodes; ++src) {
        double* dist = t.dist.data() + src * g.num_nodes;
        std::size_t* hops = t.hop.data() + src * g.num_nodes;
        std::priority_queue<State, std::vector<State>, std::greater<>> pq;
        dist[src] = 0.0;
        hops[src] = 0;
        pq.push({{0.0, 0}, src});
        while (!pq.empty()) {
            const auto [key, u] = pq.top();
            pq.pop();
            if (key.first != dist[u] || key.second != hops[u]) continue;
            for (std::size_t k : out[u]) {
                const std::size_t v = g.edges[k].head;
                const double nd = dist[u] + g.distance_km[k];
                const std::size_t nh = hops[u] + 1;
                if (nd < dist[v] || (nd == dist[v] && nh < hops[v])) {
                    dist[v] = nd;
                    hops[v] = nh;
                    pq.push({{nd, nh}, v});
                }
            }
        }
    }
    return t;
}

/// Per-node hop reach and the graph-wide recommended GN depth: how many
/// edges traffic can cross within the prediction span, forward at free-flow
/// speed and backward at shockwave speed.
struct LayerRecommendation {
    std::vector<std::size_t> forward_hops;  // max hop in the forward reach set
    std::vector<std::size_t> backward_hops; // max hop in the backward reach set
    std::size_t k = 1;
};

/// Speeds are km/h, one per node (broadcast a scalar for the global case).
/// Forward radius for node i is horizon_steps * interval * f_i; the forward
/// set collects hop counts of nodes whose shortest distance from i is inside
/// that radius, and symmetrically backward toward i with the shockwave
/// speed. Unreachable pairs never enter. The result is clamped to >= 1.
inline LayerRecommendation recommend_layers(const DirectedGraph& g, const HopTable& t,
                                            std::size_t horizon_steps,
                                            double interval_minutes,
                                            std::span<const double> freeflow_kmh,
                                            std::span<const double> shockwave_kmh) {
    if (horizon_steps < 1) throw ConfigError("recommend_layers: horizon must be >= 1");
    if (freeflow_kmh.size() != g.num_nodes || shockwave_kmh.size() != g.num_nodes)
        throw ConfigError("recommend_layers: need one speed per node");
    for (std::size_t i = 0; i < g.num_nodes; ++i)
        if (!(freeflow_kmh[i] > 0.0) || !(shockwave_kmh[i] > 0.0))
            throw ConfigError("recommend_layers: speeds must be positive");

    const double span_h = static_cast<double>(horizon_steps) * interval_minutes / 60.0;
    LayerRecommendation rec;
    rec.forward_hops.assign(g.num_nodes, 0);
    rec.backward_hops.assign(g.num_nodes, 0);
    std::size_t k = 0;
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
        const double fwd_radius = span_h * freeflow_kmh[i];
        const double bwd_radius = span_h * shockwave_kmh[i];
        for (std::size_t j = 0; j < g.num_nodes; ++j) {
            if (t.hops(i, j) != kNoHop && t.distance(i, j) <= fwd_radius)
                rec.forward_hops[i] = std::max(rec.forward_hops[i], t.hops(i, j));
            if (t.hops(j, i) != kNoHop && t.distance(j, i) <= bwd_radius)
                rec.backward_hops[i] = std::max(rec.backward_hops[i], t.hops(j, i));
        }
        k = std::max({k, rec.forward_hops[i], rec.backward_hops[i]});
    }
    rec.k = std::max<std::size_t>(k, 1);
    return rec;
}

inline LayerRecommendation recommend_layers(const DirectedGraph& g, const HopTable& t,
                                            std::size_t horizon_steps,
                                            double interval_minutes, double freeflow_kmh,
                                            double shockwave_kmh) {
    const std::vector<double> f(g.num_nodes, freeflow_kmh), w(g.num_nodes, shockwave_kmh);
    return recommend_layers(g, t, horizon_steps, interval_minutes, f, w);
}

/// Induced subgraph on the nodes reachable from (or reaching) a center node
/// within `k` edge traversals, original ids kept in the mapping. Edge
/// attributes are copied verbatim so a forward pass on the locale matches
/// the full graph.
struct LocaleSubgraph {
    DirectedGraph graph;
    std::vector<std::size_t> node_ids; // subgraph row -> original node id
    std::vector<std::size_t> edge_ids; // subgraph edge -> original edge id
    std::size_t center = 0;            // row of the center node in the subgraph
};

inline LocaleSubgraph extract_locale(const DirectedGraph& g, std::size_t center,
                                     std::size_t k) {
    if (center >= g.num_nodes) throw ConfigError("extract_locale: node out of range");
    if (k < 1) throw ConfigError("extract_locale: k must be >= 1");
    const auto in = g.in_edges();
    const auto out = g.out_edges();

    std::vector<std::size_t> depth(g.num_nodes, kNoHop);
    std::queue<std::size_t> q;
    depth[center] = 0;
    q.push(center);
    while (!q.empty()) {
        const std::size_t u = q.front();
        q.pop();
        if (depth[u] == k) continue;
        auto visit = [&](std::size_t v) {
            if (depth[v] == kNoHop) {
                depth[v] = depth[u] + 1;
                q.push(v);
            }
        };
        for (std::size_t e : out[u]) visit(g.edges[e].head);
        for (std::size_t e : in[u]) visit(g.edges[e].tail);
    }

    LocaleSubgraph loc;
    std::vector<std::size_t> remap(g.num_nodes, kNoHop);
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
        if (depth[v] == kNoHop) continue;
        remap[v] = loc.node_ids.size();
        loc.node_ids.push_back(v);
    }
    loc.center = remap[center];
    loc.graph.num_nodes = loc.node_ids.size();
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        const auto [tail, head] = g.edges[e];
        if (remap[tail] == kNoHop || remap[head] == kNoHop) continue;
        loc.graph.edges.push_back({remap[tail], remap[head]});
        loc.graph.distance_km.push_back(g.distance_km[e]);
        loc.edge_ids.push_back(e);
    }
    loc.graph.edge_attr = Tensor2(loc.edge_ids.size(), g.attr_dim());
    for (std::size_t e = 0; e < loc.edge_ids.size(); ++e)
        for (std::size_t c = 0; c < g.attr_dim(); ++c)
            loc.graph.edge_attr(e, c) = g.edge_attr(loc.edge_ids[e], c);
    return loc;
}

} // namespace localegn
