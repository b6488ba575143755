#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "localegn/csv.hpp"
#include "localegn/errors.hpp"
#include "localegn/tensor.hpp"

namespace localegn {

/// Static road-network topology. Node signals attach to nodes; edges carry
/// static attributes only (normalized distance by default). Edge ids are
/// dense 0..num_edges-1 in file order.
struct DirectedGraph {
    struct Edge {
        std::size_t tail = 0;
        std::size_t head = 0;
    };

    std::size_t num_nodes = 0;
    std::vector<Edge> edges;
    Tensor2 edge_attr;                    // num_edges x attr_dim
    std::vector<double> distance_km;      // per edge
    std::vector<double> freeflow_kmh;     // empty unless the file provides it
    std::vector<double> shockwave_kmh;    // empty unless the file provides it

    std::size_t num_edges() const { return edges.size(); }
    std::size_t attr_dim() const { return edge_attr.cols(); }
    bool has_speeds() const { return !freeflow_kmh.empty(); }

    std::vector<std::uint32_t> tails() const {
        std::vector<std::uint32_t> t(edges.size());
        for (std::size_t k = 0; k < edges.size(); ++k)
            t[k] = static_cast<std::uint32_t>(edges[k].tail);
        return t;
    }
    std::vector<std::uint32_t> heads() const {
        std::vector<std::uint32_t> h(edges.size());
        for (std::size_t k = 0; k < edges.size(); ++k)
            h[k] = static_cast<std::uint32_t>(edges[k].head);
        return h;
    }

    std::vector<std::vector<std::size_t>> in_edges() const {
        std::vector<std::vector<std::size_t>> in(num_nodes);
        for (std::size_t k = 0; k < edges.size(); ++k) in[edges[k].head].push_back(k);
        return in;
    }
    std::vector<std::vector<std::size_t>> out_edges() const {
        std::vector<std::vector<std::size_t>> out(num_nodes);
        for (std::size_t k = 0; k < edges.size(); ++k) out[edges[k].tail].push_back(k);
        return out;
    }
};

/// Build a graph from an edge list with explicit distances; the single edge
/// attribute is distance normalized by the maximum distance in the graph.
inline DirectedGraph make_graph(std::size_t num_nodes,
                                const std::vector<DirectedGraph::Edge>& edges,
                                const std::vector<double>& distance_km) {
    DirectedGraph g;
    g.num_nodes = num_nodes;
    g.edges = edges;
    g.distance_km = distance_km;
    double max_d = 0.0;
    for (double d : distance_km) max_d = std::max(max_d, d);
    g.edge_attr = Tensor2(edges.size(), 1);
    for (std::size_t k = 0; k < edges.size(); ++k)
        g.edge_attr(k, 0) = max_d > 0.0 ? distance_km[k] / max_d : 0.0;
    return g;
}

/// Load `tail,head,distance_km[,freeflow_kmh,shockwave_kmh]`. Node count is
/// max index + 1 unless `expected_nodes` pins it, in which case any larger
/// index is a dangling reference. Duplicate (tail,head) pairs and
/// non-positive distances are rejected; self-loops are allowed.
inline DirectedGraph load_graph(const std::string& path,
                                std::optional<std::size_t> expected_nodes = std::nullopt) {
    const auto lines = csv::read_lines(path);
    if (lines.empty()) throw DataError(path + ": empty edge file");
    const auto header = csv::split(lines[0]);
    const bool with_speeds = header.size() >= 5;
    if (header.size() < 3 || csv::trim(header[0]) != "tail" || csv::trim(header[1]) != "head")
        throw DataError(path + ": expected header tail,head,distance_km[,freeflow_kmh,shockwave_kmh]");

    DirectedGraph g;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::size_t max_node = 0;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = csv::split(lines[r]);
        if (cells.size() != header.size())
            throw DataError(path + ": row " + std::to_string(r) + " has " +
                            std::to_string(cells.size()) + " columns, expected " +
                            std::to_string(header.size()));
        const long tail = csv::parse_index(cells[0], r, 1, path);
        const long head = csv::parse_index(cells[1], r, 2, path);
        const double dist = csv::parse_double(cells[2], r, 3, path);
        if (tail < 0 || head < 0)
            throw DataError(path + ": negative node index at row " + std::to_string(r));
        if (expected_nodes &&
            (static_cast<std::size_t>(tail) >= *expected_nodes ||
             static_cast<std::size_t>(head) >= *expected_nodes))
            throw DataError(path + ": dangling node index at row " + std::to_string(r) +
                            " (graph has " + std::to_string(*expected_nodes) + " nodes)");
        if (dist <= 0.0)
            throw DataError(path + ": non-positive distance at row " + std::to_string(r));
        if (!seen.insert({static_cast<std::size_t>(tail), static_cast<std::size_t>(head)}).second)
            throw DataError(path + ": duplicate edge (" + std::to_string(tail) + "," +
                            std::to_string(head) + ") at row " + std::to_string(r));
        g.edges.push_back({static_cast<std::size_t>(tail), static_cast<std::size_t>(head)});
        g.distance_km.push_back(dist);
        if (with_speeds) {
            const double f = csv::parse_double(cells[3], r, 4, path);
            const double w = csv::parse_double(cells[4], r, 5, path);
            if (f <= 0.0 || w <= 0.0)
                throw DataError(path + ": non-positive speed at row " + std::to_string(r));
            g.freeflow_kmh.push_back(f);
            g.shockwave_kmh.push_back(w);
        }
        max_node = std::max({max_node, static_cast<std::size_t>(tail),
                             static_cast<std::size_t>(head)});
    }
    if (g.edges.empty()) throw DataError(path + ": no edges");
    g.num_nodes = expected_nodes ? *expected_nodes : max_node + 1;

    double max_d = 0.0;
    for (double d : g.distance_km) max_d = std::max(max_d, d);
    g.edge_attr = Tensor2(g.num_edges(), 1);
    for (std::size_t k = 0; k < g.num_edges(); ++k) g.edge_attr(k, 0) = g.distance_km[k] / max_d;
    return g;
}

inline void write_graph(const std::string& path, const DirectedGraph& g) {
    std::string out = g.has_speeds() ? "tail,head,distance_km,freeflow_kmh,shockwave_kmh\n"
                                     : "tail,head,distance_km\n";
    for (std::size_t k = 0; k < g.num_edges(); ++k) {
        out += std::to_string(g.edges[k].tail) + "," + std::to_string(g.edges[k].head) + "," +
               csv::format_double(g.distance_km[k]);
        if (g.has_speeds())
            out += "," + csv::format_double(g.freeflow_kmh[k]) + "," +
                   csv::format_double(g.shockwave_kmh[k]);
        out += "\n";
    }
    csv::write_file(path, out);
}

} // namespace localegn
