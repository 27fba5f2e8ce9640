#pragma once

#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "stgia/geo.hpp"

namespace stgia {

using NodeId = std::int64_t;

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

struct RoadEdge {
    NodeId u = 0;
    NodeId v = 0;
    double length_m = 0.0;
};

/// Undirected weighted road graph. Nodes are kept in an ordered map so every
/// scan over them is deterministic; immutable once built.
class RoadNetwork {
public:
    RoadNetwork() = default;

    void add_node(NodeId id, const GeoPoint& p) {
        validate(p);
        if (!nodes_.emplace(id, p).second)
            throw std::invalid_argument("RoadNetwork: duplicate node id " + std::to_string(id));
        adjacency_.clear();
    }

    /// Adds an undirected edge. length_m <= 0 means "compute from endpoints".
    void add_edge(NodeId u, NodeId v, double length_m = 0.0) {
        if (u == v) throw std::invalid_argument("RoadNetwork: self-loop rejected");
        const GeoPoint& pu = node(u);
        const GeoPoint& pv = node(v);
        if (length_m <= 0.0) length_m = distance_m(pu, pv, centroid());
        if (length_m <= 0.0)
            throw std::invalid_argument("RoadNetwork: zero-length edge rejected");
        edges_.push_back(RoadEdge{u, v, length_m});
        adjacency_.clear();
    }

    bool has_node(NodeId id) const { return nodes_.count(id) != 0; }
    std::size_t node_count() const { return nodes_.size(); }
    const std::map<NodeId, GeoPoint>& nodes() const { return nodes_; }
    const std::vector<RoadEdge>& edges() const { return edges_; }

    const GeoPoint& node(NodeId id) const {
        auto it = nodes_.find(id);
        if (it == nodes_.end())
            throw std::invalid_argument("RoadNetwork: unknown node id " + std::to_string(id));
        return it->second;
    }

    /// Mean of node coordinates; the default projection origin for this net.
    GeoPoint centroid() const {
        if (nodes_.empty()) return GeoPoint{};
        double lat = 0.0, lon = 0.0;
        for (const auto& [id, p] : nodes_) { lat += p.lat; lon += p.lon; }
        const double n = static_cast<double>(nodes_.size());
        return GeoPoint{lat / n, lon / n};
    }

    const std::vector<std::pair<NodeId, double>>& neighbors(NodeId id) const {
        build_adjacency();
        node(id);  // existence check
        static const std::vector<std::pair<NodeId, double>> kEmpty;
        auto it = adjacency_.find(id);
        return it == adjacency_.end() ? kEmpty : it->second;
    }

private:
    void build_adjacency() const {
        if (!adjacency_.empty() || edges_.empty()) return;
        for (const auto& e : edges_) {
            adjacency_[e.u].emplace_back(e.v, e.length_m);
            adjacency_[e.v].emplace_back(e.u, e.length_m);
        }
    }

    std::map<NodeId, GeoPoint> nodes_;
    std::vector<RoadEdge> edges_;
    mutable std::unordered_map<NodeId, std::vector<std::pair<NodeId, double>>> adjacency_;
};

/// Shortest-path distances in meters from `source` to every node, by
/// Dijkstra. Unreachable nodes get the kUnreachable sentinel.
inline std::map<NodeId, double> dijkstra_from(const RoadNetwork& net, NodeId source) {
    net.node(source);
    std::map<NodeId, double> dist;
    for (const auto& [id, p] : net.nodes()) dist[id] = kUnreachable;
    dist[source] = 0.0;

    using Item = std::pair<double, NodeId>;  // (distance, node)
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    heap.emplace(0.0, source);
    while (!heap.empty()) {
        auto [d, u] = heap.top();
        heap.pop();
        if (d > dist[u]) continue;
        for (const auto& [v, w] : net.neighbors(u)) {
            const double nd = d + w;
            if (nd < dist[v]) {
                dist[v] = nd;
                heap.emplace(nd, v);
            }
        }
    }
    return dist;
}

inline double shortest_path_dist(const RoadNetwork& net, NodeId u, NodeId v) {
    net.node(v);  // validate before running the search
    if (u == v) { net.node(u); return 0.0; }
    return dijkstra_from(net, u).at(v);
}

/// Nearest node to p by projected Euclidean distance; ties break to the
/// smallest node id.
inline NodeId nearest_node(const RoadNetwork& net, const GeoPoint& p, const GeoPoint& origin) {
    if (net.node_count() == 0)
        throw std::invalid_argument("nearest_node: empty network");
    NodeId best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& [id, q] : net.nodes()) {  // ordered by id
        const double d = distance_m(p, q, origin);
        if (d < best_d) { best_d = d; best = id; }
    }
    return best;
}

/// Text format, one record per line:
///   N <id> <lat> <lon>
///   E <u> <v> [<meters>]
/// Omitted edge lengths are computed from the endpoints. '#' starts a comment.
inline RoadNetwork load_road_network(std::istream& in) {
    // Two passes over edge records would complicate streaming; instead stash
    // edges and add them after every node is known.
    RoadNetwork net;
    std::vector<std::tuple<NodeId, NodeId, double>> pending;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "N") {
            NodeId id;
            GeoPoint p;
            if (!(ls >> id >> p.lat >> p.lon))
                throw std::runtime_error("road network line " + std::to_string(lineno) + ": bad node record");
            net.add_node(id, p);
        } else if (tag == "E") {
            NodeId u, v;
            double len = 0.0;
            if (!(ls >> u >> v))
                throw std::runtime_error("road network line " + std::to_string(lineno) + ": bad edge record");
            ls >> len;  // optional
            pending.emplace_back(u, v, len);
        } else {
            throw std::runtime_error("road network line " + std::to_string(lineno) + ": unknown record '" + tag + "'");
        }
    }
    for (const auto& [u, v, len] : pending) net.add_edge(u, v, len);
    return net;
}

inline RoadNetwork load_road_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open road network file: " + path);
    return load_road_network(in);
}

inline void save_road_network(const RoadNetwork& net, std::ostream& out) {
    out.precision(12);
    for (const auto& [id, p] : net.nodes())
        out << "N " << id << " " << p.lat << " " << p.lon << "\n";
    for (const auto& e : net.edges())
        out << "E " << e.u << " " << e.v << " " << e.length_m << "\n";
}

inline void save_road_network(const RoadNetwork& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write road network file: " + path);
    save_road_network(net, out);
}

}  // namespace stgia
