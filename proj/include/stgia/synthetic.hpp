#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stgia/geo.hpp"
#include "stgia/rng.hpp"
#include "stgia/road_network.hpp"

namespace stgia {

namespace detail {
inline constexpr std::uint64_t kNetStream = 0x4e;
inline constexpr std::uint64_t kTrajStream = 0x54;
}  // namespace detail

/// Synthetic road network: a rows x cols lattice with jittered node
/// positions, 4-neighbor streets, and a few random chords. Node ids are
/// row-major from 0.
inline RoadNetwork gen_network(int rows, int cols, double spacing_m, std::uint64_t seed,
                               GeoPoint anchor = GeoPoint{35.0, 139.0}) {
    if (rows < 2 || cols < 2)
        throw std::invalid_argument("gen_network: need at least a 2x2 lattice");
    if (!(spacing_m > 0.0)) throw std::invalid_argument("gen_network: spacing must be > 0");

    Rng rng(derive_seed(seed, detail::kNetStream));
    RoadNetwork net;
    const double dlat = spacing_m / kMetersPerDegree;
    const double dlon = spacing_m / (kMetersPerDegree * std::cos(deg2rad(anchor.lat)));
    const double jitter = 0.1;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            GeoPoint p;
            p.lat = anchor.lat + (r + jitter * (rng.uniform() - 0.5)) * dlat;
            p.lon = anchor.lon + (c + jitter * (rng.uniform() - 0.5)) * dlon;
            net.add_node(static_cast<NodeId>(r) * cols + c, p);
        }
    }
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const NodeId id = static_cast<NodeId>(r) * cols + c;
            if (c + 1 < cols) net.add_edge(id, id + 1);
            if (r + 1 < rows) net.add_edge(id, id + cols);
        }
    // A few diagonal chords make shortest paths less degenerate.
    const int chords = std::max(1, rows * cols / 16);
    for (int i = 0; i < chords; ++i) {
        const int r = static_cast<int>(rng.index(static_cast<std::size_t>(rows - 1)));
        const int c = static_cast<int>(rng.index(static_cast<std::size_t>(cols - 1)));
        net.add_edge(static_cast<NodeId>(r) * cols + c, static_cast<NodeId>(r + 1) * cols + c + 1);
    }
    return net;
}

/// Synthetic trajectories: directed walks on the road graph at 600-second
/// steps. Walkers keep their heading (the best-aligned neighbor) with
/// probability 0.75 and otherwise pick uniformly, never backtracking when a
/// different neighbor exists. The persistence makes the next location
/// learnable, which real mobility traces are. Deterministic per seed.
inline std::vector<Trajectory> gen_synthetic(const RoadNetwork& net, int n_users, int len,
                                             std::uint64_t seed) {
    if (n_users < 1) throw std::invalid_argument("gen_synthetic: need at least one user");
    if (len < 1) throw std::invalid_argument("gen_synthetic: walk length must be >= 1");
    if (net.node_count() == 0) throw std::invalid_argument("gen_synthetic: empty network");

    std::vector<NodeId> starts;
    for (const auto& [id, p] : net.nodes())
        if (len == 1 || !net.neighbors(id).empty()) starts.push_back(id);
    if (starts.empty())
        throw std::invalid_argument("gen_synthetic: no node can support the requested walk length");

    const GeoPoint origin = net.centroid();
    std::vector<Trajectory> out;
    out.reserve(static_cast<std::size_t>(n_users));
    for (int u = 0; u < n_users; ++u) {
        Rng rng(derive_seed(seed, detail::kTrajStream, static_cast<std::uint64_t>(u)));
        Trajectory traj;
        traj.user_id = "u" + std::to_string(u);
        NodeId cur = starts[rng.index(starts.size())];
        NodeId prev = -1;
        for (int i = 0; i < len; ++i) {
            traj.points.push_back(StampedPoint{static_cast<std::int64_t>(i) * 600, net.node(cur)});
            if (i + 1 == len) break;
            const auto& nbrs = net.neighbors(cur);
            if (nbrs.empty())
                throw std::invalid_argument("gen_synthetic: walk stuck at an isolated node");

            NodeId next = -1;
            if (prev >= 0 && rng.uniform() < 0.75) {
                // Continue along the current heading when a forward neighbor exists.
                const PlanarPoint pc = planar_project(net.node(cur), origin);
                const PlanarPoint pp = planar_project(net.node(prev), origin);
                const double hx = pc.x - pp.x, hy = pc.y - pp.y;
                double best = 0.0;
                for (const auto& [cand, w] : nbrs) {
                    if (cand == prev) continue;
                    const PlanarPoint pn = planar_project(net.node(cand), origin);
                    const double dx = pn.x - pc.x, dy = pn.y - pc.y;
                    const double align = (hx * dx + hy * dy) /
                                         (std::hypot(hx, hy) * std::hypot(dx, dy) + 1e-12);
                    if (align > best) { best = align; next = cand; }
                }
                if (best < 0.5) next = -1;  // no forward option, fall through
            }
            if (next < 0) {
                do {
                    next = nbrs[rng.index(nbrs.size())].first;
                } while (next == prev && nbrs.size() > 1);
            }
            prev = cur;
            cur = next;
        }
        out.push_back(std::move(traj));
    }
    return out;
}

}  // namespace stgia
