#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stgia/geo.hpp"
#include "stgia/grid.hpp"
#include "stgia/model.hpp"
#include "stgia/rng.hpp"
#include "stgia/road_network.hpp"

namespace stgia {

/// A user's set of plausible locations: the support of the PGEM output.
struct ConstraintDomain {
    std::string user_id;
    std::vector<NodeId> nodes;  // sorted, unique
};

inline void validate(const ConstraintDomain& dom, const RoadNetwork& net) {
    if (dom.nodes.empty())
        throw std::invalid_argument("ConstraintDomain: empty domain");
    for (std::size_t i = 0; i < dom.nodes.size(); ++i) {
        net.node(dom.nodes[i]);
        if (i > 0 && dom.nodes[i] <= dom.nodes[i - 1])
            throw std::invalid_argument("ConstraintDomain: nodes must be sorted and unique");
    }
}

/// Total/consumed privacy budget plus the risk-normalization constants of
/// the importance formula.
struct BudgetLedger {
    double epsilon_total = 10.0;
    std::vector<double> consumed;
    double alpha = 0.5;      // weight of the AD term
    double beta = 0.5;       // weight of the AIT term
    double rho_ad_m = 500.0; // AD normalization scale, meters
    double n_max = 100.0;    // AIT normalization scale, iterations

    double remaining() const {
        double s = 0.0;
        for (double e : consumed) s += e;
        return epsilon_total - s;
    }
};

inline void validate(const BudgetLedger& ledger) {
    if (!(ledger.epsilon_total > 0.0))
        throw std::invalid_argument("BudgetLedger: total budget must be > 0");
    if (ledger.alpha < 0.0 || ledger.beta < 0.0 || std::abs(ledger.alpha + ledger.beta - 1.0) > 1e-9)
        throw std::invalid_argument("BudgetLedger: weights must be >= 0 and sum to 1");
    for (double e : ledger.consumed)
        if (e < 0.0) throw std::invalid_argument("BudgetLedger: negative consumed entry");
}

/// Last round's observed attack outcome, the defender's risk signal.
struct RiskSignal {
    double ad_m = 0.0;  // attack distance, meters
    double ait = 1.0;   // attack iterations
};

/// F1 = F2 = 1: the declared neutral signal for round 1.
inline RiskSignal neutral_risk(const BudgetLedger& ledger) {
    return RiskSignal{ledger.rho_ad_m, ledger.n_max};
}

inline constexpr double kGammaFloor = 1e-6;

/// Round importance: gamma = 1 / (alpha*AD/rho + beta*AIT/Nmax + floor).
/// Accurate, cheap attacks (small AD, small AIT) mean high risk and a large
/// gamma; the floor guards the fully-degenerate zero-risk case.
inline double round_importance(const RiskSignal& risk, const BudgetLedger& ledger) {
    validate(ledger);
    if (risk.ad_m < 0.0) throw std::invalid_argument("round_importance: AD must be >= 0");
    const double f1 = risk.ad_m / ledger.rho_ad_m;
    const double f2 = risk.ait / ledger.n_max;
    return 1.0 / (ledger.alpha * f1 + ledger.beta * f2 + kGammaFloor);
}

/// Spends exp(-gamma) of the remaining budget: high importance keeps the
/// round's share small so high-risk rounds get heavy noise.
inline double allocate_budget(BudgetLedger& ledger, double gamma) {
    validate(ledger);
    if (!(gamma > 0.0)) throw std::invalid_argument("allocate_budget: gamma must be > 0");
    const double remaining = ledger.remaining();
    if (!(remaining > 0.0))
        throw std::runtime_error("allocate_budget: budget exhausted");
    const double eps_t = std::exp(-gamma) * remaining;
    ledger.consumed.push_back(eps_t);
    return eps_t;
}

// ---- constrained exponential mechanism ----------------------------------

/// Closed-form PGEM output distribution over the domain, for the given true
/// node. Probabilities are exact up to floating point (log-sum-exp).
inline std::map<NodeId, double> pgem_probabilities(NodeId x, const ConstraintDomain& dom,
                                                   double eps, const RoadNetwork& net) {
    validate(dom, net);
    if (!(eps >= 0.0)) throw std::invalid_argument("pgem: epsilon must be >= 0");
    const auto dist = dijkstra_from(net, x);
    std::vector<double> logw(dom.nodes.size());
    double max_lw = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < dom.nodes.size(); ++i) {
        const double d = dist.at(dom.nodes[i]);
        logw[i] = std::isinf(d) ? -std::numeric_limits<double>::infinity() : -eps * d / 2.0;
        max_lw = std::max(max_lw, logw[i]);
    }
    if (std::isinf(max_lw))
        throw std::runtime_error("pgem: no domain member reachable from the input");
    double z = 0.0;
    for (double lw : logw) z += std::exp(lw - max_lw);
    std::map<NodeId, double> probs;
    for (std::size_t i = 0; i < dom.nodes.size(); ++i)
        probs[dom.nodes[i]] = std::exp(logw[i] - max_lw) / z;
    return probs;
}

/// Maps x to the domain member nearest by network distance (Euclidean when
/// everything is unreachable); identity when x is already a member.
inline NodeId snap_to_domain(NodeId x, const ConstraintDomain& dom, const RoadNetwork& net,
                             const std::function<void(const std::string&)>& log = nullptr) {
    if (dom.nodes.empty())
        throw std::invalid_argument("pgem: empty constraint domain");
    if (std::binary_search(dom.nodes.begin(), dom.nodes.end(), x)) return x;
    const auto dist = dijkstra_from(net, x);
    NodeId best = dom.nodes.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (NodeId c : dom.nodes) {
        const double d = dist.at(c);
        if (d < best_d) { best_d = d; best = c; }
    }
    if (std::isinf(best_d)) {
        const GeoPoint origin = net.centroid();
        for (NodeId c : dom.nodes) {
            const double d = distance_m(net.node(x), net.node(c), origin);
            if (d < best_d) { best_d = d; best = c; }
        }
    }
    if (log) log("pgem: input node " + std::to_string(x) + " outside domain, snapped to " +
                 std::to_string(best));
    return best;
}

/// The constrained exponential mechanism: samples c in the domain with
/// probability proportional to exp(-eps * d(x, c) / 2), d being the network
/// shortest-path distance in meters (so eps carries units of 1/meter).
/// Inverse-CDF sampling over the id-sorted domain.
inline NodeId pgem(NodeId x, const ConstraintDomain& dom, double eps, const RoadNetwork& net,
                   Rng& rng, const std::function<void(const std::string&)>& log = nullptr) {
    const NodeId snapped = snap_to_domain(x, dom, net, log);
    const auto probs = pgem_probabilities(snapped, dom, eps, net);
    const double u = rng.uniform();
    double acc = 0.0;
    for (const auto& [id, p] : probs) {  // ordered by node id
        acc += p;
        if (u < acc) return id;
    }
    return probs.rbegin()->first;  // numerical residue lands on the last member
}

/// Exponential mechanism over every node reachable from x; the
/// unpersonalized variant used as the GeoGI baseline.
inline NodeId graph_exp_mech(NodeId x, const RoadNetwork& net, double eps, Rng& rng) {
    const auto dist = dijkstra_from(net, x);
    ConstraintDomain dom;
    dom.user_id = "*";
    for (const auto& [id, d] : dist)
        if (!std::isinf(d)) dom.nodes.push_back(id);  // already id-sorted
    return pgem(x, dom, eps, net, rng);
}

// ---- planar Laplace ------------------------------------------------------

namespace detail {

/// Lambert W, branch -1, for z in (-1/e, 0). Halley iterations to 1e-12.
inline double lambert_w_m1(double z) {
    if (!(z > -std::exp(-1.0) - 1e-300) || z >= 0.0)
        throw std::invalid_argument("lambert_w_m1: argument outside (-1/e, 0)");
    double w;
    if (z < -0.25) {
        // Series about the branch point z = -1/e.
        const double eta = std::sqrt(2.0 * (1.0 + std::exp(1.0) * z));
        w = -1.0 - eta - eta * eta / 3.0 - 11.0 * eta * eta * eta / 72.0;
        // The series already meets the tolerance this close to the branch
        // point, and Halley's denominator degenerates there.
        if (eta < 1e-4) return w;
    } else {
        const double l1 = std::log(-z);
        w = l1 - std::log(-l1);
    }
    for (int i = 0; i < 60; ++i) {
        const double ew = std::exp(w);
        const double f = w * ew - z;
        const double fp = ew * (1.0 + w);
        const double step = f / (fp - f * (2.0 + w) / (2.0 * (1.0 + w)));
        w -= step;
        if (std::abs(step) <= 1e-12 * (1.0 + std::abs(w))) break;
    }
    return w;
}

/// Inverse CDF of Gamma(shape 2, scale 1): solves 1 - (1+s)e^{-s} = p.
inline double gamma2_inverse_cdf(double p) {
    if (!(p >= 0.0) || p >= 1.0)
        throw std::invalid_argument("gamma2_inverse_cdf: p must lie in [0, 1)");
    if (p == 0.0) return 0.0;
    const double w = lambert_w_m1((p - 1.0) / std::exp(1.0));
    return -1.0 - w;
}

}  // namespace detail

/// Polar planar Laplace noise: uniform angle, radius Gamma(2, 1/eps) via the
/// Lambert-W inverse CDF, applied in projected meters. eps is per meter.
inline GeoPoint planar_laplace(const GeoPoint& x, double eps, const GeoPoint& origin, Rng& rng) {
    if (!(eps > 0.0)) throw std::invalid_argument("planar_laplace: epsilon must be > 0");
    const double theta = 2.0 * pi() * rng.uniform();
    const double r = detail::gamma2_inverse_cdf(rng.uniform()) / eps;
    PlanarPoint q = planar_project(x, origin);
    q.x += r * std::cos(theta);
    q.y += r * std::sin(theta);
    return planar_unproject(q, origin);
}

// ---- DP-SGD --------------------------------------------------------------

/// Clip to norm C, then add N(0, (sigma*C)^2) per coordinate. sigma = 0 is
/// the exact identity on gradients already inside the ball.
inline GradVector dpsgd_perturb(const GradVector& g, double clip_c, double sigma, Rng& rng) {
    if (!(clip_c > 0.0)) throw std::invalid_argument("dpsgd_perturb: C must be > 0");
    if (sigma < 0.0) throw std::invalid_argument("dpsgd_perturb: sigma must be >= 0");
    double sq = 0.0;
    for (double v : g) sq += v * v;
    const double norm = std::sqrt(sq);
    const double scale = norm > clip_c ? clip_c / norm : 1.0;
    GradVector out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] * scale;
    if (sigma > 0.0)
        for (double& v : out) v += sigma * clip_c * rng.normal();
    return out;
}

/// Per-round Gaussian-mechanism noise multiplier for a given (eps, delta):
/// sigma = sqrt(2 ln(1.25/delta)) / eps, sensitivity folded into C.
inline double gaussian_sigma(double eps, double delta) {
    if (!(eps > 0.0) || !(delta > 0.0) || delta >= 1.0)
        throw std::invalid_argument("gaussian_sigma: need eps > 0 and delta in (0, 1)");
    return std::sqrt(2.0 * std::log(1.25 / delta)) / eps;
}

// ---- constraint domain file ----------------------------------------------

/// One line per user: `<user_id> <node_id> [<node_id> ...]`.
inline std::map<std::string, ConstraintDomain> load_constraint_domains(std::istream& in) {
    std::map<std::string, ConstraintDomain> out;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        ConstraintDomain dom;
        if (!(ls >> dom.user_id)) continue;
        NodeId id;
        while (ls >> id) dom.nodes.push_back(id);
        std::sort(dom.nodes.begin(), dom.nodes.end());
        dom.nodes.erase(std::unique(dom.nodes.begin(), dom.nodes.end()), dom.nodes.end());
        if (dom.nodes.empty())
            throw std::runtime_error("constraint domain file: user '" + dom.user_id + "' has no nodes");
        out[dom.user_id] = std::move(dom);
    }
    return out;
}

inline std::map<std::string, ConstraintDomain> load_constraint_domains(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open constraint domain file: " + path);
    return load_constraint_domains(in);
}

/// Default domain when a user is missing from the file: every node within
/// `radius_m` of the trajectory centroid, plus the visited nodes themselves
/// so the true location is always a member.
inline ConstraintDomain default_domain(const RoadNetwork& net, const Trajectory& traj,
                                       double radius_m) {
    GeoPoint centroid;
    for (const auto& sp : traj.points) {
        centroid.lat += sp.point.lat;
        centroid.lon += sp.point.lon;
    }
    centroid.lat /= static_cast<double>(traj.points.size());
    centroid.lon /= static_cast<double>(traj.points.size());

    const GeoPoint origin = net.centroid();
    std::set<NodeId> members;
    for (const auto& [id, p] : net.nodes())
        if (distance_m(p, centroid, origin) <= radius_m) members.insert(id);
    for (const auto& sp : traj.points)
        members.insert(nearest_node(net, sp.point, origin));

    ConstraintDomain dom;
    dom.user_id = traj.user_id;
    dom.nodes.assign(members.begin(), members.end());
    return dom;
}

}  // namespace stgia
