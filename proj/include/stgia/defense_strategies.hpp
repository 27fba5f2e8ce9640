#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stgia/defense.hpp"
#include "stgia/fed.hpp"

namespace stgia {

namespace detail {
inline constexpr std::uint64_t kDefenseStream = 0x44;
inline constexpr std::uint64_t kShadowStream = 0x53;
}  // namespace detail

/// Rebuilds a TrainWindow from perturbed geo points.
inline TrainWindow rebuild_window(const TrainWindow& clean, std::vector<GeoPoint> points,
                                  const GeoPoint& label_point, const CoordScaler& scaler,
                                  const GridIndex& grid) {
    TrainWindow out = clean;
    out.window_points = std::move(points);
    out.label_point = label_point;
    for (std::size_t k = 0; k < out.window_points.size(); ++k)
        scaler.encode(out.window_points[k], out.x[2 * k], out.x[2 * k + 1]);
    out.label = grid_cell_of(label_point, grid);
    return out;
}

/// The adaptive strategy: importance-weighted budget allocation per round,
/// then PGEM obfuscation of every location the round trains on (the W window
/// points and the label point), each charged an equal share of the round's
/// budget. Risk signals arrive from the harness's shadow attack.
class AdaptiveStrategy {
public:
    AdaptiveStrategy(BudgetLedger ledger, const RoadNetwork& net, const GridIndex& grid,
                     const CoordScaler& scaler, std::map<std::string, ConstraintDomain> domains,
                     std::vector<std::string> client_ids, std::uint64_t seed)
        : ledger_(std::move(ledger)), net_(net), grid_(grid), scaler_(scaler),
          domains_(std::move(domains)), client_ids_(std::move(client_ids)), seed_(seed) {
        validate(ledger_);
        risk_ = neutral_risk(ledger_);
    }

    double begin_round(int round) {
        const double gamma = round_importance(risk_, ledger_);
        gammas_.push_back(gamma);
        current_eps_ = allocate_budget(ledger_, gamma);
        current_round_ = round;
        return current_eps_;
    }

    TrainWindow obfuscate(std::size_t client_idx, int round, const TrainWindow& clean) {
        if (round != current_round_)
            throw std::logic_error("AdaptiveStrategy: begin_round was not called for this round");
        const ConstraintDomain& dom = domain_for(client_idx);
        Rng rng(derive_seed(seed_, detail::kDefenseStream, client_idx,
                            static_cast<std::uint64_t>(round)));
        const double eps_point =
            current_eps_ / static_cast<double>(clean.window_points.size() + 1);
        const GeoPoint origin = scaler_.origin();
        std::vector<GeoPoint> pts;
        pts.reserve(clean.window_points.size());
        for (const GeoPoint& p : clean.window_points) {
            const NodeId x = nearest_node(net_, p, origin);
            pts.push_back(net_.node(pgem(x, dom, eps_point, net_, rng)));
        }
        const NodeId lx = nearest_node(net_, clean.label_point, origin);
        const GeoPoint label_pt = net_.node(pgem(lx, dom, eps_point, net_, rng));
        return rebuild_window(clean, std::move(pts), label_pt, scaler_, grid_);
    }

    void set_risk(const RiskSignal& risk) { risk_ = risk; }

    const BudgetLedger& ledger() const { return ledger_; }
    const std::vector<double>& gammas() const { return gammas_; }

    DefenseHook hook() {
        DefenseHook h;
        h.begin_round = [this](int t) { return begin_round(t); };
        h.obfuscate = [this](std::size_t ci, int t, const TrainWindow& w) {
            return obfuscate(ci, t, w);
        };
        return h;
    }

private:
    const ConstraintDomain& domain_for(std::size_t client_idx) const {
        if (client_idx >= client_ids_.size())
            throw std::out_of_range("AdaptiveStrategy: unknown client index");
        auto it = domains_.find(client_ids_[client_idx]);
        if (it == domains_.end())
            throw std::runtime_error("AdaptiveStrategy: no constraint domain for user " +
                                     client_ids_[client_idx]);
        return it->second;
    }

    BudgetLedger ledger_;
    const RoadNetwork& net_;
    const GridIndex& grid_;
    const CoordScaler& scaler_;
    std::map<std::string, ConstraintDomain> domains_;
    std::vector<std::string> client_ids_;
    std::uint64_t seed_;
    RiskSignal risk_;
    std::vector<double> gammas_;
    double current_eps_ = 0.0;
    int current_round_ = 0;
};

/// GeoI / GeoGI baselines: a uniform per-round share of the total budget,
/// split equally over the W+1 perturbed points.
class UniformInputDefense {
public:
    enum class Mechanism { planar_laplace, graph_exp };

    UniformInputDefense(Mechanism mech, double epsilon_total, int rounds, const RoadNetwork& net,
                        const GridIndex& grid, const CoordScaler& scaler, std::uint64_t seed)
        : mech_(mech), eps_round_(epsilon_total / rounds), net_(net), grid_(grid),
          scaler_(scaler), seed_(seed) {
        if (!(epsilon_total > 0.0) || rounds < 1)
            throw std::invalid_argument("UniformInputDefense: bad budget or round count");
    }

    DefenseHook hook() {
        DefenseHook h;
        h.begin_round = [this](int) { return eps_round_; };
        h.obfuscate = [this](std::size_t ci, int t, const TrainWindow& clean) {
            Rng rng(derive_seed(seed_, detail::kDefenseStream, ci, static_cast<std::uint64_t>(t)));
            const double eps_point =
                eps_round_ / static_cast<double>(clean.window_points.size() + 1);
            const GeoPoint origin = scaler_.origin();
            std::vector<GeoPoint> pts;
            pts.reserve(clean.window_points.size());
            auto perturb = [&](const GeoPoint& p) {
                if (mech_ == Mechanism::planar_laplace)
                    return planar_laplace(p, eps_point, origin, rng);
                return net_.node(graph_exp_mech(nearest_node(net_, p, origin), net_, eps_point, rng));
            };
            for (const GeoPoint& p : clean.window_points) pts.push_back(perturb(p));
            const GeoPoint label_pt = perturb(clean.label_point);
            return rebuild_window(clean, std::move(pts), label_pt, scaler_, grid_);
        };
        return h;
    }

private:
    Mechanism mech_;
    double eps_round_;
    const RoadNetwork& net_;
    const GridIndex& grid_;
    const CoordScaler& scaler_;
    std::uint64_t seed_;
};

/// DP-SGD baseline: clip + Gaussian noise on the shared gradient, sigma from
/// the per-round Gaussian-mechanism bound at fixed delta.
class DpsgdDefense {
public:
    DpsgdDefense(double epsilon_total, int rounds, double clip_c, double delta, std::uint64_t seed)
        : eps_round_(epsilon_total / rounds), clip_c_(clip_c),
          sigma_(gaussian_sigma(eps_round_, delta)), seed_(seed) {}

    double sigma() const { return sigma_; }

    DefenseHook hook() {
        DefenseHook h;
        h.begin_round = [this](int) { return eps_round_; };
        h.perturb_grad = [this](std::size_t ci, int t, const GradVector& g) {
            Rng rng(derive_seed(seed_, detail::kDefenseStream, ci, static_cast<std::uint64_t>(t)));
            return dpsgd_perturb(g, clip_c_, sigma_, rng);
        };
        return h;
    }

private:
    double eps_round_;
    double clip_c_;
    double sigma_;
    std::uint64_t seed_;
};

}  // namespace stgia
