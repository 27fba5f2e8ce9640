#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stgia/fed.hpp"
#include "stgia/grid.hpp"
#include "stgia/model.hpp"
#include "stgia/rng.hpp"
#include "stgia/road_network.hpp"

namespace stgia {

enum class InitMode { gaussian, st_based };
enum class MappingMode { off, road_network, candidate_set };
enum class CalibrationMode { off, mean, similarity };

struct AttackConfig {
    int max_iters = 200;    // N
    double step = 1.0;      // attack learning rate, normalized units
    InitMode init = InitMode::st_based;
    MappingMode mapping = MappingMode::road_network;
    CalibrationMode calibration = CalibrationMode::mean;
    double tau_x = 3e-3;            // convergence displacement tolerance
    bool map_all_positions = false; // map every window slot, not just the last
    /// Iterates are clamped to this many normalized units. Locations live in
    /// the city bbox ([-1,1] with margin); without the clamp a wandering
    /// dummy reaches softmax-saturated dead zones whose zero gradients fake
    /// convergence.
    double state_clamp = 3.0;
};

inline void validate(const AttackConfig& cfg) {
    if (cfg.max_iters < 1) throw std::invalid_argument("AttackConfig: N must be >= 1");
    if (!(cfg.step > 0.0)) throw std::invalid_argument("AttackConfig: step must be > 0");
    if (!(cfg.tau_x > 0.0)) throw std::invalid_argument("AttackConfig: tau_x must be > 0");
}

/// Outcome of one per-round reconstruction.
struct AttackRecord {
    int round = 0;
    std::string client;
    GeoPoint recon;                      // final window position after mapping
    std::vector<GeoPoint> recon_window;  // all W decoded positions
    DummyState final_dummy;
    int iterations_used = 0;             // AIT
    double final_distance = 0.0;         // gradient-matching norm at stop
    bool converged = false;
    bool diverged = false;
    std::size_t target_index = 0;        // 0-based trajectory index of the target
    GeoPoint true_target;
};

/// Dummy-state initialization. Round 1, a missing previous record, or the
/// gaussian ablation all draw x', y' ~ N(0,1); otherwise the window is seeded
/// from the previous round's reconstruction and only y' is redrawn.
inline DummyState init_dummy(const ModelSpec& spec, const AttackConfig& cfg, int round,
                             const AttackRecord* prev, const CoordScaler& scaler, Rng& rng) {
    DummyState s;
    s.x.resize(static_cast<std::size_t>(spec.input_dim()));
    s.y.resize(static_cast<std::size_t>(spec.classes));
    const bool st = cfg.init == InitMode::st_based && round > 1 && prev != nullptr &&
                    !prev->recon_window.empty();
    if (st) {
        for (int k = 0; k < spec.window; ++k) {
            const GeoPoint& p = k < static_cast<int>(prev->recon_window.size())
                                    ? prev->recon_window[k]
                                    : prev->recon;
            scaler.encode(p, s.x[2 * k], s.x[2 * k + 1]);
        }
    } else {
        for (double& v : s.x) v = rng.normal();
    }
    for (double& v : s.y) v = rng.normal();
    return s;
}

namespace detail {

inline double matching_sq(const GradVector& a, const GradVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// Snaps one window slot onto its nearest road node, in place.
inline void map_slot(std::vector<double>& x, int slot, const RoadNetwork& net,
                     const CoordScaler& scaler) {
    const GeoPoint p = scaler.decode(x[2 * slot], x[2 * slot + 1]);
    const GeoPoint q = net.node(nearest_node(net, p, scaler.origin()));
    scaler.encode(q, x[2 * slot], x[2 * slot + 1]);
}

}  // namespace detail

/// One round of gradient matching (the inner loop of the attack): descend the
/// squared matching objective in the dummy state, snap onto the road network
/// when mapping is enabled, and stop once the dummy stops moving or the
/// iteration budget runs out.
inline AttackRecord gia_round(const ModelSpec& spec, const ParamVector& params,
                              const GradVector& g_true, const AttackConfig& cfg,
                              const RoadNetwork& net, const CoordScaler& scaler,
                              DummyState init) {
    validate(cfg);
    if (g_true.size() != spec.param_count())
        throw std::invalid_argument("gia_round: gradient has wrong length");

    AttackRecord rec;
    DummyState s = std::move(init);
    for (int i = 1; i <= cfg.max_iters; ++i) {
        rec.iterations_used = i;
        const GradVector g_dummy = param_grad(spec, params, s.x, softmax(s.y));
        const double sq = detail::matching_sq(g_dummy, g_true);
        if (!std::isfinite(sq)) {
            rec.diverged = true;
            break;
        }
        const InputGrad grad = input_grad_of_matching(spec, params, s, g_true);
        const std::vector<double> x_before = s.x;
        for (std::size_t j = 0; j < s.x.size(); ++j)
            s.x[j] = std::clamp(s.x[j] - cfg.step * grad.dx[j], -cfg.state_clamp, cfg.state_clamp);
        for (std::size_t j = 0; j < s.y.size(); ++j) s.y[j] -= cfg.step * grad.dy[j];

        if (cfg.mapping == MappingMode::road_network && net.node_count() > 0) {
            if (cfg.map_all_positions)
                for (int k = 0; k < spec.window; ++k) detail::map_slot(s.x, k, net, scaler);
            else
                detail::map_slot(s.x, spec.window - 1, net, scaler);
        }

        // Net displacement of the iterate, mapping included: with mapping on,
        // it hits exactly zero once every slot's node assignment is stable.
        // A state pinned against the clamp box is stuck, not converged.
        double disp = 0.0;
        bool pinned = false;
        for (std::size_t j = 0; j < s.x.size(); ++j) {
            const double d = s.x[j] - x_before[j];
            disp += d * d;
            if (std::abs(s.x[j]) >= cfg.state_clamp) pinned = true;
        }
        if (!pinned && std::sqrt(disp) < cfg.tau_x) {
            rec.converged = true;
            break;
        }
    }

    rec.final_distance = rec.diverged
                             ? std::numeric_limits<double>::quiet_NaN()
                             : matching_objective(param_grad(spec, params, s.x, softmax(s.y)), g_true);
    rec.recon_window.reserve(spec.window);
    for (int k = 0; k < spec.window; ++k)
        rec.recon_window.push_back(scaler.decode(s.x[2 * k], s.x[2 * k + 1]));
    rec.recon = rec.recon_window.back();
    rec.final_dummy = std::move(s);
    return rec;
}

/// Mean of the most recent min(n, Ts) recoveries of one point, componentwise.
/// The window length plays the role of Ts: that is how many rounds can
/// recover the same point under the sliding schedule.
inline GeoPoint calibrate_mean(const std::vector<GeoPoint>& recoveries, int ts) {
    if (recoveries.empty())
        throw std::invalid_argument("calibrate_mean: no recoveries");
    if (ts < 1) throw std::invalid_argument("calibrate_mean: Ts must be >= 1");
    const std::size_t take = std::min<std::size_t>(recoveries.size(), static_cast<std::size_t>(ts));
    const std::size_t first = recoveries.size() - take;
    GeoPoint mean;
    for (std::size_t i = first; i < recoveries.size(); ++i) {
        mean.lat += recoveries[i].lat;
        mean.lon += recoveries[i].lon;
    }
    mean.lat /= static_cast<double>(take);
    mean.lon /= static_cast<double>(take);
    return mean;
}

/// Final per-point attack output plus its ground truth.
struct PointEstimate {
    std::string client;
    std::size_t point_index = 0;
    GeoPoint estimate;
    GeoPoint truth;
    int recoveries = 0;
};

struct AttackRunResult {
    std::vector<AttackRecord> records;   // one per (client, round)
    std::vector<PointEstimate> points;   // calibrated trajectory per client
    /// Fraction of candidate sets containing the true cell (ST-GIA+ only).
    double predictor_recall_at_5 = std::numeric_limits<double>::quiet_NaN();
    int candidate_queries = 0;
};

}  // namespace stgia
