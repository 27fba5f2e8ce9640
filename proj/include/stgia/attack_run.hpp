#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "stgia/attack.hpp"
#include "stgia/predictor.hpp"

namespace stgia {

namespace detail {

inline constexpr std::uint64_t kAttackStream = 0x41;

struct ClientAttackCtx {
    std::size_t index = 0;
    std::optional<AttackRecord> prev;
    std::map<std::size_t, std::vector<GeoPoint>> recoveries;  // point -> history
    std::map<std::size_t, GeoPoint> target_recovery;          // recovery made as target
    std::map<std::size_t, GeoPoint> truth;
};

inline GeoPoint running_estimate(const std::vector<GeoPoint>& recs, CalibrationMode mode,
                                 int ts, const GeoPoint& origin) {
    switch (mode) {
        case CalibrationMode::mean:
            return calibrate_mean(recs, ts);
        case CalibrationMode::similarity: {
            std::vector<std::vector<GeoPoint>> wrapped;
            wrapped.reserve(recs.size());
            for (const GeoPoint& p : recs) wrapped.push_back({p});
            return similarity_calibrate(wrapped, origin)[0];
        }
        case CalibrationMode::off:
        default:
            return recs.back();
    }
}

/// Points-of-a-cell lookup used to keep candidate-mapped results on-network.
inline std::map<CellId, std::vector<NodeId>> nodes_by_cell(const RoadNetwork& net,
                                                           const GridIndex& grid) {
    std::map<CellId, std::vector<NodeId>> by_cell;
    for (const auto& [id, p] : net.nodes()) by_cell[grid_cell_of(p, grid)].push_back(id);
    return by_cell;
}

/// The shared ST-GIA / ST-GIA+ driver; `provider == nullptr` is plain ST-GIA.
inline AttackRunResult attack_driver(const ModelSpec& spec, const std::vector<RoundLog>& logs,
                                     const AttackConfig& cfg, const RoadNetwork& net,
                                     const GridIndex& grid, const CoordScaler& scaler,
                                     std::uint64_t seed, const CandidateProvider* provider) {
    if (logs.empty()) throw std::invalid_argument("attack: empty round log");
    validate(cfg);
    const GeoPoint origin = scaler.origin();
    const auto by_cell = provider ? nodes_by_cell(net, grid) : std::map<CellId, std::vector<NodeId>>{};

    std::unordered_map<std::string, ClientAttackCtx> ctxs;
    std::vector<std::string> client_order;
    int candidate_hits = 0, candidate_queries = 0;

    AttackRunResult out;
    for (const RoundLog& log : logs) {
        const int round = log.round;
        for (const RoundEntry& entry : log.entries) {
            auto [it, fresh] = ctxs.try_emplace(entry.client);
            ClientAttackCtx& ctx = it->second;
            if (fresh) {
                ctx.index = client_order.size();
                client_order.push_back(entry.client);
            }

            Rng rng(derive_seed(seed, kAttackStream, ctx.index, static_cast<std::uint64_t>(round)));
            DummyState init = init_dummy(spec, cfg, round, ctx.prev ? &*ctx.prev : nullptr, scaler, rng);
            if (cfg.init == InitMode::st_based && round > 1 && cfg.calibration != CalibrationMode::off) {
                // Calibrated running estimates sharpen the carried-over window.
                for (int k = 0; k < spec.window; ++k) {
                    const std::size_t point = static_cast<std::size_t>(round - 1) + k;
                    auto rit = ctx.recoveries.find(point);
                    if (rit == ctx.recoveries.end()) continue;
                    const GeoPoint est = running_estimate(rit->second, cfg.calibration, spec.window, origin);
                    scaler.encode(est, init.x[2 * k], init.x[2 * k + 1]);
                }
            }

            AttackRecord rec = gia_round(spec, log.params, entry.grad, cfg, net, scaler, std::move(init));
            rec.round = round;
            rec.client = entry.client;
            rec.target_index = static_cast<std::size_t>(round - 1) + spec.window - 1;
            for (int k = 0; k < spec.window; ++k) {
                const std::size_t point = static_cast<std::size_t>(round - 1) + k;
                ctx.truth[point] = scaler.decode(entry.true_window[2 * k], entry.true_window[2 * k + 1]);
            }
            rec.true_target = ctx.truth[rec.target_index];

            if (provider) {
                // Candidate guidance kicks in once any prior point has been
                // reconstructed; round 1 has no history and stays pure ST-GIA.
                std::vector<Stay> history;
                for (const auto& [point, recs] : ctx.recoveries) {
                    if (point >= rec.target_index) continue;
                    const GeoPoint est = running_estimate(recs, cfg.calibration, spec.window, origin);
                    history.push_back(Stay{grid_cell_of(est, grid),
                                           static_cast<int>((point / 6) % 24)});
                }
                if (!history.empty()) {
                    const CandidateSet cands = (*provider)(entry.client, rec.target_index, history);
                    if (!cands.empty()) {
                        ++candidate_queries;
                        const CellId true_cell = grid_cell_of(rec.true_target, grid);
                        for (const Candidate& c : cands)
                            if (c.cell == true_cell) { ++candidate_hits; break; }

                        const Candidate picked = map_to_candidate(rec.recon, cands, origin);
                        GeoPoint refined = picked.pos;
                        auto nit = by_cell.find(picked.cell);
                        if (nit != by_cell.end() && !nit->second.empty()) {
                            // Within the chosen cell, stay on the road node
                            // nearest the raw reconstruction.
                            double best = std::numeric_limits<double>::infinity();
                            for (NodeId id : nit->second) {
                                const double d = distance_m(rec.recon, net.node(id), origin);
                                if (d < best) { best = d; refined = net.node(id); }
                            }
                        }
                        rec.recon = refined;
                        rec.recon_window.back() = refined;
                        scaler.encode(refined, rec.final_dummy.x[2 * (spec.window - 1)],
                                      rec.final_dummy.x[2 * (spec.window - 1) + 1]);
                    }
                }
            }

            for (int k = 0; k < spec.window; ++k) {
                const std::size_t point = static_cast<std::size_t>(round - 1) + k;
                ctx.recoveries[point].push_back(rec.recon_window[k]);
                if (k == spec.window - 1) ctx.target_recovery[point] = rec.recon_window[k];
            }
            ctx.prev = rec;
            out.records.push_back(std::move(rec));
        }
    }

    for (const std::string& client : client_order) {
        const ClientAttackCtx& ctx = ctxs.at(client);
        for (const auto& [point, recs] : ctx.recoveries) {
            PointEstimate pe;
            pe.client = client;
            pe.point_index = point;
            pe.recoveries = static_cast<int>(recs.size());
            pe.truth = ctx.truth.at(point);
            if (cfg.calibration == CalibrationMode::off) {
                auto tit = ctx.target_recovery.find(point);
                pe.estimate = tit != ctx.target_recovery.end() ? tit->second : recs.back();
            } else {
                pe.estimate = running_estimate(recs, cfg.calibration, spec.window, origin);
            }
            out.points.push_back(std::move(pe));
        }
    }
    if (candidate_queries > 0) {
        out.predictor_recall_at_5 =
            static_cast<double>(candidate_hits) / static_cast<double>(candidate_queries);
        out.candidate_queries = candidate_queries;
    }
    return out;
}

}  // namespace detail

/// ST-GIA over a captured round-log stream: per-round gradient matching with
/// spatiotemporal initialization, road-network mapping, and mean calibration
/// across the recoveries of each point (all per the configured ablations).
inline AttackRunResult run_st_gia(const ModelSpec& spec, const std::vector<RoundLog>& logs,
                                  const AttackConfig& cfg, const RoadNetwork& net,
                                  const GridIndex& grid, const CoordScaler& scaler,
                                  std::uint64_t seed) {
    return detail::attack_driver(spec, logs, cfg, net, grid, scaler, seed, nullptr);
}

/// ST-GIA+: ST-GIA plus predictor-guided candidate mapping of each round's
/// target and (by default) similarity-screened calibration. A null provider
/// degrades to plain ST-GIA.
inline AttackRunResult run_st_gia_plus(const ModelSpec& spec, const std::vector<RoundLog>& logs,
                                       const AttackConfig& cfg, const RoadNetwork& net,
                                       const GridIndex& grid, const CoordScaler& scaler,
                                       std::uint64_t seed, const CandidateProvider* provider) {
    if (!provider) return run_st_gia(spec, logs, cfg, net, grid, scaler, seed);
    return detail::attack_driver(spec, logs, cfg, net, grid, scaler, seed, provider);
}

}  // namespace stgia
