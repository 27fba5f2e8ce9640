#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stgia/attack_run.hpp"
#include "stgia/fed.hpp"
#include "stgia/geo.hpp"

namespace stgia {

inline constexpr double kRiskThresholdM = 500.0;

/// AD: meters between the reconstruction and the truth.
inline double attack_distance(const GeoPoint& truth, const GeoPoint& recon, const GeoPoint& origin) {
    return distance_m(truth, recon, origin);
}

/// Fraction of reconstructions strictly closer than the threshold.
inline double attack_risk(const std::vector<double>& distances_m,
                          double threshold_m = kRiskThresholdM) {
    if (distances_m.empty()) throw std::invalid_argument("attack_risk: no distances");
    std::size_t hits = 0;
    for (double d : distances_m)
        if (d < threshold_m) ++hits;
    return static_cast<double>(hits) / static_cast<double>(distances_m.size());
}

/// Fraction of instances whose true cell appears in the top k of its ranked
/// prediction list.
inline double recall_at_k(const std::vector<std::vector<CellId>>& ranked,
                          const std::vector<CellId>& truth, int k) {
    if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
    if (ranked.size() != truth.size())
        throw std::invalid_argument("recall_at_k: prediction/truth length mismatch");
    if (ranked.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const std::size_t upto = std::min<std::size_t>(ranked[i].size(), static_cast<std::size_t>(k));
        for (std::size_t j = 0; j < upto; ++j)
            if (ranked[i][j] == truth[i]) { ++hits; break; }
    }
    return static_cast<double>(hits) / static_cast<double>(ranked.size());
}

struct RoundMetrics {
    int round = 0;
    double mean_ad_m = 0.0;
    double mean_ait = 0.0;
    double attack_risk = 0.0;
    double recall_at_5 = 0.0;  // model utility: top-5 recall of the round's params
    double epsilon_t = 0.0;
    int n_records = 0;
};

struct EvalReport {
    std::vector<RoundMetrics> rows;
    RoundMetrics overall;            // round = 0; recall is the final model's
    double mean_ait_converged = 0.0; // AIT mean over converged attacks only
    int non_converged = 0;
    double calibrated_mean_ad_m = 0.0;  // over final per-point estimates
    double predictor_recall_at_5 = std::numeric_limits<double>::quiet_NaN();
    double epsilon_spent = 0.0;
    double epsilon_total = 0.0;
};

/// A (window, true next cell) instance for utility evaluation.
struct EvalInstance {
    std::vector<double> x;
    CellId truth = 0;
};

/// Top-5 recall of a parameter vector over the evaluation instances.
inline double model_recall_at_5(const ModelSpec& spec, const ParamVector& params,
                                const std::vector<EvalInstance>& eval) {
    if (eval.empty()) return 0.0;
    std::vector<std::vector<CellId>> ranked;
    std::vector<CellId> truth;
    ranked.reserve(eval.size());
    truth.reserve(eval.size());
    for (const EvalInstance& e : eval) {
        const auto logits = forward(spec, params, e.x);
        std::vector<CellId> order(logits.size());
        for (std::size_t c = 0; c < logits.size(); ++c) order[c] = static_cast<CellId>(c);
        std::stable_sort(order.begin(), order.end(), [&](CellId a, CellId b) {
            if (logits[static_cast<std::size_t>(a)] != logits[static_cast<std::size_t>(b)])
                return logits[static_cast<std::size_t>(a)] > logits[static_cast<std::size_t>(b)];
            return a < b;
        });
        order.resize(std::min<std::size_t>(order.size(), 5));
        ranked.push_back(std::move(order));
        truth.push_back(e.truth);
    }
    return recall_at_k(ranked, truth, 5);
}

/// Aggregates attack records and round logs into per-round rows plus an
/// overall summary. Records are sorted before aggregation so the result is
/// permutation-invariant bit for bit.
inline EvalReport build_report(const AttackRunResult& attack, const std::vector<RoundLog>& logs,
                               const ModelSpec& spec, const ParamVector& final_params,
                               const CoordScaler& scaler, const std::vector<EvalInstance>& eval) {
    if (attack.records.empty()) throw std::invalid_argument("build_report: no attack records");
    const GeoPoint origin = scaler.origin();

    std::vector<const AttackRecord*> recs;
    recs.reserve(attack.records.size());
    for (const auto& r : attack.records) recs.push_back(&r);
    std::stable_sort(recs.begin(), recs.end(), [](const AttackRecord* a, const AttackRecord* b) {
        if (a->round != b->round) return a->round < b->round;
        return a->client < b->client;
    });

    std::map<int, double> round_eps;
    for (const RoundLog& log : logs) round_eps[log.round] = log.epsilon_t;
    std::map<int, const ParamVector*> round_params;
    for (const RoundLog& log : logs) round_params[log.round] = &log.params;

    EvalReport rep;
    std::map<int, std::vector<const AttackRecord*>> by_round;
    for (const AttackRecord* r : recs) by_round[r->round].push_back(r);

    std::vector<double> all_d;
    double all_ait = 0.0, conv_ait = 0.0;
    int conv_n = 0;
    for (const auto& [round, rs] : by_round) {
        RoundMetrics row;
        row.round = round;
        std::vector<double> d;
        d.reserve(rs.size());
        double ait = 0.0;
        for (const AttackRecord* r : rs) {
            d.push_back(attack_distance(r->true_target, r->recon, origin));
            ait += r->iterations_used;
            all_ait += r->iterations_used;
            if (r->converged) { conv_ait += r->iterations_used; ++conv_n; }
            else ++rep.non_converged;
        }
        row.n_records = static_cast<int>(rs.size());
        row.mean_ad_m = std::accumulate(d.begin(), d.end(), 0.0) / d.size();
        row.mean_ait = ait / rs.size();
        row.attack_risk = attack_risk(d);
        row.epsilon_t = round_eps.count(round) ? round_eps[round] : 0.0;
        auto pit = round_params.find(round);
        row.recall_at_5 = pit != round_params.end() ? model_recall_at_5(spec, *pit->second, eval) : 0.0;
        all_d.insert(all_d.end(), d.begin(), d.end());
        rep.rows.push_back(row);
    }

    rep.overall.round = 0;
    rep.overall.n_records = static_cast<int>(all_d.size());
    rep.overall.mean_ad_m = std::accumulate(all_d.begin(), all_d.end(), 0.0) / all_d.size();
    rep.overall.mean_ait = all_ait / all_d.size();
    rep.overall.attack_risk = attack_risk(all_d);
    rep.overall.recall_at_5 = model_recall_at_5(spec, final_params, eval);
    for (const auto& [round, eps] : round_eps) rep.overall.epsilon_t += eps;
    rep.epsilon_spent = rep.overall.epsilon_t;
    rep.mean_ait_converged = conv_n > 0 ? conv_ait / conv_n : 0.0;
    rep.predictor_recall_at_5 = attack.predictor_recall_at_5;

    if (!attack.points.empty()) {
        double s = 0.0;
        for (const PointEstimate& pe : attack.points)
            s += attack_distance(pe.truth, pe.estimate, origin);
        rep.calibrated_mean_ad_m = s / static_cast<double>(attack.points.size());
    }
    return rep;
}

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace detail

/// metrics.csv: one row per round, columns fixed.
inline void write_metrics_csv(const EvalReport& rep, std::ostream& out) {
    out << "round,mean_AD_m,mean_AIT,attack_risk,recall_at_5,epsilon_t,n_records\n";
    for (const RoundMetrics& r : rep.rows) {
        out << r.round << ',' << detail::fmt(r.mean_ad_m) << ',' << detail::fmt(r.mean_ait) << ','
            << detail::fmt(r.attack_risk) << ',' << detail::fmt(r.recall_at_5) << ','
            << detail::fmt(r.epsilon_t) << ',' << r.n_records << "\n";
    }
}

inline void write_metrics_csv(const EvalReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write metrics file: " + path);
    write_metrics_csv(rep, out);
}

/// summary.json mirrors the overall row and adds the run-level extras.
inline nlohmann::json summary_json(const EvalReport& rep) {
    nlohmann::json overall = {{"mean_AD_m", rep.overall.mean_ad_m},
                              {"mean_AIT", rep.overall.mean_ait},
                              {"attack_risk", rep.overall.attack_risk},
                              {"recall_at_5", rep.overall.recall_at_5},
                              {"n_records", rep.overall.n_records}};
    nlohmann::json j = {{"overall", overall},
                        {"mean_AIT_converged", rep.mean_ait_converged},
                        {"non_converged", rep.non_converged},
                        {"calibrated_mean_AD_m", rep.calibrated_mean_ad_m},
                        {"epsilon_spent", rep.epsilon_spent},
                        {"epsilon_total", rep.epsilon_total}};
    if (!std::isnan(rep.predictor_recall_at_5))
        j["predictor_recall_at_5"] = rep.predictor_recall_at_5;
    return j;
}

}  // namespace stgia
