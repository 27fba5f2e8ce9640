#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stgia/geo.hpp"
#include "stgia/grid.hpp"
#include "stgia/model.hpp"
#include "stgia/road_network.hpp"

namespace stgia {

/// A participant in the federated protocol. Trajectories are expected to be
/// snapped to road nodes before training starts.
struct ClientState {
    std::string user_id;
    Trajectory trajectory;
    double eta = 0.05;
};

/// What the honest-but-curious server records for one client in one round.
/// `window`/`label_cell` are the data the gradient was actually computed on
/// (possibly obfuscated by a defense); `true_window`/`true_label_cell` are
/// the client's raw data, kept for scoring only.
struct RoundEntry {
    std::string client;
    GradVector grad;
    std::vector<double> window;       // 2W normalized inputs used for training
    CellId label_cell = 0;
    std::vector<double> true_window;  // 2W normalized inputs, unperturbed
    CellId true_label_cell = 0;
    double update_norm = 0.0;
};

/// Per-round capture: the global parameters sent to clients plus one entry
/// per participating client.
struct RoundLog {
    int round = 0;  // 1-based
    ParamVector params;
    std::vector<RoundEntry> entries;
    double epsilon_t = 0.0;  // budget spent this round, 0 when undefended
};

struct LocalUpdateResult {
    ParamVector new_params;
    GradVector grad;
};

/// One local step: g = param_grad(params, window, label); new = params - eta*g.
inline LocalUpdateResult local_update(const ModelSpec& spec, const ParamVector& params,
                                      const std::vector<double>& window,
                                      const std::vector<double>& label, double eta) {
    LocalUpdateResult r;
    r.grad = param_grad(spec, params, window, label);
    r.new_params = params;
    for (std::size_t i = 0; i < params.size(); ++i)
        r.new_params[i] -= eta * r.grad[i];
    return r;
}

/// FedAvg with equal client weights.
inline ParamVector aggregate(const std::vector<ParamVector>& updates) {
    if (updates.empty())
        throw std::invalid_argument("aggregate: no client updates");
    const std::size_t n = updates[0].size();
    ParamVector mean(n, 0.0);
    for (const auto& u : updates) {
        if (u.size() != n)
            throw std::invalid_argument("aggregate: parameter length mismatch");
        for (std::size_t i = 0; i < n; ++i) mean[i] += u[i];
    }
    for (double& v : mean) v /= static_cast<double>(updates.size());
    return mean;
}

/// The sliding training schedule. Round t (1-based) trains on the window of
/// points [t, t+W) predicting the grid cell of point t+W, so every point
/// lands in up to W windows and is recovered up to W times by the attacker.
struct TrainWindow {
    std::vector<double> x;   // 2W normalized coordinates
    CellId label = 0;
    std::size_t target_index = 0;  // 0-based index of the window's final point
    std::vector<GeoPoint> window_points;  // the W geo points behind x
    GeoPoint label_point;                 // the point whose cell is the label
};

/// Builds the round-t window for a trajectory, or nullopt when exhausted.
inline std::optional<TrainWindow> window_for_round(const Trajectory& traj, int round, int w,
                                                   const CoordScaler& scaler, const GridIndex& grid) {
    const std::size_t need = static_cast<std::size_t>(round) + w;  // points t..t+W, 1-based
    if (traj.points.size() < need) return std::nullopt;
    TrainWindow tw;
    tw.x.resize(2 * static_cast<std::size_t>(w));
    tw.window_points.reserve(w);
    for (int k = 0; k < w; ++k) {
        const GeoPoint& p = traj.points[static_cast<std::size_t>(round) - 1 + k].point;
        tw.window_points.push_back(p);
        scaler.encode(p, tw.x[2 * k], tw.x[2 * k + 1]);
    }
    tw.label_point = traj.points[static_cast<std::size_t>(round) - 1 + w].point;
    tw.label = grid_cell_of(tw.label_point, grid);
    tw.target_index = static_cast<std::size_t>(round) - 1 + w - 1;
    return tw;
}

/// Optional defense hooks. `begin_round` allocates and reports the round's
/// budget before any client trains; `obfuscate` rewrites the round's training
/// data (input-space defenses); `perturb_grad` rewrites the shared gradient
/// (DP-SGD); `after_round` lets the harness feed risk signals forward (the
/// shadow attack lives on that side).
struct DefenseHook {
    std::function<double(int round)> begin_round;
    std::function<TrainWindow(std::size_t client_idx, int round, const TrainWindow& clean)> obfuscate;
    std::function<GradVector(std::size_t client_idx, int round, const GradVector& g)> perturb_grad;
    std::function<void(const RoundLog&)> after_round;
};

struct TrainingRun {
    std::vector<RoundLog> logs;
    ParamVector final_params;
    std::vector<double> round_loss;  // mean client loss per round, pre-update
};

/// Runs T federated rounds: one local step per client per round, equal-weight
/// aggregation. Deterministic given the inputs; clients that have exhausted
/// their trajectory skip the round.
inline TrainingRun run_training(const ModelSpec& spec, const std::vector<ClientState>& clients,
                                const CoordScaler& scaler, const GridIndex& grid, int rounds,
                                ParamVector init_params, const DefenseHook* defense = nullptr) {
    if (rounds < 1) throw std::invalid_argument("run_training: T must be >= 1");
    validate(spec);
    if (init_params.size() != spec.param_count())
        throw std::invalid_argument("run_training: bad initial parameter length");

    TrainingRun run;
    ParamVector params = std::move(init_params);
    for (int t = 1; t <= rounds; ++t) {
        RoundLog log;
        log.round = t;
        log.params = params;
        if (defense && defense->begin_round) log.epsilon_t = defense->begin_round(t);
        std::vector<ParamVector> updates;
        double loss_sum = 0.0;
        for (std::size_t ci = 0; ci < clients.size(); ++ci) {
            const ClientState& client = clients[ci];
            const auto clean = window_for_round(client.trajectory, t, spec.window, scaler, grid);
            if (!clean) continue;  // exhausted trajectory: skip round

            TrainWindow train = *clean;
            if (defense && defense->obfuscate) train = defense->obfuscate(ci, t, *clean);

            const auto label = one_hot(static_cast<int>(train.label), spec.classes);
            loss_sum += loss(forward(spec, params, train.x), label);
            GradVector g = param_grad(spec, params, train.x, label);
            if (defense && defense->perturb_grad) g = defense->perturb_grad(ci, t, g);
            ParamVector new_params = params;
            for (std::size_t i = 0; i < params.size(); ++i) new_params[i] -= client.eta * g[i];

            RoundEntry entry;
            entry.client = client.user_id;
            entry.grad = std::move(g);
            entry.window = train.x;
            entry.label_cell = train.label;
            entry.true_window = clean->x;
            entry.true_label_cell = clean->label;
            entry.update_norm = client.eta * std::sqrt([&] {
                double sq = 0.0;
                for (double v : entry.grad) sq += v * v;
                return sq;
            }());
            log.entries.push_back(std::move(entry));
            updates.push_back(std::move(new_params));
        }
        if (!updates.empty()) params = aggregate(updates);
        run.round_loss.push_back(log.entries.empty() ? 0.0
                                                     : loss_sum / static_cast<double>(log.entries.size()));
        if (defense && defense->after_round) defense->after_round(log);
        run.logs.push_back(std::move(log));
    }
    run.final_params = std::move(params);
    return run;
}

// ---- round log persistence: one JSON record per line --------------------

inline void save_round_logs(const std::vector<RoundLog>& logs, std::ostream& out) {
    for (const auto& log : logs) {
        nlohmann::json head = {{"type", "round"},
                               {"round", log.round},
                               {"params", log.params},
                               {"epsilon_t", log.epsilon_t}};
        out << head.dump() << "\n";
        for (const auto& e : log.entries) {
            nlohmann::json rec = {{"type", "entry"},
                                  {"round", log.round},
                                  {"client", e.client},
                                  {"grad", e.grad},
                                  {"window", e.window},
                                  {"label_cell", e.label_cell},
                                  {"true_window", e.true_window},
                                  {"true_label_cell", e.true_label_cell},
                                  {"update_norm", e.update_norm}};
            out << rec.dump() << "\n";
        }
    }
}

inline void save_round_logs(const std::vector<RoundLog>& logs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write round log: " + path);
    save_round_logs(logs, out);
}

inline std::vector<RoundLog> load_round_logs(std::istream& in) {
    std::vector<RoundLog> logs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        const std::string type = j.at("type");
        if (type == "round") {
            RoundLog log;
            log.round = j.at("round");
            log.params = j.at("params").get<ParamVector>();
            log.epsilon_t = j.value("epsilon_t", 0.0);
            logs.push_back(std::move(log));
        } else if (type == "entry") {
            if (logs.empty() || logs.back().round != j.at("round").get<int>())
                throw std::runtime_error("round log: entry before its round header");
            RoundEntry e;
            e.client = j.at("client");
            e.grad = j.at("grad").get<GradVector>();
            e.window = j.at("window").get<std::vector<double>>();
            e.label_cell = j.at("label_cell");
            e.true_window = j.at("true_window").get<std::vector<double>>();
            e.true_label_cell = j.at("true_label_cell");
            e.update_norm = j.at("update_norm");
            logs.back().entries.push_back(std::move(e));
        } else {
            throw std::runtime_error("round log: unknown record type '" + type + "'");
        }
    }
    return logs;
}

inline std::vector<RoundLog> load_round_logs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open round log: " + path);
    return load_round_logs(in);
}

}  // namespace stgia
