#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stgia/attack_run.hpp"
#include "stgia/defense_strategies.hpp"
#include "stgia/ingest.hpp"
#include "stgia/metrics.hpp"
#include "stgia/predictor_remote.hpp"
#include "stgia/synthetic.hpp"

namespace stgia {

namespace detail {
inline constexpr std::uint64_t kInitStream = 0x49;
}

// ---- enum <-> string -----------------------------------------------------

inline std::string to_string(InitMode m) {
    return m == InitMode::gaussian ? "gaussian" : "st_based";
}
inline std::string to_string(MappingMode m) {
    switch (m) {
        case MappingMode::off: return "off";
        case MappingMode::road_network: return "road_network";
        default: return "candidate_set";
    }
}
inline std::string to_string(CalibrationMode m) {
    switch (m) {
        case CalibrationMode::off: return "off";
        case CalibrationMode::mean: return "mean";
        default: return "similarity";
    }
}

inline InitMode init_mode_from(const std::string& s) {
    if (s == "gaussian") return InitMode::gaussian;
    if (s == "st_based") return InitMode::st_based;
    throw std::invalid_argument("unknown init mode: " + s);
}
inline MappingMode mapping_mode_from(const std::string& s) {
    if (s == "off") return MappingMode::off;
    if (s == "road_network") return MappingMode::road_network;
    if (s == "candidate_set") return MappingMode::candidate_set;
    throw std::invalid_argument("unknown mapping mode: " + s);
}
inline CalibrationMode calibration_mode_from(const std::string& s) {
    if (s == "off") return CalibrationMode::off;
    if (s == "mean") return CalibrationMode::mean;
    if (s == "similarity") return CalibrationMode::similarity;
    throw std::invalid_argument("unknown calibration mode: " + s);
}

// ---- run configuration ----------------------------------------------------

/// Everything a run needs; serializes to/from the config.json snapshot.
struct RunConfig {
    std::uint64_t seed = 1;

    std::string dataset_source = "synthetic";  // synthetic | file
    std::string dataset_path;
    int n_users = 100;
    int traj_len = 0;  // 0 = rounds + window

    std::string network_path;  // empty = generate
    int net_rows = 8, net_cols = 8;
    double net_spacing_m = 120.0;

    int window = 3, hidden = 24, grid_g = 4;

    int clients = 100;
    int rounds = 50;
    double eta = 0.6;

    std::string attack_kind = "st-gia";  // st-gia | st-gia-plus | baseline
    AttackConfig attack;

    std::string defense = "none";  // none | dpsgd | geoi | geogi | adaptive
    double epsilon_total = 10.0;
    double alpha = 0.5, beta = 0.5;
    double clip_c = 1.0, delta = 1e-5;
    std::string domain_file;
    double domain_radius_m = 500.0;
    int shadow_clients = 3;

    std::string predictor = "markov";  // markov | remote | none
    int history_len = kHistoryStays;
    int context_len = kContextStays;

    std::string out_dir = "run";

    ModelSpec model_spec() const {
        return ModelSpec{window, hidden, static_cast<int>(grid_g) * grid_g};
    }
};

/// Preset ablation switches per attack kind; explicit config keys override.
inline AttackConfig attack_preset(const std::string& kind) {
    AttackConfig cfg;
    if (kind == "baseline") {
        cfg.init = InitMode::gaussian;
        cfg.mapping = MappingMode::off;
        cfg.calibration = CalibrationMode::off;
    } else if (kind == "st-gia") {
        cfg.init = InitMode::st_based;
        cfg.mapping = MappingMode::road_network;
        cfg.calibration = CalibrationMode::mean;
    } else if (kind == "st-gia-plus") {
        cfg.init = InitMode::st_based;
        cfg.mapping = MappingMode::road_network;
        cfg.calibration = CalibrationMode::similarity;
    } else {
        throw std::invalid_argument("unknown attack kind: " + kind);
    }
    return cfg;
}

inline nlohmann::json to_json(const RunConfig& c) {
    return nlohmann::json{
        {"seed", c.seed},
        {"dataset", {{"source", c.dataset_source}, {"path", c.dataset_path},
                     {"n_users", c.n_users}, {"traj_len", c.traj_len}}},
        {"network", {{"path", c.network_path}, {"rows", c.net_rows}, {"cols", c.net_cols},
                     {"spacing_m", c.net_spacing_m}}},
        {"model", {{"window", c.window}, {"hidden", c.hidden}, {"grid", c.grid_g}}},
        {"fed", {{"clients", c.clients}, {"rounds", c.rounds}, {"eta", c.eta}}},
        {"attack", {{"kind", c.attack_kind}, {"iters", c.attack.max_iters}, {"step", c.attack.step},
                    {"tau_x", c.attack.tau_x}, {"init", to_string(c.attack.init)},
                    {"mapping", to_string(c.attack.mapping)},
                    {"calibration", to_string(c.attack.calibration)},
                    {"map_all_positions", c.attack.map_all_positions}}},
        {"defense", {{"kind", c.defense}, {"epsilon_total", c.epsilon_total}, {"alpha", c.alpha},
                     {"beta", c.beta}, {"clip", c.clip_c}, {"delta", c.delta},
                     {"domain_file", c.domain_file}, {"domain_radius_m", c.domain_radius_m},
                     {"shadow_clients", c.shadow_clients}}},
        {"predictor", {{"kind", c.predictor}, {"history_len", c.history_len},
                       {"context_len", c.context_len}}},
        {"out_dir", c.out_dir}};
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        c.dataset_source = d.value("source", c.dataset_source);
        c.dataset_path = d.value("path", c.dataset_path);
        c.n_users = d.value("n_users", c.n_users);
        c.traj_len = d.value("traj_len", c.traj_len);
    }
    if (j.contains("network")) {
        const auto& n = j.at("network");
        c.network_path = n.value("path", c.network_path);
        c.net_rows = n.value("rows", c.net_rows);
        c.net_cols = n.value("cols", c.net_cols);
        c.net_spacing_m = n.value("spacing_m", c.net_spacing_m);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        c.window = m.value("window", c.window);
        c.hidden = m.value("hidden", c.hidden);
        c.grid_g = m.value("grid", c.grid_g);
    }
    if (j.contains("fed")) {
        const auto& f = j.at("fed");
        c.clients = f.value("clients", c.clients);
        c.rounds = f.value("rounds", c.rounds);
        c.eta = f.value("eta", c.eta);
    }
    c.attack_kind = j.contains("attack") ? j.at("attack").value("kind", c.attack_kind) : c.attack_kind;
    c.attack = attack_preset(c.attack_kind);
    if (j.contains("attack")) {
        const auto& a = j.at("attack");
        c.attack.max_iters = a.value("iters", c.attack.max_iters);
        c.attack.step = a.value("step", c.attack.step);
        c.attack.tau_x = a.value("tau_x", c.attack.tau_x);
        if (a.contains("init")) c.attack.init = init_mode_from(a.at("init"));
        if (a.contains("mapping")) c.attack.mapping = mapping_mode_from(a.at("mapping"));
        if (a.contains("calibration"))
            c.attack.calibration = calibration_mode_from(a.at("calibration"));
        c.attack.map_all_positions = a.value("map_all_positions", c.attack.map_all_positions);
    }
    if (j.contains("defense")) {
        const auto& d = j.at("defense");
        c.defense = d.value("kind", c.defense);
        c.epsilon_total = d.value("epsilon_total", c.epsilon_total);
        c.alpha = d.value("alpha", c.alpha);
        c.beta = d.value("beta", c.beta);
        c.clip_c = d.value("clip", c.clip_c);
        c.delta = d.value("delta", c.delta);
        c.domain_file = d.value("domain_file", c.domain_file);
        c.domain_radius_m = d.value("domain_radius_m", c.domain_radius_m);
        c.shadow_clients = d.value("shadow_clients", c.shadow_clients);
    }
    if (j.contains("predictor")) {
        const auto& p = j.at("predictor");
        c.predictor = p.value("kind", c.predictor);
        c.history_len = p.value("history_len", c.history_len);
        c.context_len = p.value("context_len", c.context_len);
    }
    c.out_dir = j.value("out_dir", c.out_dir);
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    nlohmann::json j;
    in >> j;
    return config_from_json(j);
}

// ---- scenario assembly -----------------------------------------------------

/// The static geometry of a run: the road graph, its grid discretization, and
/// the coordinate scaler every module shares.
struct Scenario {
    RoadNetwork net;
    GridIndex grid;
    CoordScaler scaler;
};

inline GridIndex grid_from_network(const RoadNetwork& net, int g) {
    if (net.node_count() == 0) throw std::invalid_argument("grid_from_network: empty network");
    GridIndex grid;
    grid.g = g;
    grid.lat_min = grid.lat_max = net.nodes().begin()->second.lat;
    grid.lon_min = grid.lon_max = net.nodes().begin()->second.lon;
    for (const auto& [id, p] : net.nodes()) {
        grid.lat_min = std::min(grid.lat_min, p.lat);
        grid.lat_max = std::max(grid.lat_max, p.lat);
        grid.lon_min = std::min(grid.lon_min, p.lon);
        grid.lon_max = std::max(grid.lon_max, p.lon);
    }
    const double pad_lat = 0.02 * (grid.lat_max - grid.lat_min) + 1e-9;
    const double pad_lon = 0.02 * (grid.lon_max - grid.lon_min) + 1e-9;
    grid.lat_min -= pad_lat;
    grid.lat_max += pad_lat;
    grid.lon_min -= pad_lon;
    grid.lon_max += pad_lon;
    validate(grid);
    return grid;
}

inline Scenario build_scenario(const RunConfig& cfg) {
    Scenario s;
    s.net = cfg.network_path.empty()
                ? gen_network(cfg.net_rows, cfg.net_cols, cfg.net_spacing_m, cfg.seed)
                : load_road_network(cfg.network_path);
    s.grid = grid_from_network(s.net, cfg.grid_g);
    s.scaler = CoordScaler(s.grid);
    return s;
}

/// Snaps every trajectory point onto its nearest road node.
inline std::vector<Trajectory> snap_to_network(std::vector<Trajectory> trajs,
                                               const RoadNetwork& net, const GeoPoint& origin) {
    for (Trajectory& traj : trajs)
        for (StampedPoint& sp : traj.points)
            sp.point = net.node(nearest_node(net, sp.point, origin));
    return trajs;
}

inline std::vector<Trajectory> build_dataset(const RunConfig& cfg, const Scenario& sc) {
    if (cfg.dataset_source == "synthetic") {
        const int len = cfg.traj_len > 0 ? cfg.traj_len : cfg.rounds + cfg.window;
        return gen_synthetic(sc.net, cfg.n_users, len, cfg.seed);
    }
    if (cfg.dataset_source == "file") {
        auto trajs = ingest_checkins(cfg.dataset_path);
        return snap_to_network(std::move(trajs), sc.net, sc.scaler.origin());
    }
    throw std::invalid_argument("unknown dataset source: " + cfg.dataset_source);
}

inline std::vector<ClientState> build_clients(const RunConfig& cfg,
                                              const std::vector<Trajectory>& trajs) {
    std::vector<ClientState> clients;
    for (const Trajectory& traj : trajs) {
        if (static_cast<int>(traj.points.size()) < cfg.window + 1) continue;
        clients.push_back(ClientState{traj.user_id, traj, cfg.eta});
        if (static_cast<int>(clients.size()) == cfg.clients) break;
    }
    if (clients.empty())
        throw std::runtime_error("no trajectory is long enough for the configured window");
    return clients;
}

inline ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    Rng rng(derive_seed(seed, detail::kInitStream));
    ParamVector p(spec.param_count());
    for (double& v : p) v = 0.1 * rng.normal();
    return p;
}

/// All (window, next cell) instances the schedule visits, on clean data.
inline std::vector<EvalInstance> build_eval_instances(const ModelSpec& spec,
                                                      const std::vector<ClientState>& clients,
                                                      const CoordScaler& scaler,
                                                      const GridIndex& grid, int rounds) {
    std::vector<EvalInstance> out;
    for (const ClientState& c : clients)
        for (int t = 1; t <= rounds; ++t) {
            const auto w = window_for_round(c.trajectory, t, spec.window, scaler, grid);
            if (!w) break;
            out.push_back(EvalInstance{w->x, w->label});
        }
    return out;
}

// ---- defended training -----------------------------------------------------

struct DefenseSetup {
    DefenseHook hook;
    std::shared_ptr<AdaptiveStrategy> adaptive;  // set for the adaptive kind
    std::shared_ptr<UniformInputDefense> uniform;
    std::shared_ptr<DpsgdDefense> dpsgd;
};

/// Fixed rehearsal configuration for the defender's shadow attack.
inline AttackConfig shadow_attack_config(const AttackConfig& base) {
    AttackConfig cfg = base;
    cfg.init = InitMode::gaussian;
    cfg.calibration = CalibrationMode::off;
    cfg.mapping = MappingMode::road_network;
    return cfg;
}

inline DefenseSetup build_defense(const RunConfig& cfg, const Scenario& sc,
                                  const std::vector<ClientState>& clients,
                                  const ModelSpec& spec) {
    DefenseSetup setup;
    if (cfg.defense == "none") return setup;
    if (cfg.defense == "dpsgd") {
        setup.dpsgd = std::make_shared<DpsgdDefense>(cfg.epsilon_total, cfg.rounds, cfg.clip_c,
                                                     cfg.delta, cfg.seed);
        setup.hook = setup.dpsgd->hook();
        return setup;
    }
    if (cfg.defense == "geoi" || cfg.defense == "geogi") {
        const auto mech = cfg.defense == "geoi" ? UniformInputDefense::Mechanism::planar_laplace
                                                : UniformInputDefense::Mechanism::graph_exp;
        setup.uniform = std::make_shared<UniformInputDefense>(mech, cfg.epsilon_total, cfg.rounds,
                                                              sc.net, sc.grid, sc.scaler, cfg.seed);
        setup.hook = setup.uniform->hook();
        return setup;
    }
    if (cfg.defense == "adaptive") {
        std::map<std::string, ConstraintDomain> domains;
        if (!cfg.domain_file.empty()) domains = load_constraint_domains(cfg.domain_file);
        std::vector<std::string> ids;
        for (const ClientState& c : clients) {
            ids.push_back(c.user_id);
            if (!domains.count(c.user_id))
                domains[c.user_id] = default_domain(sc.net, c.trajectory, cfg.domain_radius_m);
        }
        BudgetLedger ledger;
        ledger.epsilon_total = cfg.epsilon_total;
        ledger.alpha = cfg.alpha;
        ledger.beta = cfg.beta;
        ledger.rho_ad_m = kRiskThresholdM;
        ledger.n_max = cfg.attack.max_iters;
        setup.adaptive = std::make_shared<AdaptiveStrategy>(ledger, sc.net, sc.grid, sc.scaler,
                                                            std::move(domains), std::move(ids),
                                                            cfg.seed);
        setup.hook = setup.adaptive->hook();

        // Risk feedback: rehearse the attack on a few of the round's shared
        // gradients and feed mean AD / AIT into the next allocation.
        const AttackConfig shadow_cfg = shadow_attack_config(cfg.attack);
        auto* strategy = setup.adaptive.get();
        const Scenario* scp = &sc;
        const std::uint64_t seed = cfg.seed;
        const int shadow_n = cfg.shadow_clients;
        setup.hook.after_round = [strategy, scp, seed, shadow_cfg, shadow_n,
                                  spec](const RoundLog& log) {
            if (log.entries.empty() || shadow_n < 1) return;
            const std::size_t m =
                std::min<std::size_t>(log.entries.size(), static_cast<std::size_t>(shadow_n));
            double sum_ad = 0.0, sum_ait = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const RoundEntry& e = log.entries[i];
                Rng rng(derive_seed(seed, detail::kShadowStream,
                                    static_cast<std::uint64_t>(log.round), i));
                DummyState init = init_dummy(spec, shadow_cfg, 1, nullptr, scp->scaler, rng);
                const AttackRecord rec = gia_round(spec, log.params, e.grad, shadow_cfg, scp->net,
                                                   scp->scaler, std::move(init));
                const GeoPoint truth = scp->scaler.decode(e.true_window[e.true_window.size() - 2],
                                                          e.true_window.back());
                sum_ad += distance_m(truth, rec.recon, scp->scaler.origin());
                sum_ait += rec.iterations_used;
            }
            strategy->set_risk(RiskSignal{sum_ad / m, sum_ait / m});
        };
        return setup;
    }
    throw std::invalid_argument("unknown defense kind: " + cfg.defense);
}

// ---- attack stage -----------------------------------------------------------

inline AttackRunResult run_attack_stage(const RunConfig& cfg, const Scenario& sc,
                                        const ModelSpec& spec, const std::vector<RoundLog>& logs,
                                        const std::vector<Trajectory>& trajs) {
    if (cfg.attack_kind != "st-gia-plus" || cfg.predictor == "none")
        return run_st_gia(spec, logs, cfg.attack, sc.net, sc.grid, sc.scaler, cfg.seed);

    // The markov table stands in for the predictor's pretraining corpus.
    auto table = std::make_shared<MarkovTable>(sc.grid.cell_count());
    for (const Trajectory& traj : trajs) {
        std::vector<CellId> cells;
        cells.reserve(traj.points.size());
        for (const auto& sp : traj.points) cells.push_back(grid_cell_of(sp.point, sc.grid));
        table->observe_trajectory(cells);
    }
    PredictorBinding binding = binding_from_env(
        cfg.predictor == "remote" ? PredictorKind::remote : PredictorKind::markov);
    binding.history_len = cfg.history_len;
    binding.context_len = cfg.context_len;
    const GridIndex* grid = &sc.grid;
    CandidateProvider provider = [binding, table, grid](const std::string&, std::size_t,
                                                        const std::vector<Stay>& history) {
        return predict_candidates(binding, *table, history, *grid);
    };
    return run_st_gia_plus(spec, logs, cfg.attack, sc.net, sc.grid, sc.scaler, cfg.seed, &provider);
}

// ---- artifacts ---------------------------------------------------------------

inline void write_reconstructions(const AttackRunResult& res, const CoordScaler& scaler,
                                  std::ostream& out) {
    for (const AttackRecord& r : res.records) {
        nlohmann::json j = {{"client", r.client},
                            {"round", r.round},
                            {"point_index", r.target_index},
                            {"recon_lat", r.recon.lat},
                            {"recon_lon", r.recon.lon},
                            {"true_lat", r.true_target.lat},
                            {"true_lon", r.true_target.lon},
                            {"AIT", r.iterations_used},
                            {"final_distance", r.diverged ? -1.0 : r.final_distance},
                            {"converged", r.converged},
                            {"AD_m", distance_m(r.true_target, r.recon, scaler.origin())}};
        out << j.dump() << "\n";
    }
}

inline void write_point_estimates(const AttackRunResult& res, const CoordScaler& scaler,
                                  std::ostream& out) {
    for (const PointEstimate& p : res.points) {
        nlohmann::json j = {{"client", p.client},
                            {"point_index", p.point_index},
                            {"lat", p.estimate.lat},
                            {"lon", p.estimate.lon},
                            {"true_lat", p.truth.lat},
                            {"true_lon", p.truth.lon},
                            {"recoveries", p.recoveries},
                            {"AD_m", distance_m(p.truth, p.estimate, scaler.origin())}};
        out << j.dump() << "\n";
    }
}

struct RunOutcome {
    std::filesystem::path dir;
    EvalReport report;
};

/// End-to-end run: setup -> data -> train (with defense) -> attack -> report.
/// Writes config.json, roundlog.jsonl, reconstructions.jsonl, metrics.csv and
/// summary.json (plus network/checkins/params/trajectories) under out_dir.
/// Errors carry a stage: prefix; partial artifacts are left in place.
inline RunOutcome run_experiment(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    auto staged = [](const std::string& stage, auto&& fn) {
        try {
            return fn();
        } catch (const std::exception& e) {
            throw std::runtime_error(stage + ": " + e.what());
        }
    };

    const fs::path dir(cfg.out_dir);
    staged("setup", [&] { fs::create_directories(dir); return 0; });
    {
        std::ofstream out(dir / "config.json");
        out << to_json(cfg).dump(2) << "\n";
    }

    Scenario sc = staged("setup", [&] { return build_scenario(cfg); });
    const ModelSpec spec = cfg.model_spec();
    validate(spec);

    const std::vector<Trajectory> trajs = staged("data", [&] { return build_dataset(cfg, sc); });
    const std::vector<ClientState> clients = staged("data", [&] { return build_clients(cfg, trajs); });
    staged("data", [&] {
        save_road_network(sc.net, (dir / "network.txt").string());
        write_checkins(trajs, (dir / "checkins.tsv").string());
        return 0;
    });

    TrainingRun training = staged("train", [&] {
        DefenseSetup defense = build_defense(cfg, sc, clients, spec);
        const DefenseHook* hook = cfg.defense == "none" ? nullptr : &defense.hook;
        return run_training(spec, clients, sc.scaler, sc.grid, cfg.rounds,
                            init_params(spec, cfg.seed), hook);
    });
    staged("train", [&] {
        save_round_logs(training.logs, (dir / "roundlog.jsonl").string());
        save_params(spec, training.final_params, (dir / "params.txt").string());
        return 0;
    });

    const AttackRunResult attack = staged("attack", [&] {
        return run_attack_stage(cfg, sc, spec, training.logs, trajs);
    });
    staged("attack", [&] {
        std::ofstream rec(dir / "reconstructions.jsonl");
        write_reconstructions(attack, sc.scaler, rec);
        std::ofstream pts(dir / "trajectories.jsonl");
        write_point_estimates(attack, sc.scaler, pts);
        return 0;
    });

    RunOutcome outcome;
    outcome.dir = dir;
    outcome.report = staged("report", [&] {
        const auto eval = build_eval_instances(spec, clients, sc.scaler, sc.grid, cfg.rounds);
        EvalReport rep = build_report(attack, training.logs, spec, training.final_params,
                                      sc.scaler, eval);
        if (cfg.defense != "none") rep.epsilon_total = cfg.epsilon_total;
        return rep;
    });
    staged("report", [&] {
        write_metrics_csv(outcome.report, (dir / "metrics.csv").string());
        std::ofstream sum(dir / "summary.json");
        sum << summary_json(outcome.report).dump(2) << "\n";
        return 0;
    });
    return outcome;
}

}  // namespace stgia
