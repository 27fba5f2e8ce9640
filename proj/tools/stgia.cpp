// Command-line front end for the spatiotemporal gradient-inversion lab:
// data generation, federated training, attacks, defenses, and reports.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stgia/experiment.hpp"

namespace fs = std::filesystem;
using namespace stgia;

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> defense;
    std::optional<double> epsilon;
    std::optional<std::string> attack;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "run configuration file (JSON)");
    cmd->add_option("--seed", o.seed, "master seed override");
    cmd->add_option("--out", o.out, "output directory override");
    cmd->add_option("--defense", o.defense, "defense override: none|dpsgd|geoi|geogi|adaptive");
    cmd->add_option("--epsilon", o.epsilon, "total privacy budget override");
    cmd->add_option("--attack", o.attack, "attack override: st-gia|st-gia-plus|baseline");
}

RunConfig resolve(const CommonOpts& o) {
    RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
    if (o.seed) cfg.seed = *o.seed;
    if (o.out) cfg.out_dir = *o.out;
    if (o.defense) cfg.defense = *o.defense;
    if (o.epsilon) cfg.epsilon_total = *o.epsilon;
    if (o.attack) {
        cfg.attack_kind = *o.attack;
        const AttackConfig keep = cfg.attack;
        cfg.attack = attack_preset(cfg.attack_kind);
        cfg.attack.max_iters = keep.max_iters;
        cfg.attack.step = keep.step;
        cfg.attack.tau_x = keep.tau_x;
    }
    return cfg;
}

fs::path ensure_dir(const RunConfig& cfg) {
    fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    return dir;
}

int cmd_gen_net(const CommonOpts& o) {
    const RunConfig cfg = resolve(o);
    const fs::path dir = ensure_dir(cfg);
    const RoadNetwork net = cfg.network_path.empty()
                                ? gen_network(cfg.net_rows, cfg.net_cols, cfg.net_spacing_m, cfg.seed)
                                : load_road_network(cfg.network_path);
    save_road_network(net, (dir / "network.txt").string());
    std::cout << "wrote " << (dir / "network.txt").string() << " (" << net.node_count()
              << " nodes, " << net.edges().size() << " edges)\n";
    return 0;
}

int cmd_gen_traj(const CommonOpts& o) {
    const RunConfig cfg = resolve(o);
    const fs::path dir = ensure_dir(cfg);
    const Scenario sc = build_scenario(cfg);
    const int len = cfg.traj_len > 0 ? cfg.traj_len : cfg.rounds + cfg.window;
    const auto trajs = gen_synthetic(sc.net, cfg.n_users, len, cfg.seed);
    write_checkins(trajs, (dir / "checkins.tsv").string());
    std::cout << "wrote " << (dir / "checkins.tsv").string() << " (" << trajs.size()
              << " users x " << len << " points)\n";
    return 0;
}

int cmd_ingest(const CommonOpts& o, const std::string& input) {
    const RunConfig cfg = resolve(o);
    const fs::path dir = ensure_dir(cfg);
    IngestSummary sum;
    const auto trajs = ingest_checkins(input, &sum);
    write_checkins(trajs, (dir / "checkins.tsv").string());
    std::cout << "ingested " << sum.lines << " lines (" << sum.malformed << " malformed), "
              << sum.users << " users, " << sum.points_kept << " points kept -> "
              << (dir / "checkins.tsv").string() << "\n";
    return 0;
}

/// Shared by `train` and `defend`; the latter just requires a defense.
int cmd_train(const CommonOpts& o, bool defended) {
    RunConfig cfg = resolve(o);
    if (defended && cfg.defense == "none")
        throw std::runtime_error("defend: pick a defense with --defense or the config file");
    const fs::path dir = ensure_dir(cfg);
    Scenario sc = build_scenario(cfg);
    const ModelSpec spec = cfg.model_spec();
    const auto trajs = build_dataset(cfg, sc);
    const auto clients = build_clients(cfg, trajs);
    save_road_network(sc.net, (dir / "network.txt").string());
    write_checkins(trajs, (dir / "checkins.tsv").string());

    DefenseSetup defense = build_defense(cfg, sc, clients, spec);
    const DefenseHook* hook = cfg.defense == "none" ? nullptr : &defense.hook;
    const TrainingRun run = run_training(spec, clients, sc.scaler, sc.grid, cfg.rounds,
                                         init_params(spec, cfg.seed), hook);
    save_round_logs(run.logs, (dir / "roundlog.jsonl").string());
    save_params(spec, run.final_params, (dir / "params.txt").string());
    std::cout << "trained " << cfg.rounds << " rounds, " << clients.size() << " clients"
              << (cfg.defense != "none" ? " under " + cfg.defense : "") << "; mean loss "
              << run.round_loss.front() << " -> " << run.round_loss.back() << "\n";
    if (defense.adaptive) {
        double spent = 0.0;
        for (double e : defense.adaptive->ledger().consumed) spent += e;
        std::cout << "budget spent " << spent << " of " << cfg.epsilon_total << "\n";
    }
    return 0;
}

int cmd_attack(const CommonOpts& o) {
    const RunConfig cfg = resolve(o);
    const fs::path dir = ensure_dir(cfg);
    Scenario sc;
    sc.net = load_road_network((dir / "network.txt").string());
    sc.grid = grid_from_network(sc.net, cfg.grid_g);
    sc.scaler = CoordScaler(sc.grid);
    const ModelSpec spec = cfg.model_spec();
    const auto logs = load_round_logs((dir / "roundlog.jsonl").string());
    const auto trajs = snap_to_network(ingest_checkins((dir / "checkins.tsv").string()), sc.net,
                                       sc.scaler.origin());
    const AttackRunResult res = run_attack_stage(cfg, sc, spec, logs, trajs);
    std::ofstream rec(dir / "reconstructions.jsonl");
    write_reconstructions(res, sc.scaler, rec);
    std::ofstream pts(dir / "trajectories.jsonl");
    write_point_estimates(res, sc.scaler, pts);
    std::cout << "attacked " << res.records.size() << " (client, round) gradients -> "
              << (dir / "reconstructions.jsonl").string() << "\n";
    return 0;
}

int cmd_report(const CommonOpts& o) {
    const RunConfig cfg = resolve(o);
    const fs::path dir = ensure_dir(cfg);
    Scenario sc;
    sc.net = load_road_network((dir / "network.txt").string());
    sc.grid = grid_from_network(sc.net, cfg.grid_g);
    sc.scaler = CoordScaler(sc.grid);
    const ModelSpec spec = cfg.model_spec();
    const auto logs = load_round_logs((dir / "roundlog.jsonl").string());
    const auto trajs = snap_to_network(ingest_checkins((dir / "checkins.tsv").string()), sc.net,
                                       sc.scaler.origin());
    const auto clients = build_clients(cfg, trajs);

    // Rebuild the attack essentials from the persisted reconstruction records.
    AttackRunResult res;
    {
        std::ifstream in(dir / "reconstructions.jsonl");
        if (!in) throw std::runtime_error("report: missing reconstructions.jsonl (run attack first)");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            AttackRecord r;
            r.client = j.at("client");
            r.round = j.at("round");
            r.target_index = j.at("point_index");
            r.recon = GeoPoint{j.at("recon_lat"), j.at("recon_lon")};
            r.true_target = GeoPoint{j.at("true_lat"), j.at("true_lon")};
            r.iterations_used = j.at("AIT");
            r.final_distance = j.at("final_distance");
            r.converged = j.value("converged", false);
            res.records.push_back(std::move(r));
        }
    }
    {
        std::ifstream in(dir / "trajectories.jsonl");
        std::string line;
        while (in && std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            PointEstimate p;
            p.client = j.at("client");
            p.point_index = j.at("point_index");
            p.estimate = GeoPoint{j.at("lat"), j.at("lon")};
            p.truth = GeoPoint{j.at("true_lat"), j.at("true_lon")};
            p.recoveries = j.value("recoveries", 1);
            res.points.push_back(std::move(p));
        }
    }

    const auto eval = build_eval_instances(spec, clients, sc.scaler, sc.grid, cfg.rounds);
    const auto [loaded_spec, final_params] = load_params((dir / "params.txt").string());
    EvalReport rep = build_report(res, logs, spec, final_params, sc.scaler, eval);
    if (cfg.defense != "none") rep.epsilon_total = cfg.epsilon_total;
    write_metrics_csv(rep, (dir / "metrics.csv").string());
    std::ofstream sum(dir / "summary.json");
    sum << summary_json(rep).dump(2) << "\n";
    std::cout << "overall mean AD " << rep.overall.mean_ad_m << " m, mean AIT "
              << rep.overall.mean_ait << ", attack risk " << rep.overall.attack_risk
              << ", recall@5 " << rep.overall.recall_at_5 << "\n";
    return 0;
}

int cmd_all(const CommonOpts& o) {
    const RunConfig cfg = resolve(o);
    const RunOutcome out = run_experiment(cfg);
    std::cout << "run complete: " << out.dir.string() << "\n"
              << "overall mean AD " << out.report.overall.mean_ad_m << " m, mean AIT "
              << out.report.overall.mean_ait << ", attack risk " << out.report.overall.attack_risk
              << ", recall@5 " << out.report.overall.recall_at_5 << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatiotemporal federated learning attack/defense laboratory"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string ingest_input;

    auto* gen_net = app.add_subcommand("gen-net", "generate a synthetic road network");
    add_common(gen_net, opts);
    auto* gen_traj = app.add_subcommand("gen-traj", "generate synthetic trajectories");
    add_common(gen_traj, opts);
    auto* ingest = app.add_subcommand("ingest", "normalize a check-in file");
    add_common(ingest, opts);
    ingest->add_option("--in", ingest_input, "raw check-in TSV")->required();
    auto* train = app.add_subcommand("train", "run federated training");
    add_common(train, opts);
    auto* defend = app.add_subcommand("defend", "run federated training under a defense");
    add_common(defend, opts);
    auto* attack = app.add_subcommand("attack", "reconstruct locations from a round log");
    add_common(attack, opts);
    auto* report = app.add_subcommand("report", "aggregate metrics from a run directory");
    add_common(report, opts);
    auto* all = app.add_subcommand("all", "run the full pipeline end to end");
    add_common(all, opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_net->parsed()) return cmd_gen_net(opts);
        if (gen_traj->parsed()) return cmd_gen_traj(opts);
        if (ingest->parsed()) return cmd_ingest(opts, ingest_input);
        if (train->parsed()) return cmd_train(opts, false);
        if (defend->parsed()) return cmd_train(opts, true);
        if (attack->parsed()) return cmd_attack(opts);
        if (report->parsed()) return cmd_report(opts);
        if (all->parsed()) return cmd_all(opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
