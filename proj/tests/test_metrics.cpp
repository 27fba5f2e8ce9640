#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "stgia/experiment.hpp"
#include "stgia/metrics.hpp"
#include "stgia/synthetic.hpp"

using namespace stgia;

TEST_CASE("attack distance and risk") {
    const GeoPoint origin{35.0, 139.0};

    SECTION("exact reconstruction has zero distance") {
        CHECK(attack_distance(origin, origin, origin) == 0.0);
    }
    SECTION("millidegree of latitude") {
        CHECK_THAT(attack_distance(GeoPoint{35.0, 139.0}, GeoPoint{35.001, 139.0}, origin),
                   Catch::Matchers::WithinAbs(111.32, 0.01));
    }
    SECTION("risk counts strictly-below-threshold distances") {
        CHECK(attack_risk({100.0, 499.0, 500.0, 9000.0}) == 0.5);
        CHECK(attack_risk({0.0, 0.0}) == 1.0);
        CHECK(attack_risk({100.0, 499.0}, 0.0) == 0.0);
    }
    SECTION("risk is monotone in the threshold") {
        const std::vector<double> d = {10.0, 200.0, 480.0, 750.0, 2000.0};
        double prev = 0.0;
        for (double thr : {1.0, 100.0, 500.0, 1000.0, 5000.0}) {
            const double r = attack_risk(d, thr);
            CHECK(r >= prev);
            prev = r;
        }
    }
    SECTION("empty input is rejected") {
        CHECK_THROWS_AS(attack_risk({}), std::invalid_argument);
    }
}

TEST_CASE("recall at k") {
    const std::vector<std::vector<CellId>> ranked = {
        {3, 1, 2}, {5, 3, 9}, {7, 7, 7}, {1, 2, 3}, {4, 5, 6}};
    const std::vector<CellId> truth = {3, 9, 0, 2, 6};

    SECTION("hand counts") {
        CHECK(recall_at_k(ranked, truth, 1) == 0.2);   // only the first
        CHECK(recall_at_k(ranked, truth, 3) == 0.8);   // all but the 7s row
        CHECK(recall_at_k({{1}, {2}}, {1, 2}, 5) == 1.0);
        CHECK(recall_at_k({{1}, {2}}, {9, 9}, 5) == 0.0);
    }
    SECTION("monotone non-decreasing in k") {
        double prev = 0.0;
        for (int k = 1; k <= 5; ++k) {
            const double r = recall_at_k(ranked, truth, k);
            CHECK(r >= prev);
            prev = r;
        }
    }
    SECTION("validation") {
        CHECK_THROWS_AS(recall_at_k(ranked, truth, 0), std::invalid_argument);
        CHECK_THROWS_AS(recall_at_k(ranked, {1, 2}, 1), std::invalid_argument);
    }
}

namespace {

/// A small deterministic run for report-level tests.
struct ReportFixture {
    RoadNetwork net = gen_network(6, 6, 120.0, 99);
    GridIndex grid = grid_from_network(net, 4);
    CoordScaler scaler{grid};
    ModelSpec spec{3, 8, 16};
    std::vector<ClientState> clients;
    TrainingRun run;
    AttackRunResult attack;
    std::vector<EvalInstance> eval;

    ReportFixture() {
        for (auto& traj : gen_synthetic(net, 2, 20, 11))
            clients.push_back(ClientState{traj.user_id, traj, 0.3});
        run = run_training(spec, clients, scaler, grid, 5, init_params(spec, 5));
        attack = run_st_gia(spec, run.logs, AttackConfig{}, net, grid, scaler, 1);
        eval = build_eval_instances(spec, clients, scaler, grid, 5);
    }
};

}  // namespace

TEST_CASE("report building") {
    ReportFixture fx;

    SECTION("single-record run mirrors that record") {
        AttackRunResult one;
        one.records.push_back(fx.attack.records[0]);
        const auto rep = build_report(one, fx.run.logs, fx.spec, fx.run.final_params, fx.scaler, fx.eval);
        REQUIRE(rep.rows.size() == 1);
        CHECK(rep.rows[0].n_records == 1);
        const double want = attack_distance(one.records[0].true_target, one.records[0].recon,
                                            fx.scaler.origin());
        CHECK_THAT(rep.rows[0].mean_ad_m, Catch::Matchers::WithinAbs(want, 1e-12));
        CHECK(rep.rows[0].mean_ait == one.records[0].iterations_used);
    }
    SECTION("overall row is the record-weighted mean of the rounds") {
        const auto rep = build_report(fx.attack, fx.run.logs, fx.spec, fx.run.final_params,
                                      fx.scaler, fx.eval);
        double weighted = 0.0;
        int n = 0;
        for (const auto& row : rep.rows) {
            weighted += row.mean_ad_m * row.n_records;
            n += row.n_records;
        }
        CHECK_THAT(rep.overall.mean_ad_m, Catch::Matchers::WithinAbs(weighted / n, 1e-9));
        CHECK(rep.overall.n_records == n);
    }
    SECTION("aggregation is permutation-invariant bit for bit") {
        AttackRunResult shuffled = fx.attack;
        std::reverse(shuffled.records.begin(), shuffled.records.end());
        const auto a = build_report(fx.attack, fx.run.logs, fx.spec, fx.run.final_params,
                                    fx.scaler, fx.eval);
        const auto b = build_report(shuffled, fx.run.logs, fx.spec, fx.run.final_params,
                                    fx.scaler, fx.eval);
        REQUIRE(a.rows.size() == b.rows.size());
        for (std::size_t i = 0; i < a.rows.size(); ++i) {
            CHECK(a.rows[i].mean_ad_m == b.rows[i].mean_ad_m);
            CHECK(a.rows[i].mean_ait == b.rows[i].mean_ait);
            CHECK(a.rows[i].attack_risk == b.rows[i].attack_risk);
        }
        CHECK(a.overall.mean_ad_m == b.overall.mean_ad_m);
    }
    SECTION("csv format is stable and carries the fixed column set") {
        const auto rep = build_report(fx.attack, fx.run.logs, fx.spec, fx.run.final_params,
                                      fx.scaler, fx.eval);
        std::ostringstream out;
        write_metrics_csv(rep, out);
        std::istringstream in(out.str());
        std::string header;
        std::getline(in, header);
        CHECK(header == "round,mean_AD_m,mean_AIT,attack_risk,recall_at_5,epsilon_t,n_records");
        int rows = 0;
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) ++rows;
        CHECK(rows == static_cast<int>(rep.rows.size()));
    }
    SECTION("summary json mirrors the overall row") {
        const auto rep = build_report(fx.attack, fx.run.logs, fx.spec, fx.run.final_params,
                                      fx.scaler, fx.eval);
        const auto j = summary_json(rep);
        CHECK(j.at("overall").at("mean_AD_m").get<double>() == rep.overall.mean_ad_m);
        CHECK(j.at("overall").at("n_records").get<int>() == rep.overall.n_records);
        CHECK(j.contains("calibrated_mean_AD_m"));
    }
    SECTION("empty record set is rejected") {
        CHECK_THROWS_AS(build_report(AttackRunResult{}, fx.run.logs, fx.spec, fx.run.final_params,
                                     fx.scaler, fx.eval),
                        std::invalid_argument);
    }
}

TEST_CASE("model recall@5 on a perfectly separable fixture") {
    // trained model stand-in: logits equal to one-hot of the truth
    const ModelSpec spec{1, 0, 8};
    ParamVector params(spec.param_count(), 0.0);
    // W2 row c = large on input j = c? Use bias-only: b2 = one-hot-ish is
    // impossible per instance, so check the chance level instead: zero params
    // rank cells by id, truth uniform over 8 cells -> recall@5 of cells 0..4.
    std::vector<EvalInstance> eval;
    for (int c = 0; c < 8; ++c) eval.push_back(EvalInstance{{0.0, 0.0}, c});
    CHECK_THAT(model_recall_at_5(spec, params, eval), Catch::Matchers::WithinAbs(5.0 / 8.0, 1e-12));
}
