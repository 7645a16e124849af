#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bctap/harness.hpp"

using namespace bctap;

namespace {

// small, fast experiment: 1x1 grid, 20 intervals per episode
ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.grid_rows = 1;
    cfg.grid_cols = 1;
    cfg.sim.episode_seconds = 600.0;
    cfg.episodes = 3;
    cfg.seed = 7;
    cfg.ns_interval = 7.0;
    cfg.ew_interval = 18.0;
    cfg.turn_interval = 30.0;
    cfg.train.qnet.hidden = {16, 16};
    cfg.ct.warmup_episodes = 3;
    cfg.ct.min_fit_len = 30;
    cfg.ct.Nt = 60;
    cfg.ct.burnin = 60;
    cfg.ct.fit_window_episodes = 3;
    cfg.ct.max_p = 1;
    cfg.ct.max_q = 1;
    cfg.tune.history_window = 60;
    return cfg;
}

std::string temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::create_directories(p);
    return p.string();
}

} // namespace

TEST_CASE("synthetic grid flow") {
    const Network net = build_grid(2, 2, 300.0);
    ExperimentConfig cfg;
    cfg.grid_rows = 2;
    cfg.grid_cols = 2;

    SECTION("route counts and connectivity") {
        const FlowSpec flow = synthetic_grid_flow(net, cfg);
        // 2 rows x 2 (WE+EW) + 2 cols x 2 (SN+NS) + 2 rows x 2 turns
        CHECK(flow.rules.size() == 12);
        for (const auto& rule : flow.rules)
            for (std::size_t i = 1; i < rule.route.size(); ++i) {
                const Road& a = net.roads[rule.route[i - 1]];
                const Road& b = net.roads[rule.route[i]];
                CHECK(a.to_node == b.from_node);
                CHECK(turn_kind(a.dir, b.dir).has_value());
            }
    }
    SECTION("zero intervals disable all demand") {
        cfg.ns_interval = cfg.ew_interval = cfg.turn_interval = 0.0;
        CHECK(synthetic_grid_flow(net, cfg).rules.empty());
    }
}

TEST_CASE("fixedtime cycles phases with fixed greens") {
    ExperimentConfig cfg = small_config();
    cfg.controller = Controller::fixedtime;
    cfg.episodes = 1;
    Harness h(cfg);
    const RunReport rep = h.train();
    REQUIRE(rep.episodes.size() == 1);
    const auto& actions = rep.episodes[0].actions;
    REQUIRE(actions.size() == 20); // one intersection, 20 intervals
    for (int k = 0; k < 20; ++k) CHECK(actions[k] == 1 + k % 8);
}

TEST_CASE("maxpressure prefers the loaded approach") {
    ExperimentConfig cfg = small_config();
    cfg.controller = Controller::maxpressure;
    cfg.episodes = 1;
    cfg.ns_interval = 1.5;   // oversaturated north-south straight demand
    cfg.ew_interval = 0.0;
    cfg.turn_interval = 0.0;
    Harness h(cfg);
    const RunReport rep = h.train();
    const auto& actions = rep.episodes[0].actions;
    int ns_green = 0;
    for (std::size_t k = 4; k < actions.size(); ++k)
        if (actions[k] == 2) ++ns_green; // phase 2 = N-str + S-str
    CHECK(ns_green >= 12); // queues persist, so the N-S phase dominates
}

TEST_CASE("train is deterministic given the seed") {
    ExperimentConfig cfg = small_config();
    cfg.controller = Controller::ap_dqn;
    const RunReport a = Harness(cfg).train();
    const RunReport b = Harness(cfg).train();
    CHECK(a.to_json(false).dump() == b.to_json(false).dump());
    REQUIRE(a.episodes.size() == b.episodes.size());
    for (std::size_t e = 0; e < a.episodes.size(); ++e)
        CHECK(a.episodes[e].actions == b.episodes[e].actions);
}

TEST_CASE("single episode on empty flow yields zero metrics and no CT activity") {
    ExperimentConfig cfg = small_config();
    cfg.controller = Controller::bct_aplight;
    cfg.episodes = 1;
    cfg.ns_interval = cfg.ew_interval = cfg.turn_interval = 0.0;
    const RunReport rep = Harness(cfg).train();
    CHECK(rep.final_metrics.att == 0.0);
    CHECK(rep.final_metrics.aql == 0.0);
    CHECK(rep.final_metrics.awt == 0.0);
    CHECK(rep.ct_decisions == 0);
    CHECK(rep.ct_rejects == 0);
}

TEST_CASE("CT pass-through: always-accept critique reproduces the no-CT trace") {
    ExperimentConfig base = small_config();
    base.episodes = 6; // CT active from episode 4
    base.seed = 13;

    ExperimentConfig plain = base;
    plain.controller = Controller::ap_dqn;
    ExperimentConfig forced = base;
    forced.controller = Controller::bct_aplight;
    forced.ct.force_accept = true;

    const RunReport a = Harness(plain).train();
    const RunReport b = Harness(forced).train();
    REQUIRE(a.episodes.size() == b.episodes.size());
    for (std::size_t e = 0; e < a.episodes.size(); ++e)
        REQUIRE(a.episodes[e].actions == b.episodes[e].actions);
    // the forced run still made CT decisions, it just never rejected
    CHECK(b.ct_decisions > 0);
    CHECK(b.ct_rejects == 0);

    // and with the gate live, overrides never exceed rejects
    ExperimentConfig live = base;
    live.controller = Controller::bct_aplight;
    const RunReport c = Harness(live).train();
    CHECK(c.ct_overrides <= c.ct_rejects);
    CHECK(c.ct_rejects <= c.ct_decisions);
}

TEST_CASE("checkpoint round trip") {
    const std::string dir = temp_dir("bctap_ckpt_test");
    ExperimentConfig cfg = small_config();
    cfg.controller = Controller::bct_aplight;
    cfg.episodes = 5;
    cfg.out_dir = dir;
    cfg.checkpoint_every = 100; // only the final checkpoint

    Harness h(cfg);
    const RunReport rep = h.train();
    const std::string ckpt = dir + "/checkpoint_ep5.txt";
    REQUIRE(std::filesystem::exists(ckpt));

    SECTION("bit-exact parameter restore") {
        Harness back = Harness::resume(ckpt);
        RngStream probe(99);
        RawObservation obs;
        for (Dir d : kDirs)
            for (LaneKind k : kKinds) {
                obs.up.at(d, k, 0) = std::floor(probe.uniform(0, 9));
                obs.up.at(d, k, 2) = obs.up.at(d, k, 0);
                obs.down.at(d, k, 1) = std::floor(probe.uniform(0, 9));
                obs.down.at(d, k, 2) = obs.down.at(d, k, 1);
            }
        const auto q1 = h.online_net().q_values(obs);
        const auto q2 = back.online_net().q_values(obs);
        for (int j = 0; j < 8; ++j) CHECK(q1[j] == q2[j]); // exact, not approximate
        CHECK(back.replay().reward_history(0) == h.replay().reward_history(0));
        CHECK(back.episodes_completed() == 5);
    }
    SECTION("evaluating a checkpoint twice gives identical metrics") {
        const RunReport e1 = evaluate(ckpt, "", "", 3);
        const RunReport e2 = evaluate(ckpt, "", "", 3);
        CHECK(e1.final_metrics.att == e2.final_metrics.att);
        CHECK(e1.final_metrics.aql == e2.final_metrics.aql);
        CHECK(e1.final_metrics.awt == e2.final_metrics.awt);
        // matches the in-process evaluation too
        CHECK(e1.final_metrics.att == rep.final_metrics.att);
    }
    SECTION("corrupted checkpoint is rejected") {
        std::string text;
        {
            std::ifstream in(ckpt);
            std::stringstream ss;
            ss << in.rdbuf();
            text = ss.str();
        }
        const auto at = text.find("config_hash ");
        text[at + 12] = text[at + 12] == '0' ? '1' : '0';
        const std::string bad = dir + "/corrupt.txt";
        std::ofstream out(bad);
        out << text;
        out.close();
        CHECK_THROWS_AS(Harness::resume(bad), CheckpointMismatch);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("evaluate on a zero-flow scenario gives zero metrics") {
    const std::string dir = temp_dir("bctap_zeroflow");
    ExperimentConfig cfg = small_config();
    cfg.controller = Controller::ap_dqn;
    cfg.episodes = 2;
    cfg.out_dir = dir;
    Harness h(cfg);
    h.train();

    // a scenario with no demand
    const Network net = build_grid(1, 1, 300.0);
    save_network(net, dir + "/roadnet.json");
    {
        std::ofstream f(dir + "/flow.json");
        f << "[]";
    }
    const RunReport rep = evaluate(dir + "/checkpoint_ep2.txt", dir + "/roadnet.json",
                                   dir + "/flow.json", 1);
    CHECK(rep.final_metrics.att == 0.0);
    CHECK(rep.final_metrics.aql == 0.0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("run outputs land in the results files") {
    const std::string dir = temp_dir("bctap_outputs");
    ExperimentConfig cfg = small_config();
    cfg.controller = Controller::bct_aplight;
    cfg.episodes = 5;
    cfg.out_dir = dir;
    cfg.log_events = true;
    cfg.ct_diagnostics = true;
    const RunReport rep = Harness(cfg).train();

    REQUIRE(std::filesystem::exists(dir + "/report.json"));
    REQUIRE(std::filesystem::exists(dir + "/episodes.csv"));
    REQUIRE(std::filesystem::exists(dir + "/events.log"));
    REQUIRE(std::filesystem::exists(dir + "/ct_diagnostics.jsonl"));

    std::ifstream in(dir + "/report.json");
    nlohmann::json j;
    in >> j;
    // the reported triple is exactly the simulator's metric triple
    CHECK(j["final"]["att"].get<double>() == rep.final_metrics.att);
    CHECK(j["final"]["aql"].get<double>() == rep.final_metrics.aql);
    CHECK(j["final"]["awt"].get<double>() == rep.final_metrics.awt);
    CHECK(j["episodes"].size() == 5);

    std::ifstream csv(dir + "/episodes.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header ==
          "episode,epsilon,mean_reward,att,aql,awt,td_loss,ct_decisions,ct_rejects,ct_overrides");
    std::filesystem::remove_all(dir);
}

TEST_CASE("config parsing") {
    SECTION("round trip through canonical text") {
        ExperimentConfig cfg = small_config();
        cfg.controller = Controller::maxpressure;
        cfg.train.lr = 0.0123;
        const ExperimentConfig back = parse_config_text(cfg.canonical());
        CHECK(back.hash() == cfg.hash());
        CHECK(back.train.lr == cfg.train.lr);
        CHECK(back.controller == Controller::maxpressure);
    }
    SECTION("unknown keys are rejected") {
        CHECK_THROWS_AS(parse_config_text("nonsense.key = 3\n"), ConfigError);
    }
    SECTION("comments and blank lines are fine") {
        const ExperimentConfig cfg = parse_config_text("# comment\n\nepisodes = 12 # trailing\n");
        CHECK(cfg.episodes == 12);
    }
    SECTION("bad values are rejected") {
        CHECK_THROWS_AS(parse_config_text("episodes = many\n"), ConfigError);
        CHECK_THROWS_AS(parse_config_text("controller = slowtime\n"), ConfigError);
    }
}
