// Command-line harness: train and evaluate signal controllers on CityFlow
// style scenarios or synthetic grids, benchmark controller lineups, and
// generate scenario files.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bctap/harness.hpp"

namespace {

void print_metrics(const char* label, const bctap::Metrics& m) {
    std::printf("%-14s ATT %8.2f s   AQL %8.2f veh   AWT %8.2f s\n", label, m.att, m.aql, m.awt);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"BCT-APLight traffic signal control laboratory"};
    app.require_subcommand(1);

    // ---- train ----
    auto* tr = app.add_subcommand("train", "train a controller per the experiment config");
    std::string tr_config;
    std::uint64_t tr_seed = 0;
    std::string tr_out;
    std::vector<std::string> tr_set;
    bool tr_log_events = false, tr_ct_diag = false;
    tr->add_option("--config", tr_config, "experiment config file (key = value lines)")
        ->required()
        ->check(CLI::ExistingFile);
    auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "override the config seed");
    tr->add_option("--out", tr_out, "output directory (report.json, episodes.csv, checkpoints)");
    tr->add_option("--set", tr_set, "extra key=value overrides")->take_all();
    tr->add_flag("--log-events", tr_log_events, "write the event log of the evaluation episode");
    tr->add_flag("--ct-diagnostics", tr_ct_diag, "write critique/tune diagnostic records");

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "greedy evaluation of a saved checkpoint");
    std::string ev_checkpoint, ev_scenario;
    std::uint64_t ev_seed = 0;
    ev->add_option("--checkpoint", ev_checkpoint, "checkpoint file")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--scenario", ev_scenario,
                   "scenario directory holding roadnet.json and flow.json (defaults to the "
                   "checkpoint's own scenario)");
    ev->add_option("--seed", ev_seed, "evaluation seed");

    // ---- bench ----
    auto* be = app.add_subcommand("bench", "train several controllers on one synthetic grid");
    std::string be_controllers = "fixedtime,maxpressure,dqn";
    std::string be_grid = "1x1";
    int be_episodes = 30;
    std::uint64_t be_seed = 1;
    std::vector<std::string> be_set;
    be->add_option("--controllers", be_controllers, "comma-separated controller list");
    be->add_option("--grid", be_grid, "grid size RxC, e.g. 2x2");
    be->add_option("--episodes", be_episodes, "training episodes per controller");
    be->add_option("--seed", be_seed, "seed shared by all runs");
    be->add_option("--set", be_set, "extra key=value overrides")->take_all();

    // ---- make-scenario ----
    auto* mk = app.add_subcommand("make-scenario", "write a synthetic grid as CityFlow-style files");
    std::string mk_out = ".";
    std::string mk_grid = "1x1";
    double mk_lane = 300.0, mk_ns = 6.0, mk_ew = 15.0, mk_turn = 25.0, mk_end = 3600.0;
    mk->add_option("--out", mk_out, "output directory")->required();
    mk->add_option("--grid", mk_grid, "grid size RxC");
    mk->add_option("--lane-length", mk_lane, "road length in meters");
    mk->add_option("--ns-interval", mk_ns, "seconds between north-south vehicles (0 disables)");
    mk->add_option("--ew-interval", mk_ew, "seconds between east-west vehicles (0 disables)");
    mk->add_option("--turn-interval", mk_turn, "seconds between left-turning vehicles (0 disables)");
    mk->add_option("--horizon", mk_end, "injection horizon in seconds");

    CLI11_PARSE(app, argc, argv);

    auto parse_grid = [](const std::string& s, int& rows, int& cols) {
        const auto x = s.find('x');
        if (x == std::string::npos) throw bctap::ConfigError("grid must look like RxC");
        rows = std::stoi(s.substr(0, x));
        cols = std::stoi(s.substr(x + 1));
    };

    try {
        if (tr->parsed()) {
            bctap::ExperimentConfig cfg = bctap::load_config(tr_config);
            if (tr_seed_opt->count() > 0) cfg.seed = tr_seed;
            if (!tr_out.empty()) cfg.out_dir = tr_out;
            if (tr_log_events) cfg.log_events = true;
            if (tr_ct_diag) cfg.ct_diagnostics = true;
            for (const auto& kv : tr_set) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw bctap::ConfigError("--set expects key=value");
                bctap::apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
            }
            const bctap::RunReport rep = bctap::train(cfg);
            std::printf("controller %s, %zu episodes, %.1f s wall\n",
                        bctap::to_string(cfg.controller), rep.episodes.size(), rep.wall_seconds);
            print_metrics("final", rep.final_metrics);
            if (rep.ct_decisions > 0)
                std::printf("CT: %d decisions, %d rejects, %d overrides\n", rep.ct_decisions,
                            rep.ct_rejects, rep.ct_overrides);
            if (!cfg.out_dir.empty()) std::printf("results written to %s\n", cfg.out_dir.c_str());
        } else if (ev->parsed()) {
            std::string roadnet, flowfile;
            if (!ev_scenario.empty()) {
                roadnet = ev_scenario + "/roadnet.json";
                flowfile = ev_scenario + "/flow.json";
            }
            const bctap::RunReport rep = bctap::evaluate(ev_checkpoint, roadnet, flowfile, ev_seed);
            print_metrics("eval", rep.final_metrics);
            if (rep.ct_decisions > 0)
                std::printf("CT: %d decisions, %d rejects, %d overrides\n", rep.ct_decisions,
                            rep.ct_rejects, rep.ct_overrides);
        } else if (be->parsed()) {
            bctap::ExperimentConfig base;
            parse_grid(be_grid, base.grid_rows, base.grid_cols);
            base.episodes = be_episodes;
            base.seed = be_seed;
            for (const auto& kv : be_set) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw bctap::ConfigError("--set expects key=value");
                bctap::apply_config_entry(base, kv.substr(0, eq), kv.substr(eq + 1));
            }
            std::stringstream names(be_controllers);
            std::string name;
            while (std::getline(names, name, ',')) {
                bctap::ExperimentConfig cfg = base;
                cfg.controller = bctap::controller_from_string(name);
                const bctap::RunReport rep = bctap::train(cfg);
                print_metrics(name.c_str(), rep.final_metrics);
            }
        } else if (mk->parsed()) {
            bctap::ExperimentConfig cfg;
            parse_grid(mk_grid, cfg.grid_rows, cfg.grid_cols);
            cfg.lane_length = mk_lane;
            cfg.ns_interval = mk_ns;
            cfg.ew_interval = mk_ew;
            cfg.turn_interval = mk_turn;
            cfg.sim.episode_seconds = mk_end;
            const bctap::Network net = bctap::build_grid(cfg.grid_rows, cfg.grid_cols,
                                                         cfg.lane_length, cfg.sim.vehicle_gap);
            const bctap::FlowSpec flow = bctap::synthetic_grid_flow(net, cfg);
            std::filesystem::create_directories(mk_out);
            bctap::save_network(net, mk_out + "/roadnet.json");
            bctap::save_flow(flow, net, mk_out + "/flow.json");
            std::printf("wrote %s/roadnet.json and %s/flow.json (%zu flow rules)\n", mk_out.c_str(),
                        mk_out.c_str(), flow.rules.size());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
