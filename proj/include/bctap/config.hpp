#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "bctap/dqn.hpp"
#include "bctap/errors.hpp"
#include "bctap/simcore.hpp"
#include "bctap/stats.hpp"
#include "bctap/tune.hpp"

namespace bctap {

enum class Controller { bct_aplight, ap_dqn, dqn, fixedtime, maxpressure, random_policy };

inline const char* to_string(Controller c) {
    switch (c) {
        case Controller::bct_aplight: return "bct_aplight";
        case Controller::ap_dqn: return "ap_dqn";
        case Controller::dqn: return "dqn";
        case Controller::fixedtime: return "fixedtime";
        case Controller::maxpressure: return "maxpressure";
        default: return "random";
    }
}

inline Controller controller_from_string(const std::string& s) {
    if (s == "bct_aplight") return Controller::bct_aplight;
    if (s == "ap_dqn") return Controller::ap_dqn;
    if (s == "dqn") return Controller::dqn;
    if (s == "fixedtime") return Controller::fixedtime;
    if (s == "maxpressure") return Controller::maxpressure;
    if (s == "random") return Controller::random_policy;
    throw ConfigError("unknown controller: " + s);
}

// Critique/Tune layer settings.
struct CtConfig {
    int warmup_episodes = 10; // CT activates strictly after this many episodes
    int min_fit_len = 60;     // minimum reward-history length before fitting
    int Nt = 2000;            // kept posterior draws
    int burnin = 1000;
    int fit_window_episodes = 6;  // SARIMA window, in episodes
    int max_p = 2, max_q = 2;     // order-search bounds used inside the loop
    int order_refresh_every = 10; // episodes between order searches; the
                                  // model itself is refit every episode
    int horizon = 1;             // forecast steps ahead
    double significance = 0.05;  // ADF level
    bool force_accept = false;   // diagnostic hook: critique always accepts

    void validate() const {
        if (warmup_episodes < 0 || min_fit_len < 10 || Nt < 40 || burnin < 0)
            throw ConfigError("invalid CT configuration");
        if (fit_window_episodes < 1 || max_p < 0 || max_q < 0 || order_refresh_every < 1 ||
            horizon < 1)
            throw ConfigError("invalid CT configuration");
    }
};

struct ExperimentConfig {
    // scenario: file paths take precedence, otherwise a synthetic grid
    std::string roadnet_path;
    std::string flow_path;
    int grid_rows = 1, grid_cols = 1;
    double lane_length = 300.0;
    // synthetic demand: injection interval in seconds per route group,
    // 0 disables the group
    double ns_interval = 6.0;
    double ew_interval = 15.0;
    double turn_interval = 25.0;

    SimConfig sim;
    TrainConfig train;
    TuneConfig tune;
    CtConfig ct;

    int episodes = 200;
    std::uint64_t seed = 1;
    Controller controller = Controller::bct_aplight;
    std::string out_dir;
    bool log_events = false;
    bool ct_diagnostics = false;
    int checkpoint_every = 10;

    void validate() const {
        sim.validate();
        train.validate();
        tune.validate();
        ct.validate();
        if (episodes < 1) throw ConfigError("episodes must be >= 1");
        if (roadnet_path.empty() && (grid_rows < 1 || grid_cols < 1))
            throw ConfigError("grid dims must be >= 1");
        if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    }

    std::string canonical() const;
    std::uint64_t hash() const { return stats::fnv1a(canonical()); }
};

namespace detail {

inline std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace detail

// Deterministic flat key=value rendering; doubles carry full precision so the
// hash is stable across write/read cycles.
inline std::string ExperimentConfig::canonical() const {
    std::map<std::string, std::string> kv;
    kv["scenario.roadnet"] = roadnet_path;
    kv["scenario.flow"] = flow_path;
    kv["grid.rows"] = std::to_string(grid_rows);
    kv["grid.cols"] = std::to_string(grid_cols);
    kv["grid.lane_length"] = detail::fmt_double(lane_length);
    kv["flow.ns_interval"] = detail::fmt_double(ns_interval);
    kv["flow.ew_interval"] = detail::fmt_double(ew_interval);
    kv["flow.turn_interval"] = detail::fmt_double(turn_interval);
    kv["sim.step_seconds"] = detail::fmt_double(sim.step_seconds);
    kv["sim.min_action_duration"] = detail::fmt_double(sim.min_action_duration);
    kv["sim.yellow"] = detail::fmt_double(sim.yellow);
    kv["sim.all_red"] = detail::fmt_double(sim.all_red);
    kv["sim.saturation_flow"] = detail::fmt_double(sim.saturation_flow);
    kv["sim.vehicle_gap"] = detail::fmt_double(sim.vehicle_gap);
    kv["sim.free_speed"] = detail::fmt_double(sim.free_speed);
    kv["sim.episode_seconds"] = detail::fmt_double(sim.episode_seconds);
    kv["train.gamma"] = detail::fmt_double(train.gamma);
    kv["train.lr"] = detail::fmt_double(train.lr);
    kv["train.tau"] = detail::fmt_double(train.tau);
    kv["train.eps_min"] = detail::fmt_double(train.eps_min);
    kv["train.eps_power"] = detail::fmt_double(train.eps_power);
    kv["train.batch_size"] = std::to_string(train.batch_size);
    kv["train.replay_capacity"] = std::to_string(train.replay_capacity);
    kv["train.grad_clip"] = detail::fmt_double(train.grad_clip);
    kv["train.pnet_lr"] = detail::fmt_double(train.pnet_lr);
    kv["train.w_queue"] = detail::fmt_double(train.w_queue);
    kv["train.w_throughput"] = detail::fmt_double(train.w_throughput);
    kv["train.w_switch"] = detail::fmt_double(train.w_switch);
    kv["train.head"] = std::to_string(train.qnet.head);
    kv["train.dk"] = std::to_string(train.qnet.dk);
    {
        std::string hs;
        for (int h : train.qnet.hidden) hs += (hs.empty() ? "" : ",") + std::to_string(h);
        kv["train.hidden"] = hs;
    }
    kv["tune.sigma2_cur"] = detail::fmt_double(tune.sigma2_cur);
    kv["tune.grid_size"] = std::to_string(tune.grid_size);
    kv["tune.bw_floor"] = detail::fmt_double(tune.bw_floor);
    kv["ct.warmup_episodes"] = std::to_string(ct.warmup_episodes);
    kv["ct.min_fit_len"] = std::to_string(ct.min_fit_len);
    kv["ct.nt"] = std::to_string(ct.Nt);
    kv["ct.burnin"] = std::to_string(ct.burnin);
    kv["ct.fit_window_episodes"] = std::to_string(ct.fit_window_episodes);
    kv["ct.max_p"] = std::to_string(ct.max_p);
    kv["ct.max_q"] = std::to_string(ct.max_q);
    kv["ct.order_refresh_every"] = std::to_string(ct.order_refresh_every);
    kv["ct.horizon"] = std::to_string(ct.horizon);
    kv["ct.significance"] = detail::fmt_double(ct.significance);
    kv["ct.force_accept"] = ct.force_accept ? "1" : "0";
    kv["episodes"] = std::to_string(episodes);
    kv["seed"] = std::to_string(seed);
    kv["controller"] = to_string(controller);
    kv["log_events"] = log_events ? "1" : "0";
    kv["ct_diagnostics"] = ct_diagnostics ? "1" : "0";
    kv["checkpoint_every"] = std::to_string(checkpoint_every);

    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

// Applies one key=value setting; throws ConfigError for unknown keys or
// unparseable values.
inline void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                               const std::string& value) {
    auto as_double = [&](const std::string& v) {
        try {
            std::size_t used = 0;
            const double d = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
        }
    };
    auto as_int = [&](const std::string& v) {
        const double d = as_double(v);
        return static_cast<int>(d);
    };
    auto as_bool = [&](const std::string& v) {
        if (v == "1" || v == "true" || v == "yes") return true;
        if (v == "0" || v == "false" || v == "no") return false;
        throw ConfigError("bad boolean value for " + key + ": '" + v + "'");
    };

    if (key == "scenario.roadnet") cfg.roadnet_path = value;
    else if (key == "scenario.flow") cfg.flow_path = value;
    else if (key == "grid.rows") cfg.grid_rows = as_int(value);
    else if (key == "grid.cols") cfg.grid_cols = as_int(value);
    else if (key == "grid.lane_length") cfg.lane_length = as_double(value);
    else if (key == "flow.ns_interval") cfg.ns_interval = as_double(value);
    else if (key == "flow.ew_interval") cfg.ew_interval = as_double(value);
    else if (key == "flow.turn_interval") cfg.turn_interval = as_double(value);
    else if (key == "sim.step_seconds") cfg.sim.step_seconds = as_double(value);
    else if (key == "sim.min_action_duration") cfg.sim.min_action_duration = as_double(value);
    else if (key == "sim.yellow") cfg.sim.yellow = as_double(value);
    else if (key == "sim.all_red") cfg.sim.all_red = as_double(value);
    else if (key == "sim.saturation_flow") cfg.sim.saturation_flow = as_double(value);
    else if (key == "sim.vehicle_gap") cfg.sim.vehicle_gap = as_double(value);
    else if (key == "sim.free_speed") cfg.sim.free_speed = as_double(value);
    else if (key == "sim.episode_seconds") cfg.sim.episode_seconds = as_double(value);
    else if (key == "train.gamma") cfg.train.gamma = as_double(value);
    else if (key == "train.lr") cfg.train.lr = as_double(value);
    else if (key == "train.tau") cfg.train.tau = as_double(value);
    else if (key == "train.eps_min") cfg.train.eps_min = as_double(value);
    else if (key == "train.eps_power") cfg.train.eps_power = as_double(value);
    else if (key == "train.batch_size") cfg.train.batch_size = as_int(value);
    else if (key == "train.replay_capacity") cfg.train.replay_capacity = static_cast<std::size_t>(as_double(value));
    else if (key == "train.grad_clip") cfg.train.grad_clip = as_double(value);
    else if (key == "train.pnet_lr") cfg.train.pnet_lr = as_double(value);
    else if (key == "train.w_queue") cfg.train.w_queue = as_double(value);
    else if (key == "train.w_throughput") cfg.train.w_throughput = as_double(value);
    else if (key == "train.w_switch") cfg.train.w_switch = as_double(value);
    else if (key == "train.head") cfg.train.qnet.head = as_int(value);
    else if (key == "train.dk") cfg.train.qnet.dk = as_int(value);
    else if (key == "train.hidden") {
        cfg.train.qnet.hidden.clear();
        std::stringstream ss(value);
        std::string part;
        while (std::getline(ss, part, ','))
            if (!part.empty()) cfg.train.qnet.hidden.push_back(as_int(part));
        if (cfg.train.qnet.hidden.empty()) throw ConfigError("train.hidden needs at least one size");
    } else if (key == "tune.sigma2_cur") cfg.tune.sigma2_cur = as_double(value);
    else if (key == "tune.grid_size") cfg.tune.grid_size = as_int(value);
    else if (key == "tune.bw_floor") cfg.tune.bw_floor = as_double(value);
    else if (key == "ct.warmup_episodes") cfg.ct.warmup_episodes = as_int(value);
    else if (key == "ct.min_fit_len") cfg.ct.min_fit_len = as_int(value);
    else if (key == "ct.nt") cfg.ct.Nt = as_int(value);
    else if (key == "ct.burnin") cfg.ct.burnin = as_int(value);
    else if (key == "ct.fit_window_episodes") cfg.ct.fit_window_episodes = as_int(value);
    else if (key == "ct.max_p") cfg.ct.max_p = as_int(value);
    else if (key == "ct.max_q") cfg.ct.max_q = as_int(value);
    else if (key == "ct.order_refresh_every") cfg.ct.order_refresh_every = as_int(value);
    else if (key == "ct.horizon") cfg.ct.horizon = as_int(value);
    else if (key == "ct.significance") cfg.ct.significance = as_double(value);
    else if (key == "ct.force_accept") cfg.ct.force_accept = as_bool(value);
    else if (key == "episodes") cfg.episodes = as_int(value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(as_double(value));
    else if (key == "controller") cfg.controller = controller_from_string(value);
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "log_events") cfg.log_events = as_bool(value);
    else if (key == "ct_diagnostics") cfg.ct_diagnostics = as_bool(value);
    else if (key == "checkpoint_every") cfg.checkpoint_every = as_int(value);
    else throw ConfigError("unknown config key: " + key);
}

// Flat key = value format, one entry per line, '#' starts a comment.
inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash_at = line.find('#');
        if (hash_at != std::string::npos) line.erase(hash_at);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " is not key = value");
        apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

} // namespace bctap
