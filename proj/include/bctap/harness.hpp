#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "bctap/checkpoint.hpp"
#include "bctap/config.hpp"
#include "bctap/critique.hpp"
#include "bctap/dqn.hpp"
#include "bctap/netmodel.hpp"
#include "bctap/scenario_io.hpp"
#include "bctap/simcore.hpp"
#include "bctap/tune.hpp"

namespace bctap {

// Deterministic synthetic demand for grids built by build_grid: straight
// routes across every row and column plus one left-turn route per row and
// direction. Interval 0 disables a group.
inline FlowSpec synthetic_grid_flow(const Network& net, const ExperimentConfig& cfg) {
    FlowSpec flow;
    const int rows = net.grid_rows, cols = net.grid_cols;
    const double end = cfg.sim.episode_seconds;
    auto road = [&](int c, int r, int d) {
        const int ri = net.road_index("road_" + std::to_string(c) + "_" + std::to_string(r) + "_" +
                                      std::to_string(d));
        if (ri < 0) throw ConfigError("synthetic flow requires a build_grid network");
        return ri;
    };
    auto add = [&](std::vector<int> route, double interval) {
        if (interval <= 0) return;
        flow.rules.push_back({std::move(route), 0.0, interval, end});
    };

    for (int r = 1; r <= rows; ++r) {
        std::vector<int> we, ew;
        for (int c = 0; c <= cols; ++c) we.push_back(road(c, r, 0));
        for (int c = cols + 1; c >= 1; --c) ew.push_back(road(c, r, 2));
        add(we, cfg.ew_interval);
        add(ew, cfg.ew_interval);
    }
    for (int c = 1; c <= cols; ++c) {
        std::vector<int> sn, ns;
        for (int r = 0; r <= rows; ++r) sn.push_back(road(c, r, 1));
        for (int r = rows + 1; r >= 1; --r) ns.push_back(road(c, r, 3));
        add(sn, cfg.ns_interval);
        add(ns, cfg.ns_interval);
    }
    // left turns: westbound entry turning north, eastbound entry turning south
    for (int r = 1; r <= rows; ++r) {
        const int c_turn = 1 + (r - 1) % cols;
        std::vector<int> wn;
        for (int c = 0; c < c_turn; ++c) wn.push_back(road(c, r, 0));
        for (int rr = r; rr <= rows; ++rr) wn.push_back(road(c_turn, rr, 1));
        add(wn, cfg.turn_interval);

        const int c_turn2 = cols - (r - 1) % cols;
        std::vector<int> es;
        for (int c = cols + 1; c > c_turn2; --c) es.push_back(road(c, r, 2));
        for (int rr = r; rr >= 1; --rr) es.push_back(road(c_turn2, rr, 3));
        add(es, cfg.turn_interval);
    }
    return flow;
}

struct EpisodeStats {
    int episode = 0;
    double epsilon = 0.0;
    std::vector<double> mean_reward; // per intersection
    double td_loss = 0.0;
    int td_updates = 0;
    int ct_decisions = 0, ct_rejects = 0, ct_overrides = 0;
    Metrics metrics;
    std::vector<std::uint8_t> actions; // interval-major, one entry per intersection
};

struct RunReport {
    std::vector<EpisodeStats> episodes;
    Metrics final_metrics;                 // greedy evaluation episode
    std::vector<double> final_mean_reward; // per intersection, evaluation episode
    int ct_decisions = 0, ct_rejects = 0, ct_overrides = 0;
    double wall_seconds = 0.0;

    nlohmann::json to_json(bool include_wall = true) const {
        nlohmann::json j;
        j["final"] = {{"att", final_metrics.att}, {"aql", final_metrics.aql}, {"awt", final_metrics.awt}};
        j["final_mean_reward"] = final_mean_reward;
        j["ct"] = {{"decisions", ct_decisions}, {"rejects", ct_rejects}, {"overrides", ct_overrides}};
        j["episodes"] = nlohmann::json::array();
        for (const auto& e : episodes) {
            double avg = 0.0;
            for (double r : e.mean_reward) avg += r;
            if (!e.mean_reward.empty()) avg /= static_cast<double>(e.mean_reward.size());
            j["episodes"].push_back({{"episode", e.episode},
                                     {"epsilon", e.epsilon},
                                     {"mean_reward", avg},
                                     {"att", e.metrics.att},
                                     {"aql", e.metrics.aql},
                                     {"awt", e.metrics.awt},
                                     {"td_loss", e.td_updates ? e.td_loss / e.td_updates : 0.0},
                                     {"ct_decisions", e.ct_decisions},
                                     {"ct_rejects", e.ct_rejects},
                                     {"ct_overrides", e.ct_overrides}});
        }
        if (include_wall) j["wall_seconds"] = wall_seconds;
        return j;
    }
};

// End-to-end orchestration of one experiment: scenario setup, the episodic
// training loop with the Critique->Tune gate, baselines, metrics and
// persistence.
class Harness {
public:
    explicit Harness(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        if (cfg_.roadnet_path.empty() != cfg_.flow_path.empty())
            throw ConfigError("scenario.roadnet and scenario.flow must be given together");
        if (!cfg_.roadnet_path.empty()) {
            net_ = load_network(cfg_.roadnet_path, cfg_.sim.vehicle_gap);
            flow_ = load_flow(cfg_.flow_path, net_);
        } else {
            net_ = build_grid(cfg_.grid_rows, cfg_.grid_cols, cfg_.lane_length, cfg_.sim.vehicle_gap);
            flow_ = synthetic_grid_flow(net_, cfg_);
        }
        const int n = static_cast<int>(net_.intersections.size());

        if (cfg_.controller == Controller::dqn) cfg_.train.qnet.use_ap = false;
        online_ = QNet(cfg_.train.qnet);
        target_ = QNet(cfg_.train.qnet);
        RngStream master(cfg_.seed);
        RngStream init_rng = master.derive("init");
        online_.init(init_rng);
        target_ = online_;
        pnet_.init(init_rng);

        buffer_ = ReplayBuffer(cfg_.train.replay_capacity, n);
        rng_explore_ = master.derive("explore");
        rng_batch_ = master.derive("batch");
        for (int i = 0; i < n; ++i) {
            rng_ct_fit_.push_back(master.derive("ct_fit", static_cast<std::uint64_t>(i)));
            rng_ct_fc_.push_back(master.derive("ct_forecast", static_cast<std::uint64_t>(i)));
        }
        critics_.resize(n);
        orders_.resize(n);
        order_age_.assign(n, -1);
    }

    const ExperimentConfig& config() const { return cfg_; }
    const Network& network() const { return net_; }
    const FlowSpec& flow() const { return flow_; }
    int episodes_completed() const { return episodes_done_; }

    // Full training run per the episodic control loop, then one greedy
    // evaluation episode that produces the reported metric triple.
    RunReport train() {
        const auto t0 = std::chrono::steady_clock::now();
        open_outputs();
        RunReport rep;
        for (int ep = episodes_done_ + 1; ep <= cfg_.episodes; ++ep) {
            const bool nets = uses_nets();
            const double eps = nets ? epsilon_for_episode(ep, cfg_.train) : 0.0;
            const bool ct_en = ct_controller() && ep > cfg_.ct.warmup_episodes;
            if (ct_en) refit_critics(ep, rng_ct_fit_);
            EpisodeStats st = run_episode(ep, eps, nets, ct_en, nullptr);
            if (nets) buffer_.mark_episode_boundary();
            rep.ct_decisions += st.ct_decisions;
            rep.ct_rejects += st.ct_rejects;
            rep.ct_overrides += st.ct_overrides;
            rep.episodes.push_back(std::move(st));
            episodes_done_ = ep;
            if (!cfg_.out_dir.empty() &&
                (ep % cfg_.checkpoint_every == 0 || ep == cfg_.episodes))
                save(checkpoint_path(ep));
        }

        // greedy evaluation with the controller as configured
        std::vector<SimEvent> events;
        EpisodeStats ev = evaluation_episode(cfg_.seed, cfg_.log_events ? &events : nullptr);
        rep.final_metrics = ev.metrics;
        rep.final_mean_reward = ev.mean_reward;
        rep.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_outputs(rep, events);
        return rep;
    }

    // Single greedy episode on the current parameters; deterministic in
    // (state, eval_seed).
    EpisodeStats evaluation_episode(std::uint64_t eval_seed, std::vector<SimEvent>* events) {
        RngStream master(cfg_.seed ^ (0x517cc1b727220a95ull + eval_seed));
        std::vector<RngStream> fit_streams, fc_streams;
        const int n = static_cast<int>(net_.intersections.size());
        for (int i = 0; i < n; ++i) {
            fit_streams.push_back(master.derive("eval_fit", static_cast<std::uint64_t>(i)));
            fc_streams.push_back(master.derive("eval_forecast", static_cast<std::uint64_t>(i)));
        }
        RngStream eval_explore = master.derive("eval_explore");
        const bool ct_en = ct_controller() && episodes_done_ >= cfg_.ct.warmup_episodes;
        if (ct_en) refit_critics(episodes_done_ + 1, fit_streams);
        std::swap(rng_ct_fc_, fc_streams);
        std::swap(rng_explore_, eval_explore);
        EpisodeStats st = run_episode(episodes_done_ + 1, 0.0, /*learning=*/false, ct_en, events);
        std::swap(rng_explore_, eval_explore);
        std::swap(rng_ct_fc_, fc_streams);
        return st;
    }

    void save(const std::string& path) {
        save_checkpoint(path, cfg_, episodes_done_, online_, target_, pnet_, buffer_);
    }

    // Rebuilds a harness from a checkpoint; scenario paths may be overridden
    // (e.g. evaluating a trained policy on another scenario).
    static Harness resume(const std::string& checkpoint_file, const std::string& roadnet = "",
                          const std::string& flow = "", const std::string& out_dir = "") {
        CheckpointState st = read_checkpoint_header(checkpoint_file);
        if (!roadnet.empty()) {
            st.config.roadnet_path = roadnet;
            st.config.flow_path = flow;
        }
        if (!out_dir.empty()) st.config.out_dir = out_dir;
        Harness h(st.config);
        load_checkpoint(checkpoint_file, h.cfg_, h.online_, h.target_, h.pnet_, h.buffer_);
        h.episodes_done_ = st.episodes_completed;
        return h;
    }

    // exposed for tests
    const ReplayBuffer& replay() const { return buffer_; }
    QNet& online_net() { return online_; }
    PredictionNet& prediction_net() { return pnet_; }

private:
    bool uses_nets() const {
        return cfg_.controller == Controller::bct_aplight || cfg_.controller == Controller::ap_dqn ||
               cfg_.controller == Controller::dqn;
    }
    bool ct_controller() const { return cfg_.controller == Controller::bct_aplight; }

    int intervals_per_episode() const {
        return static_cast<int>(cfg_.sim.episode_seconds / cfg_.sim.min_action_duration);
    }

    std::string checkpoint_path(int ep) const {
        return cfg_.out_dir + "/checkpoint_ep" + std::to_string(ep) + ".txt";
    }

    int pick_maxpressure(const Simulator& sim, int ii) const {
        const Intersection& is = net_.intersections[ii];
        int best = 1;
        double best_pressure = -std::numeric_limits<double>::infinity();
        for (int p = 1; p <= kNumPhases; ++p) {
            double acc = 0.0;
            for (const Movement& m : is.phases[p - 1].movements)
                acc += sim.queue_size(m.from_lane) - sim.queue_size(m.to_lane);
            if (acc > best_pressure + 1e-12) {
                best_pressure = acc;
                best = p;
            }
        }
        return best;
    }

    // Refit the per-intersection SARIMA posteriors on the recent reward
    // window. Any failure leaves that intersection without a critic, which
    // downgrades the CT gate to pass-through there.
    void refit_critics(int episode, std::vector<RngStream>& streams) {
        const int n = static_cast<int>(net_.intersections.size());
        const int intervals = intervals_per_episode();
        const std::size_t window_len =
            static_cast<std::size_t>(cfg_.ct.fit_window_episodes) * intervals;
        for (int i = 0; i < n; ++i) {
            critics_[i].reset();
            const auto& hist = buffer_.reward_history(i);
            if (static_cast<int>(hist.size()) < std::max(cfg_.ct.min_fit_len, 30)) continue;
            const std::size_t take = std::min(window_len, hist.size());
            std::vector<double> window(hist.end() - take, hist.end());
            if (stats::variance(window) < 1e-12) continue; // degenerate: pass-through

            try {
                std::vector<std::pair<SarimaOrder, double>> bic_table;
                if (order_age_[i] < 0 || episode - order_age_[i] >= cfg_.ct.order_refresh_every) {
                    const int season = static_cast<int>(window.size()) >= 2 * intervals + 10
                                           ? intervals
                                           : 0;
                    orders_[i] = select_order(window, season, cfg_.ct.max_p, cfg_.ct.max_q,
                                              cfg_.ct.significance,
                                              cfg_.ct_diagnostics ? &bic_table : nullptr);
                    order_age_[i] = episode;
                }
                const SarimaModel css = fit_sarima(window, orders_[i], 800);
                const PriorSpec priors = default_priors(css.z, css.sigma2);
                critics_[i] = std::make_unique<PosteriorSampler>(window, orders_[i], priors,
                                                                 cfg_.ct.Nt, cfg_.ct.burnin,
                                                                 streams[i]);
                if (diag_.is_open()) {
                    nlohmann::json j{{"type", "fit"},
                                     {"episode", episode},
                                     {"intersection", i},
                                     {"order",
                                      {orders_[i].p, orders_[i].d, orders_[i].q, orders_[i].P,
                                       orders_[i].D, orders_[i].Q, orders_[i].s}},
                                     {"bic", css.bic},
                                     {"accept_rate", critics_[i]->accept_rate()},
                                     {"converged", critics_[i]->converged()}};
                    if (!bic_table.empty()) {
                        auto& tab = j["bic_table"] = nlohmann::json::array();
                        for (const auto& [o, b] : bic_table)
                            tab.push_back({o.p, o.d, o.q, o.P, o.D, o.Q, b});
                    }
                    diag_ << j.dump() << "\n";
                }
            } catch (const std::runtime_error&) {
                critics_[i].reset();
            }
        }
    }

    EpisodeStats run_episode(int episode, double epsilon, bool learning, bool ct_enabled,
                             std::vector<SimEvent>* events) {
        Simulator sim(&net_, flow_, cfg_.sim, cfg_.seed);
        if (events) sim.set_event_log(events);
        const int n = static_cast<int>(net_.intersections.size());
        const int intervals = intervals_per_episode();
        const int spi = cfg_.sim.steps_per_interval();

        EpisodeStats st;
        st.episode = episode;
        st.epsilon = epsilon;
        st.mean_reward.assign(n, 0.0);
        st.actions.reserve(static_cast<std::size_t>(intervals) * n);

        std::vector<RawObservation> obs(n);
        std::vector<std::array<double, kNumPhases>> qv(n);
        std::vector<int> action(n, 1);
        std::vector<char> switched(n, 0);
        const bool nets = uses_nets();

        for (int k = 0; k < intervals; ++k) {
            for (int i = 0; i < n; ++i) {
                const int cur = sim.current_phase(i);
                int a = cur;
                if (cfg_.controller == Controller::fixedtime) {
                    a = 1 + k % kNumPhases;
                } else if (cfg_.controller == Controller::random_policy) {
                    a = rng_explore_.uniform_int(1, kNumPhases);
                } else if (cfg_.controller == Controller::maxpressure) {
                    a = pick_maxpressure(sim, i);
                } else {
                    obs[i] = sim.observe(i);
                    qv[i] = online_.q_values(obs[i]);
                    const ActionChoice choice = select_action(qv[i], epsilon, cur, rng_explore_);
                    a = choice.phase;
                    if (ct_enabled) {
                        ++st.ct_decisions;
                        const double r_hat = pnet_.predict(obs[i], qv[i]);
                        bool accept = true;
                        CredibleInterval ci{};
                        if (critics_[i]) {
                            const auto forecasts =
                                critics_[i]->forecast_samples(cfg_.ct.horizon, rng_ct_fc_[i]);
                            ci = credible_interval(forecasts);
                            if (!cfg_.ct.force_accept)
                                accept = critique(r_hat, ci) == CritiqueVerdict::accept;
                        }
                        if (!accept) {
                            ++st.ct_rejects;
                            std::array<std::vector<double>, kNumPhases> qh;
                            for (int j = 0; j < kNumPhases; ++j) qh[j] = clipped_q_history(i, j);
                            const TuneDecision dec = tune(qv[i], qh, cfg_.tune);
                            const bool overrode = dec.phase != a;
                            if (overrode) ++st.ct_overrides;
                            if (diag_.is_open()) {
                                diag_ << nlohmann::json{{"type", "tune"},
                                                        {"episode", episode},
                                                        {"interval", k},
                                                        {"intersection", i},
                                                        {"r_hat", r_hat},
                                                        {"ci", {ci.lower, ci.upper}},
                                                        {"risk", dec.risk},
                                                        {"chosen", dec.phase},
                                                        {"overrode", overrode}}
                                                .dump()
                                        << "\n";
                            }
                            a = dec.phase;
                        }
                    }
                }
                sim.apply_action(i, a);
                action[i] = a;
                switched[i] = a != cur;
                st.actions.push_back(static_cast<std::uint8_t>(a));
            }

            std::vector<int> discharged(n, 0);
            StepReport last;
            for (int s = 0; s < spi; ++s) {
                last = sim.step();
                for (int i = 0; i < n; ++i) discharged[i] += last.per[i].discharged;
            }

            for (int i = 0; i < n; ++i) {
                const double r =
                    reward(last.per[i].queued, discharged[i], switched[i] != 0, cfg_.train);
                st.mean_reward[i] += r / intervals;
                if (critics_[i] && ct_enabled) critics_[i]->append(r);
                if (nets && learning) {
                    Transition t;
                    t.s = obs[i];
                    t.action = action[i] - 1;
                    t.reward = r;
                    t.s2 = sim.observe(i);
                    buffer_.push(std::move(t));
                    buffer_.push_reward(i, r);
                    buffer_.push_q_values(i, qv[i]);
                    pnet_.train_step(obs[i], qv[i], r, cfg_.train.pnet_lr, cfg_.train.grad_clip);
                }
            }
            if (nets && learning && buffer_.size() >= static_cast<std::size_t>(cfg_.train.batch_size)) {
                st.td_loss += td_update(online_, target_, buffer_, cfg_.train, rng_batch_);
                ++st.td_updates;
                soft_update(target_, online_, cfg_.train.tau);
            }
        }
        st.metrics = sim.finalize_metrics();
        return st;
    }

    std::vector<double> clipped_q_history(int i, int j) const {
        const auto& h = buffer_.q_history(i, j);
        const std::size_t window =
            static_cast<std::size_t>(cfg_.ct.fit_window_episodes) * intervals_per_episode();
        const std::size_t take = std::min(window, h.size());
        return {h.end() - take, h.end()};
    }

    void open_outputs() {
        if (cfg_.out_dir.empty()) return;
        std::filesystem::create_directories(cfg_.out_dir);
        if (cfg_.ct_diagnostics && !diag_.is_open())
            diag_.open(cfg_.out_dir + "/ct_diagnostics.jsonl");
    }

    void write_outputs(const RunReport& rep, const std::vector<SimEvent>& events) {
        if (cfg_.out_dir.empty()) return;
        {
            std::ofstream out(cfg_.out_dir + "/report.json");
            out << rep.to_json(true).dump(2) << "\n";
        }
        {
            std::ofstream csv(cfg_.out_dir + "/episodes.csv");
            csv << "episode,epsilon,mean_reward,att,aql,awt,td_loss,ct_decisions,ct_rejects,ct_overrides\n";
            for (const auto& e : rep.episodes) {
                double avg = 0.0;
                for (double r : e.mean_reward) avg += r;
                if (!e.mean_reward.empty()) avg /= static_cast<double>(e.mean_reward.size());
                csv << e.episode << "," << e.epsilon << "," << avg << "," << e.metrics.att << ","
                    << e.metrics.aql << "," << e.metrics.awt << ","
                    << (e.td_updates ? e.td_loss / e.td_updates : 0.0) << "," << e.ct_decisions
                    << "," << e.ct_rejects << "," << e.ct_overrides << "\n";
            }
        }
        if (cfg_.log_events) {
            std::ofstream ev(cfg_.out_dir + "/events.log");
            static const char* names[] = {"enter", "arrive", "cross", "exit"};
            for (const auto& e : events)
                ev << e.t << " vehicle=" << e.vehicle << " lane=" << net_.lanes[e.lane].id
                   << " event=" << names[static_cast<int>(e.kind)] << "\n";
        }
    }

    ExperimentConfig cfg_;
    Network net_;
    FlowSpec flow_;
    QNet online_, target_;
    PredictionNet pnet_;
    ReplayBuffer buffer_{1, 1};
    RngStream rng_explore_, rng_batch_;
    std::vector<RngStream> rng_ct_fit_, rng_ct_fc_;
    std::vector<std::unique_ptr<PosteriorSampler>> critics_;
    std::vector<SarimaOrder> orders_;
    std::vector<int> order_age_;
    int episodes_done_ = 0;
    std::ofstream diag_;
};

// Convenience entry points mirroring the CLI surface.

inline RunReport train(const ExperimentConfig& cfg) {
    Harness h(cfg);
    return h.train();
}

inline RunReport evaluate(const std::string& checkpoint_file, const std::string& roadnet,
                          const std::string& flow, std::uint64_t seed) {
    Harness h = Harness::resume(checkpoint_file, roadnet, flow);
    EpisodeStats ev = h.evaluation_episode(seed, nullptr);
    RunReport rep;
    rep.final_metrics = ev.metrics;
    rep.final_mean_reward = ev.mean_reward;
    rep.ct_decisions = ev.ct_decisions;
    rep.ct_rejects = ev.ct_rejects;
    rep.ct_overrides = ev.ct_overrides;
    return rep;
}

} // namespace bctap
