#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "bctap/errors.hpp"
#include "bctap/netmodel.hpp"
#include "bctap/pressure.hpp"

namespace bctap {

struct SimConfig {
    double step_seconds = 1.0;
    double min_action_duration = 30.0; // green seconds between decisions
    double yellow = 3.0;
    double all_red = 2.0;
    double saturation_flow = 1.0;      // vehicles per green-second per movement
    double vehicle_gap = kDefaultVehicleGap;
    double free_speed = 11.0;          // m/s while traversing a lane
    double episode_seconds = 3600.0;

    void validate() const {
        if (step_seconds <= 0 || min_action_duration <= 0 || yellow <= 0 || all_red <= 0 ||
            saturation_flow <= 0 || vehicle_gap <= 0 || free_speed <= 0 || episode_seconds <= 0)
            throw ConfigError("all SimConfig fields must be positive");
        if (min_action_duration <= yellow + all_red)
            throw ConfigError("min_action_duration must exceed yellow + all_red");
        const double ratio = min_action_duration / step_seconds;
        if (std::fabs(ratio - std::round(ratio)) > 1e-9)
            throw ConfigError("min_action_duration must be a multiple of step_seconds");
    }

    int steps_per_interval() const {
        return static_cast<int>(std::round(min_action_duration / step_seconds));
    }
};

enum class SignalStage { Green, Yellow, AllRed };

struct VehicleRecord {
    int id = -1;
    int rule = -1;
    double enter_time = 0.0;
    double exit_time = -1.0; // unset while in-network
    double stopped_time = 0.0;
    bool waiting = false;    // waited during the last step
    int route_pos = 0;
    int lane = -1;
    double arrive_time = 0.0; // when the stop line is reached

    bool exited() const { return exit_time >= 0.0; }
};

struct StepReport {
    double clock = 0.0;
    struct PerIntersection {
        int queued = 0;     // sum of upstream lane queues after the step
        int running = 0;    // sum of upstream running vehicles
        int discharged = 0; // vehicles that crossed this step
    };
    std::vector<PerIntersection> per;
    int entered_total = 0;
    int exited_total = 0;
    int in_network = 0;
};

// What an agent sees of one intersection: the upstream/downstream lane
// matrices, the active phase, upstream running counts and the queued totals
// of up to four controlled neighbors (zero at boundaries).
struct RawObservation {
    LaneMatrix up, down;
    int phase = 1;
    std::array<double, 12> run_up{};
    std::array<double, 4> neighbor_queue{};
};

struct SimEvent {
    enum Kind { Enter, Arrive, Cross, Exit };
    double t = 0.0;
    int vehicle = -1;
    int lane = -1;
    Kind kind = Enter;
};

struct Metrics {
    double att = 0.0;
    double aql = 0.0;
    double awt = 0.0;
};

// Deterministic discrete-time queue simulator. A vehicle entering a lane
// "runs" for length/free_speed seconds, then queues at the stop line; green
// movements discharge from the queue head into the next lane of the route
// while the target has room. Right turns discharge in every stage.
class Simulator {
public:
    Simulator(const Network* net, FlowSpec flow, SimConfig cfg, std::uint64_t seed = 0)
        : net_(net), flow_(std::move(flow)), cfg_(cfg), seed_(seed) {
        cfg_.validate();
        if (std::fabs(net_->vehicle_gap - cfg_.vehicle_gap) > 1e-9)
            throw ConfigError("SimConfig.vehicle_gap differs from the network's vehicle gap");
        lanes_.resize(net_->lanes.size());
        signals_.resize(net_->intersections.size());
        rule_next_.resize(flow_.rules.size());
        for (std::size_t i = 0; i < flow_.rules.size(); ++i) rule_next_[i] = flow_.rules[i].start_time;
        budget_ = static_cast<int>(std::floor(cfg_.saturation_flow * cfg_.step_seconds));
    }

    double clock() const { return clock_; }
    const SimConfig& config() const { return cfg_; }
    const Network& network() const { return *net_; }
    std::uint64_t seed() const { return seed_; }

    int current_phase(int intersection) const { return signals_[intersection].phase; }
    SignalStage stage(int intersection) const { return signals_[intersection].stage; }
    int queue_size(int lane) const { return static_cast<int>(lanes_[lane].queue.size()); }
    int running_size(int lane) const { return static_cast<int>(lanes_[lane].running.size()); }
    int occupancy(int lane) const { return queue_size(lane) + running_size(lane); }
    int entered_total() const { return entered_; }
    int exited_total() const { return exited_; }
    int in_network() const { return entered_ - exited_; }
    const std::vector<VehicleRecord>& vehicles() const { return vehicles_; }

    int pending_injections() const {
        long long pending = static_cast<long long>(deferred_.size());
        for (std::size_t i = 0; i < flow_.rules.size(); ++i) {
            const FlowRule& r = flow_.rules[i];
            const double end = std::min(r.end_time, cfg_.episode_seconds);
            if (rule_next_[i] > end) continue;
            pending += static_cast<long long>(std::floor((end - rule_next_[i]) / r.interval)) + 1;
        }
        return static_cast<int>(std::min<long long>(pending, std::numeric_limits<int>::max()));
    }

    void set_event_log(std::vector<SimEvent>* log) { events_ = log; }

    // Decision for one intersection at an action boundary. Keeping the active
    // phase extends green; a new phase schedules yellow then all-red first.
    void apply_action(int intersection, int phase) {
        if (phase < 1 || phase > kNumPhases)
            throw PhaseOutOfRange("phase " + std::to_string(phase) + " not in 1..8");
        SignalState& sig = signals_[intersection];
        if (phase == sig.phase && sig.stage == SignalStage::Green) return;
        sig.pending = phase;
        sig.stage = SignalStage::Yellow;
        sig.stage_left = cfg_.yellow;
    }

    StepReport step() {
        inject_due_vehicles();
        process_arrivals();

        std::vector<int> discharged(net_->intersections.size(), 0);
        discharge(discharged);

        // waiting bookkeeping: everything still queued after discharge waited
        int queued_total = 0;
        for (auto& ls : lanes_) {
            queued_total += static_cast<int>(ls.queue.size());
            for (int vid : ls.queue) {
                vehicles_[vid].waiting = true;
                vehicles_[vid].stopped_time += cfg_.step_seconds;
            }
        }
        aql_sum_ += queued_total;
        ++steps_;

        advance_signals();
        clock_ += cfg_.step_seconds;

        StepReport rep;
        rep.clock = clock_;
        rep.per.resize(net_->intersections.size());
        for (std::size_t i = 0; i < net_->intersections.size(); ++i) {
            const Intersection& is = net_->intersections[i];
            for (int li : is.upstream) {
                rep.per[i].queued += queue_size(li);
                rep.per[i].running += running_size(li);
            }
            rep.per[i].discharged = discharged[i];
        }
        rep.entered_total = entered_;
        rep.exited_total = exited_;
        rep.in_network = entered_ - exited_;
        return rep;
    }

    RawObservation observe(int intersection) const {
        const Intersection& is = net_->intersections[intersection];
        RawObservation o;
        o.phase = signals_[intersection].phase;
        for (Dir d : kDirs)
            for (LaneKind k : kKinds) {
                const int idx = static_cast<int>(d) * 3 + static_cast<int>(k);
                const int ul = is.upstream[idx];
                const int dl = is.downstream[idx];
                o.up.at(d, k, 0) = queue_size(ul);
                o.up.at(d, k, 1) = running_size(ul);
                o.up.at(d, k, 2) = occupancy(ul);
                o.down.at(d, k, 0) = queue_size(dl);
                o.down.at(d, k, 1) = running_size(dl);
                o.down.at(d, k, 2) = occupancy(dl);
                o.run_up[idx] = running_size(ul);
            }
        for (int di = 0; di < 4; ++di) {
            const int n = is.neighbors[di];
            if (n < 0) continue;
            double total = 0.0;
            for (int li : net_->intersections[n].upstream) total += queue_size(li);
            o.neighbor_queue[di] = total;
        }
        return o;
    }

    // ATT uses the current clock as censoring time for in-network vehicles.
    Metrics finalize_metrics() const {
        Metrics m;
        if (!vehicles_.empty()) {
            double att = 0.0, awt = 0.0;
            for (const auto& v : vehicles_) {
                att += (v.exited() ? v.exit_time : clock_) - v.enter_time;
                awt += v.stopped_time;
            }
            m.att = att / static_cast<double>(vehicles_.size());
            m.awt = awt / static_cast<double>(vehicles_.size());
        }
        if (steps_ > 0) m.aql = aql_sum_ / static_cast<double>(steps_);
        return m;
    }

private:
    struct LaneState {
        std::deque<int> queue;   // vehicle ids at the stop line, FIFO
        std::deque<int> running; // traversing, in arrival order
    };
    struct SignalState {
        int phase = 1;
        SignalStage stage = SignalStage::Green;
        double stage_left = 0.0;
        int pending = 1;
    };

    void log_event(SimEvent::Kind kind, int vehicle, int lane) {
        if (events_) events_->push_back({clock_, vehicle, lane, kind});
    }

    LaneKind entry_kind(const FlowRule& rule, std::size_t pos) const {
        if (pos + 1 >= rule.route.size()) return LaneKind::Str;
        const auto k = turn_kind(net_->roads[rule.route[pos]].dir, net_->roads[rule.route[pos + 1]].dir);
        return k ? *k : LaneKind::Str;
    }

    bool try_inject(int rule_idx) {
        const FlowRule& rule = flow_.rules[rule_idx];
        const Road& first = net_->roads[rule.route[0]];
        const int lane = first.lanes[static_cast<int>(entry_kind(rule, 0))];
        if (occupancy(lane) >= net_->lanes[lane].capacity) return false;
        VehicleRecord v;
        v.id = static_cast<int>(vehicles_.size());
        v.rule = rule_idx;
        v.enter_time = clock_;
        v.route_pos = 0;
        v.lane = lane;
        v.arrive_time = clock_ + net_->lanes[lane].length / cfg_.free_speed;
        lanes_[lane].running.push_back(v.id);
        vehicles_.push_back(v);
        ++entered_;
        log_event(SimEvent::Enter, v.id, lane);
        return true;
    }

    void inject_due_vehicles() {
        // deferred vehicles first, in arrival order
        std::size_t kept = 0;
        for (std::size_t i = 0; i < deferred_.size(); ++i) {
            if (!try_inject(deferred_[i])) deferred_[kept++] = deferred_[i];
        }
        deferred_.resize(kept);
        for (std::size_t i = 0; i < flow_.rules.size(); ++i) {
            const FlowRule& rule = flow_.rules[i];
            while (rule_next_[i] <= clock_ + 1e-9 && rule_next_[i] <= rule.end_time + 1e-9) {
                if (!try_inject(static_cast<int>(i))) deferred_.push_back(static_cast<int>(i));
                rule_next_[i] += rule.interval;
            }
        }
    }

    void process_arrivals() {
        for (std::size_t li = 0; li < lanes_.size(); ++li) {
            auto& ls = lanes_[li];
            while (!ls.running.empty()) {
                const int vid = ls.running.front();
                VehicleRecord& v = vehicles_[vid];
                if (v.arrive_time > clock_ + 1e-9) break;
                ls.running.pop_front();
                const FlowRule& rule = flow_.rules[v.rule];
                if (static_cast<std::size_t>(v.route_pos) + 1 >= rule.route.size()) {
                    v.exit_time = clock_;
                    v.lane = -1;
                    ++exited_;
                    log_event(SimEvent::Exit, vid, static_cast<int>(li));
                } else {
                    ls.queue.push_back(vid);
                    log_event(SimEvent::Arrive, vid, static_cast<int>(li));
                }
            }
        }
    }

    void discharge(std::vector<int>& discharged) {
        if (budget_ <= 0) return;
        for (std::size_t li = 0; li < lanes_.size(); ++li) {
            auto& ls = lanes_[li];
            if (ls.queue.empty()) continue;
            const Lane& lane = net_->lanes[li];
            const Road& road = net_->roads[lane.road];
            const int ei = road.end_intersection;
            bool allowed = lane.kind == LaneKind::Rig || ei < 0;
            if (!allowed) {
                const SignalState& sig = signals_[ei];
                allowed = sig.stage == SignalStage::Green && phase_allows(sig.phase, lane.dir, lane.kind);
            }
            if (!allowed) continue;
            int moved = 0;
            while (moved < budget_ && !ls.queue.empty()) {
                const int vid = ls.queue.front();
                VehicleRecord& v = vehicles_[vid];
                const FlowRule& rule = flow_.rules[v.rule];
                const int next_road = rule.route[v.route_pos + 1];
                const LaneKind tk = entry_kind(rule, static_cast<std::size_t>(v.route_pos) + 1);
                const int target = net_->roads[next_road].lanes[static_cast<int>(tk)];
                if (occupancy(target) >= net_->lanes[target].capacity) break; // head-of-line block
                ls.queue.pop_front();
                v.route_pos += 1;
                v.lane = target;
                v.waiting = false;
                v.arrive_time = clock_ + net_->lanes[target].length / cfg_.free_speed;
                lanes_[target].running.push_back(vid);
                if (ei >= 0) discharged[ei] += 1;
                log_event(SimEvent::Cross, vid, target);
                ++moved;
            }
        }
    }

    void advance_signals() {
        for (auto& sig : signals_) {
            if (sig.stage == SignalStage::Green) continue;
            sig.stage_left -= cfg_.step_seconds;
            while (sig.stage_left <= 1e-9 && sig.stage != SignalStage::Green) {
                if (sig.stage == SignalStage::Yellow) {
                    sig.stage = SignalStage::AllRed;
                    sig.stage_left += cfg_.all_red;
                } else {
                    sig.stage = SignalStage::Green;
                    sig.phase = sig.pending;
                    sig.stage_left = 0.0;
                }
            }
        }
    }

    const Network* net_;
    FlowSpec flow_;
    SimConfig cfg_;
    std::uint64_t seed_ = 0;
    double clock_ = 0.0;
    int budget_ = 1;

    std::vector<LaneState> lanes_;
    std::vector<SignalState> signals_;
    std::vector<VehicleRecord> vehicles_;
    std::vector<double> rule_next_;
    std::vector<int> deferred_;
    int entered_ = 0;
    int exited_ = 0;
    long long aql_sum_ = 0;
    long long steps_ = 0;
    std::vector<SimEvent>* events_ = nullptr;
};

// Naming convenience matching the rest of the control loop vocabulary.
inline Simulator reset(const Network& net, FlowSpec flow, const SimConfig& cfg,
                       std::uint64_t seed = 0) {
    return Simulator(&net, std::move(flow), cfg, seed);
}

} // namespace bctap
