#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bctap/errors.hpp"
#include "bctap/nn.hpp"
#include "bctap/pressure.hpp"
#include "bctap/rng.hpp"
#include "bctap/simcore.hpp"

namespace bctap {

struct QNetConfig {
    bool use_ap = true;             // false: raw upstream queue lengths instead of AP
    int head = 4;
    int dk = 8;
    std::vector<int> hidden = {64, 64};

    bool operator==(const QNetConfig&) const = default;
};

// Input conditioning constants: vehicle counts are scaled down so ReLU units
// start in a reasonable range.
inline constexpr double kCountScale = 0.1;
inline constexpr double kNeighborScale = 0.025;
inline constexpr int kObsDim = 12 + 8 + 12 + 4;

// Shared Q-network: an observation encoder (adaptive pressure through the
// attention block, or raw queues) followed by an MLP with one Q-value head
// per phase. All intersections share one instance.
class QNet {
public:
    QNet() : QNet(QNetConfig{}) {}
    explicit QNet(const QNetConfig& cfg) : cfg_(cfg), att_(cfg.head, cfg.dk) {
        std::vector<int> dims = {kObsDim};
        dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
        dims.push_back(kNumPhases);
        mlp_ = nn::Mlp(dims);
    }

    const QNetConfig& config() const { return cfg_; }

    void init(RngStream& rng) {
        att_.init(rng);
        mlp_.init(rng);
    }

    struct Cache {
        ApResult ap;
        nn::Mlp::Cache mlp;
    };

    std::vector<double> encode(const RawObservation& obs, Cache* cache = nullptr) const {
        std::vector<double> in(kObsDim, 0.0);
        if (cfg_.use_ap) {
            ApResult ap = ap_vector(att_, obs.up, obs.down);
            for (int i = 0; i < 12; ++i) in[i] = ap.ap[i] * kCountScale;
            if (cache) cache->ap = std::move(ap);
        } else {
            for (Dir d : kDirs)
                for (LaneKind k : kKinds)
                    in[static_cast<int>(d) * 3 + static_cast<int>(k)] =
                        obs.up.at(d, k, 0) * kCountScale;
        }
        in[12 + obs.phase - 1] = 1.0;
        for (int i = 0; i < 12; ++i) in[20 + i] = obs.run_up[i] * kCountScale;
        for (int i = 0; i < 4; ++i) in[32 + i] = obs.neighbor_queue[i] * kNeighborScale;
        return in;
    }

    std::array<double, kNumPhases> q_values(const RawObservation& obs, Cache* cache = nullptr) const {
        const std::vector<double> in = encode(obs, cache);
        const std::vector<double> out = mlp_.forward(in, cache ? &cache->mlp : nullptr);
        std::array<double, kNumPhases> q{};
        for (int i = 0; i < kNumPhases; ++i) {
            if (!std::isfinite(out[i])) throw NonFiniteActivation("Q-value output is not finite");
            q[i] = out[i];
        }
        return q;
    }

    // Accumulates gradients from dL/d(q-values), including the attention path.
    void backward(Cache& cache, const std::array<double, kNumPhases>& dq) {
        std::vector<double> dy(dq.begin(), dq.end());
        const std::vector<double> din = mlp_.backward(cache.mlp, std::move(dy));
        if (cfg_.use_ap) {
            std::array<double, 12> dap{};
            for (int i = 0; i < 12; ++i) dap[i] = din[i] * kCountScale;
            ap_backward(att_, cache.ap, dap);
        }
    }

    std::vector<nn::ParamView> params(const std::string& prefix = "qnet") {
        std::vector<nn::ParamView> out;
        if (cfg_.use_ap) out = att_.params(prefix + ".att");
        for (auto& p : mlp_.params(prefix + ".mlp")) out.push_back(std::move(p));
        return out;
    }

    void zero_grad() {
        att_.zero_grad();
        mlp_.zero_grad();
    }

    AttentionParams& attention() { return att_; }
    const AttentionParams& attention() const { return att_; }

private:
    QNetConfig cfg_;
    AttentionParams att_;
    nn::Mlp mlp_;
};

// Auxiliary reward forecaster: three dense layers over the raw lane counts,
// the phase one-hot and the current Q-value vector.
class PredictionNet {
public:
    PredictionNet() : mlp_({kPredInDim, 64, 32, 1}) {}

    static constexpr int kPredInDim = 48 + 8 + 8;

    void init(RngStream& rng) { mlp_.init(rng); }

    static std::vector<double> encode(const RawObservation& obs,
                                      const std::array<double, kNumPhases>& q_cur) {
        std::vector<double> in(kPredInDim, 0.0);
        int at = 0;
        for (Dir d : kDirs)
            for (LaneKind k : kKinds) {
                in[at] = obs.up.at(d, k, 0) * kCountScale;
                in[at + 12] = obs.down.at(d, k, 0) * kCountScale;
                in[at + 24] = obs.up.at(d, k, 1) * kCountScale;
                in[at + 36] = obs.down.at(d, k, 1) * kCountScale;
                ++at;
            }
        in[48 + obs.phase - 1] = 1.0;
        for (int j = 0; j < kNumPhases; ++j) in[56 + j] = q_cur[j];
        return in;
    }

    double predict(const RawObservation& obs, const std::array<double, kNumPhases>& q_cur) const {
        const double y = mlp_.forward(encode(obs, q_cur)).front();
        if (!std::isfinite(y)) throw NonFiniteActivation("predicted reward is not finite");
        return y;
    }

    // One squared-error SGD step toward the observed reward; returns the loss.
    double train_step(const RawObservation& obs, const std::array<double, kNumPhases>& q_cur,
                      double observed_reward, double lr, double clip) {
        nn::Mlp::Cache cache;
        const double y = mlp_.forward(encode(obs, q_cur), &cache).front();
        const double err = y - observed_reward;
        mlp_.backward(cache, {2.0 * err});
        auto ps = params();
        nn::sgd_step(ps, lr, clip);
        return err * err;
    }

    std::vector<nn::ParamView> params(const std::string& prefix = "pnet") {
        return mlp_.params(prefix + ".mlp");
    }

private:
    nn::Mlp mlp_;
};

struct Transition {
    RawObservation s;
    int action = 0; // 0-based phase index
    double reward = 0.0;
    RawObservation s2;
};

// Ring buffer of transitions with strictly FIFO eviction, plus the
// per-intersection reward and per-phase Q-value histories consumed by the
// critique/tune layers.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 50000, int num_intersections = 1)
        : capacity_(capacity), rewards_(num_intersections),
          qhist_(static_cast<std::size_t>(num_intersections) * kNumPhases) {}

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return data_.size(); }
    int num_intersections() const { return static_cast<int>(rewards_.size()); }

    void push(Transition t) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(t));
        } else {
            data_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
    }

    const Transition& sample(RngStream& rng) const { return data_[rng.uniform_index(data_.size())]; }

    void push_reward(int intersection, double r) { rewards_[intersection].push_back(r); }
    void push_q_values(int intersection, const std::array<double, kNumPhases>& q) {
        for (int j = 0; j < kNumPhases; ++j)
            qhist_[static_cast<std::size_t>(intersection) * kNumPhases + j].push_back(q[j]);
    }

    const std::vector<double>& reward_history(int intersection) const { return rewards_[intersection]; }
    const std::vector<double>& q_history(int intersection, int phase) const {
        return qhist_[static_cast<std::size_t>(intersection) * kNumPhases + phase];
    }

    std::vector<double>& mutable_reward_history(int intersection) { return rewards_[intersection]; }
    std::vector<double>& mutable_q_history(int intersection, int phase) {
        return qhist_[static_cast<std::size_t>(intersection) * kNumPhases + phase];
    }

    void mark_episode_boundary() { boundaries_.push_back(rewards_.empty() ? 0 : rewards_[0].size()); }
    const std::vector<std::size_t>& episode_boundaries() const { return boundaries_; }
    std::vector<std::size_t>& mutable_episode_boundaries() { return boundaries_; }

private:
    std::size_t capacity_;
    std::vector<Transition> data_;
    std::size_t head_ = 0;
    std::vector<std::vector<double>> rewards_;
    std::vector<std::vector<double>> qhist_;
    std::vector<std::size_t> boundaries_;
};

struct TrainConfig {
    double gamma = 0.8;
    double lr = 0.003;
    double tau = 0.005;
    double eps_min = 0.2;
    double eps_power = 0.45;
    int batch_size = 32;
    std::size_t replay_capacity = 50000;
    double grad_clip = 10.0;
    double pnet_lr = 0.003;
    double w_queue = 0.25;
    double w_throughput = 0.1;
    double w_switch = 0.5;
    QNetConfig qnet;

    void validate() const {
        if (gamma <= 0 || gamma >= 1) throw ConfigError("gamma must be in (0,1)");
        if (tau <= 0 || tau > 1) throw ConfigError("tau must be in (0,1]");
        if (lr <= 0 || pnet_lr <= 0) throw ConfigError("learning rates must be positive");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (eps_min < 0 || eps_min > 1) throw ConfigError("eps_min must be in [0,1]");
    }
};

// Power-function exploration decay with the configured floor; evaluation
// passes epsilon = 0 explicitly.
inline double epsilon_for_episode(int episode, const TrainConfig& cfg) {
    const double e = std::max(1, episode);
    return std::max(cfg.eps_min, std::pow(e, -cfg.eps_power));
}

struct ActionChoice {
    int phase = 1; // 1..8
    bool switched = false;
};

// Epsilon-greedy with lowest-index tie-break. epsilon = 0 draws nothing from
// the stream, keeping greedy evaluation reproducible.
inline ActionChoice select_action(std::span<const double> q_values, double epsilon,
                                  int current_phase, RngStream& rng) {
    int phase;
    if (epsilon > 0.0 && rng.uniform() < epsilon) {
        phase = rng.uniform_int(1, kNumPhases);
    } else {
        int best = 0;
        for (int j = 1; j < kNumPhases; ++j)
            if (q_values[j] > q_values[best]) best = j;
        phase = best + 1;
    }
    return {phase, phase != current_phase};
}

// r = -w_q * (sum of upstream queue lengths) + w_p * (vehicles discharged
// over the control interval) - w_s * [switched]
inline double reward(double queue_sum, double discharged, bool switched, const TrainConfig& cfg) {
    return -cfg.w_queue * queue_sum + cfg.w_throughput * discharged -
           (switched ? cfg.w_switch : 0.0);
}

// One TD step: squared TD error on a uniformly sampled batch, target values
// from the target network, SGD with gradient-norm clipping on the online
// parameters (attention included). Returns the mean squared TD error.
inline double td_update(QNet& online, const QNet& target, const ReplayBuffer& buffer,
                        const TrainConfig& cfg, RngStream& rng) {
    if (buffer.size() == 0) throw ArgumentError("td_update needs a nonempty replay buffer");
    const int n = cfg.batch_size;
    double loss = 0.0;
    online.zero_grad();
    for (int b = 0; b < n; ++b) {
        const Transition& t = buffer.sample(rng);
        QNet::Cache cache;
        const auto q = online.q_values(t.s, &cache);
        const auto q2 = target.q_values(t.s2);
        double best = q2[0];
        for (int j = 1; j < kNumPhases; ++j) best = std::max(best, q2[j]);
        const double y = t.reward + cfg.gamma * best;
        const double err = q[t.action] - y;
        loss += err * err;
        std::array<double, kNumPhases> dq{};
        dq[t.action] = 2.0 * err / static_cast<double>(n);
        online.backward(cache, dq);
    }
    auto ps = online.params();
    nn::sgd_step(ps, cfg.lr, cfg.grad_clip);
    return loss / static_cast<double>(n);
}

inline void soft_update(QNet& target, QNet& online, double tau) {
    auto tp = target.params();
    auto op = online.params();
    nn::soft_update(tp, op, tau);
}

} // namespace bctap
