#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "bctap/errors.hpp"
#include "bctap/netmodel.hpp"
#include "bctap/nn.hpp"

namespace bctap {

// Per-direction lane features: 4 layers (E,W,S,N) x 3 lanes (lef,str,rig) x
// 3 columns (waiting, running, total). One matrix describes the upstream
// side of an intersection (query), one the downstream side (key).
struct LaneMatrix {
    std::array<double, 36> m{};

    double& at(Dir d, LaneKind k, int col) {
        return m[static_cast<std::size_t>(d) * 9 + static_cast<std::size_t>(k) * 3 + col];
    }
    double at(Dir d, LaneKind k, int col) const {
        return m[static_cast<std::size_t>(d) * 9 + static_cast<std::size_t>(k) * 3 + col];
    }

    bool consistent(double tol = 1e-9) const {
        for (Dir d : kDirs)
            for (LaneKind k : kKinds) {
                if (at(d, k, 0) < 0 || at(d, k, 1) < 0) return false;
                if (std::fabs(at(d, k, 0) + at(d, k, 1) - at(d, k, 2)) > tol) return false;
            }
        return true;
    }

    bool operator==(const LaneMatrix&) const = default;
};

// Row-stochastic 3x3 weights per direction layer: entry (k, j) is the weight
// of downstream lane j in the pressure of upstream lane k.
struct AttentionWeights {
    std::array<double, 36> w{};

    double& at(Dir d, int k, int j) {
        return w[static_cast<std::size_t>(d) * 9 + static_cast<std::size_t>(k) * 3 + j];
    }
    double at(Dir d, int k, int j) const {
        return w[static_cast<std::size_t>(d) * 9 + static_cast<std::size_t>(k) * 3 + j];
    }
};

struct AttentionParams {
    int head = 4;
    int dk = 8;
    std::vector<nn::Mat> Wq, Wk; // per head: 3 (features) x dk
    // Mixing map over the concatenated heads. Constrained to one scalar per
    // head: the only linear form that commutes with permutations of the
    // downstream lanes, which the weight matrix must respect (uniform keys
    // give uniform weights, permuted lanes permute columns).
    nn::Mat psi; // head x 1
    std::vector<nn::Mat> gWq, gWk;
    nn::Mat gpsi;

    AttentionParams() { resize(); }
    AttentionParams(int heads, int key_dim) : head(heads), dk(key_dim) { resize(); }

    void resize() {
        Wq.assign(head, nn::Mat(3, dk));
        Wk.assign(head, nn::Mat(3, dk));
        gWq.assign(head, nn::Mat(3, dk));
        gWk.assign(head, nn::Mat(3, dk));
        psi = nn::Mat(head, 1);
        gpsi = nn::Mat(head, 1);
    }

    void init(RngStream& rng) {
        const double s = 0.3;
        for (auto& m : Wq)
            for (double& v : m.a) v = rng.uniform(-s, s);
        for (auto& m : Wk)
            for (double& v : m.a) v = rng.uniform(-s, s);
        for (double& v : psi.a) v = 1.0 + rng.uniform(-0.25, 0.25);
    }

    bool finite() const {
        auto ok = [](const nn::Mat& m) {
            for (double v : m.a)
                if (!std::isfinite(v)) return false;
            return true;
        };
        for (const auto& m : Wq)
            if (!ok(m)) return false;
        for (const auto& m : Wk)
            if (!ok(m)) return false;
        return ok(psi);
    }

    std::vector<nn::ParamView> params(const std::string& prefix) {
        std::vector<nn::ParamView> out;
        for (int h = 0; h < head; ++h) {
            out.push_back({prefix + ".Wq" + std::to_string(h), &Wq[h].a, &gWq[h].a});
            out.push_back({prefix + ".Wk" + std::to_string(h), &Wk[h].a, &gWk[h].a});
        }
        out.push_back({prefix + ".psi", &psi.a, &gpsi.a});
        return out;
    }

    void zero_grad() {
        for (auto& m : gWq) std::fill(m.a.begin(), m.a.end(), 0.0);
        for (auto& m : gWk) std::fill(m.a.begin(), m.a.end(), 0.0);
        std::fill(gpsi.a.begin(), gpsi.a.end(), 0.0);
    }
};

// Everything the backward pass needs from one attention evaluation.
struct AttentionCache {
    // indexed [dir][head]
    std::array<std::vector<nn::Mat>, 4> q, k;  // 3 x dk projections
    std::array<std::vector<nn::Mat>, 4> headw; // 3 x 3 per-head softmaxed scores
    std::array<nn::Mat, 4> mixed;              // 3 x 3 pre-softmax mixed scores
    AttentionWeights omega;
    LaneMatrix up, down;
};

// Mean upstream queue minus mean downstream queue.
inline double efficient_pressure(std::span<const double> up_queues,
                                 std::span<const double> down_queues) {
    if (up_queues.empty() || down_queues.empty())
        throw EmptyLaneSet("efficient_pressure requires nonempty lane sets");
    double up = 0.0, down = 0.0;
    for (double v : up_queues) up += v;
    for (double v : down_queues) down += v;
    return up / static_cast<double>(up_queues.size()) - down / static_cast<double>(down_queues.size());
}

// Queue length of an upstream lane minus the attention-weighted queue
// lengths of its three downstream lanes.
inline double adaptive_pressure(double x_up, std::span<const double> x_down,
                                std::span<const double> weights_row, double tol = 1e-6) {
    double wsum = 0.0, acc = 0.0;
    for (std::size_t j = 0; j < weights_row.size(); ++j) {
        wsum += weights_row[j];
        acc += weights_row[j] * x_down[j];
    }
    if (std::fabs(wsum - 1.0) > tol)
        throw WeightRowNotStochastic("weight row sums to " + std::to_string(wsum));
    return x_up - acc;
}

// Multi-head scaled dot-product attention over the per-direction 3x3 lane
// feature matrices. Per head: softmax(q k^T / sqrt(dk)) rowwise; the heads
// are mixed by the per-head psi weights and re-normalized rowwise with a
// softmax so the result is stochastic again.
inline AttentionWeights attention_weights(const AttentionParams& params, const LaneMatrix& up,
                                          const LaneMatrix& down, AttentionCache* cache = nullptr) {
    if (!params.finite()) throw NonFiniteParams("attention parameters are not finite");
    AttentionWeights out;
    if (cache) {
        cache->up = up;
        cache->down = down;
    }
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(params.dk));

    for (Dir d : kDirs) {
        const int di = static_cast<int>(d);
        nn::Mat mixed(3, 3);
        if (cache) {
            cache->q[di].assign(params.head, nn::Mat());
            cache->k[di].assign(params.head, nn::Mat());
            cache->headw[di].assign(params.head, nn::Mat());
        }
        for (int h = 0; h < params.head; ++h) {
            nn::Mat q(3, params.dk), k(3, params.dk);
            for (int lane = 0; lane < 3; ++lane)
                for (int c = 0; c < params.dk; ++c) {
                    double aq = 0.0, ak = 0.0;
                    for (int f = 0; f < 3; ++f) {
                        aq += up.at(d, static_cast<LaneKind>(lane), f) * params.Wq[h].at(f, c);
                        ak += down.at(d, static_cast<LaneKind>(lane), f) * params.Wk[h].at(f, c);
                    }
                    q.at(lane, c) = aq;
                    k.at(lane, c) = ak;
                }
            nn::Mat w(3, 3);
            for (int r = 0; r < 3; ++r) {
                for (int cidx = 0; cidx < 3; ++cidx) {
                    double dot = 0.0;
                    for (int c = 0; c < params.dk; ++c) dot += q.at(r, c) * k.at(cidx, c);
                    w.at(r, cidx) = dot * inv_sqrt_dk;
                }
                nn::softmax_inplace(std::span<double>(&w.at(r, 0), 3));
            }
            const double alpha = params.psi.at(h, 0);
            for (int r = 0; r < 3; ++r)
                for (int cidx = 0; cidx < 3; ++cidx) mixed.at(r, cidx) += alpha * w.at(r, cidx);
            if (cache) {
                cache->q[di][h] = std::move(q);
                cache->k[di][h] = std::move(k);
                cache->headw[di][h] = std::move(w);
            }
        }
        if (cache) cache->mixed[di] = mixed;
        for (int r = 0; r < 3; ++r) {
            std::array<double, 3> row = {mixed.at(r, 0), mixed.at(r, 1), mixed.at(r, 2)};
            nn::softmax_inplace(row);
            for (int j = 0; j < 3; ++j) out.at(d, r, j) = row[j];
        }
    }
    if (cache) cache->omega = out;
    return out;
}

// Accumulates parameter gradients from dL/d(omega).
inline void attention_backward(AttentionParams& params, const AttentionCache& cache,
                               const std::array<double, 36>& domega) {
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(params.dk));
    for (Dir d : kDirs) {
        const int di = static_cast<int>(d);
        // through the final rowwise softmax
        nn::Mat dmixed(3, 3);
        for (int r = 0; r < 3; ++r) {
            std::array<double, 3> y{}, dy{}, dx{};
            for (int j = 0; j < 3; ++j) {
                y[j] = cache.omega.at(d, r, j);
                dy[j] = domega[static_cast<std::size_t>(di) * 9 + static_cast<std::size_t>(r) * 3 + j];
            }
            nn::softmax_backward(y, dy, dx);
            for (int j = 0; j < 3; ++j) dmixed.at(r, j) = dx[j];
        }
        // per head: through the psi mixing, the softmax, the scaled dot
        // product and the projections
        for (int h = 0; h < params.head; ++h) {
            const nn::Mat& q = cache.q[di][h];
            const nn::Mat& k = cache.k[di][h];
            const nn::Mat& w = cache.headw[di][h];
            const double alpha = params.psi.at(h, 0);
            nn::Mat dS(3, 3);
            for (int r = 0; r < 3; ++r) {
                std::array<double, 3> y{}, dy{}, dx{};
                for (int j = 0; j < 3; ++j) {
                    y[j] = w.at(r, j);
                    dy[j] = alpha * dmixed.at(r, j);
                    params.gpsi.at(h, 0) += w.at(r, j) * dmixed.at(r, j);
                }
                nn::softmax_backward(y, dy, dx);
                for (int j = 0; j < 3; ++j) dS.at(r, j) = dx[j] * inv_sqrt_dk;
            }
            nn::Mat dq(3, params.dk), dk_(3, params.dk);
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < params.dk; ++c) {
                    double aq = 0.0;
                    for (int j = 0; j < 3; ++j) aq += dS.at(r, j) * k.at(j, c);
                    dq.at(r, c) = aq;
                }
            for (int j = 0; j < 3; ++j)
                for (int c = 0; c < params.dk; ++c) {
                    double ak = 0.0;
                    for (int r = 0; r < 3; ++r) ak += dS.at(r, j) * q.at(r, c);
                    dk_.at(j, c) = ak;
                }
            for (int f = 0; f < 3; ++f)
                for (int c = 0; c < params.dk; ++c) {
                    double gq = 0.0, gk = 0.0;
                    for (int lane = 0; lane < 3; ++lane) {
                        gq += cache.up.at(d, static_cast<LaneKind>(lane), f) * dq.at(lane, c);
                        gk += cache.down.at(d, static_cast<LaneKind>(lane), f) * dk_.at(lane, c);
                    }
                    params.gWq[h].at(f, c) += gq;
                    params.gWk[h].at(f, c) += gk;
                }
        }
    }
}

// The 12 adaptive pressures of one intersection (row-major by direction then
// lane kind), computed from the upstream/downstream lane matrices.
struct ApResult {
    std::array<double, 12> ap{};
    AttentionCache cache;
};

inline ApResult ap_vector(const AttentionParams& params, const LaneMatrix& up,
                          const LaneMatrix& down) {
    ApResult res;
    attention_weights(params, up, down, &res.cache);
    for (Dir d : kDirs)
        for (LaneKind kk : kKinds) {
            const int idx = static_cast<int>(d) * 3 + static_cast<int>(kk);
            double weighted = 0.0;
            for (int j = 0; j < 3; ++j)
                weighted += res.cache.omega.at(d, static_cast<int>(kk), j) * down.at(d, static_cast<LaneKind>(j), 0);
            res.ap[idx] = up.at(d, kk, 0) - weighted;
        }
    return res;
}

// Accumulates attention-parameter gradients from dL/d(ap).
inline void ap_backward(AttentionParams& params, const ApResult& res,
                        const std::array<double, 12>& dap) {
    std::array<double, 36> domega{};
    for (Dir d : kDirs)
        for (int kk = 0; kk < 3; ++kk) {
            const int idx = static_cast<int>(d) * 3 + kk;
            for (int j = 0; j < 3; ++j)
                domega[static_cast<std::size_t>(d) * 9 + static_cast<std::size_t>(kk) * 3 + j] =
                    -dap[idx] * res.cache.down.at(d, static_cast<LaneKind>(j), 0);
        }
    attention_backward(params, res.cache, domega);
}

} // namespace bctap
