#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "bctap/errors.hpp"
#include "bctap/rng.hpp"

namespace bctap::nn {

struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
};

// Named handle onto one parameter tensor and its gradient accumulator.
struct ParamView {
    std::string name;
    std::vector<double>* value = nullptr;
    std::vector<double>* grad = nullptr;
};

inline void softmax_inplace(std::span<double> x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : x) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : x) v /= sum;
}

// dx from dy given y = softmax(x)
inline void softmax_backward(std::span<const double> y, std::span<const double> dy,
                             std::span<double> dx) {
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += y[i] * dy[i];
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] * (dy[i] - dot);
}

struct Linear {
    Mat W;  // in x out
    std::vector<double> b;
    Mat gW;
    std::vector<double> gb;

    Linear() = default;
    Linear(int in, int out) : W(in, out), b(out, 0.0), gW(in, out), gb(out, 0.0) {}

    int in() const { return W.rows; }
    int out() const { return W.cols; }

    void init(RngStream& rng) {
        const double s = std::sqrt(6.0 / (W.rows + W.cols));
        for (double& w : W.a) w = rng.uniform(-s, s);
        for (double& bi : b) bi = 0.0;
    }

    std::vector<double> forward(std::span<const double> x) const {
        std::vector<double> y(b);
        for (int i = 0; i < W.rows; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            for (int j = 0; j < W.cols; ++j) y[j] += xi * W.at(i, j);
        }
        return y;
    }

    // accumulates gW, gb from the cached input; returns dL/dx
    std::vector<double> backward(std::span<const double> x, std::span<const double> dy) {
        std::vector<double> dx(W.rows, 0.0);
        for (int j = 0; j < W.cols; ++j) gb[j] += dy[j];
        for (int i = 0; i < W.rows; ++i) {
            double acc = 0.0;
            for (int j = 0; j < W.cols; ++j) {
                gW.at(i, j) += x[i] * dy[j];
                acc += W.at(i, j) * dy[j];
            }
            dx[i] = acc;
        }
        return dx;
    }
};

// Fully connected net with ReLU between layers and a linear output layer.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(const std::vector<int>& dims) {
        for (std::size_t i = 0; i + 1 < dims.size(); ++i)
            layers_.emplace_back(dims[i], dims[i + 1]);
    }

    void init(RngStream& rng) {
        for (auto& l : layers_) l.init(rng);
    }

    int in_dim() const { return layers_.front().in(); }
    int out_dim() const { return layers_.back().out(); }

    struct Cache {
        std::vector<std::vector<double>> acts; // acts[0] = input, post-ReLU activations
    };

    std::vector<double> forward(std::span<const double> x, Cache* cache = nullptr) const {
        std::vector<double> cur(x.begin(), x.end());
        if (cache) {
            cache->acts.clear();
            cache->acts.push_back(cur);
        }
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            cur = layers_[li].forward(cur);
            if (li + 1 < layers_.size())
                for (double& v : cur) v = v > 0.0 ? v : 0.0;
            if (cache) cache->acts.push_back(cur);
        }
        return cur;
    }

    // dy is dL/d(output); accumulates parameter grads, returns dL/d(input)
    std::vector<double> backward(const Cache& cache, std::vector<double> dy) {
        for (std::size_t li = layers_.size(); li-- > 0;) {
            if (li + 1 < layers_.size()) {
                const auto& post = cache.acts[li + 1];
                for (std::size_t j = 0; j < dy.size(); ++j)
                    if (post[j] <= 0.0) dy[j] = 0.0;
            }
            dy = layers_[li].backward(cache.acts[li], dy);
        }
        return dy;
    }

    std::vector<ParamView> params(const std::string& prefix) {
        std::vector<ParamView> out;
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            out.push_back({prefix + ".W" + std::to_string(li), &layers_[li].W.a, &layers_[li].gW.a});
            out.push_back({prefix + ".b" + std::to_string(li), &layers_[li].b, &layers_[li].gb});
        }
        return out;
    }

    void zero_grad() {
        for (auto& l : layers_) {
            std::fill(l.gW.a.begin(), l.gW.a.end(), 0.0);
            std::fill(l.gb.begin(), l.gb.end(), 0.0);
        }
    }

private:
    std::vector<Linear> layers_;
};

inline double grad_norm(std::span<const ParamView> params) {
    double acc = 0.0;
    for (const auto& p : params)
        for (double g : *p.grad) acc += g * g;
    return std::sqrt(acc);
}

// One SGD step with global gradient-norm clipping; grads are zeroed after.
inline void sgd_step(std::span<ParamView> params, double lr, double clip_norm) {
    const double norm = grad_norm(params);
    if (!std::isfinite(norm)) throw NonFiniteGradient("gradient norm is not finite");
    const double scale = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;
    for (auto& p : params) {
        auto& v = *p.value;
        auto& g = *p.grad;
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] -= lr * scale * g[i];
            g[i] = 0.0;
        }
    }
}

// target <- tau * online + (1 - tau) * target, elementwise
inline void soft_update(std::span<ParamView> target, std::span<const ParamView> online, double tau) {
    if (target.size() != online.size()) throw ShapeMismatch("parameter list sizes differ");
    for (std::size_t i = 0; i < target.size(); ++i) {
        auto& t = *target[i].value;
        const auto& o = *online[i].value;
        if (t.size() != o.size()) throw ShapeMismatch("tensor shape mismatch at " + target[i].name);
        for (std::size_t j = 0; j < t.size(); ++j) t[j] = tau * o[j] + (1.0 - tau) * t[j];
    }
}

} // namespace bctap::nn
