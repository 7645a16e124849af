#include <catch2/catch_amalgamated.hpp>

#include "bctap/dqn.hpp"

using namespace bctap;

namespace {

RawObservation random_obs(RngStream& rng) {
    RawObservation o;
    for (Dir d : kDirs)
        for (LaneKind k : kKinds) {
            const double w = std::floor(rng.uniform(0, 9));
            const double r = std::floor(rng.uniform(0, 9));
            o.up.at(d, k, 0) = w;
            o.up.at(d, k, 1) = r;
            o.up.at(d, k, 2) = w + r;
            const double w2 = std::floor(rng.uniform(0, 9));
            const double r2 = std::floor(rng.uniform(0, 9));
            o.down.at(d, k, 0) = w2;
            o.down.at(d, k, 1) = r2;
            o.down.at(d, k, 2) = w2 + r2;
            o.run_up[static_cast<int>(d) * 3 + static_cast<int>(k)] = r;
        }
    o.phase = 1 + static_cast<int>(rng.uniform_index(8));
    for (auto& v : o.neighbor_queue) v = std::floor(rng.uniform(0, 30));
    return o;
}

} // namespace

TEST_CASE("q_values basics") {
    RngStream rng(1);
    const RawObservation obs = random_obs(rng);

    SECTION("zero weights give the output bias") {
        QNet net; // zero-initialized weights and biases
        const auto q = net.q_values(obs);
        for (double v : q) CHECK(v == 0.0);
    }
    SECTION("identical observations share parameters") {
        QNet net;
        net.init(rng);
        const auto q1 = net.q_values(obs);
        const auto q2 = net.q_values(obs);
        CHECK(q1 == q2);
    }
    SECTION("forward pass matches a hand-rolled 2-layer oracle") {
        QNetConfig cfg;
        cfg.use_ap = false; // encoder is then a fixed linear scaling
        cfg.hidden = {5};
        QNet net(cfg);
        net.init(rng);
        auto views = net.params();

        const std::vector<double> in = net.encode(obs);
        // oracle: x W0 + b0, relu, W1 + b1 using the raw parameter buffers
        const auto& W0 = *views[0].value;
        const auto& b0 = *views[1].value;
        const auto& W1 = *views[2].value;
        const auto& b1 = *views[3].value;
        std::vector<double> h(5, 0.0);
        for (int j = 0; j < 5; ++j) {
            double acc = b0[j];
            for (int i = 0; i < kObsDim; ++i) acc += in[i] * W0[static_cast<std::size_t>(i) * 5 + j];
            h[j] = std::max(acc, 0.0);
        }
        const auto q = net.q_values(obs);
        for (int j = 0; j < kNumPhases; ++j) {
            double acc = b1[j];
            for (int i = 0; i < 5; ++i) acc += h[i] * W1[static_cast<std::size_t>(i) * 8 + j];
            CHECK(q[j] == Catch::Approx(acc).margin(1e-12));
        }
    }
}

TEST_CASE("select_action") {
    RngStream rng(2);
    std::array<double, 8> q{};

    SECTION("greedy argmax") {
        q = {1, 1, 9, 1, 1, 1, 1, 1};
        const auto a = select_action(q, 0.0, 1, rng);
        CHECK(a.phase == 3);
        CHECK(a.switched);
    }
    SECTION("tie-break to the lowest index") {
        q = {0, 0, 7, 0, 7, 0, 0, 0};
        CHECK(select_action(q, 0.0, 3, rng).phase == 3);
        CHECK_FALSE(select_action(q, 0.0, 3, rng).switched);
    }
    SECTION("epsilon=1 is empirically uniform (chi-square)") {
        std::array<int, 8> counts{};
        const int n = 10000;
        for (int i = 0; i < n; ++i) ++counts[select_action(q, 1.0, 1, rng).phase - 1];
        double chi2 = 0.0;
        const double expect = n / 8.0;
        for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
        CHECK(chi2 < 24.32); // 99.9% quantile of chi-square with 7 dof
    }
    SECTION("argmax invariant to adding a constant") {
        q = {0.3, -2, 5, 1, 4.9, 0, 0, 0};
        const int base = select_action(q, 0.0, 1, rng).phase;
        for (double& v : q) v += 123.45;
        CHECK(select_action(q, 0.0, 1, rng).phase == base);
    }
}

TEST_CASE("reward shaping") {
    TrainConfig cfg;
    CHECK(reward(0, 0, false, cfg) == 0.0);
    CHECK(reward(8, 0, true, cfg) == Catch::Approx(-2.5)); // -0.25*8 - 0.5
    CHECK(reward(5, 3, false, cfg) > reward(5, 3, true, cfg));
    CHECK(reward(4, 10, false, cfg) == Catch::Approx(-0.25 * 4 + 0.1 * 10));
}

TEST_CASE("soft update") {
    QNetConfig cfg;
    cfg.hidden = {4};
    QNet a(cfg), b(cfg);
    RngStream rng(3);
    a.init(rng);
    b.init(rng);

    SECTION("tau=1 copies, tau=0 keeps") {
        QNet t1 = b;
        soft_update(t1, a, 1.0);
        const RawObservation obs = random_obs(rng);
        CHECK(t1.q_values(obs) == a.q_values(obs));
        QNet t0 = b;
        soft_update(t0, a, 0.0);
        CHECK(t0.q_values(obs) == b.q_values(obs));
    }
    SECTION("scalar convex combination") {
        QNet t = b;
        auto tv = t.params();
        auto av = a.params();
        (*tv[0].value)[0] = 0.0;
        (*av[0].value)[0] = 2.0;
        soft_update(t, a, 0.5);
        CHECK((*t.params()[0].value)[0] == Catch::Approx(1.0));
    }
    SECTION("shape mismatch throws") {
        QNetConfig other;
        other.hidden = {6};
        QNet c(other);
        CHECK_THROWS_AS(soft_update(c, a, 0.5), ShapeMismatch);
    }
}

TEST_CASE("epsilon schedule") {
    TrainConfig cfg;
    CHECK(epsilon_for_episode(1, cfg) == Catch::Approx(1.0));
    CHECK(epsilon_for_episode(2, cfg) == Catch::Approx(std::pow(2.0, -0.45)));
    CHECK(epsilon_for_episode(1000, cfg) == Catch::Approx(0.2)); // floor
    for (int e = 1; e < 50; ++e) CHECK(epsilon_for_episode(e, cfg) >= 0.2);
}

TEST_CASE("td_update") {
    RngStream rng(4);
    TrainConfig cfg;
    cfg.qnet.hidden = {16, 16};
    cfg.batch_size = 8;

    SECTION("fixed point: gamma=0 and reward equal to Q leaves the net unchanged") {
        cfg.gamma = 0.0;
        QNet online(cfg.qnet), target(cfg.qnet);
        online.init(rng);
        target = online;
        ReplayBuffer buffer(64, 1);
        const RawObservation obs = random_obs(rng);
        const auto q = online.q_values(obs);
        Transition t{obs, 2, q[2], random_obs(rng)};
        buffer.push(t);
        const auto before = online.q_values(obs);
        const double loss = td_update(online, target, buffer, cfg, rng);
        CHECK(loss == Catch::Approx(0.0).margin(1e-18));
        CHECK(online.q_values(obs) == before);
    }
    SECTION("analytic gradient matches finite differences") {
        QNetConfig small;
        small.hidden = {6};
        small.head = 2;
        small.dk = 3;
        QNet online(small), target(small);
        online.init(rng);
        target.init(rng);
        ReplayBuffer buffer(8, 1);
        Transition t{random_obs(rng), 5, 1.25, random_obs(rng)};
        buffer.push(t);

        auto loss_of = [&]() {
            const auto q = online.q_values(t.s);
            const auto q2 = target.q_values(t.s2);
            const double y = t.reward + 0.8 * std::ranges::max(q2);
            return (q[5] - y) * (q[5] - y);
        };
        // analytic gradient of the single-transition loss
        online.zero_grad();
        QNet::Cache cache;
        const auto q = online.q_values(t.s, &cache);
        const auto q2 = target.q_values(t.s2);
        const double y = t.reward + 0.8 * std::ranges::max(q2);
        std::array<double, 8> dq{};
        dq[5] = 2.0 * (q[5] - y);
        online.backward(cache, dq);

        const double h = 1e-6;
        double diff2 = 0.0, num2 = 0.0;
        for (auto& view : online.params()) {
            for (std::size_t i = 0; i < view.value->size(); ++i) {
                const double keep = (*view.value)[i];
                (*view.value)[i] = keep + h;
                const double fp = loss_of();
                (*view.value)[i] = keep - h;
                const double fm = loss_of();
                (*view.value)[i] = keep;
                const double numeric = (fp - fm) / (2.0 * h);
                const double analytic = (*view.grad)[i];
                diff2 += (numeric - analytic) * (numeric - analytic);
                num2 += numeric * numeric;
            }
        }
        CHECK(std::sqrt(diff2) <= 1e-4 * std::max(1e-8, std::sqrt(num2)));
    }
    SECTION("bandit: repeated updates converge Q to the expected rewards") {
        TrainConfig bandit;
        bandit.qnet.hidden = {16};
        bandit.qnet.use_ap = false;
        bandit.gamma = 1e-9; // effectively a contextual bandit
        bandit.lr = 0.05;
        bandit.batch_size = 16;
        QNet online(bandit.qnet), target(bandit.qnet);
        online.init(rng);
        target = online;
        ReplayBuffer buffer(128, 1);
        RawObservation s = random_obs(rng);
        RawObservation s2 = s;
        buffer.push({s, 0, 1.5, s2});
        buffer.push({s, 1, -0.5, s2});
        for (int it = 0; it < 4000; ++it) td_update(online, target, buffer, bandit, rng);
        const auto q = online.q_values(s);
        // targets include the tiny bootstrap term gamma * max Q ~ O(1e-9)
        CHECK(q[0] == Catch::Approx(1.5).margin(1e-2));
        CHECK(q[1] == Catch::Approx(-0.5).margin(1e-2));
    }
}

TEST_CASE("prediction net") {
    RngStream rng(6);

    SECTION("zero weights give the bias") {
        PredictionNet p;
        const RawObservation obs = random_obs(rng);
        CHECK(p.predict(obs, {}) == 0.0);
    }
    SECTION("regresses to a constant reward") {
        PredictionNet p;
        p.init(rng);
        const RawObservation obs = random_obs(rng);
        std::array<double, 8> q{0.4, -0.2, 0.9, 0, 0, 0.1, -1, 2};
        for (int it = 0; it < 3000; ++it) p.train_step(obs, q, 3.25, 0.01, 10.0);
        CHECK(p.predict(obs, q) == Catch::Approx(3.25).margin(1e-2));
    }
    SECTION("training loss trends down on a fixed dataset") {
        PredictionNet p;
        p.init(rng);
        std::vector<std::pair<RawObservation, double>> data;
        for (int i = 0; i < 16; ++i) {
            RawObservation o = random_obs(rng);
            data.push_back({o, -0.25 * o.up.at(Dir::E, LaneKind::Str, 0)});
        }
        std::array<double, 8> q{};
        double first_epoch = 0.0, last_epoch = 0.0;
        for (int epoch = 0; epoch < 60; ++epoch) {
            double loss = 0.0;
            for (auto& [o, r] : data) loss += p.train_step(o, q, r, 0.005, 10.0);
            if (epoch == 0) first_epoch = loss;
            last_epoch = loss;
        }
        CHECK(last_epoch < first_epoch);
    }
    SECTION("prediction-net gradient matches finite differences") {
        PredictionNet p;
        p.init(rng);
        const RawObservation obs = random_obs(rng);
        std::array<double, 8> qc{1, 2, 3, 4, -1, -2, -3, 0.5};
        const double target = 0.7;
        auto loss_of = [&]() {
            const double y = p.predict(obs, qc);
            return (y - target) * (y - target);
        };
        // recover the analytic gradient from the parameter delta of one SGD
        // step at a tiny learning rate (delta = -lr * grad, clip inactive)
        const double h = 1e-6;
        const double lr = 1e-8;
        PredictionNet stepped = p;
        stepped.train_step(obs, qc, target, lr, 1e18);
        auto pv = p.params();
        auto sv = stepped.params();
        double diff2 = 0.0, num2 = 0.0;
        for (std::size_t vi = 0; vi < pv.size(); ++vi) {
            for (std::size_t i = 0; i < pv[vi].value->size(); ++i) {
                const double analytic = ((*pv[vi].value)[i] - (*sv[vi].value)[i]) / lr;
                const double keep = (*pv[vi].value)[i];
                (*pv[vi].value)[i] = keep + h;
                const double fp = loss_of();
                (*pv[vi].value)[i] = keep - h;
                const double fm = loss_of();
                (*pv[vi].value)[i] = keep;
                const double numeric = (fp - fm) / (2.0 * h);
                diff2 += (numeric - analytic) * (numeric - analytic);
                num2 += numeric * numeric;
            }
        }
        CHECK(std::sqrt(diff2) <= 1e-3 * std::max(1e-8, std::sqrt(num2)));
    }
}

TEST_CASE("replay buffer is strictly FIFO and histories stay ordered") {
    ReplayBuffer buf(4, 2);
    RngStream rng(7);
    for (int i = 0; i < 6; ++i) {
        Transition t;
        t.reward = i;
        buf.push(t);
    }
    CHECK(buf.size() == 4);
    // oldest two (0,1) evicted: remaining rewards are 2..5 in some slot order
    std::array<int, 6> seen{};
    for (int i = 0; i < 200; ++i) ++seen[static_cast<int>(buf.sample(rng).reward)];
    CHECK(seen[0] == 0);
    CHECK(seen[1] == 0);
    CHECK(seen[2] + seen[3] + seen[4] + seen[5] == 200);

    buf.push_reward(0, 1.0);
    buf.push_reward(0, 2.0);
    buf.push_q_values(1, {1, 2, 3, 4, 5, 6, 7, 8});
    buf.push_q_values(1, {2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(buf.reward_history(0) == std::vector<double>{1.0, 2.0});
    CHECK(buf.q_history(1, 0) == std::vector<double>{1.0, 2.0});
    CHECK(buf.q_history(1, 7) == std::vector<double>{8.0, 9.0});
}
