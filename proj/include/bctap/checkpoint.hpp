#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bctap/config.hpp"
#include "bctap/dqn.hpp"
#include "bctap/errors.hpp"

// Checkpoint file: a text dump of every parameter tensor (hexfloat, so the
// round trip is bit-exact), the per-intersection reward and Q-value
// histories, the episode counter and the full canonical config the run was
// started with. Replay transitions are not persisted; training resumed from
// a checkpoint refills the buffer as it runs.

namespace bctap {

struct CheckpointState {
    ExperimentConfig config;
    int episodes_completed = 0;
};

namespace detail {

inline void write_tensor(std::ostream& out, const std::string& name,
                         const std::vector<double>& v) {
    out << "tensor " << name << " " << v.size() << "\n";
    char buf[40];
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%a", v[i]);
        out << buf << (i + 1 == v.size() ? "" : " ");
    }
    out << "\n";
}

inline std::vector<double> read_values(std::istream& in, std::size_t n) {
    std::vector<double> v(n);
    std::string tok;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(in >> tok)) throw CheckpointMismatch("truncated tensor data");
        v[i] = std::strtod(tok.c_str(), nullptr);
    }
    return v;
}

} // namespace detail

inline void save_checkpoint(const std::string& path, const ExperimentConfig& cfg,
                            int episodes_completed, QNet& online, QNet& target,
                            PredictionNet& pnet, const ReplayBuffer& buffer) {
    std::ofstream out(path);
    if (!out) throw CheckpointMismatch("cannot write checkpoint: " + path);
    out << "bctap-checkpoint v1\n";
    char hb[32];
    std::snprintf(hb, sizeof hb, "%016llx", static_cast<unsigned long long>(cfg.hash()));
    out << "config_hash " << hb << "\n";
    out << "episodes_completed " << episodes_completed << "\n";
    out << "config_begin\n" << cfg.canonical() << "config_end\n";

    for (auto& p : online.params("online")) detail::write_tensor(out, p.name, *p.value);
    for (auto& p : target.params("target")) detail::write_tensor(out, p.name, *p.value);
    for (auto& p : pnet.params("pnet")) detail::write_tensor(out, p.name, *p.value);

    const int n = buffer.num_intersections();
    out << "histories " << n << "\n";
    for (int i = 0; i < n; ++i) {
        detail::write_tensor(out, "hist_r_" + std::to_string(i), buffer.reward_history(i));
        for (int j = 0; j < kNumPhases; ++j)
            detail::write_tensor(out, "hist_q_" + std::to_string(i) + "_" + std::to_string(j),
                                 buffer.q_history(i, j));
    }
    out << "boundaries " << buffer.episode_boundaries().size() << "\n";
    for (std::size_t b : buffer.episode_boundaries()) out << b << " ";
    out << "\nend\n";
}

// Reads the header and embedded config only, so the caller can rebuild the
// dependent objects before loading tensors.
inline CheckpointState read_checkpoint_header(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointMismatch("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "bctap-checkpoint v1")
        throw CheckpointMismatch("not a checkpoint file: " + path);
    CheckpointState st;
    std::string stored_hash;
    while (std::getline(in, line)) {
        if (line.rfind("config_hash ", 0) == 0) stored_hash = line.substr(12);
        else if (line.rfind("episodes_completed ", 0) == 0)
            st.episodes_completed = std::stoi(line.substr(19));
        else if (line == "config_begin") {
            std::string text;
            while (std::getline(in, line) && line != "config_end") text += line + "\n";
            st.config = parse_config_text(text);
            char hb[32];
            std::snprintf(hb, sizeof hb, "%016llx",
                          static_cast<unsigned long long>(st.config.hash()));
            if (stored_hash != hb)
                throw CheckpointMismatch("config hash mismatch in " + path);
            return st;
        }
    }
    throw CheckpointMismatch("checkpoint missing embedded config: " + path);
}

inline void load_checkpoint(const std::string& path, const ExperimentConfig& cfg, QNet& online,
                            QNet& target, PredictionNet& pnet, ReplayBuffer& buffer) {
    std::ifstream in(path);
    if (!in) throw CheckpointMismatch("cannot open checkpoint: " + path);
    std::string tok;
    // skip through the embedded config
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line) && line != "config_end") {
    }

    auto load_params = [&](std::vector<nn::ParamView> views) {
        for (auto& p : views) {
            std::string kw, name;
            std::size_t n = 0;
            if (!(in >> kw >> name >> n) || kw != "tensor" || name != p.name)
                throw CheckpointMismatch("unexpected tensor record, wanted " + p.name);
            if (n != p.value->size())
                throw CheckpointMismatch("tensor size mismatch for " + p.name + ": file has " +
                                         std::to_string(n) + ", model has " +
                                         std::to_string(p.value->size()));
            *p.value = detail::read_values(in, n);
        }
    };
    load_params(online.params("online"));
    load_params(target.params("target"));
    load_params(pnet.params("pnet"));

    std::size_t n_inter = 0;
    if (!(in >> tok >> n_inter) || tok != "histories")
        throw CheckpointMismatch("missing histories section");
    if (static_cast<int>(n_inter) != buffer.num_intersections())
        throw CheckpointMismatch("checkpoint was written for a different intersection count");
    for (std::size_t i = 0; i < n_inter; ++i) {
        std::string kw, name;
        std::size_t n = 0;
        if (!(in >> kw >> name >> n) || kw != "tensor")
            throw CheckpointMismatch("missing reward history for intersection " + std::to_string(i));
        buffer.mutable_reward_history(static_cast<int>(i)) = detail::read_values(in, n);
        for (int j = 0; j < kNumPhases; ++j) {
            if (!(in >> kw >> name >> n) || kw != "tensor")
                throw CheckpointMismatch("missing Q history");
            buffer.mutable_q_history(static_cast<int>(i), j) = detail::read_values(in, n);
        }
    }
    std::size_t nb = 0;
    if (!(in >> tok >> nb) || tok != "boundaries")
        throw CheckpointMismatch("missing boundaries section");
    auto& bounds = buffer.mutable_episode_boundaries();
    bounds.resize(nb);
    for (auto& b : bounds)
        if (!(in >> b)) throw CheckpointMismatch("truncated boundaries");
    (void)cfg;
}

} // namespace bctap
