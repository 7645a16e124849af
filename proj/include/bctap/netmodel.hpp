#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "bctap/errors.hpp"

namespace bctap {

// Meters of lane that one stored vehicle occupies (vehicle length + min gap);
// lane capacity = floor(length / gap).
inline constexpr double kDefaultVehicleGap = 7.5;

// Directions are compass headings of travel: an "E" lane carries vehicles
// driving eastward. Layer order matches the E,W,S,N convention used
// throughout the observation matrices.
enum class Dir : int { E = 0, W = 1, S = 2, N = 3 };
enum class LaneKind : int { Lef = 0, Str = 1, Rig = 2 };

inline constexpr std::array<Dir, 4> kDirs = {Dir::E, Dir::W, Dir::S, Dir::N};
inline constexpr std::array<LaneKind, 3> kKinds = {LaneKind::Lef, LaneKind::Str, LaneKind::Rig};

inline const char* to_string(Dir d) {
    switch (d) {
        case Dir::E: return "E";
        case Dir::W: return "W";
        case Dir::S: return "S";
        default: return "N";
    }
}

inline const char* to_string(LaneKind k) {
    switch (k) {
        case LaneKind::Lef: return "lef";
        case LaneKind::Str: return "str";
        default: return "rig";
    }
}

// Compass heading after performing the given turn from a heading.
inline Dir turn_target(Dir heading, LaneKind kind) {
    static constexpr Dir left[4] = {Dir::N, Dir::S, Dir::E, Dir::W};   // from E,W,S,N
    static constexpr Dir right[4] = {Dir::S, Dir::N, Dir::W, Dir::E};
    if (kind == LaneKind::Str) return heading;
    return kind == LaneKind::Lef ? left[static_cast<int>(heading)] : right[static_cast<int>(heading)];
}

// Turn implied by going from one heading to another; U-turns are not modeled.
inline std::optional<LaneKind> turn_kind(Dir from, Dir to) {
    if (from == to) return LaneKind::Str;
    for (LaneKind k : {LaneKind::Lef, LaneKind::Rig})
        if (turn_target(from, k) == to) return k;
    return std::nullopt;
}

struct Lane {
    std::string id;
    Dir dir = Dir::E;
    LaneKind kind = LaneKind::Str;
    double length = 0.0;
    int capacity = 0;
    int road = -1; // owning road index

    bool operator==(const Lane&) const = default;
};

struct Road {
    std::string id;
    std::string from_node;
    std::string to_node;
    Dir dir = Dir::E;
    double length = 0.0;
    std::array<int, 3> lanes = {-1, -1, -1}; // by LaneKind
    int start_intersection = -1;             // controlled intersection index or -1
    int end_intersection = -1;
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;   // endpoint geometry

    bool operator==(const Road&) const = default;
};

struct Movement {
    int from_lane = -1;
    int to_lane = -1;

    bool operator==(const Movement&) const = default;
};

struct Phase {
    int index = 0; // 1..8
    std::vector<Movement> movements;

    bool operator==(const Phase&) const = default;
};

inline constexpr int kNumPhases = 8;

// Upstream (dir, kind) pairs given green per phase, besides right turns which
// are permitted in every phase:
//   1 W-str+E-str   2 N-str+S-str   3 W-lef+E-lef   4 N-lef+S-lef
//   5 W-str+W-lef   6 E-str+E-lef   7 N-str+N-lef   8 S-str+S-lef
inline bool phase_allows(int phase, Dir dir, LaneKind kind) {
    if (kind == LaneKind::Rig) return true;
    static constexpr std::pair<Dir, LaneKind> table[8][2] = {
        {{Dir::W, LaneKind::Str}, {Dir::E, LaneKind::Str}},
        {{Dir::N, LaneKind::Str}, {Dir::S, LaneKind::Str}},
        {{Dir::W, LaneKind::Lef}, {Dir::E, LaneKind::Lef}},
        {{Dir::N, LaneKind::Lef}, {Dir::S, LaneKind::Lef}},
        {{Dir::W, LaneKind::Str}, {Dir::W, LaneKind::Lef}},
        {{Dir::E, LaneKind::Str}, {Dir::E, LaneKind::Lef}},
        {{Dir::N, LaneKind::Str}, {Dir::N, LaneKind::Lef}},
        {{Dir::S, LaneKind::Str}, {Dir::S, LaneKind::Lef}},
    };
    const auto& row = table[phase - 1];
    return (row[0].first == dir && row[0].second == kind) ||
           (row[1].first == dir && row[1].second == kind);
}

struct Intersection {
    std::string id;
    double x = 0, y = 0;
    std::array<int, 12> upstream = {};   // lane index at [dir*3 + kind]
    std::array<int, 12> downstream = {};
    std::array<int, 4> in_roads = {-1, -1, -1, -1};  // by travel Dir
    std::array<int, 4> out_roads = {-1, -1, -1, -1};
    std::array<int, 4> neighbors = {-1, -1, -1, -1}; // controlled neighbor by Dir
    std::vector<Phase> phases;

    int up_lane(Dir d, LaneKind k) const { return upstream[static_cast<int>(d) * 3 + static_cast<int>(k)]; }
    int down_lane(Dir d, LaneKind k) const { return downstream[static_cast<int>(d) * 3 + static_cast<int>(k)]; }

    bool operator==(const Intersection&) const = default;
};

struct FlowRule {
    std::vector<int> route;   // road indices forming a connected path
    double start_time = 0;
    double interval = 1;
    double end_time = 0;

    bool operator==(const FlowRule&) const = default;
};

struct FlowSpec {
    std::vector<FlowRule> rules;

    bool operator==(const FlowSpec&) const = default;
};

struct Network {
    std::vector<Intersection> intersections;
    std::vector<Road> roads;
    std::vector<Lane> lanes;
    int grid_rows = 0, grid_cols = 0;
    double vehicle_gap = kDefaultVehicleGap;

    std::unordered_map<std::string, int> road_by_id;
    std::unordered_map<std::string, int> intersection_by_id;
    std::unordered_set<std::string> known_nodes; // all node ids incl. boundary

    int road_index(const std::string& id) const {
        auto it = road_by_id.find(id);
        return it == road_by_id.end() ? -1 : it->second;
    }

    bool operator==(const Network& o) const {
        return intersections == o.intersections && roads == o.roads && lanes == o.lanes &&
               grid_rows == o.grid_rows && grid_cols == o.grid_cols &&
               vehicle_gap == o.vehicle_gap;
    }
};

namespace detail {

inline int lane_capacity(double length, double vehicle_gap) {
    const int cap = static_cast<int>(std::floor(length / vehicle_gap));
    return cap < 1 ? 1 : cap;
}

// Build the derived structure shared by build_grid and the file loader:
// lane assignment already done on roads; wires intersections' lane arrays,
// movements and the 8 phases. Throws TopologyError if an approach is absent.
inline void wire_intersection(Network& net, int ii) {
    Intersection& is = net.intersections[ii];
    for (Dir d : kDirs) {
        const int di = static_cast<int>(d);
        if (is.in_roads[di] < 0 || is.out_roads[di] < 0)
            throw TopologyError("intersection " + is.id + " lacks a " + to_string(d) + " approach");
        const Road& in = net.roads[is.in_roads[di]];
        const Road& out = net.roads[is.out_roads[di]];
        for (LaneKind k : kKinds) {
            is.upstream[di * 3 + static_cast<int>(k)] = in.lanes[static_cast<int>(k)];
            is.downstream[di * 3 + static_cast<int>(k)] = out.lanes[static_cast<int>(k)];
        }
    }
    is.phases.assign(kNumPhases, Phase{});
    for (int p = 1; p <= kNumPhases; ++p) {
        Phase& ph = is.phases[p - 1];
        ph.index = p;
        for (Dir d : kDirs) {
            for (LaneKind k : kKinds) {
                if (!phase_allows(p, d, k)) continue;
                const int from = is.up_lane(d, k);
                const Road& target = net.roads[is.out_roads[static_cast<int>(turn_target(d, k))]];
                for (int tl : target.lanes) ph.movements.push_back({from, tl});
            }
        }
    }
}

} // namespace detail

// Structural validation of every netmodel invariant; throws TopologyError.
inline void validate_network(const Network& net) {
    for (const Road& r : net.roads) {
        if (!net.known_nodes.contains(r.from_node) || !net.known_nodes.contains(r.to_node))
            throw TopologyError("road " + r.id + " references an unknown node");
        for (int li : r.lanes) {
            if (li < 0 || li >= static_cast<int>(net.lanes.size()))
                throw TopologyError("road " + r.id + " has a dangling lane reference");
            if (net.lanes[li].length <= 0 || net.lanes[li].capacity < 1)
                throw TopologyError("lane " + net.lanes[li].id + " has invalid geometry");
        }
    }
    for (const Intersection& is : net.intersections) {
        std::unordered_set<int> up(is.upstream.begin(), is.upstream.end());
        std::unordered_set<int> down(is.downstream.begin(), is.downstream.end());
        if (up.size() != 12 || down.size() != 12 || up.contains(-1) || down.contains(-1))
            throw TopologyError("intersection " + is.id + " does not have 12+12 distinct lanes");
        if (is.phases.size() != kNumPhases)
            throw TopologyError("intersection " + is.id + " does not have 8 phases");
        for (const Phase& ph : is.phases) {
            for (const Movement& m : ph.movements) {
                if (!up.contains(m.from_lane) || !down.contains(m.to_lane))
                    throw TopologyError("phase movement references a foreign lane at " + is.id);
                const Lane& from = net.lanes[m.from_lane];
                const Lane& to = net.lanes[m.to_lane];
                if (turn_target(from.dir, from.kind) != to.dir)
                    throw TopologyError("movement geometry inconsistent at " + is.id);
            }
        }
    }
    if (net.grid_rows < 1 || net.grid_cols < 1)
        throw TopologyError("grid dimensions must be positive");
}

// Uniform rows x cols grid with CityFlow-style deterministic ids. Boundary
// nodes are virtual: vehicles enter from and exit to them uncontrolled.
inline Network build_grid(int rows, int cols, double lane_length,
                          double vehicle_gap = kDefaultVehicleGap) {
    if (rows < 1 || cols < 1) throw ArgumentError("grid dims must be >= 1");
    if (lane_length <= 0) throw ArgumentError("lane_length must be positive");
    if (vehicle_gap <= 0) throw ArgumentError("vehicle_gap must be positive");

    Network net;
    net.grid_rows = rows;
    net.grid_cols = cols;
    net.vehicle_gap = vehicle_gap;

    auto node_id = [](int c, int r) {
        return "intersection_" + std::to_string(c) + "_" + std::to_string(r);
    };
    // CityFlow direction index: 0 = +x (E), 1 = +y (N), 2 = -x (W), 3 = -y (S)
    static constexpr int dx[4] = {1, 0, -1, 0};
    static constexpr int dy[4] = {0, 1, 0, -1};
    static constexpr Dir dir_of[4] = {Dir::E, Dir::N, Dir::W, Dir::S};

    auto is_real = [&](int c, int r) { return c >= 1 && c <= cols && r >= 1 && r <= rows; };

    for (int r = 0; r <= rows + 1; ++r)
        for (int c = 0; c <= cols + 1; ++c)
            if (is_real(c, r) || ((c == 0 || c == cols + 1) != (r == 0 || r == rows + 1)))
                net.known_nodes.insert(node_id(c, r));

    auto add_road = [&](int c, int r, int d) {
        Road road;
        road.id = "road_" + std::to_string(c) + "_" + std::to_string(r) + "_" + std::to_string(d);
        road.from_node = node_id(c, r);
        road.to_node = node_id(c + dx[d], r + dy[d]);
        road.dir = dir_of[d];
        road.length = lane_length;
        road.x1 = c * lane_length;
        road.y1 = r * lane_length;
        road.x2 = (c + dx[d]) * lane_length;
        road.y2 = (r + dy[d]) * lane_length;
        const int cap = detail::lane_capacity(lane_length, vehicle_gap);
        for (LaneKind k : kKinds) {
            Lane lane;
            lane.id = road.id + "_" + std::to_string(static_cast<int>(k));
            lane.dir = road.dir;
            lane.kind = k;
            lane.length = lane_length;
            lane.capacity = cap;
            lane.road = static_cast<int>(net.roads.size());
            road.lanes[static_cast<int>(k)] = static_cast<int>(net.lanes.size());
            net.lanes.push_back(std::move(lane));
        }
        net.road_by_id[road.id] = static_cast<int>(net.roads.size());
        net.roads.push_back(std::move(road));
    };

    for (int r = 1; r <= rows; ++r) {
        for (int c = 1; c <= cols; ++c) {
            for (int d = 0; d < 4; ++d) add_road(c, r, d); // outgoing roads
            for (int d = 0; d < 4; ++d) {                  // boundary in-roads
                const int nc = c + dx[d], nr = r + dy[d];
                if (!is_real(nc, nr)) add_road(nc, nr, (d + 2) % 4);
            }
        }
    }

    for (int r = 1; r <= rows; ++r) {
        for (int c = 1; c <= cols; ++c) {
            Intersection is;
            is.id = node_id(c, r);
            is.x = c * lane_length;
            is.y = r * lane_length;
            const int idx = static_cast<int>(net.intersections.size());
            net.intersection_by_id[is.id] = idx;
            net.intersections.push_back(std::move(is));
        }
    }

    for (auto& [rid, ri] : net.road_by_id) {
        Road& road = net.roads[ri];
        auto from_it = net.intersection_by_id.find(road.from_node);
        auto to_it = net.intersection_by_id.find(road.to_node);
        road.start_intersection = from_it == net.intersection_by_id.end() ? -1 : from_it->second;
        road.end_intersection = to_it == net.intersection_by_id.end() ? -1 : to_it->second;
        if (road.start_intersection >= 0)
            net.intersections[road.start_intersection].out_roads[static_cast<int>(road.dir)] = ri;
        if (road.end_intersection >= 0)
            net.intersections[road.end_intersection].in_roads[static_cast<int>(road.dir)] = ri;
    }

    for (int i = 0; i < static_cast<int>(net.intersections.size()); ++i) {
        detail::wire_intersection(net, i);
        Intersection& is = net.intersections[i];
        for (Dir d : kDirs) {
            const Road& out = net.roads[is.out_roads[static_cast<int>(d)]];
            is.neighbors[static_cast<int>(d)] = out.end_intersection;
        }
    }

    validate_network(net);
    return net;
}

} // namespace bctap
