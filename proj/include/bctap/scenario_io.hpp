#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "bctap/errors.hpp"
#include "bctap/netmodel.hpp"

// Road network and vehicle flow files use a documented subset of the CityFlow
// JSON scenario format, so public grid datasets load unmodified:
//
// roadnet file:
//   { "intersections": [ { "id", "point": {"x","y"}, "virtual": bool,
//                          "roads": [...], "roadLinks": [...](unused),
//                          "trafficLight": {...}(unused), "width"(unused) } ],
//     "roads": [ { "id", "startIntersection", "endIntersection",
//                  "points": [{"x","y"}, ...], "lanes": [ {...}, {...}, {...} ] } ] }
//
// Every road carries exactly three lanes; lane index 0 is the left-turn lane,
// 1 the straight lane, 2 the right-turn lane. Road direction is taken from
// its endpoint geometry. Non-virtual intersections must have one incoming and
// one outgoing road per compass direction. The signal scheme is the fixed
// 8-phase set from netmodel, so any "trafficLight" section is ignored.
// Unrecognized fields are ignored with a warning.
//
// flow file: [ { "vehicle": {...}(unused), "route": [road ids],
//                "interval": s, "startTime": s, "endTime": s (-1 = open) } ]

namespace bctap {

namespace detail {

inline Dir snap_direction(double dx, double dy) {
    if (std::fabs(dx) >= std::fabs(dy)) return dx >= 0 ? Dir::E : Dir::W;
    return dy >= 0 ? Dir::N : Dir::S;
}

inline void warn_unknown_keys(const nlohmann::json& obj,
                              const std::vector<std::string>& known,
                              const std::string& context,
                              std::vector<std::string>* warnings) {
    if (!warnings) return;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool found = false;
        for (const auto& k : known)
            if (it.key() == k) { found = true; break; }
        if (!found) warnings->push_back("ignoring unrecognized field '" + it.key() + "' in " + context);
    }
}

} // namespace detail

inline Network load_network(const std::string& path,
                            double vehicle_gap = kDefaultVehicleGap,
                            std::vector<std::string>* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open roadnet file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw ParseError("roadnet parse failure: " + std::string(e.what()));
    }
    if (!doc.is_object() || !doc.contains("intersections") || !doc.contains("roads"))
        throw ParseError("roadnet file must contain 'intersections' and 'roads'");
    detail::warn_unknown_keys(doc, {"intersections", "roads"}, "roadnet", warnings);

    Network net;
    net.vehicle_gap = vehicle_gap;

    struct NodeInfo { std::string id; double x = 0, y = 0; bool is_virtual = true; };
    std::vector<NodeInfo> nodes;
    for (const auto& j : doc["intersections"]) {
        if (!j.contains("id")) throw ParseError("intersection without id");
        detail::warn_unknown_keys(
            j, {"id", "point", "virtual", "roads", "roadLinks", "trafficLight", "width", "gps"},
            "intersection " + j["id"].get<std::string>(), warnings);
        NodeInfo ni;
        ni.id = j["id"].get<std::string>();
        if (j.contains("point")) {
            ni.x = j["point"].value("x", 0.0);
            ni.y = j["point"].value("y", 0.0);
        }
        ni.is_virtual = j.value("virtual", false);
        net.known_nodes.insert(ni.id);
        nodes.push_back(std::move(ni));
    }

    auto node_of = [&](const std::string& id) -> const NodeInfo* {
        for (const auto& n : nodes)
            if (n.id == id) return &n;
        return nullptr;
    };

    for (const auto& j : doc["roads"]) {
        if (!j.contains("id") || !j.contains("startIntersection") || !j.contains("endIntersection"))
            throw ParseError("road missing id or endpoints");
        detail::warn_unknown_keys(j, {"id", "startIntersection", "endIntersection", "points", "lanes"},
                                  "road " + j["id"].get<std::string>(), warnings);
        Road road;
        road.id = j["id"].get<std::string>();
        road.from_node = j["startIntersection"].get<std::string>();
        road.to_node = j["endIntersection"].get<std::string>();
        if (!net.known_nodes.contains(road.from_node) || !net.known_nodes.contains(road.to_node))
            throw TopologyError("road " + road.id + " references an unknown intersection");

        if (j.contains("points") && j["points"].is_array() && j["points"].size() >= 2) {
            const auto& pts = j["points"];
            road.x1 = pts.front().value("x", 0.0);
            road.y1 = pts.front().value("y", 0.0);
            road.x2 = pts.back().value("x", 0.0);
            road.y2 = pts.back().value("y", 0.0);
            road.length = 0.0;
            for (std::size_t i = 1; i < pts.size(); ++i) {
                const double dx = pts[i].value("x", 0.0) - pts[i - 1].value("x", 0.0);
                const double dy = pts[i].value("y", 0.0) - pts[i - 1].value("y", 0.0);
                road.length += std::hypot(dx, dy);
            }
        } else {
            const NodeInfo* a = node_of(road.from_node);
            const NodeInfo* b = node_of(road.to_node);
            if (!a || !b) throw ParseError("road " + road.id + " lacks points");
            road.x1 = a->x; road.y1 = a->y;
            road.x2 = b->x; road.y2 = b->y;
            road.length = std::hypot(b->x - a->x, b->y - a->y);
        }
        if (road.length <= 0) throw TopologyError("road " + road.id + " has non-positive length");
        road.dir = detail::snap_direction(road.x2 - road.x1, road.y2 - road.y1);

        const auto& lanes_json = j.value("lanes", nlohmann::json::array());
        if (lanes_json.size() != 3)
            throw TopologyError("road " + road.id + " must have exactly 3 lanes, has " +
                                std::to_string(lanes_json.size()));
        const int cap = detail::lane_capacity(road.length, vehicle_gap);
        for (LaneKind k : kKinds) {
            Lane lane;
            lane.id = road.id + "_" + std::to_string(static_cast<int>(k));
            lane.dir = road.dir;
            lane.kind = k;
            lane.length = road.length;
            lane.capacity = cap;
            lane.road = static_cast<int>(net.roads.size());
            road.lanes[static_cast<int>(k)] = static_cast<int>(net.lanes.size());
            net.lanes.push_back(std::move(lane));
        }
        if (net.road_by_id.contains(road.id)) throw ParseError("duplicate road id " + road.id);
        net.road_by_id[road.id] = static_cast<int>(net.roads.size());
        net.roads.push_back(std::move(road));
    }

    for (const auto& n : nodes) {
        if (n.is_virtual) continue;
        Intersection is;
        is.id = n.id;
        is.x = n.x;
        is.y = n.y;
        net.intersection_by_id[is.id] = static_cast<int>(net.intersections.size());
        net.intersections.push_back(std::move(is));
    }
    if (net.intersections.empty())
        throw TopologyError("roadnet has no controlled (non-virtual) intersection");

    for (int ri = 0; ri < static_cast<int>(net.roads.size()); ++ri) {
        Road& road = net.roads[ri];
        auto fit = net.intersection_by_id.find(road.from_node);
        auto tit = net.intersection_by_id.find(road.to_node);
        road.start_intersection = fit == net.intersection_by_id.end() ? -1 : fit->second;
        road.end_intersection = tit == net.intersection_by_id.end() ? -1 : tit->second;
        const int di = static_cast<int>(road.dir);
        if (road.start_intersection >= 0) {
            Intersection& is = net.intersections[road.start_intersection];
            if (is.out_roads[di] >= 0)
                throw TopologyError("intersection " + is.id + " has two outgoing " +
                                    to_string(road.dir) + " roads");
            is.out_roads[di] = ri;
        }
        if (road.end_intersection >= 0) {
            Intersection& is = net.intersections[road.end_intersection];
            if (is.in_roads[di] >= 0)
                throw TopologyError("intersection " + is.id + " has two incoming " +
                                    to_string(road.dir) + " roads");
            is.in_roads[di] = ri;
        }
    }

    for (int i = 0; i < static_cast<int>(net.intersections.size()); ++i) {
        detail::wire_intersection(net, i);
        Intersection& is = net.intersections[i];
        for (Dir d : kDirs)
            is.neighbors[static_cast<int>(d)] = net.roads[is.out_roads[static_cast<int>(d)]].end_intersection;
    }

    // grid dims from distinct controlled-intersection coordinates
    std::vector<double> xs, ys;
    for (const auto& is : net.intersections) {
        bool nx = true, ny = true;
        for (double v : xs) if (std::fabs(v - is.x) < 1e-6) { nx = false; break; }
        for (double v : ys) if (std::fabs(v - is.y) < 1e-6) { ny = false; break; }
        if (nx) xs.push_back(is.x);
        if (ny) ys.push_back(is.y);
    }
    net.grid_cols = static_cast<int>(xs.size());
    net.grid_rows = static_cast<int>(ys.size());

    validate_network(net);
    return net;
}

inline void save_network(const Network& net, const std::string& path) {
    nlohmann::json doc;
    doc["intersections"] = nlohmann::json::array();
    doc["roads"] = nlohmann::json::array();

    // controlled intersections first, then boundary nodes found on roads
    std::unordered_set<std::string> emitted;
    for (const auto& is : net.intersections) {
        nlohmann::json j;
        j["id"] = is.id;
        j["point"] = {{"x", is.x}, {"y", is.y}};
        j["virtual"] = false;
        nlohmann::json roads = nlohmann::json::array();
        for (int ri : is.in_roads) roads.push_back(net.roads[ri].id);
        for (int ri : is.out_roads) roads.push_back(net.roads[ri].id);
        j["roads"] = roads;
        j["roadLinks"] = nlohmann::json::array();
        doc["intersections"].push_back(std::move(j));
        emitted.insert(is.id);
    }
    for (const auto& road : net.roads) {
        for (int side = 0; side < 2; ++side) {
            const std::string& nid = side == 0 ? road.from_node : road.to_node;
            if (emitted.contains(nid)) continue;
            nlohmann::json j;
            j["id"] = nid;
            j["point"] = {{"x", side == 0 ? road.x1 : road.x2}, {"y", side == 0 ? road.y1 : road.y2}};
            j["virtual"] = true;
            j["roads"] = nlohmann::json::array({road.id});
            doc["intersections"].push_back(std::move(j));
            emitted.insert(nid);
        }
    }
    for (const auto& road : net.roads) {
        nlohmann::json j;
        j["id"] = road.id;
        j["startIntersection"] = road.from_node;
        j["endIntersection"] = road.to_node;
        j["points"] = {{{"x", road.x1}, {"y", road.y1}}, {{"x", road.x2}, {"y", road.y2}}};
        j["lanes"] = nlohmann::json::array();
        for (int k = 0; k < 3; ++k)
            j["lanes"].push_back({{"width", 3.0}, {"maxSpeed", 11.111}});
        doc["roads"].push_back(std::move(j));
    }
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write roadnet file: " + path);
    out << doc.dump(2) << "\n";
}

inline FlowSpec load_flow(const std::string& path, const Network& net,
                          std::vector<std::string>* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open flow file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw ParseError("flow parse failure: " + std::string(e.what()));
    }
    if (!doc.is_array()) throw ParseError("flow file must be a JSON array");

    FlowSpec flow;
    int index = 0;
    for (const auto& j : doc) {
        detail::warn_unknown_keys(j, {"vehicle", "route", "interval", "startTime", "endTime"},
                                  "flow rule " + std::to_string(index), warnings);
        FlowRule rule;
        if (!j.contains("route") || !j["route"].is_array() || j["route"].empty())
            throw ParseError("flow rule " + std::to_string(index) + " lacks a route");
        for (const auto& rid : j["route"]) {
            const int ri = net.road_index(rid.get<std::string>());
            if (ri < 0)
                throw RouteError("flow rule " + std::to_string(index) + " references unknown road " +
                                 rid.get<std::string>());
            rule.route.push_back(ri);
        }
        for (std::size_t i = 1; i < rule.route.size(); ++i) {
            const Road& a = net.roads[rule.route[i - 1]];
            const Road& b = net.roads[rule.route[i]];
            if (a.to_node != b.from_node)
                throw RouteError("flow rule " + std::to_string(index) + " route is disconnected at " +
                                 a.id + " -> " + b.id);
            if (!turn_kind(a.dir, b.dir))
                throw RouteError("flow rule " + std::to_string(index) + " requires a U-turn at " +
                                 a.id + " -> " + b.id);
        }
        rule.start_time = j.value("startTime", 0.0);
        rule.end_time = j.value("endTime", -1.0);
        if (rule.end_time < 0) rule.end_time = std::numeric_limits<double>::infinity();
        rule.interval = j.value("interval", 1.0);
        if (rule.interval <= 0) throw ParseError("flow rule interval must be positive");
        if (rule.start_time > rule.end_time)
            throw ParseError("flow rule start_time exceeds end_time");
        flow.rules.push_back(std::move(rule));
        ++index;
    }
    return flow;
}

inline void save_flow(const FlowSpec& flow, const Network& net, const std::string& path) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& rule : flow.rules) {
        nlohmann::json j;
        j["vehicle"] = {{"length", 5.0}, {"minGap", 2.5}, {"maxSpeed", 11.111}};
        j["route"] = nlohmann::json::array();
        for (int ri : rule.route) j["route"].push_back(net.roads[ri].id);
        j["interval"] = rule.interval;
        j["startTime"] = rule.start_time;
        j["endTime"] = std::isinf(rule.end_time) ? -1.0 : rule.end_time;
        doc.push_back(std::move(j));
    }
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write flow file: " + path);
    out << doc.dump(2) << "\n";
}

} // namespace bctap
