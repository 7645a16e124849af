#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "bctap/netmodel.hpp"
#include "bctap/scenario_io.hpp"

using namespace bctap;

namespace {

std::string temp_path(const std::string& name) {
    return std::string(std::getenv("TMPDIR") ? std::getenv("TMPDIR") : "/tmp") + "/" + name;
}

} // namespace

TEST_CASE("turn geometry") {
    CHECK(turn_target(Dir::E, LaneKind::Str) == Dir::E);
    CHECK(turn_target(Dir::E, LaneKind::Lef) == Dir::N);
    CHECK(turn_target(Dir::E, LaneKind::Rig) == Dir::S);
    CHECK(turn_target(Dir::S, LaneKind::Lef) == Dir::E);
    CHECK(turn_target(Dir::N, LaneKind::Rig) == Dir::E);
    CHECK(turn_kind(Dir::E, Dir::E) == LaneKind::Str);
    CHECK(turn_kind(Dir::W, Dir::S) == LaneKind::Lef);
    CHECK(!turn_kind(Dir::E, Dir::W)); // U-turn
}

TEST_CASE("build_grid 1x1") {
    const Network net = build_grid(1, 1, 300.0);
    REQUIRE(net.intersections.size() == 1);
    // 4 boundary in-roads and 4 boundary out-roads
    int in_from_virtual = 0, out_to_virtual = 0;
    for (const auto& r : net.roads) {
        if (r.start_intersection < 0) ++in_from_virtual;
        if (r.end_intersection < 0) ++out_to_virtual;
    }
    CHECK(in_from_virtual == 4);
    CHECK(out_to_virtual == 4);
    CHECK(net.roads.size() == 8);

    const Intersection& is = net.intersections[0];
    CHECK(is.phases.size() == 8);
    for (int n : is.neighbors) CHECK(n == -1);
}

TEST_CASE("build_grid 2x2 topology hand-count") {
    const Network net = build_grid(2, 2, 300.0);
    REQUIRE(net.intersections.size() == 4);
    // 4 internal edges, two directed roads each; 8 boundary ins; 8 boundary outs
    int internal = 0;
    for (const auto& r : net.roads)
        if (r.start_intersection >= 0 && r.end_intersection >= 0) ++internal;
    CHECK(internal == 8);
    CHECK(net.roads.size() == 24);
    // adjacent pairs share a connecting road in each direction
    const int a = net.intersection_by_id.at("intersection_1_1");
    const int b = net.intersection_by_id.at("intersection_2_1");
    CHECK(net.intersections[a].neighbors[static_cast<int>(Dir::E)] == b);
    CHECK(net.intersections[b].neighbors[static_cast<int>(Dir::W)] == a);
}

TEST_CASE("build_grid 3x4 matches the 12-intersection layout") {
    const Network net = build_grid(3, 4, 300.0);
    CHECK(net.intersections.size() == 12);
    CHECK(net.grid_rows == 3);
    CHECK(net.grid_cols == 4);
}

TEST_CASE("grid invariants across sizes") {
    for (auto [r, c] : {std::pair{1, 1}, {2, 3}, {3, 4}}) {
        const Network net = build_grid(r, c, 250.0);
        CHECK(static_cast<int>(net.intersections.size()) == r * c);
        for (const auto& is : net.intersections) {
            CHECK(is.phases.size() == 8);
            for (int li : is.upstream) CHECK(li >= 0);
            for (int li : is.downstream) CHECK(li >= 0);
            // movement geometry: str feeds the opposite road, lef the left, rig the right
            for (const auto& ph : is.phases)
                for (const auto& mv : ph.movements) {
                    const Lane& from = net.lanes[mv.from_lane];
                    const Lane& to = net.lanes[mv.to_lane];
                    CHECK(turn_target(from.dir, from.kind) == to.dir);
                }
        }
        REQUIRE_NOTHROW(validate_network(net));
    }
}

TEST_CASE("build_grid rejects bad arguments") {
    CHECK_THROWS_AS(build_grid(0, 1, 300.0), ArgumentError);
    CHECK_THROWS_AS(build_grid(1, -2, 300.0), ArgumentError);
    CHECK_THROWS_AS(build_grid(1, 1, 0.0), ArgumentError);
}

TEST_CASE("lane capacity follows the vehicle gap") {
    const Network net = build_grid(1, 1, 300.0, 7.5);
    for (const auto& lane : net.lanes) CHECK(lane.capacity == 40);
    const Network tight = build_grid(1, 1, 300.0, 9.0);
    for (const auto& lane : tight.lanes) CHECK(lane.capacity == 33);
}

TEST_CASE("roadnet save/load round-trips structurally") {
    const Network net = build_grid(2, 2, 300.0);
    const std::string path = temp_path("bctap_roundtrip_roadnet.json");
    save_network(net, path);
    const Network back = load_network(path);
    CHECK(net == back);
    std::remove(path.c_str());
}

TEST_CASE("synthetic 1x1 roadnet file loads with 12 upstream lanes") {
    const Network net = build_grid(1, 1, 300.0);
    const std::string path = temp_path("bctap_1x1_roadnet.json");
    save_network(net, path);
    const Network loaded = load_network(path);
    REQUIRE(loaded.intersections.size() == 1);
    std::unordered_set<int> up(loaded.intersections[0].upstream.begin(),
                               loaded.intersections[0].upstream.end());
    CHECK(up.size() == 12);
    std::remove(path.c_str());
}

TEST_CASE("wrong lane count raises TopologyError") {
    const Network net = build_grid(1, 1, 300.0);
    const std::string path = temp_path("bctap_bad_roadnet.json");
    save_network(net, path);

    std::ifstream in(path);
    nlohmann::json doc;
    in >> doc;
    in.close();
    doc["roads"][0]["lanes"].erase(2); // 11 upstream lanes at the intersection
    std::ofstream out(path);
    out << doc.dump();
    out.close();

    CHECK_THROWS_AS(load_network(path), TopologyError);
    std::remove(path.c_str());
}

TEST_CASE("malformed json raises ParseError") {
    const std::string path = temp_path("bctap_malformed.json");
    std::ofstream out(path);
    out << "{ not json";
    out.close();
    CHECK_THROWS_AS(load_network(path), ParseError);
    std::remove(path.c_str());
}

TEST_CASE("unknown fields load with warnings") {
    const Network net = build_grid(1, 1, 300.0);
    const std::string path = temp_path("bctap_warn_roadnet.json");
    save_network(net, path);
    std::ifstream in(path);
    nlohmann::json doc;
    in >> doc;
    in.close();
    doc["someVendorExtension"] = 42;
    std::ofstream out(path);
    out << doc.dump();
    out.close();

    std::vector<std::string> warnings;
    REQUIRE_NOTHROW(load_network(path, kDefaultVehicleGap, &warnings));
    CHECK(warnings.size() == 1);
    std::remove(path.c_str());
}

TEST_CASE("flow loading") {
    const Network net = build_grid(1, 1, 300.0);
    const std::string path = temp_path("bctap_flow.json");

    SECTION("single straight route") {
        std::ofstream out(path);
        out << R"([{"vehicle": {"length": 5.0}, "route": ["road_0_1_0", "road_1_1_0"],
                    "interval": 10.0, "startTime": 0, "endTime": 0}])";
        out.close();
        const FlowSpec flow = load_flow(path, net);
        REQUIRE(flow.rules.size() == 1);
        CHECK(flow.rules[0].route.size() == 2);
        CHECK(flow.rules[0].end_time == 0.0);
    }
    SECTION("empty flow list") {
        std::ofstream out(path);
        out << "[]";
        out.close();
        const FlowSpec flow = load_flow(path, net);
        CHECK(flow.rules.empty());
    }
    SECTION("unknown road id") {
        std::ofstream out(path);
        out << R"([{"route": ["road_nowhere"], "interval": 5.0, "startTime": 0, "endTime": 10}])";
        out.close();
        CHECK_THROWS_AS(load_flow(path, net), RouteError);
    }
    SECTION("disconnected route") {
        std::ofstream out(path);
        out << R"([{"route": ["road_0_1_0", "road_1_2_3"], "interval": 5.0,
                    "startTime": 0, "endTime": 10}])";
        out.close();
        CHECK_THROWS_AS(load_flow(path, net), RouteError);
    }
    std::remove(path.c_str());
}

TEST_CASE("flow save/load round-trips") {
    const Network net = build_grid(2, 2, 300.0);
    FlowSpec flow;
    flow.rules.push_back({{net.road_index("road_0_1_0"), net.road_index("road_1_1_0"),
                           net.road_index("road_2_1_0")},
                          0.0, 12.0, 1800.0});
    const std::string path = temp_path("bctap_flow_rt.json");
    save_flow(flow, net, path);
    const FlowSpec back = load_flow(path, net);
    CHECK(flow == back);
    std::remove(path.c_str());
}
