#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "doctest.h"
#include "json.hpp"

#include "iamp/corridor.hpp"
#include "iamp/error.hpp"
#include "iamp/map.hpp"

using iamp::Corridor;
using iamp::LaneletMap;
using iamp::Vec2;
using nlohmann::json;

namespace {

json straight_lanelet(int id, Vec2 a, Vec2 b, std::vector<int> succ,
                      json adj_left = nullptr, json adj_right = nullptr) {
    return json{{"id", id},
                {"left", {{a.x, a.y + 2.0}, {b.x, b.y + 2.0}}},
                {"right", {{a.x, a.y - 2.0}, {b.x, b.y - 2.0}}},
                {"successors", succ},
                {"adj_left", adj_left},
                {"adj_right", adj_right},
                {"speed_limit", 13.89}};
}

LaneletMap make_map(std::vector<json> lanelets) {
    json j{{"lanelets", lanelets}, {"regulatory", json::array()}, {"intersections", json::array()}};
    return iamp::map_from_json_text(j.dump());
}

std::set<std::vector<int>> seqs(const std::vector<Corridor>& cs) {
    std::set<std::vector<int>> out;
    for (const auto& c : cs) out.insert(c.lanelet_seq);
    return out;
}

// synthetic arc corridor for curvature tests, no map involved
Corridor arc_corridor(double radius, double arc_len, bool left_turn, double step = 0.5) {
    std::vector<Vec2> pts;
    int n = static_cast<int>(std::ceil(arc_len / step));
    for (int i = 0; i <= n; ++i) {
        double s = arc_len * i / n;
        double t = s / radius;
        if (left_turn) {
            pts.push_back({radius * std::sin(t), radius * (1.0 - std::cos(t))});
        } else {
            pts.push_back({radius * std::sin(t), -radius * (1.0 - std::cos(t))});
        }
    }
    Corridor c;
    c.id = 0;
    c.vehicle_id = 0;
    c.lanelet_seq = {1};
    c.geom_seq = {1};
    c.centerline = iamp::Polyline(std::move(pts));
    c.length = c.centerline.length();
    c.start_s = 0.0;
    c.entry_s = {0.0, c.length};
    c.seq_speed_limits = {13.89};
    return c;
}

}  // namespace

TEST_CASE("straight chain truncates at the travel-distance bound") {
    // five 20 m pieces in a row
    auto map = make_map({straight_lanelet(1, {0, 0}, {20, 0}, {2}),
                         straight_lanelet(2, {20, 0}, {40, 0}, {3}),
                         straight_lanelet(3, {40, 0}, {60, 0}, {4}),
                         straight_lanelet(4, {60, 0}, {80, 0}, {5}),
                         straight_lanelet(5, {80, 0}, {100, 0}, {})});
    // D = 10*4 + 0.5*2*16 = 56 m past the vehicle at s=5
    auto cs = iamp::enumerate_corridors(map, 7, {5, 0}, 0.0, 10.0);
    REQUIRE(cs.size() == 1);
    const auto& c = cs[0];
    CHECK(c.lanelet_seq == std::vector<int>{1, 2, 3, 4});  // 15+20+20 < 56, +20 crosses it
    CHECK(c.length == doctest::Approx(80.0).epsilon(1e-6));
    CHECK(c.start_s == doctest::Approx(5.0).epsilon(1e-6));
    CHECK(c.vehicle_id == 7);
    CHECK(c.length - c.start_s >= 56.0);
}

TEST_CASE("fork yields one corridor per successor path") {
    auto map = make_map({straight_lanelet(1, {0, 0}, {20, 0}, {2, 3}),
                         straight_lanelet(2, {20, 0}, {60, 0}, {}),
                         straight_lanelet(3, {20, 0}, {60, 8}, {})});
    auto cs = iamp::enumerate_corridors(map, 0, {5, 0}, 0.0, 10.0);
    CHECK(seqs(cs) == std::set<std::vector<int>>{{1, 2}, {1, 3}});
    for (const auto& c : cs) CHECK(c.id == (&c - cs.data()));
}

TEST_CASE("branching graph matches a brute-force bounded DFS") {
    auto map = make_map({straight_lanelet(1, {0, 0}, {20, 0}, {2, 3}),
                         straight_lanelet(2, {20, 0}, {40, 4}, {4, 5}),
                         straight_lanelet(3, {20, 0}, {40, -4}, {6}),
                         straight_lanelet(4, {40, 4}, {60, 8}, {}),
                         straight_lanelet(5, {40, 4}, {60, 4}, {7}),
                         straight_lanelet(6, {40, -4}, {60, -4}, {8}),
                         straight_lanelet(7, {60, 4}, {80, 4}, {}),
                         straight_lanelet(8, {60, -4}, {80, -4}, {})});

    const double v = 10.0, D = v * 4.0 + 0.5 * 2.0 * 16.0;
    const double s0 = 5.0;

    // independent recursive enumeration over the successor graph
    std::set<std::vector<int>> expect;
    std::function<void(std::vector<int>, double)> walk = [&](std::vector<int> path, double avail) {
        const auto& succ = map.at(path.back()).successors;
        if (avail >= D || succ.empty()) {
            expect.insert(path);
            return;
        }
        for (int s : succ) {
            auto next = path;
            next.push_back(s);
            walk(next, avail + map.at(s).centerline.length());
        }
    };
    walk({1}, map.at(1).centerline.length() - s0);

    auto cs = iamp::enumerate_corridors(map, 0, {s0, 0}, 0.0, v);
    CHECK(seqs(cs) == expect);
    CHECK(expect.size() == 3);
}

TEST_CASE("off-map pose is an error") {
    auto map = make_map({straight_lanelet(1, {0, 0}, {20, 0}, {})});
    CHECK_THROWS_AS(iamp::enumerate_corridors(map, 0, {5, 30}, 0.0, 10.0), iamp::GeometryError);
}

TEST_CASE("lane-change corridor starts on the neighbor lane") {
    auto map = make_map({straight_lanelet(1, {0, 0}, {60, 0}, {}, 10),
                         straight_lanelet(10, {0, 4}, {60, 4}, {})});
    auto cs = iamp::enumerate_corridors(map, 0, {5, 0}, 0.0, 5.0);
    REQUIRE(cs.size() == 2);
    CHECK(seqs(cs) == std::set<std::vector<int>>{{1}, {1, 10}});
    for (const auto& c : cs) {
        if (c.lanelet_seq.size() == 2) {
            CHECK(c.lane_change);
            CHECK(c.geom_seq == std::vector<int>{10});
            CHECK(c.centerline.points().front().y == doctest::Approx(4.0));
            CHECK(c.start_s == doctest::Approx(5.0).epsilon(1e-6));
        } else {
            CHECK(!c.lane_change);
        }
    }
}

TEST_CASE("first lanelet always contains the vehicle projection") {
    auto map = make_map({straight_lanelet(1, {0, 0}, {20, 0}, {2, 3}),
                         straight_lanelet(2, {20, 0}, {40, 4}, {}),
                         straight_lanelet(3, {20, 0}, {40, -4}, {})});
    for (double x : {1.0, 8.0, 19.0}) {
        auto cs = iamp::enumerate_corridors(map, 0, {x, 0.5}, 0.0, 8.0);
        for (const auto& c : cs) {
            auto f = iamp::project_to_centerline(map, c.lanelet_seq.front(), {x, 0.5});
            CHECK(f.s >= 0.0);
            CHECK(f.s <= map.at(c.lanelet_seq.front()).centerline.length());
            CHECK(std::abs(f.d) < 2.0);
        }
    }
}

TEST_CASE("corridor count never decreases with the distance bound") {
    auto map = make_map({straight_lanelet(1, {0, 0}, {20, 0}, {2, 3}),
                         straight_lanelet(2, {20, 0}, {40, 4}, {4, 5}),
                         straight_lanelet(3, {20, 0}, {40, -4}, {}),
                         straight_lanelet(4, {40, 4}, {60, 8}, {}),
                         straight_lanelet(5, {40, 4}, {60, 4}, {})});
    std::size_t prev = 0;
    for (double v = 0.0; v <= 14.0; v += 1.0) {
        auto cs = iamp::enumerate_corridors(map, 0, {2, 0}, 0.0, v);
        CHECK(cs.size() >= prev);
        prev = cs.size();
    }
}

TEST_CASE("curvature features of a straight corridor are zero") {
    auto map = make_map({straight_lanelet(1, {0, 0}, {80, 0}, {})});
    auto cs = iamp::enumerate_corridors(map, 0, {5, 0}, 0.0, 10.0);
    REQUIRE(cs.size() == 1);
    for (double f : iamp::curvature_features(cs[0])) CHECK(std::abs(f) < 1e-9);
}

TEST_CASE("constant-curvature arc integrates to 1.0 per segment") {
    // left turn, radius 10 -> curvature +0.1, 60 m long: each 10 m segment
    // integrates to 1.0 on the positive side
    Corridor c = arc_corridor(10.0, 60.0, true, 0.25);
    auto f = iamp::curvature_features(c);
    for (int i = 0; i < 6; ++i) {
        CHECK(f[i] == doctest::Approx(1.0).epsilon(0.02));
        CHECK(f[6 + i] == doctest::Approx(0.0).epsilon(1e-6));
    }
    // right turn flips sides
    Corridor cr = arc_corridor(10.0, 60.0, false, 0.25);
    auto fr = iamp::curvature_features(cr);
    for (int i = 0; i < 6; ++i) {
        CHECK(fr[i] == doctest::Approx(0.0).epsilon(1e-6));
        CHECK(fr[6 + i] == doctest::Approx(1.0).epsilon(0.02));
    }
}

TEST_CASE("s-curve features match dense numerical integration") {
    // sinusoid: y = 2 sin(x/8), x in [0, 60]
    std::vector<Vec2> pts;
    for (int i = 0; i <= 240; ++i) {
        double x = 60.0 * i / 240.0;
        pts.push_back({x, 2.0 * std::sin(x / 8.0)});
    }
    Corridor c;
    c.lanelet_seq = c.geom_seq = {1};
    c.centerline = iamp::Polyline(pts);
    c.length = c.centerline.length();
    c.start_s = 0.0;
    c.entry_s = {0.0, c.length};
    c.seq_speed_limits = {13.89};

    // oracle: resample at 0.1 m, three-point curvature, rectangle rule per
    // vertex with half-interval widths, binned by arc length
    iamp::Polyline fine = c.centerline.resampled(0.1);
    auto k = iamp::sample_curvature(fine);
    std::array<double, 12> expect{};
    double L = fine.length();
    for (std::size_t i = 1; i + 1 < fine.size(); ++i) {
        double ds = 0.5 * (fine.cum_at(i + 1) - fine.cum_at(i - 1));
        int bin = std::min(5, static_cast<int>(fine.cum_at(i) / L * 6.0));
        if (k[i] > 0) {
            expect[bin] += k[i] * ds;
        } else {
            expect[6 + bin] += -k[i] * ds;
        }
    }

    auto got = iamp::curvature_features(c);
    for (int i = 0; i < 12; ++i) {
        CHECK(got[i] >= 0.0);
        CHECK(got[i] == doctest::Approx(expect[i]).epsilon(0.05).scale(0.01));
    }
}

TEST_CASE("curvature features are stable under finer resampling") {
    std::vector<Vec2> pts;
    for (int i = 0; i <= 240; ++i) {
        double x = 60.0 * i / 240.0;
        pts.push_back({x, 2.0 * std::sin(x / 8.0)});
    }
    Corridor a;
    a.lanelet_seq = a.geom_seq = {1};
    a.centerline = iamp::Polyline(pts);
    a.length = a.centerline.length();
    a.start_s = 0.0;
    a.entry_s = {0.0, a.length};
    a.seq_speed_limits = {13.89};

    Corridor b = a;
    b.centerline = a.centerline.resampled(0.1);
    b.length = b.centerline.length();
    b.entry_s = {0.0, b.length};

    auto fa = iamp::curvature_features(a);
    auto fb = iamp::curvature_features(b);
    for (int i = 0; i < 12; ++i) {
        if (fa[i] > 0.05) CHECK(std::abs(fb[i] - fa[i]) / fa[i] < 0.05);
    }
}
