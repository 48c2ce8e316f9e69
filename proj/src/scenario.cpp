#include "iamp/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "iamp/error.hpp"
#include "iamp/geometry.hpp"

namespace iamp {

namespace {

using nlohmann::json;

constexpr double kDt = 0.04;  // 25 Hz

std::vector<Vec2> line_pts(Vec2 a, Vec2 b, int n = 2) {
    std::vector<Vec2> pts;
    for (int i = 0; i < n; ++i) {
        double w = static_cast<double>(i) / (n - 1);
        pts.push_back(a + (b - a) * w);
    }
    return pts;
}

std::vector<Vec2> bezier_pts(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, int n = 24) {
    std::vector<Vec2> pts;
    for (int i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / (n - 1);
        double u = 1.0 - t;
        Vec2 p = p0 * (u * u * u) + p1 * (3 * u * u * t) + p2 * (3 * u * t * t) + p3 * (t * t * t);
        pts.push_back(p);
    }
    return pts;
}

std::vector<Vec2> arc_pts(Vec2 center, double r, double ang0, double ang1, int n = 24) {
    std::vector<Vec2> pts;
    for (int i = 0; i < n; ++i) {
        double a = ang0 + (ang1 - ang0) * i / (n - 1);
        pts.push_back({center.x + r * std::cos(a), center.y + r * std::sin(a)});
    }
    return pts;
}

std::vector<Vec2> rotate_pts(const std::vector<Vec2>& pts, double ang) {
    double c = std::cos(ang), s = std::sin(ang);
    std::vector<Vec2> out;
    for (auto p : pts) out.push_back({c * p.x - s * p.y, s * p.x + c * p.y});
    return out;
}

std::vector<Vec2> concat_pts(std::vector<Vec2> a, const std::vector<Vec2>& b) {
    std::size_t start = !a.empty() && !b.empty() && (b.front() - a.back()).norm() < 1e-9 ? 1 : 0;
    a.insert(a.end(), b.begin() + static_cast<std::ptrdiff_t>(start), b.end());
    return a;
}

// lanelet JSON from a centerline: bounds offset along per-point normals
json lanelet_json(int id, const std::vector<Vec2>& center, std::vector<int> succ,
                  double half_width = 2.0, double speed_limit = 13.89) {
    json left = json::array(), right = json::array();
    for (std::size_t i = 0; i < center.size(); ++i) {
        Vec2 dir;
        if (i == 0) {
            dir = center[1] - center[0];
        } else if (i + 1 == center.size()) {
            dir = center[i] - center[i - 1];
        } else {
            Vec2 a = center[i] - center[i - 1];
            Vec2 b = center[i + 1] - center[i];
            dir = a * (1.0 / std::max(a.norm(), 1e-12)) + b * (1.0 / std::max(b.norm(), 1e-12));
        }
        double n = std::max(dir.norm(), 1e-12);
        Vec2 normal{-dir.y / n * half_width, dir.x / n * half_width};
        left.push_back({center[i].x + normal.x, center[i].y + normal.y});
        right.push_back({center[i].x - normal.x, center[i].y - normal.y});
    }
    return json{{"id", id},         {"left", left},
                {"right", right},   {"successors", succ},
                {"adj_left", nullptr}, {"adj_right", nullptr},
                {"speed_limit", speed_limit}};
}

json regulatory_json(const std::string& kind, std::vector<int> refs,
                     std::vector<int> priority_over = {}, json stop_line = nullptr) {
    json j{{"kind", kind}, {"refs", refs}};
    if (!priority_over.empty()) j["priority_over"] = priority_over;
    if (!stop_line.is_null()) j["stop_line"] = std::move(stop_line);
    return j;
}

// stop line across the first (or last) point of a centerline, full lane width
json stop_line_across(const std::vector<Vec2>& center, bool at_start = true,
                      double half_width = 2.0) {
    Vec2 p = at_start ? center.front() : center.back();
    Vec2 d = at_start ? center[1] - center[0]
                      : center[center.size() - 1] - center[center.size() - 2];
    double n = std::max(d.norm(), 1e-12);
    Vec2 normal{-d.y / n * half_width, d.x / n * half_width};
    return json::array({{p.x + normal.x, p.y + normal.y}, {p.x - normal.x, p.y - normal.y}});
}

json intersection_json(int id, std::vector<int> members, std::vector<int> entrances) {
    return json{{"id", id}, {"members", members}, {"entrances", entrances}};
}

// speed script: linear ramp to v_end over dur seconds, phase by phase
struct Phase {
    double dur;
    double v_end;
};

struct VehiclePlan {
    int track_id = 0;
    Polyline path;
    double s0 = 0.0;
    double v0 = 0.0;
    double t_start = 0.0;
    std::vector<Phase> phases;
    double length = 4.0;
    double width = 1.8;
};

double plan_duration(const VehiclePlan& p) {
    double d = 0.0;
    for (const auto& ph : p.phases) d += ph.dur;
    return d;
}

// v(t) from the phases (piecewise linear), exact trapezoidal arc integral
void nominal_state(const VehiclePlan& plan, double t, double* s, double* v) {
    double vs = plan.v0;
    double acc_s = 0.0;
    double done = 0.0;
    for (const auto& ph : plan.phases) {
        if (t <= done + ph.dur || &ph == &plan.phases.back()) {
            double local = std::clamp(t - done, 0.0, ph.dur);
            double vt = ph.dur > 0.0 ? vs + (ph.v_end - vs) * (local / ph.dur) : ph.v_end;
            *s = plan.s0 + acc_s + (vs + vt) * 0.5 * local;
            *v = vt;
            return;
        }
        acc_s += (vs + ph.v_end) * 0.5 * ph.dur;
        vs = ph.v_end;
        done += ph.dur;
    }
    *s = plan.s0 + acc_s;
    *v = vs;
}

// Sample the plan at 25 Hz. Heading and speed are taken from the chords so
// every frame satisfies p[k+1] - p[k] == v[k] * dt * (cos h, sin h) exactly.
void emit_rows(const VehiclePlan& plan, std::vector<TrackRow>& rows) {
    double total = plan_duration(plan);
    auto n = static_cast<std::size_t>(std::llround(total / kDt)) + 1;
    std::vector<Vec2> pts(n);
    for (std::size_t k = 0; k < n; ++k) {
        double s, v;
        nominal_state(plan, static_cast<double>(k) * kDt, &s, &v);
        pts[k] = plan.path.point_at(std::min(s, plan.path.length()));
    }
    std::vector<double> vs(n), hs(n);
    double last_h = plan.path.heading_at(plan.s0);
    for (std::size_t k = 0; k < n; ++k) {
        if (k + 1 < n) {
            Vec2 chord = pts[k + 1] - pts[k];
            double len = chord.norm();
            if (len > 1e-9) last_h = std::atan2(chord.y, chord.x);
            vs[k] = len / kDt;
        } else {
            vs[k] = vs[n - 2];
        }
        hs[k] = last_h;
    }
    long frame0 = std::lround(plan.t_start / kDt);
    for (std::size_t k = 0; k < n; ++k) {
        TrackRow r;
        r.recording_id = 0;
        r.track_id = plan.track_id;
        r.frame = frame0 + static_cast<long>(k);
        r.x = pts[k].x;
        r.y = pts[k].y;
        r.heading = hs[k];
        r.v = vs[k];
        r.a = k + 1 < n ? (vs[k + 1] - vs[k]) / kDt : 0.0;
        r.length = plan.length;
        r.width = plan.width;
        rows.push_back(r);
    }
}

void self_check(const std::vector<TrackRow>& rows) {
    // chord consistency per consecutive frame of each track
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        const auto& a = rows[i];
        const auto& b = rows[i + 1];
        if (a.track_id != b.track_id || b.frame != a.frame + 1) continue;
        double ex = std::abs(b.x - a.x - a.v * kDt * std::cos(a.heading));
        double ey = std::abs(b.y - a.y - a.v * kDt * std::sin(a.heading));
        if (ex > 1e-3 || ey > 1e-3) {
            throw NumericError("generated track " + std::to_string(a.track_id) +
                               " breaks chord consistency at frame " + std::to_string(a.frame));
        }
    }
}

Polyline join(std::initializer_list<std::vector<Vec2>> pieces) {
    Polyline out;
    for (const auto& p : pieces) out.append(Polyline(p));
    return out;
}

// ---- fixtures ----------------------------------------------------------

Scenario make_straight(std::mt19937_64& rng) {
    Scenario sc;
    auto road = line_pts({-20, 0}, {260, 0}, 30);
    sc.map_json = json{{"lanelets", {lanelet_json(1, road, {})}},
                       {"regulatory", json::array()},
                       {"intersections", json::array()}};
    std::uniform_real_distribution<double> u(0.0, 1.0);
    VehiclePlan p;
    p.track_id = 1;
    p.path = Polyline(road);
    p.s0 = 10.0 + 4.0 * u(rng);
    p.v0 = 9.5 + u(rng);
    p.phases = {{14.0, p.v0}};
    emit_rows(p, sc.rows);
    return sc;
}

Scenario make_fork(std::mt19937_64& rng, std::uint64_t seed) {
    Scenario sc;
    auto trunk = line_pts({0, 0}, {60, 0}, 8);
    auto straight = line_pts({60, 0}, {170, 0}, 12);
    auto ramp = bezier_pts({60, 0}, {100, 0}, {120, 25}, {150, 40}, 40);
    sc.map_json = json{{"lanelets",
                        {lanelet_json(1, trunk, {2, 3}), lanelet_json(2, straight, {}),
                         lanelet_json(3, ramp, {})}},
                       {"regulatory", json::array()},
                       {"intersections", json::array()}};
    std::uniform_real_distribution<double> u(0.0, 1.0);
    VehiclePlan p;
    p.track_id = 1;
    p.path = seed % 2 == 0 ? join({trunk, straight}) : join({trunk, ramp});
    p.s0 = 5.0 + 3.0 * u(rng);
    p.v0 = 9.0 + u(rng);
    p.phases = {{14.0, p.v0}};
    emit_rows(p, sc.rows);
    return sc;
}

Scenario make_queue(std::mt19937_64& rng) {
    Scenario sc;
    auto road = line_pts({0, 0}, {320, 0}, 33);
    sc.map_json = json{{"lanelets", {lanelet_json(1, road, {})}},
                       {"regulatory", json::array()},
                       {"intersections", json::array()}};
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double lead_s0 = 60.0 + 2.0 * u(rng);
    for (int i = 0; i < 3; ++i) {
        double delay = 0.8 * i;
        VehiclePlan p;
        p.track_id = i + 1;
        p.path = Polyline(road);
        p.s0 = lead_s0 - 18.0 * i;
        p.v0 = 10.0;
        p.phases = {{4.0 + delay, 10.0}, {4.0, 0.0},          {3.0, 0.0},
                    {16.0 / 3.0, 8.0},   {1.0 + 1.6 - delay, 8.0}};
        emit_rows(p, sc.rows);
    }
    return sc;
}

Scenario make_t_junction(std::mt19937_64& rng) {
    Scenario sc;
    auto main_w = line_pts({-90, 0}, {-6, 0}, 10);
    auto main_mid = line_pts({-6, 0}, {6, 0}, 4);
    auto main_e = line_pts({6, 0}, {120, 0}, 13);
    auto minor = line_pts({0, -70}, {0, -6}, 8);
    auto turn = bezier_pts({0, -6}, {0, -2.7}, {2.7, 0}, {6, 0}, 16);
    sc.map_json =
        json{{"lanelets",
              {lanelet_json(1, main_w, {2}), lanelet_json(2, main_mid, {3}),
               lanelet_json(3, main_e, {}), lanelet_json(11, minor, {12}),
               lanelet_json(12, turn, {3}, 2.0, 8.33)}},
             {"regulatory",
              {regulatory_json("right_of_way", {2}, {12}),
               regulatory_json("yield", {12}, {}, stop_line_across(turn))}},
             {"intersections", {intersection_json(100, {2, 12}, {1, 11})}}};

    std::uniform_real_distribution<double> u(0.0, 1.0);
    VehiclePlan main_car;
    main_car.track_id = 1;
    main_car.path = join({main_w, main_mid, main_e});
    main_car.s0 = 18.0 + 2.0 * u(rng);
    main_car.v0 = 10.0;
    main_car.phases = {{16.0, 10.0}};
    emit_rows(main_car, sc.rows);

    VehiclePlan minor_car;
    minor_car.track_id = 2;
    minor_car.path = join({minor, turn, main_e});
    minor_car.s0 = 8.0 + 2.0 * u(rng);
    minor_car.v0 = 8.0;
    // approach, stop just short of the junction, wait out the main road car
    double stop_at = 62.0;
    double brake_dist = stop_at - minor_car.s0 - 8.0 * 3.5;
    minor_car.phases = {{3.5, 8.0},
                        {2.0 * brake_dist / 8.0, 0.0},
                        {10.5 - 3.5 - 2.0 * brake_dist / 8.0, 0.0},
                        {4.0, 7.0},
                        {1.5, 7.0}};
    emit_rows(minor_car, sc.rows);
    return sc;
}

Scenario make_four_arm(std::mt19937_64& rng) {
    Scenario sc;
    // inbound/outbound approaches, +-2 m lane offsets, box of +-10 m
    auto w_in = line_pts({-70, -2}, {-10, -2}, 8);
    auto e_out = line_pts({10, -2}, {110, -2}, 12);
    auto e_in = line_pts({70, 2}, {10, 2}, 8);
    auto w_out = line_pts({-10, 2}, {-110, 2}, 12);
    auto s_in = line_pts({2, -70}, {2, -10}, 8);
    auto n_out = line_pts({2, 10}, {2, 110}, 12);
    auto n_in = line_pts({-2, 70}, {-2, 10}, 8);
    auto s_out = line_pts({-2, -10}, {-2, -110}, 12);

    auto straight_conn = [](Vec2 a, Vec2 b) { return line_pts(a, b, 12); };
    auto curve = [](Vec2 a, Vec2 c1, Vec2 c2, Vec2 b) { return bezier_pts(a, c1, c2, b, 20); };

    json lanelets = json::array(
        {lanelet_json(1, w_in, {21, 22, 23}), lanelet_json(2, e_out, {}),
         lanelet_json(3, e_in, {24, 25, 26}), lanelet_json(4, w_out, {}),
         lanelet_json(5, s_in, {27, 28, 29}), lanelet_json(6, n_out, {}),
         lanelet_json(7, n_in, {30, 31, 32}), lanelet_json(8, s_out, {}),
         // west entry
         lanelet_json(21, straight_conn({-10, -2}, {10, -2}), {2}, 2.0, 8.33),
         lanelet_json(22, curve({-10, -2}, {-5.6, -2}, {-2, -5.6}, {-2, -10}), {8}, 2.0, 8.33),
         lanelet_json(23, curve({-10, -2}, {-3.4, -2}, {2, 3.4}, {2, 10}), {6}, 2.0, 8.33),
         // east entry
         lanelet_json(24, straight_conn({10, 2}, {-10, 2}), {4}, 2.0, 8.33),
         lanelet_json(25, curve({10, 2}, {5.6, 2}, {2, 5.6}, {2, 10}), {6}, 2.0, 8.33),
         lanelet_json(26, curve({10, 2}, {3.4, 2}, {-2, -3.4}, {-2, -10}), {8}, 2.0, 8.33),
         // south entry
         lanelet_json(27, straight_conn({2, -10}, {2, 10}), {6}, 2.0, 8.33),
         lanelet_json(28, curve({2, -10}, {2, -5.6}, {5.6, -2}, {10, -2}), {2}, 2.0, 8.33),
         lanelet_json(29, curve({2, -10}, {2, -3.4}, {-3.4, 2}, {-10, 2}), {4}, 2.0, 8.33),
         // north entry
         lanelet_json(30, straight_conn({-2, 10}, {-2, -10}), {8}, 2.0, 8.33),
         lanelet_json(31, curve({-2, 10}, {-2, 5.6}, {-5.6, 2}, {-10, 2}), {4}, 2.0, 8.33),
         lanelet_json(32, curve({-2, 10}, {-2, 3.4}, {3.4, -2}, {10, -2}), {2}, 2.0, 8.33)});

    sc.map_json =
        json{{"lanelets", lanelets},
             {"regulatory",
              {regulatory_json("right_of_way", {27, 28, 29, 30, 31, 32},
                               {21, 22, 23, 24, 25, 26}),
               regulatory_json("yield", {21, 22, 23}, {}, stop_line_across(w_in, false)),
               regulatory_json("yield", {24, 25, 26}, {}, stop_line_across(e_in, false))}},
             {"intersections",
              {intersection_json(100, {21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32},
                                 {1, 3, 5, 7})}}};

    std::uniform_real_distribution<double> u(0.0, 1.0);

    VehiclePlan south;  // priority, straight through northbound
    south.track_id = 1;
    south.path = join({s_in, straight_conn({2, -10}, {2, 10}), n_out});
    south.s0 = 6.0 + 2.0 * u(rng);
    south.v0 = 10.0;
    south.phases = {{16.0, 10.0}};
    emit_rows(south, sc.rows);

    VehiclePlan north;  // priority, straight through southbound
    north.track_id = 2;
    north.path = join({n_in, straight_conn({-2, 10}, {-2, -10}), s_out});
    north.s0 = 2.0 + 2.0 * u(rng);
    north.v0 = 10.0;
    north.phases = {{16.0, 10.0}};
    emit_rows(north, sc.rows);

    auto yield_plan = [&](int id, Polyline path, double stagger) {
        VehiclePlan p;
        p.track_id = id;
        p.path = std::move(path);
        p.s0 = 4.0 + 2.0 * u(rng);
        p.v0 = 9.0;
        double stop_at = 58.0;
        double hold = 3.2 + stagger;
        double brake = 2.0 * (stop_at - p.s0 - 9.0 * hold) / 9.0;
        p.phases = {{hold, 9.0},
                    {brake, 0.0},
                    {std::max(0.2, 9.5 + stagger - hold - brake), 0.0},
                    {4.0, 8.0},
                    {2.5, 8.0}};
        emit_rows(p, sc.rows);
    };
    yield_plan(3, join({w_in, straight_conn({-10, -2}, {10, -2}), e_out}), 0.0);
    yield_plan(4, join({e_in, straight_conn({10, 2}, {-10, 2}), w_out}), 0.5);
    return sc;
}

Scenario make_roundabout(std::mt19937_64& rng) {
    Scenario sc;
    const double r = 12.0;
    const double deg = M_PI / 180.0;
    // six 60-degree ring arcs; arcs 50..55 start at -90 + 60k degrees
    std::vector<std::vector<Vec2>> arcs;
    for (int k = 0; k < 6; ++k) {
        double a0 = (-90.0 + 60.0 * k) * deg;
        arcs.push_back(arc_pts({0, 0}, r, a0, a0 + 60.0 * deg, 16));
    }
    // south arm geometry, rotated to the other two arms (nodes -90, 30, 150)
    auto entry_s = bezier_pts({-6, -30}, {-4, -24}, {-6, -12}, {0, -12}, 24);
    auto exit_s = concat_pts(bezier_pts({0, -12}, {6, -12}, {6, -24}, {6, -30}, 24),
                             line_pts({6, -30}, {6, -62}, 5));
    auto entry_ne = rotate_pts(entry_s, 120.0 * deg);
    auto exit_ne = rotate_pts(exit_s, 120.0 * deg);
    auto entry_nw = rotate_pts(entry_s, 240.0 * deg);
    auto exit_nw = rotate_pts(exit_s, 240.0 * deg);

    json lanelets = json::array(
        {lanelet_json(50, arcs[0], {51}, 2.0, 8.33), lanelet_json(51, arcs[1], {52, 63}, 2.0, 8.33),
         lanelet_json(52, arcs[2], {53}, 2.0, 8.33), lanelet_json(53, arcs[3], {54, 65}, 2.0, 8.33),
         lanelet_json(54, arcs[4], {55}, 2.0, 8.33), lanelet_json(55, arcs[5], {50, 61}, 2.0, 8.33),
         lanelet_json(60, entry_s, {50}, 2.0, 8.33), lanelet_json(61, exit_s, {}, 2.0, 8.33),
         lanelet_json(62, entry_ne, {52}, 2.0, 8.33), lanelet_json(63, exit_ne, {}, 2.0, 8.33),
         lanelet_json(64, entry_nw, {54}, 2.0, 8.33), lanelet_json(65, exit_nw, {}, 2.0, 8.33)});

    sc.map_json =
        json{{"lanelets", lanelets},
             {"regulatory",
              {regulatory_json("right_of_way", {50}, {60}),
               regulatory_json("yield", {60}, {}, stop_line_across(entry_s, false)),
               regulatory_json("right_of_way", {52}, {62}),
               regulatory_json("yield", {62}, {}, stop_line_across(entry_ne, false)),
               regulatory_json("right_of_way", {54}, {64}),
               regulatory_json("yield", {64}, {}, stop_line_across(entry_nw, false))}},
             {"intersections",
              {intersection_json(200, {50}, {60, 55}), intersection_json(201, {52}, {62, 51}),
               intersection_json(202, {54}, {64, 53})}}};

    std::uniform_real_distribution<double> u(0.0, 1.0);

    VehiclePlan ring_car;  // circulating; passes the south merge on each lap
    ring_car.track_id = 1;
    ring_car.path = join({arcs[4], arcs[5], arcs[0], arcs[1], arcs[2], arcs[3], arcs[4], arcs[5],
                          arcs[0], arcs[1], exit_ne});
    ring_car.s0 = 2.0 + 1.0 * u(rng);
    ring_car.v0 = 7.0;
    ring_car.phases = {{16.0, 7.0}};
    emit_rows(ring_car, sc.rows);

    VehiclePlan enter_car;  // south entrance, yields to the circulating car
    enter_car.track_id = 2;
    enter_car.path = join({entry_s, arcs[0], arcs[1], exit_ne});
    enter_car.s0 = 1.5 + 1.0 * u(rng);
    enter_car.v0 = 6.0;
    double entry_len = Polyline(entry_s).length();
    double stop_at = entry_len - 5.0;  // hold clear of the merge conflict zone
    double brake = 2.0 * (stop_at - enter_car.s0 - 6.0 * 1.2) / 6.0;
    enter_car.phases = {{1.2, 6.0}, {brake, 0.0}, {5.0 - 1.2 - brake, 0.0}, {3.0, 6.0}, {8.0, 6.0}};
    emit_rows(enter_car, sc.rows);
    return sc;
}

}  // namespace

const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names{"straight",   "fork",       "four_arm",
                                                "t_junction", "roundabout", "queue"};
    return names;
}

Scenario generate_scenario(const std::string& name, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x5c3ab1e5u);
    Scenario sc;
    if (name == "straight") {
        sc = make_straight(rng);
    } else if (name == "fork") {
        sc = make_fork(rng, seed);
    } else if (name == "queue") {
        sc = make_queue(rng);
    } else if (name == "t_junction") {
        sc = make_t_junction(rng);
    } else if (name == "four_arm") {
        sc = make_four_arm(rng);
    } else if (name == "roundabout") {
        sc = make_roundabout(rng);
    } else {
        throw DataError("unknown scenario '" + name + "'");
    }
    sc.name = name;
    self_check(sc.rows);
    sc.map();  // round-trip through the loader so broken fixtures fail here
    return sc;
}

void write_scenario(const Scenario& sc, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream map_out(dir + "/map.json");
    if (!map_out) throw ParseError("cannot write " + dir + "/map.json");
    map_out << sc.map_json.dump(2) << "\n";
    write_tracks_csv(dir + "/tracks.csv", sc.rows, sc.frame_rate);
}

}  // namespace iamp
