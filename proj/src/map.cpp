#include "iamp/map.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "iamp/error.hpp"

namespace iamp {

using nlohmann::json;

double Lanelet::half_width_at(double s) const {
    const double L = centerline.length();
    if (s <= 0.0) return half_widths.front();
    if (s >= L) return half_widths.back();
    // centerline points are uniformly spaced in arc length of the midpoint
    // curve, so interpolate on the stored cumulative lengths
    for (std::size_t i = 1; i < centerline.size(); ++i) {
        double c = centerline.cum_at(i);
        if (s <= c) {
            double c0 = centerline.cum_at(i - 1);
            double t = c > c0 ? (s - c0) / (c - c0) : 0.0;
            return half_widths[i - 1] * (1.0 - t) + half_widths[i] * t;
        }
    }
    return half_widths.back();
}

LaneletMap::LaneletMap(std::map<int, Lanelet> lanelets, std::vector<RegulatoryElement> regulatory,
                       std::vector<Intersection> intersections)
    : lanelets_(std::move(lanelets)),
      regulatory_(std::move(regulatory)),
      intersections_(std::move(intersections)) {
    validate();
}

const Lanelet& LaneletMap::at(int id) const {
    auto it = lanelets_.find(id);
    if (it == lanelets_.end()) {
        throw ReferenceError("unknown lanelet id " + std::to_string(id));
    }
    return it->second;
}

const Intersection* LaneletMap::intersection_of(int lanelet_id) const {
    for (const auto& ix : intersections_) {
        if (std::find(ix.members.begin(), ix.members.end(), lanelet_id) != ix.members.end()) {
            return &ix;
        }
    }
    return nullptr;
}

void LaneletMap::validate() const {
    for (const auto& [id, ll] : lanelets_) {
        for (int s : ll.successors) {
            if (!contains(s)) {
                throw ReferenceError("lanelet " + std::to_string(id) +
                                     " references missing successor " + std::to_string(s));
            }
        }
        for (auto adj : {ll.adjacent_left, ll.adjacent_right}) {
            if (adj && !contains(*adj)) {
                throw ReferenceError("lanelet " + std::to_string(id) +
                                     " references missing neighbor " + std::to_string(*adj));
            }
        }
        if (ll.centerline.length() <= 0.0) {
            throw GeometryError("lanelet " + std::to_string(id) + " has zero-length centerline");
        }
    }
    for (const auto& reg : regulatory_) {
        for (int r : reg.refs) {
            if (!contains(r)) {
                throw ReferenceError("regulatory element references missing lanelet " +
                                     std::to_string(r));
            }
        }
        for (int r : reg.priority_over) {
            if (!contains(r)) {
                throw ReferenceError("regulatory element references missing lanelet " +
                                     std::to_string(r));
            }
        }
        if ((reg.kind == RegKind::yield || reg.kind == RegKind::stop_line) && !reg.stop_line) {
            throw ParseError("yield/stop_line regulatory element is missing its stop line");
        }
    }
    for (const auto& ix : intersections_) {
        if (ix.members.empty()) {
            throw ParseError("intersection " + std::to_string(ix.id) + " has no members");
        }
        for (int m : ix.members) {
            if (!contains(m)) {
                throw ReferenceError("intersection " + std::to_string(ix.id) +
                                     " references missing lanelet " + std::to_string(m));
            }
        }
        for (int e : ix.entrances) {
            if (!contains(e)) {
                throw ReferenceError("intersection " + std::to_string(ix.id) +
                                     " references missing lanelet " + std::to_string(e));
            }
        }
    }
}

namespace {

Polyline polyline_from_json(const json& arr, int lanelet_id, const char* which) {
    if (!arr.is_array() || arr.size() < 2) {
        throw GeometryError("lanelet " + std::to_string(lanelet_id) + " " + which +
                            " bound needs at least 2 points");
    }
    std::vector<Vec2> pts;
    pts.reserve(arr.size());
    for (const auto& p : arr) {
        if (!p.is_array() || p.size() != 2) {
            throw ParseError("lanelet " + std::to_string(lanelet_id) + " " + which +
                             " bound has a malformed point");
        }
        pts.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    return Polyline(std::move(pts));
}

// Midpoints of the two bounds after resampling both to a common point count
// (one point per 0.5 m of the longer bound).
void derive_centerline(Lanelet& ll) {
    double longer = std::max(ll.left_bound.length(), ll.right_bound.length());
    std::size_t n = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(longer / 0.5)) + 1);
    Polyline left = ll.left_bound.resampled_count(n);
    Polyline right = ll.right_bound.resampled_count(n);
    std::vector<Vec2> mid(n);
    ll.half_widths.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 a = left.points()[i], b = right.points()[i];
        mid[i] = (a + b) * 0.5;
        ll.half_widths[i] = 0.5 * (a - b).norm();
    }
    ll.centerline = Polyline(std::move(mid));
}

RegKind reg_kind_from_string(const std::string& s) {
    if (s == "right_of_way") return RegKind::right_of_way;
    if (s == "yield") return RegKind::yield;
    if (s == "stop_line") return RegKind::stop_line;
    throw ParseError("unknown regulatory kind '" + s + "'");
}

LaneletMap map_from_json(const json& j) {
    if (!j.is_object() || !j.contains("lanelets")) {
        throw ParseError("map file has no 'lanelets' array");
    }

    std::map<int, Lanelet> lanelets;
    for (const auto& lj : j.at("lanelets")) {
        Lanelet ll;
        ll.id = lj.at("id").get<int>();
        if (lanelets.count(ll.id)) {
            throw ParseError("duplicate lanelet id " + std::to_string(ll.id));
        }
        ll.left_bound = polyline_from_json(lj.at("left"), ll.id, "left");
        ll.right_bound = polyline_from_json(lj.at("right"), ll.id, "right");
        ll.successors = lj.at("successors").get<std::vector<int>>();
        if (lj.contains("adj_left") && !lj.at("adj_left").is_null()) {
            ll.adjacent_left = lj.at("adj_left").get<int>();
        }
        if (lj.contains("adj_right") && !lj.at("adj_right").is_null()) {
            ll.adjacent_right = lj.at("adj_right").get<int>();
        }
        ll.speed_limit = lj.at("speed_limit").get<double>();
        derive_centerline(ll);
        lanelets.emplace(ll.id, std::move(ll));
    }

    std::vector<RegulatoryElement> regulatory;
    if (j.contains("regulatory")) {
        for (const auto& rj : j.at("regulatory")) {
            RegulatoryElement reg;
            reg.kind = reg_kind_from_string(rj.at("kind").get<std::string>());
            reg.refs = rj.at("refs").get<std::vector<int>>();
            if (rj.contains("priority_over") && !rj.at("priority_over").is_null()) {
                reg.priority_over = rj.at("priority_over").get<std::vector<int>>();
            }
            if (rj.contains("stop_line") && !rj.at("stop_line").is_null()) {
                const auto& sl = rj.at("stop_line");
                if (!sl.is_array() || sl.size() != 2) {
                    throw ParseError("stop_line must be a 2-point segment");
                }
                reg.stop_line = {{{sl[0][0].get<double>(), sl[0][1].get<double>()},
                                  {sl[1][0].get<double>(), sl[1][1].get<double>()}}};
            }
            regulatory.push_back(std::move(reg));
        }
    }

    std::vector<Intersection> intersections;
    if (j.contains("intersections")) {
        for (const auto& ij : j.at("intersections")) {
            Intersection ix;
            ix.id = ij.at("id").get<int>();
            ix.members = ij.at("members").get<std::vector<int>>();
            if (ij.contains("entrances")) {
                ix.entrances = ij.at("entrances").get<std::vector<int>>();
            }
            intersections.push_back(std::move(ix));
        }
    }

    return LaneletMap(std::move(lanelets), std::move(regulatory), std::move(intersections));
}

}  // namespace

LaneletMap map_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("map JSON parse failed: ") + e.what());
    }
    try {
        return map_from_json(j);
    } catch (const json::exception& e) {
        throw ParseError(std::string("map JSON schema violation: ") + e.what());
    }
}

LaneletMap load_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open map file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return map_from_json_text(ss.str());
}

FrenetPoint project_to_centerline(const LaneletMap& map, int lanelet_id, Vec2 p, double gate) {
    const Lanelet& ll = map.at(lanelet_id);
    Projection proj = ll.centerline.project(p);
    if (proj.dist > gate) {
        throw GeometryError("point is " + std::to_string(proj.dist) + " m from centerline of lanelet " +
                            std::to_string(lanelet_id) + " (gate " + std::to_string(gate) + " m)");
    }
    return {proj.s, proj.d};
}

std::vector<int> match_lanelets(const LaneletMap& map, Vec2 p, double heading,
                                double lateral_slack) {
    std::vector<std::pair<double, int>> hits;
    for (const auto& [id, ll] : map.lanelets()) {
        Projection proj = ll.centerline.project(p);
        if (proj.dist > ll.half_width_at(proj.s) + lateral_slack) continue;
        double tangent_heading = ll.centerline.heading_at(proj.s);
        if (std::abs(wrap_angle(heading - tangent_heading)) > M_PI / 3.0) continue;
        hits.emplace_back(proj.dist, id);
    }
    std::sort(hits.begin(), hits.end());
    std::vector<int> out;
    out.reserve(hits.size());
    for (auto& [d, id] : hits) out.push_back(id);
    return out;
}

}  // namespace iamp
