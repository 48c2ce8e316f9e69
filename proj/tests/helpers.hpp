#pragma once

#include <vector>

#include "json.hpp"

#include "iamp/map.hpp"

namespace testutil {

// straight lanelet with bounds +-2 m in y around the a->b line
inline nlohmann::json lanelet_between(int id, iamp::Vec2 a, iamp::Vec2 b, std::vector<int> succ,
                                      double half_width = 2.0, double speed_limit = 13.89) {
    // offset the bounds perpendicular to the segment
    iamp::Vec2 d = b - a;
    double n = d.norm();
    iamp::Vec2 left{-d.y / n * half_width, d.x / n * half_width};
    return nlohmann::json{
        {"id", id},
        {"left", {{a.x + left.x, a.y + left.y}, {b.x + left.x, b.y + left.y}}},
        {"right", {{a.x - left.x, a.y - left.y}, {b.x - left.x, b.y - left.y}}},
        {"successors", succ},
        {"adj_left", nullptr},
        {"adj_right", nullptr},
        {"speed_limit", speed_limit}};
}

inline iamp::LaneletMap make_map(std::vector<nlohmann::json> lanelets,
                                 nlohmann::json regulatory = nlohmann::json::array(),
                                 nlohmann::json intersections = nlohmann::json::array()) {
    nlohmann::json j{{"lanelets", lanelets},
                     {"regulatory", regulatory},
                     {"intersections", intersections}};
    return iamp::map_from_json_text(j.dump());
}

}  // namespace testutil
