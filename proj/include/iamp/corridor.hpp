#pragma once

#include <array>
#include <vector>

#include "iamp/geometry.hpp"
#include "iamp/map.hpp"

namespace iamp {

// One route hypothesis: an ordered lanelet sequence with an arc-length
// parameterized centerline. For lane-change corridors the departing lanelet
// is kept in lanelet_seq (it is where the vehicle currently is) but the
// centerline is built from the target lane onward, so geom_seq lists the
// lanelets that actually contribute geometry.
struct Corridor {
    int id = 0;
    int vehicle_id = 0;
    std::vector<int> lanelet_seq;
    std::vector<int> geom_seq;
    Polyline centerline;
    double length = 0.0;
    double start_s = 0.0;       // vehicle position along centerline at creation
    std::vector<double> curvature_profile;  // signed, one per centerline point
    std::vector<double> entry_s;            // geom_seq[i] spans [entry_s[i], entry_s[i+1])
    std::vector<double> seq_speed_limits;   // per geom_seq entry
    bool lane_change = false;

    std::size_t segment_at(double s) const;
    int lanelet_at(double s) const { return geom_seq[segment_at(s)]; }
    double speed_limit_at(double s) const { return seq_speed_limits[segment_at(s)]; }
    // position of the first point of lanelet `id` along the centerline
    double entry_of(int lanelet_id) const;
};

struct CorridorConfig {
    double a_max = 2.0;      // m/s^2, used in the travel-distance bound
    double horizon = 4.0;    // s
    double match_slack = 0.5;
};

// All corridors reachable within D = v*T + a_max*T^2/2, one per distinct
// successor path from each matched lanelet plus one per lane-change
// alternative from the nearest match. Deduplicated by lanelet_seq and sorted
// by it, ids assigned in that order. Throws GeometryError when the pose
// matches no lanelet.
std::vector<Corridor> enumerate_corridors(const LaneletMap& map, int vehicle_id, Vec2 pos,
                                          double heading, double v,
                                          const CorridorConfig& cfg = {});

// Integrated positive/negative curvature over 6 equal arc-length segments of
// the centerline ahead of start_s: [kp1..kp6, kn1..kn6], all >= 0.
std::array<double, 12> curvature_features(const Corridor& c);

}  // namespace iamp
