#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iamp/geometry.hpp"

namespace iamp {

enum class RegKind { right_of_way, yield, stop_line };

struct RegulatoryElement {
    RegKind kind = RegKind::right_of_way;
    std::vector<int> refs;            // lanelets this element applies to
    std::vector<int> priority_over;   // lanelets that must yield to refs
    std::optional<std::array<Vec2, 2>> stop_line;
};

struct Intersection {
    int id = 0;
    std::vector<int> members;
    std::vector<int> entrances;
};

struct Lanelet {
    int id = 0;
    Polyline left_bound;
    Polyline right_bound;
    Polyline centerline;              // midpoints of the resampled bounds
    std::vector<double> half_widths;  // one per centerline point
    std::vector<int> successors;
    std::optional<int> adjacent_left;
    std::optional<int> adjacent_right;
    double speed_limit = 0.0;         // m/s

    double half_width_at(double s) const;
};

class LaneletMap {
public:
    LaneletMap() = default;
    LaneletMap(std::map<int, Lanelet> lanelets, std::vector<RegulatoryElement> regulatory,
               std::vector<Intersection> intersections);

    const Lanelet& at(int id) const;  // throws ReferenceError on unknown id
    bool contains(int id) const { return lanelets_.count(id) > 0; }
    const std::map<int, Lanelet>& lanelets() const { return lanelets_; }
    const std::vector<RegulatoryElement>& regulatory() const { return regulatory_; }
    const std::vector<Intersection>& intersections() const { return intersections_; }

    // Intersection containing the lanelet as a member, if any.
    const Intersection* intersection_of(int lanelet_id) const;

private:
    void validate() const;

    std::map<int, Lanelet> lanelets_;
    std::vector<RegulatoryElement> regulatory_;
    std::vector<Intersection> intersections_;
};

LaneletMap load_map(const std::string& path);
LaneletMap map_from_json_text(const std::string& text);

// Frenet projection onto one lanelet's centerline. Throws GeometryError when
// the point is farther than `gate` meters from the centerline.
struct FrenetPoint {
    double s = 0.0;
    double d = 0.0;
};
FrenetPoint project_to_centerline(const LaneletMap& map, int lanelet_id, Vec2 p,
                                  double gate = 10.0);

// Lanelets whose centerline is laterally close to p (within half width plus
// slack) with centerline heading within ±60° of the given heading. Sorted by
// lateral distance, nearest first.
std::vector<int> match_lanelets(const LaneletMap& map, Vec2 p, double heading,
                                double lateral_slack = 0.5);

}  // namespace iamp
