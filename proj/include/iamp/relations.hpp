#pragma once

#include <optional>
#include <vector>

#include "iamp/corridor.hpp"
#include "iamp/map.hpp"

namespace iamp {

struct VehicleState {
    int id = 0;
    Vec2 pos;
    double heading = 0.0;
    double v = 0.0;
    double a = 0.0;
    double length = 4.0;
    double width = 2.0;
};

// leader = nearest vehicle ahead on one of the target's corridors
struct LateralRelation {
    int target_vehicle_id = 0;
    std::optional<int> leader_vehicle_id;
    double d_lead = 0.0;  // bumper-to-bumper gap, m
    double v_lead = 0.0;
};

struct IntersectionRelation {
    int vehicle_id = 0;
    int corridor_id = 0;
    int intersection_id = 0;
    double d_int = 0.0;   // arc length from the vehicle to the first member lanelet
    int entrance_id = -1; // lanelet through which the corridor enters, if declared
};

struct CorridorDependency {
    int dependent_vehicle_id = 0;
    int dependent_corridor_id = 0;
    int blocking_vehicle_id = 0;
    int blocking_corridor_id = 0;
    double conflict_s_dependent = 0.0;
    double conflict_s_blocking = 0.0;
};

// Regulatory standing of a corridor: 0 = has right of way, 1 = unregulated,
// 2 = must yield.
int regulatory_score(const LaneletMap& map, const Corridor& c);

std::vector<LateralRelation> lateral_relations(const std::vector<VehicleState>& vehicles,
                                               const std::vector<Corridor>& corridors);

std::vector<IntersectionRelation> intersection_relations(const LaneletMap& map,
                                                         const std::vector<Corridor>& corridors);

// Pairwise centerline conflicts between corridors of distinct vehicles,
// directed by the rule set in choose_dependent(); at most one blocking
// corridor per dependent corridor (the nearest upcoming conflict), acyclic
// within each intersection.
std::vector<CorridorDependency> corridor_dependencies(const LaneletMap& map,
                                                      const std::vector<Corridor>& corridors,
                                                      const std::vector<VehicleState>& vehicles);

// Direction rule for one conflicting pair, isolated so it can be swapped out:
// (1) regulatory right of way wins; (2) otherwise the later constant-velocity
// arrival at the conflict yields; (3) arrival within 0.2 s resolved by
// vehicle id (larger yields). Returns true when `a` is the dependent side.
bool choose_dependent(int score_a, double arrival_a, int vehicle_a,
                      int score_b, double arrival_b, int vehicle_b);

// The (up to) two vehicles most influencing the target at its next
// intersection: smallest time-to-conflict among vehicles whose corridors
// pass the same intersection. p_rel is +1 when the influencer has priority
// over the target, -1 when the target has priority, 0 otherwise.
struct Influencer {
    int vehicle_id = 0;
    double d_int = 0.0;
    double v = 0.0;
    double p_rel = 0.0;
};
std::vector<Influencer> select_influencers(const LaneletMap& map,
                                           const std::vector<Corridor>& corridors,
                                           const std::vector<VehicleState>& vehicles,
                                           int target_vehicle_id, int target_corridor_id);

}  // namespace iamp
