#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "iamp/corridor.hpp"
#include "iamp/geometry.hpp"
#include "iamp/map.hpp"
#include "iamp/markov.hpp"

namespace iamp {

struct FusionConfig {
    double resolution = 0.5;         // grid cell edge, m
    double lateral_halfwidth = 1.75;  // support of the triangular spread
    int lateral_samples = 8;          // even: samples stay off the cell edges
    int longitudinal_samples = 4;  // sub-samples along each s cell
    bool joint_min = false;        // report the (ADE, FDE) pair of the ADE winner
};

struct GridCell {
    std::int32_t x = 0;
    std::int32_t y = 0;
    bool operator<(const GridCell& o) const { return x != o.x ? x < o.x : y < o.y; }
    bool operator==(const GridCell& o) const { return x == o.x && y == o.y; }
};

struct CellMass {
    double total = 0.0;
    std::map<int, double> by_corridor;
};

struct MotionGrid {
    int vehicle_id = 0;
    int step = 0;
    double resolution = 0.5;
    std::map<GridCell, CellMass> cells;

    double total_mass() const;
    Vec2 cell_center(const GridCell& c) const;
};

// One corridor's share of a vehicle prediction. s_origin is the corridor arc
// that chain coordinate 0 maps onto, so chain cell i paints around
// s_origin + (i + 0.5) * ds.
struct CorridorPrediction {
    Corridor corridor;
    double prob = 0.0;
    double s_origin = 0.0;
    Discretization disc;
    std::vector<StateDistribution> steps;
};

// Paint every corridor's per-step chain distribution onto the shared 2D grid,
// scaled by the corridor probability. Returns one grid per horizon step.
std::vector<MotionGrid> render_grids(const std::vector<CorridorPrediction>& preds, int vehicle_id,
                                     const FusionConfig& cfg = {});

// Mass-weighted mean of the centerline points at the s-cell centers.
Vec2 expected_position(const StateDistribution& dist, const Discretization& disc,
                       const Corridor& corridor, double s_origin = 0.0);

struct PredictedTrack {
    int corridor_id = 0;
    std::vector<Vec2> positions;  // one per horizon step
};

// (mean, final) L2 distance between two equally long position sequences.
std::pair<double, double> ade_fde(const std::vector<Vec2>& predicted,
                                  const std::vector<Vec2>& truth);

// Per-metric minimum over corridors; joint_min instead returns both values of
// the corridor that wins on ADE.
std::pair<double, double> min_over_corridors(const std::vector<std::pair<double, double>>& per_k,
                                             bool joint_min = false);

void dump_grids_csv(std::ostream& out, const std::vector<MotionGrid>& grids, bool header = true);

// Lanelet outlines in light gray, grid cells shaded by mass, ground-truth
// tracks drawn on top.
void write_svg(const std::string& path, const LaneletMap& map,
               const std::vector<MotionGrid>& grids,
               const std::vector<std::vector<Vec2>>& truth);

}  // namespace iamp
