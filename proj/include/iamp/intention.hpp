#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "iamp/corridor.hpp"
#include "iamp/map.hpp"
#include "iamp/relations.hpp"

namespace iamp {

enum class Maneuver { stop, go };

// One hypothesis about the vehicle: which maneuver traffic demands of it (E),
// what it actually intends (I), which corridor it follows (R), and where it
// is along that corridor.
struct Particle {
    Maneuver E = Maneuver::go;
    Maneuver I = Maneuver::go;
    int R = 0;               // corridor id
    double s = 0.0;          // m along the corridor centerline
    double v = 0.0;          // m/s, never negative
    double curvature = 0.0;  // 1/m at s
    double weight = 0.0;
};

struct Measurement {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
    double v = 0.0;
    double timestamp = 0.0;
};

struct IntentionPosterior {
    int vehicle_id = 0;
    std::map<int, double> corridor_probs;  // corridor id -> probability, sums to 1
    std::map<int, double> p_stop;          // intersection id -> P(stop | still approaching)
    double effective_sample_size = 0.0;
};

struct FilterConfig {
    int n_particles = 200;
    double sigma_xy = 0.5;        // m, measurement position noise
    double sigma_v = 0.5;         // m/s, measurement speed noise
    double sigma_a = 0.5;         // m/s^2, process acceleration noise
    double gap_slope = 1.0;       // 1/s, steepness of the gap-acceptance curve
    double priority_bonus = 4.0;  // gap-argument bonus when we have right of way
    double horizon = 4.0;         // s; intersections further out exert no pull
    double compliance = 0.9;      // P(I = E) when the intention is redrawn
    double stickiness = 0.7;      // P(I keeps its previous value)
    double route_persistence = 0.95;  // P(R unchanged) at a branch point
    double v_limit_factor = 1.2;      // hard speed cap as a multiple of the limit
    double stop_margin = 1.0;         // m short of the entry a stopping vehicle aims for
    double fork_decision_threshold = 0.8;  // reporting threshold for a settled route
};

// Cross-vehicle situation attached to one corridor: where it enters
// intersections, and when conflicting traffic reaches the next one.
struct InfluenceEntry {
    double t_arrival = 0.0;     // other vehicle's time to the intersection, s
    bool yields_to_us = false;  // regulation puts us first
};

struct CorridorContext {
    int corridor_id = -1;
    // (intersection id, absolute arc of its first member lanelet), ascending
    std::vector<std::pair<int, double>> entries;
    std::vector<InfluenceEntry> influence;  // traffic at the next entry ahead
};

// Snapshot of the situation for every corridor of `target_vehicle_id`.
// `all_corridors` must hold every vehicle's corridors so conflicting traffic
// can be found; the returned contexts cover only the target's.
std::vector<CorridorContext> build_contexts(const LaneletMap& map,
                                            const std::vector<Corridor>& all_corridors,
                                            const std::vector<VehicleState>& vehicles,
                                            int target_vehicle_id);

// Particles spread round-robin over the corridors, each placed at the
// projection of z0 onto its corridor, with uniform weights.
// Throws DataError when `corridors` is empty.
std::vector<Particle> init_filter(const std::vector<Corridor>& corridors, const Measurement& z0,
                                  int n_particles);

// One prediction step: draw the expected maneuver from gap acceptance, let the
// intention follow it sluggishly, occasionally re-draw the corridor at branch
// points, then advance the physical state with intention-dependent
// acceleration plus process noise.
void predict_step(std::vector<Particle>& particles, const std::vector<CorridorContext>& contexts,
                  const std::vector<Corridor>& corridors, double dt, std::mt19937_64& rng,
                  const FilterConfig& cfg = {});

// Measurement update: Gaussian position/speed likelihood, weight
// normalization, marginals by weight summation, then systematic resampling
// when the effective sample size drops below half the particle count.
// When every likelihood underflows the filter reinitializes from z (logged to
// stderr); `reinitialized`, when given, reports that this happened.
IntentionPosterior update_step(std::vector<Particle>& particles, const Measurement& z,
                               const std::vector<Corridor>& corridors,
                               const std::vector<CorridorContext>& contexts,
                               std::mt19937_64& rng, const FilterConfig& cfg = {},
                               bool* reinitialized = nullptr);

// Owns the particle set, corridor hypotheses and RNG for one vehicle.
// Deterministic for a fixed (global seed, vehicle id) pair.
class IntentionFilter {
public:
    IntentionFilter(std::vector<Corridor> corridors, std::vector<CorridorContext> contexts,
                    const Measurement& z0, std::uint64_t global_seed, FilterConfig cfg = {});

    // refresh the cross-vehicle situation before the next step
    void set_contexts(std::vector<CorridorContext> contexts);

    // predict over dt, then assimilate z
    IntentionPosterior step(const Measurement& z, double dt);

    const std::vector<Particle>& particles() const { return particles_; }
    const std::vector<Corridor>& corridors() const { return corridors_; }
    int vehicle_id() const { return vehicle_id_; }
    int reinit_count() const { return reinit_count_; }

private:
    FilterConfig cfg_;
    std::vector<Corridor> corridors_;
    std::vector<CorridorContext> contexts_;
    std::vector<Particle> particles_;
    std::mt19937_64 rng_;
    int vehicle_id_ = 0;
    int reinit_count_ = 0;
};

}  // namespace iamp
