#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "iamp/accel.hpp"
#include "iamp/fusion.hpp"
#include "iamp/intention.hpp"
#include "iamp/markov.hpp"
#include "iamp/tracks.hpp"

namespace iamp {

enum class PredictionMode { baseline, hybrid };

struct PipelineConfig {
    PredictionMode mode = PredictionMode::baseline;
    std::uint64_t seed = 0;
    int repeats = 3;
    double eval_dt = 0.4;    // s between scored instants
    double horizon = 4.0;    // s of prediction / required history and future
    double min_corridor_prob = 0.02;  // corridors below this posterior are dropped
    double conflict_half_extent = 2.5;
    double comfort_lat_acc = 2.0;  // m/s^2 cap for curvature-limited speed
    double yield_clear_fraction = 0.95;  // blocker mass past the window = cleared
    FilterConfig filter;
    FusionConfig fusion;
    bool keep_grids = false;  // retain the final instant's grids for rendering
    bool trace = false;       // collect per-corridor posterior rows
};

struct StepMetric {
    int repeat = 0;
    double timestamp = 0.0;
    int vehicle_id = 0;
    double made = 0.0;
    double mfde = 0.0;
};

struct TraceRow {
    int repeat = 0;
    double timestamp = 0.0;
    int vehicle_id = 0;
    int corridor_id = 0;
    double prob = 0.0;
    double p_stop = 0.0;
    double ess = 0.0;
};

// Yield bookkeeping around one corridor dependency at one instant: how much
// of the dependent's interval occupancy sits inside its conflict window at
// each step, against how far the blocker has cleared its own window.
struct ConflictDiagnostic {
    int repeat = 0;
    double timestamp = 0.0;
    int dependent_vehicle = 0;
    int blocking_vehicle = 0;
    double dependent_corridor_prob = 0.0;  // posterior of the corridor pair involved
    double blocking_corridor_prob = 0.0;
    std::array<double, 10> dependent_in_window{};  // interval mass, conditional on the corridor
    std::array<double, 10> blocker_cleared{};      // end-of-step mass beyond the window
};

struct RunReport {
    std::string mode;
    std::uint64_t seed = 0;
    int repeats = 0;
    std::vector<StepMetric> rows;
    double mean_made = 0.0;
    double mean_mfde = 0.0;
    double mean_predict_seconds = 0.0;  // prediction stage per evaluation instant
    long n_instants = 0;
    std::vector<ConflictDiagnostic> conflicts;
    std::vector<TraceRow> trace;
    std::vector<MotionGrid> last_grids;           // when keep_grids
    std::vector<std::vector<Vec2>> last_truth;    // ground-truth futures for the same instant
};

// The full loop: intention filters advance at eval_dt; every vehicle with
// horizon seconds of both history and future is scored. `model` is required
// in hybrid mode and ignored otherwise.
RunReport run_prediction(const LaneletMap& map, const TrackDataset& data,
                         const TransitionMatrices& matrices, const ARModel* model,
                         const PipelineConfig& cfg);

// metrics.csv + summary.json (+ trace.csv when collected) under dir
void write_report(const RunReport& r, const std::string& dir);

struct LoadedReport {
    std::vector<StepMetric> rows;
    nlohmann::json summary;
};
LoadedReport load_report(const std::string& dir);

// Plain-text per-vehicle summary table; recomputes the averages from the
// rows and throws NumericError when they disagree with the stored summary.
std::string format_report_table(const LoadedReport& rep);

// (feature, target) pairs for the acceleration model: one sample per
// eligible vehicle and instant, on the corridor that best tracks the
// vehicle's actual future.
Dataset build_training_dataset(const LaneletMap& map, const TrackDataset& data);

}  // namespace iamp
