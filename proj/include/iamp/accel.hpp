#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "iamp/corridor.hpp"
#include "iamp/markov.hpp"
#include "iamp/relations.hpp"

namespace iamp {

inline constexpr int kHistorySteps = 10;     // 4 s of history on a 0.4 s grid
inline constexpr int kFeaturesPerStep = 22;  // see extract_features
inline constexpr int kFeatureDim = kHistorySteps * kFeaturesPerStep;
inline constexpr int kProfileLen = 40;       // 4 s of acceleration at 0.1 s

// raw ingredients of one history sample, before gridding
struct StepObservation {
    double t = 0.0;
    double a = 0.0;  // own longitudinal acceleration, m/s^2
    double v = 0.0;  // own speed, m/s
    double s = 0.0;  // own arc position along the corridor, m
    std::optional<LateralRelation> lead;
    std::vector<Influencer> influencers;  // ascending time-to-conflict
};

// 220 values, row-major [history step][feature]; per step:
// a_in, d_lead, v_lead, d_int_target, kp1..kp6, kn1..kn6,
// then (d_int, v_int, p_int) for the two most pressing vehicles.
// Absent leaders read (100 m, own speed); absent intersection vehicles read
// (100 m, 0 m/s, priority 0). Distances are capped at the 100 m sentinel.
using FeatureVector = std::vector<double>;
using AccelProfile = std::vector<double>;

// Evaluate the 22 feature channels at every raw observation, then linearly
// interpolate each channel onto the ten 0.4 s grid points ending at the
// newest observation. `entries` lists (intersection id, absolute entry arc)
// along the corridor, as produced for the intention filter.
// Throws DataError when the history spans less than the grid or has gaps
// wider than 0.4 s.
FeatureVector extract_features(const std::vector<StepObservation>& history, const Corridor& c,
                               const std::vector<std::pair<int, double>>& entries);

struct ARModel {
    int in_dim = kFeatureDim;
    int out_dim = kProfileLen;
    std::vector<double> W;  // out_dim x in_dim, row-major
    std::vector<double> b;  // out_dim
    std::vector<double> feat_min, feat_max;  // per input feature, max > min
    std::uint64_t seed = 0;
    int epochs = 0;
    std::vector<double> loss_history;  // per-epoch mean of MSE + MAE
};

struct TrainConfig {
    int epochs = 50;
    int batch_size = 32;
    double lr_max = 0.01;
    double lr_min = 1e-4;
    int restart_period = 10;  // cosine schedule restarts, epochs
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
};

// Minimize mean squared error plus mean absolute error with adaptive-moment
// gradient descent over shuffled mini-batches; the learning rate follows a
// cosine curve restarting every `restart_period` epochs. Features are min-max
// normalized to [0, 1] with ranges learned here and stored in the model.
// Deterministic for a fixed seed. Throws DataError on an empty or ragged
// dataset and NumericError when the loss stops being finite.
ARModel train(const std::vector<FeatureVector>& features,
              const std::vector<AccelProfile>& targets, const TrainConfig& cfg = {});

// y = W * normalize(x) + b, clamped to [-3, 2] m/s^2 unless `clamp` is off.
// Throws DimensionError when x does not match the model input size.
AccelProfile infer(const ARModel& model, const FeatureVector& x, bool clamp = true);

void save_model(const ARModel& model, const std::string& path);
ARModel load_model(const std::string& path);

// One 0.4 s slice of the profile as a normal law over the input cells.
struct AccelStep {
    double mu = 0.0;
    double sigma = 0.0;
    std::vector<double> cell_mass;  // one entry per input cell, sums to 1
};

// Split the 40-sample profile into ten groups of four, fit mean/std per group
// (std floored at sigma_floor), and integrate the normal density over each
// input cell's acceleration interval, renormalized over the full input range.
std::vector<AccelStep> profile_to_distributions(const AccelProfile& profile,
                                                const Discretization& disc,
                                                double sigma_floor = 0.1);

struct Dataset {
    std::vector<FeatureVector> features;
    std::vector<AccelProfile> targets;
};

// CSV with a header row and 220 + 40 numeric columns per data row.
Dataset load_dataset_csv(const std::string& path);
void save_dataset_csv(const Dataset& ds, const std::string& path);

}  // namespace iamp
