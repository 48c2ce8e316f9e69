#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iamp/geometry.hpp"

namespace iamp {

constexpr double kTrackDt = 0.1;  // s, the resampled grid

struct TrackPoint {
    double t = 0.0;
    Vec2 pos;
    double heading = 0.0;
    double v = 0.0;
    double a = 0.0;
};

struct Track {
    int id = 0;
    double length = 4.0;
    double width = 2.0;
    std::vector<TrackPoint> samples;  // uniform kTrackDt spacing

    double t_begin() const { return samples.empty() ? 0.0 : samples.front().t; }
    double t_end() const { return samples.empty() ? 0.0 : samples.back().t; }
    // linear interpolation inside the sampled span, nullopt outside
    std::optional<TrackPoint> at(double t) const;
};

struct Recording {
    int id = 0;
    double frame_rate = 25.0;
    std::vector<Track> tracks;
};

struct TrackDataset {
    std::vector<Recording> recordings;
};

// One CSV row before resampling. `a` is optional in the file; when the whole
// column is absent it is recomputed by central differences of v.
struct TrackRow {
    int recording_id = 0;
    int track_id = 0;
    long frame = 0;
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
    double v = 0.0;
    std::optional<double> a;
    double length = 4.0;
    double width = 2.0;
};

// Group rows by (recording, track), check frame monotonicity, and resample
// every channel onto the kTrackDt grid anchored at each track's first frame.
TrackDataset assemble_tracks(const std::vector<TrackRow>& rows, double frame_rate);

// Reads `path` plus its sidecar (same name, .json extension) for the frame
// rate. Column order is free; `a` may be missing.
TrackDataset ingest_tracks(const std::string& path);

// Writes the CSV and its frame-rate sidecar next to it.
void write_tracks_csv(const std::string& path, const std::vector<TrackRow>& rows,
                      double frame_rate);

std::string sidecar_path(const std::string& csv_path);

}  // namespace iamp
