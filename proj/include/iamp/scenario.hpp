#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "iamp/map.hpp"
#include "iamp/tracks.hpp"

namespace iamp {

// A synthetic fixture: a map (as loader-ready JSON) plus raw 25 Hz track rows.
struct Scenario {
    std::string name;
    nlohmann::json map_json;
    std::vector<TrackRow> rows;
    double frame_rate = 25.0;

    LaneletMap map() const { return map_from_json_text(map_json.dump()); }
    TrackDataset dataset() const { return assemble_tracks(rows, frame_rate); }
};

const std::vector<std::string>& scenario_names();

// Deterministic per (name, seed). Generated tracks are chord-consistent:
// x(t+dt) - x(t) == v(t) * dt * cos(heading(t)) exactly, and likewise for y.
Scenario generate_scenario(const std::string& name, std::uint64_t seed);

// map.json, tracks.csv and tracks.json under dir (created if missing).
void write_scenario(const Scenario& sc, const std::string& dir);

}  // namespace iamp
