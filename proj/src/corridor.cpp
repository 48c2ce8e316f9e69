#include "iamp/corridor.hpp"

#include <algorithm>
#include <functional>

#include "iamp/error.hpp"

namespace iamp {

std::size_t Corridor::segment_at(double s) const {
    for (std::size_t i = 1; i < entry_s.size(); ++i) {
        if (s < entry_s[i]) return i - 1;
    }
    return geom_seq.size() - 1;
}

double Corridor::entry_of(int lanelet_id) const {
    for (std::size_t i = 0; i < geom_seq.size(); ++i) {
        if (geom_seq[i] == lanelet_id) return entry_s[i];
    }
    throw ReferenceError("lanelet " + std::to_string(lanelet_id) + " not in corridor " +
                         std::to_string(id));
}

namespace {

// Depth-first expansion over the successor graph: a path ends once the
// distance available past the vehicle reaches D (the lanelet crossing the
// boundary is kept whole) or at a dead end; lanelets never repeat in a path.
void expand_paths(const LaneletMap& map, std::vector<int>& path, double len, double need,
                  std::vector<std::vector<int>>& out) {
    if (len >= need) {
        out.push_back(path);
        return;
    }
    const auto& succs = map.at(path.back()).successors;
    std::vector<int> usable;
    for (int s : succs) {
        if (std::find(path.begin(), path.end(), s) == path.end()) usable.push_back(s);
    }
    if (usable.empty()) {
        out.push_back(path);
        return;
    }
    for (int s : usable) {
        path.push_back(s);
        expand_paths(map, path, len + map.at(s).centerline.length(), need, out);
        path.pop_back();
    }
}

Corridor build_corridor(const LaneletMap& map, int vehicle_id, const std::vector<int>& geom_seq,
                        Vec2 pos) {
    Corridor c;
    c.vehicle_id = vehicle_id;
    c.geom_seq = geom_seq;
    c.lanelet_seq = geom_seq;
    c.entry_s.reserve(geom_seq.size() + 1);
    c.entry_s.push_back(0.0);
    for (std::size_t i = 0; i < geom_seq.size(); ++i) {
        const Lanelet& ll = map.at(geom_seq[i]);
        if (i == 0) {
            c.centerline = ll.centerline;
        } else {
            c.centerline.append(ll.centerline, 0.25);
        }
        c.entry_s.push_back(c.centerline.length());
        c.seq_speed_limits.push_back(ll.speed_limit);
    }
    c.length = c.centerline.length();
    c.start_s = c.centerline.project(pos).s;
    c.curvature_profile = sample_curvature(c.centerline);
    return c;
}

}  // namespace

std::vector<Corridor> enumerate_corridors(const LaneletMap& map, int vehicle_id, Vec2 pos,
                                          double heading, double v, const CorridorConfig& cfg) {
    std::vector<int> matches = match_lanelets(map, pos, heading, cfg.match_slack);
    if (matches.empty()) {
        throw GeometryError("vehicle " + std::to_string(vehicle_id) +
                            " pose matches no lanelet (off-map)");
    }

    const double D = v * cfg.horizon + 0.5 * cfg.a_max * cfg.horizon * cfg.horizon;

    struct Candidate {
        std::vector<int> geom;
        bool lane_change = false;
        int from = -1;  // departing lanelet for lane changes
    };
    std::vector<Candidate> candidates;

    for (int root : matches) {
        double s0 = map.at(root).centerline.project(pos).s;
        std::vector<int> path{root};
        std::vector<std::vector<int>> paths;
        expand_paths(map, path, map.at(root).centerline.length() - s0, D, paths);
        for (auto& p : paths) candidates.push_back({std::move(p), false, -1});
    }

    // lane-change hypotheses start from the nearest matched lanelet only
    const Lanelet& cur = map.at(matches.front());
    for (auto adj : {cur.adjacent_left, cur.adjacent_right}) {
        if (!adj) continue;
        const Lanelet& target = map.at(*adj);
        double s0 = target.centerline.project(pos).s;
        std::vector<int> path{*adj};
        std::vector<std::vector<int>> paths;
        expand_paths(map, path, target.centerline.length() - s0, D, paths);
        for (auto& p : paths) candidates.push_back({std::move(p), true, cur.id});
    }

    std::vector<Corridor> corridors;
    for (auto& cand : candidates) {
        Corridor c = build_corridor(map, vehicle_id, cand.geom, pos);
        if (cand.lane_change) {
            c.lane_change = true;
            c.lanelet_seq.insert(c.lanelet_seq.begin(), cand.from);
        }
        corridors.push_back(std::move(c));
    }

    std::sort(corridors.begin(), corridors.end(),
              [](const Corridor& a, const Corridor& b) { return a.lanelet_seq < b.lanelet_seq; });
    corridors.erase(std::unique(corridors.begin(), corridors.end(),
                                [](const Corridor& a, const Corridor& b) {
                                    return a.lanelet_seq == b.lanelet_seq;
                                }),
                    corridors.end());
    for (std::size_t i = 0; i < corridors.size(); ++i) corridors[i].id = static_cast<int>(i);
    return corridors;
}

std::array<double, 12> curvature_features(const Corridor& c) {
    std::array<double, 12> out{};
    const double ahead = c.length - c.start_s;
    if (ahead <= 1e-9) return out;

    // curvature estimated on a fixed fine resampling so the result does not
    // depend on how the source centerline happened to be sampled
    std::size_t npts = std::max<std::size_t>(3, static_cast<std::size_t>(std::ceil(ahead / 0.25)) + 1);
    std::vector<Vec2> pts(npts);
    for (std::size_t i = 0; i < npts; ++i) {
        pts[i] = c.centerline.point_at(c.start_s + ahead * static_cast<double>(i) / static_cast<double>(npts - 1));
    }
    Polyline fine(std::move(pts));
    std::vector<double> k = sample_curvature(fine);
    // endpoints have no three-point estimate; extend the neighbors
    if (k.size() >= 3) {
        k.front() = k[1];
        k.back() = k[k.size() - 2];
    }

    // midpoint-rule integration into 6 equal arc-length bins
    const double L = fine.length();
    const int steps = 2000;
    const double h = L / steps;
    std::size_t i = 1;
    for (int j = 0; j < steps; ++j) {
        double s = (j + 0.5) * h;
        // linear interpolation of the vertex curvature samples
        double kv;
        {
            while (i + 1 < fine.size() && fine.cum_at(i) < s) ++i;
            double c0 = fine.cum_at(i - 1), c1 = fine.cum_at(i);
            double t = c1 > c0 ? (s - c0) / (c1 - c0) : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            kv = k[i - 1] * (1.0 - t) + k[i] * t;
        }
        int bin = std::min(5, static_cast<int>(s / L * 6.0));
        if (kv > 0.0) {
            out[bin] += kv * h;
        } else {
            out[6 + bin] += -kv * h;
        }
    }
    return out;
}

}  // namespace iamp
