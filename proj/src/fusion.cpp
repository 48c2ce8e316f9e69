#include "iamp/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>

#include "iamp/error.hpp"

namespace iamp {

double MotionGrid::total_mass() const {
    double t = 0.0;
    for (const auto& [cell, mass] : cells) t += mass.total;
    return t;
}

Vec2 MotionGrid::cell_center(const GridCell& c) const {
    return {(c.x + 0.5) * resolution, (c.y + 0.5) * resolution};
}

namespace {

GridCell cell_of(Vec2 p, double res) {
    return {static_cast<std::int32_t>(std::floor(p.x / res)),
            static_cast<std::int32_t>(std::floor(p.y / res))};
}

// Normalized triangular weights at the lateral sample offsets.
struct LateralKernel {
    std::vector<double> offsets;
    std::vector<double> weights;
};

LateralKernel make_kernel(const FusionConfig& cfg) {
    LateralKernel k;
    int n = std::max(1, cfg.lateral_samples);
    double h = cfg.lateral_halfwidth;
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
        double d = n == 1 ? 0.0 : -h + (j + 0.5) * (2.0 * h / n);
        double w = 1.0 - std::abs(d) / h;
        k.offsets.push_back(d);
        k.weights.push_back(w);
        total += w;
    }
    for (auto& w : k.weights) w /= total;
    return k;
}

}  // namespace

std::vector<MotionGrid> render_grids(const std::vector<CorridorPrediction>& preds, int vehicle_id,
                                     const FusionConfig& cfg) {
    if (preds.empty()) throw DimensionError("render_grids: no corridor predictions");
    double prob_sum = 0.0;
    std::size_t n_steps = preds.front().steps.size();
    for (const auto& pr : preds) {
        prob_sum += pr.prob;
        if (pr.steps.size() != n_steps) {
            throw DimensionError("render_grids: corridor horizons differ");
        }
    }
    if (std::abs(prob_sum - 1.0) > 1e-6) {
        throw NumericError("render_grids: corridor probabilities sum to " +
                           std::to_string(prob_sum));
    }

    const auto kernel = make_kernel(cfg);
    const int n_long = std::max(1, cfg.longitudinal_samples);

    std::vector<MotionGrid> grids(n_steps);
    for (std::size_t k = 0; k < n_steps; ++k) {
        auto& g = grids[k];
        g.vehicle_id = vehicle_id;
        g.step = static_cast<int>(k);
        g.resolution = cfg.resolution;
        for (const auto& pr : preds) {
            const auto& line = pr.corridor.centerline;
            auto s_mass = s_marginal(pr.disc, pr.steps[k].p);
            for (int is = 0; is < pr.disc.n_s; ++is) {
                double m = s_mass[static_cast<std::size_t>(is)];
                if (m <= 0.0) continue;
                double chunk = m * pr.prob / n_long;
                for (int q = 0; q < n_long; ++q) {
                    double arc =
                        pr.s_origin + (is + (q + 0.5) / n_long) * pr.disc.ds;
                    arc = std::clamp(arc, 0.0, line.length());
                    Vec2 pos = line.point_at(arc);
                    Vec2 tan = line.tangent_at(arc);
                    Vec2 normal{-tan.y, tan.x};
                    for (std::size_t j = 0; j < kernel.offsets.size(); ++j) {
                        Vec2 p = pos + normal * kernel.offsets[j];
                        auto& cell = g.cells[cell_of(p, cfg.resolution)];
                        double add = chunk * kernel.weights[j];
                        cell.total += add;
                        cell.by_corridor[pr.corridor.id] += add;
                    }
                }
            }
        }
    }
    return grids;
}

Vec2 expected_position(const StateDistribution& dist, const Discretization& disc,
                       const Corridor& corridor, double s_origin) {
    auto s_mass = s_marginal(disc, dist.p);
    double total = 0.0;
    Vec2 acc{0.0, 0.0};
    for (int is = 0; is < disc.n_s; ++is) {
        double m = s_mass[static_cast<std::size_t>(is)];
        if (m <= 0.0) continue;
        double arc = std::clamp(s_origin + disc.s_center(is), 0.0, corridor.centerline.length());
        acc = acc + corridor.centerline.point_at(arc) * m;
        total += m;
    }
    if (total <= 0.0) throw NumericError("expected_position: zero-mass distribution");
    return acc * (1.0 / total);
}

std::pair<double, double> ade_fde(const std::vector<Vec2>& predicted,
                                  const std::vector<Vec2>& truth) {
    if (predicted.empty() || predicted.size() != truth.size()) {
        throw DimensionError("ade_fde: tracks must be non-empty and equally long");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        sum += (predicted[i] - truth[i]).norm();
    }
    return {sum / static_cast<double>(predicted.size()), (predicted.back() - truth.back()).norm()};
}

std::pair<double, double> min_over_corridors(const std::vector<std::pair<double, double>>& per_k,
                                             bool joint_min) {
    if (per_k.empty()) throw DimensionError("min_over_corridors: empty metric list");
    if (joint_min) {
        return *std::min_element(per_k.begin(), per_k.end(),
                                 [](const auto& a, const auto& b) { return a.first < b.first; });
    }
    double made = std::numeric_limits<double>::infinity();
    double mfde = std::numeric_limits<double>::infinity();
    for (const auto& [ade, fde] : per_k) {
        made = std::min(made, ade);
        mfde = std::min(mfde, fde);
    }
    return {made, mfde};
}

void dump_grids_csv(std::ostream& out, const std::vector<MotionGrid>& grids, bool header) {
    if (header) out << "vehicle_id,step,cell_x,cell_y,mass\n";
    char buf[128];
    for (const auto& g : grids) {
        for (const auto& [cell, mass] : g.cells) {
            Vec2 c = g.cell_center(cell);
            std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g\n", g.vehicle_id, g.step, c.x,
                          c.y, mass.total);
            out << buf;
        }
    }
}

namespace {

struct Bounds {
    double min_x = std::numeric_limits<double>::infinity();
    double min_y = std::numeric_limits<double>::infinity();
    double max_x = -std::numeric_limits<double>::infinity();
    double max_y = -std::numeric_limits<double>::infinity();

    void take(Vec2 p) {
        min_x = std::min(min_x, p.x);
        min_y = std::min(min_y, p.y);
        max_x = std::max(max_x, p.x);
        max_y = std::max(max_y, p.y);
    }
};

}  // namespace

void write_svg(const std::string& path, const LaneletMap& map,
               const std::vector<MotionGrid>& grids,
               const std::vector<std::vector<Vec2>>& truth) {
    Bounds b;
    for (const auto& [id, ll] : map.lanelets()) {
        for (const auto& p : ll.left_bound.points()) b.take(p);
        for (const auto& p : ll.right_bound.points()) b.take(p);
    }
    for (const auto& g : grids) {
        for (const auto& [cell, mass] : g.cells) b.take(g.cell_center(cell));
    }
    for (const auto& t : truth) {
        for (const auto& p : t) b.take(p);
    }
    if (!std::isfinite(b.min_x)) {
        b.min_x = b.min_y = 0.0;
        b.max_x = b.max_y = 1.0;
    }
    double pad = 5.0;
    b.min_x -= pad;
    b.min_y -= pad;
    b.max_x += pad;
    b.max_y += pad;
    const double k = 8.0;  // px per meter
    auto px = [&](Vec2 p) { return Vec2{(p.x - b.min_x) * k, (b.max_y - p.y) * k}; };

    std::ofstream out(path);
    if (!out) throw ParseError("cannot write svg: " + path);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                  "viewBox=\"0 0 %.0f %.0f\">\n",
                  (b.max_x - b.min_x) * k, (b.max_y - b.min_y) * k, (b.max_x - b.min_x) * k,
                  (b.max_y - b.min_y) * k);
    out << buf;
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    auto polyline = [&](const Polyline& line, const char* style) {
        out << "<polyline fill=\"none\" " << style << " points=\"";
        for (const auto& p : line.points()) {
            Vec2 q = px(p);
            std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", q.x, q.y);
            out << buf;
        }
        out << "\"/>\n";
    };
    for (const auto& [id, ll] : map.lanelets()) {
        polyline(ll.left_bound, "stroke=\"#bbbbbb\" stroke-width=\"1\"");
        polyline(ll.right_bound, "stroke=\"#bbbbbb\" stroke-width=\"1\"");
    }

    double max_mass = 0.0;
    for (const auto& g : grids) {
        for (const auto& [cell, mass] : g.cells) max_mass = std::max(max_mass, mass.total);
    }
    for (const auto& g : grids) {
        for (const auto& [cell, mass] : g.cells) {
            Vec2 c = g.cell_center(cell);
            Vec2 corner = px({c.x - g.resolution / 2, c.y + g.resolution / 2});
            double alpha = max_mass > 0.0 ? 0.85 * mass.total / max_mass : 0.0;
            std::snprintf(buf, sizeof(buf),
                          "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" "
                          "fill=\"#1f77b4\" fill-opacity=\"%.3f\"/>\n",
                          corner.x, corner.y, g.resolution * k, g.resolution * k, alpha);
            out << buf;
        }
    }

    for (const auto& t : truth) {
        if (t.empty()) continue;
        out << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"";
        for (const auto& p : t) {
            Vec2 q = px(p);
            std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", q.x, q.y);
            out << buf;
        }
        out << "\"/>\n";
        Vec2 q = px(t.back());
        std::snprintf(buf, sizeof(buf), "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\" fill=\"black\"/>\n",
                      q.x, q.y);
        out << buf;
    }
    out << "</svg>\n";
}

}  // namespace iamp
