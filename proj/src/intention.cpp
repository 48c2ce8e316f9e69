#include "iamp/intention.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "iamp/error.hpp"

namespace iamp {

namespace {

const Corridor& corridor_by_id(const std::vector<Corridor>& corridors, int id) {
    for (const auto& c : corridors) {
        if (c.id == id) return c;
    }
    throw ReferenceError("particle references unknown corridor " + std::to_string(id));
}

const CorridorContext* context_of(const std::vector<CorridorContext>& contexts, int id) {
    for (const auto& c : contexts) {
        if (c.corridor_id == id) return &c;
    }
    return nullptr;
}

double curvature_at(const Corridor& c, double s) {
    const Polyline& line = c.centerline;
    std::size_t lo = 0, hi = line.size() - 1;
    while (lo + 1 < hi) {
        std::size_t mid = (lo + hi) / 2;
        (line.cum_at(mid) <= s ? lo : hi) = mid;
    }
    double seg = line.cum_at(hi) - line.cum_at(lo);
    double t = seg > 0.0 ? std::clamp((s - line.cum_at(lo)) / seg, 0.0, 1.0) : 0.0;
    return (1.0 - t) * c.curvature_profile[lo] + t * c.curvature_profile[hi];
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// next intersection entry at or ahead of s (with a small grace band so a
// vehicle on the entry line still counts as approaching)
const std::pair<int, double>* next_entry(const CorridorContext* ctx, double s) {
    if (!ctx) return nullptr;
    for (const auto& e : ctx->entries) {
        if (e.second >= s - 2.0) return &e;
    }
    return nullptr;
}

// chance of proceeding, given the time gap to the most pressing conflicting
// vehicle and our regulatory standing against it
double p_go(const Particle& p, const CorridorContext* ctx, const FilterConfig& cfg) {
    const auto* entry = next_entry(ctx, p.s);
    if (!entry) return 1.0;
    double t_self = (entry->second - p.s) / std::max(p.v, 0.1);
    if (t_self > cfg.horizon) return 1.0;

    double worst = std::numeric_limits<double>::infinity();
    for (const auto& inf : ctx->influence) {
        double arg = cfg.gap_slope * (inf.t_arrival - t_self) +
                     (inf.yields_to_us ? cfg.priority_bonus : 0.0);
        worst = std::min(worst, arg);
    }
    if (!std::isfinite(worst)) return 1.0;
    return logistic(worst);
}

// deceleration that reaches v = 0 at the next entry; a gentle constant brake
// when no intersection lies ahead
double stop_accel(const Particle& p, const CorridorContext* ctx, const FilterConfig& cfg) {
    const auto* entry = next_entry(ctx, p.s);
    if (!entry) return -1.0;
    // aim a little short of the entry, where a stop line would be; that also
    // absorbs the discrete integration overshoot of the inverse-distance law
    double to_line = entry->second - cfg.stop_margin - p.s;
    double a = -p.v * p.v / (2.0 * std::max(to_line, 0.3));
    // commit close to the line instead of creeping asymptotically
    if (to_line < 2.0) a = std::min(a, -1.0);
    return std::clamp(a, -3.0, 0.0);
}

// corridors sharing the particle's current lanelet, with s carried over
struct RouteOption {
    int corridor_id;
    double s;
};

std::vector<RouteOption> route_options(const std::vector<Corridor>& corridors,
                                       const Corridor& cur, double s) {
    std::vector<RouteOption> out;
    int lid = cur.lanelet_at(std::min(s, cur.length - 1e-6));
    double within = s - cur.entry_of(lid);
    for (const auto& c : corridors) {
        bool carries = std::find(c.geom_seq.begin(), c.geom_seq.end(), lid) != c.geom_seq.end();
        if (!carries) continue;
        double mapped = c.entry_of(lid) + within;
        if (mapped < 0.0 || mapped >= c.length) continue;
        out.push_back({c.id, mapped});
    }
    return out;
}

void systematic_resample(std::vector<Particle>& particles, std::mt19937_64& rng) {
    std::size_t n = particles.size();
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double u = u01(rng) / static_cast<double>(n);
    std::vector<Particle> out;
    out.reserve(n);
    double cum = particles[0].weight;
    std::size_t i = 0;
    for (std::size_t k = 0; k < n; ++k) {
        double target = u + static_cast<double>(k) / static_cast<double>(n);
        while (cum < target && i + 1 < n) {
            ++i;
            cum += particles[i].weight;
        }
        out.push_back(particles[i]);
        out.back().weight = 1.0 / static_cast<double>(n);
    }
    particles = std::move(out);
}

}  // namespace

std::vector<CorridorContext> build_contexts(const LaneletMap& map,
                                            const std::vector<Corridor>& all_corridors,
                                            const std::vector<VehicleState>& vehicles,
                                            int target_vehicle_id) {
    auto rels = intersection_relations(map, all_corridors);
    std::vector<CorridorContext> out;
    for (const auto& c : all_corridors) {
        if (c.vehicle_id != target_vehicle_id) continue;
        CorridorContext ctx;
        ctx.corridor_id = c.id;
        for (const auto& r : rels) {
            if (r.vehicle_id != target_vehicle_id || r.corridor_id != c.id) continue;
            ctx.entries.emplace_back(r.intersection_id, c.start_s + r.d_int);
        }
        std::sort(ctx.entries.begin(), ctx.entries.end(),
                  [](const auto& a, const auto& b) { return a.second < b.second; });
        for (const auto& inf :
             select_influencers(map, all_corridors, vehicles, target_vehicle_id, c.id)) {
            InfluenceEntry e;
            e.t_arrival = inf.d_int / std::max(inf.v, 0.1);
            e.yields_to_us = inf.p_rel == -1.0;
            ctx.influence.push_back(e);
        }
        out.push_back(std::move(ctx));
    }
    return out;
}

std::vector<Particle> init_filter(const std::vector<Corridor>& corridors, const Measurement& z0,
                                  int n_particles) {
    if (corridors.empty()) throw DataError("cannot initialize a filter without corridors");
    std::vector<Particle> out;
    out.reserve(static_cast<std::size_t>(n_particles));
    for (int i = 0; i < n_particles; ++i) {
        const Corridor& c = corridors[static_cast<std::size_t>(i) % corridors.size()];
        Particle p;
        p.R = c.id;
        auto proj = c.centerline.project({z0.x, z0.y});
        p.s = std::clamp(proj.s, 0.0, c.length - 1e-6);
        p.v = z0.v;
        p.curvature = curvature_at(c, p.s);
        p.weight = 1.0 / static_cast<double>(n_particles);
        out.push_back(p);
    }
    return out;
}

void predict_step(std::vector<Particle>& particles, const std::vector<CorridorContext>& contexts,
                  const std::vector<Corridor>& corridors, double dt, std::mt19937_64& rng,
                  const FilterConfig& cfg) {
    if (dt <= 0.0) throw DataError("prediction step needs dt > 0");
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, cfg.sigma_a > 0.0 ? cfg.sigma_a : 1.0);

    for (auto& p : particles) {
        const Corridor* cur = &corridor_by_id(corridors, p.R);
        const CorridorContext* ctx = context_of(contexts, p.R);

        double go = p_go(p, ctx, cfg);
        p.E = (go >= 1.0 || u01(rng) < go) ? Maneuver::go : Maneuver::stop;

        if (u01(rng) >= cfg.stickiness) {
            bool comply = u01(rng) < cfg.compliance;
            p.I = comply ? p.E : (p.E == Maneuver::go ? Maneuver::stop : Maneuver::go);
        }

        auto options = route_options(corridors, *cur, p.s);
        if (options.size() > 1 && u01(rng) >= cfg.route_persistence) {
            const auto& pick =
                options[static_cast<std::size_t>(u01(rng) * static_cast<double>(options.size())) %
                        options.size()];
            p.R = pick.corridor_id;
            p.s = pick.s;
            cur = &corridor_by_id(corridors, p.R);
            ctx = context_of(contexts, p.R);
        }

        double a = p.I == Maneuver::go ? 0.0 : stop_accel(p, ctx, cfg);
        if (cfg.sigma_a > 0.0) a += noise(rng);
        double v_cap = cur->speed_limit_at(std::min(p.s, cur->length - 1e-6)) *
                       cfg.v_limit_factor;
        double v_next = std::clamp(p.v + a * dt, 0.0, v_cap);
        p.s = std::clamp(p.s + 0.5 * (p.v + v_next) * dt, 0.0, cur->length - 1e-6);
        p.v = v_next;
        p.curvature = curvature_at(*cur, p.s);
    }
}

IntentionPosterior update_step(std::vector<Particle>& particles, const Measurement& z,
                               const std::vector<Corridor>& corridors,
                               const std::vector<CorridorContext>& contexts,
                               std::mt19937_64& rng, const FilterConfig& cfg,
                               bool* reinitialized) {
    if (particles.empty()) throw DataError("measurement update on an empty particle set");
    if (reinitialized) *reinitialized = false;

    double inv2sxy = 1.0 / (2.0 * cfg.sigma_xy * cfg.sigma_xy);
    double inv2sv = 1.0 / (2.0 * cfg.sigma_v * cfg.sigma_v);
    double total = 0.0;
    for (auto& p : particles) {
        const Corridor& c = corridor_by_id(corridors, p.R);
        Vec2 pos = c.centerline.point_at(p.s);
        double dx = pos.x - z.x, dy = pos.y - z.y, dv = p.v - z.v;
        p.weight *= std::exp(-(dx * dx + dy * dy) * inv2sxy - dv * dv * inv2sv);
        total += p.weight;
    }

    if (!(total > 0.0) || !std::isfinite(total)) {
        std::fprintf(stderr,
                     "intention filter: weights degenerate at t=%.3f, reinitializing from the "
                     "measurement\n",
                     z.timestamp);
        particles = init_filter(corridors, z, static_cast<int>(particles.size()));
        total = 1.0;
        if (reinitialized) *reinitialized = true;
    } else {
        for (auto& p : particles) p.weight /= total;
    }

    IntentionPosterior post;
    post.vehicle_id = corridors.front().vehicle_id;
    for (const auto& c : corridors) post.corridor_probs[c.id] = 0.0;
    std::map<int, double> stop_mass, approach_mass;
    for (const auto& ctx : contexts) {
        for (const auto& e : ctx.entries) {
            stop_mass[e.first];
            approach_mass[e.first];
        }
    }

    double sq = 0.0;
    for (const auto& p : particles) {
        post.corridor_probs[p.R] += p.weight;
        sq += p.weight * p.weight;
        if (const CorridorContext* ctx = context_of(contexts, p.R)) {
            for (const auto& e : ctx->entries) {
                if (p.s >= e.second) continue;  // already through
                approach_mass[e.first] += p.weight;
                if (p.I == Maneuver::stop) stop_mass[e.first] += p.weight;
            }
        }
    }
    for (const auto& [ix, mass] : approach_mass) {
        post.p_stop[ix] = mass > 0.0 ? stop_mass[ix] / mass : 0.0;
    }
    // normalize the marginal itself so a lone corridor reads exactly 1
    double marg_total = 0.0;
    for (const auto& [id, pr] : post.corridor_probs) marg_total += pr;
    if (marg_total > 0.0) {
        for (auto& [id, pr] : post.corridor_probs) pr /= marg_total;
    }
    post.effective_sample_size = 1.0 / sq;

    if (post.effective_sample_size < static_cast<double>(particles.size()) / 2.0) {
        systematic_resample(particles, rng);
    }
    return post;
}

IntentionFilter::IntentionFilter(std::vector<Corridor> corridors,
                                 std::vector<CorridorContext> contexts, const Measurement& z0,
                                 std::uint64_t global_seed, FilterConfig cfg)
    : cfg_(cfg), corridors_(std::move(corridors)), contexts_(std::move(contexts)) {
    if (corridors_.empty()) throw DataError("cannot initialize a filter without corridors");
    vehicle_id_ = corridors_.front().vehicle_id;
    std::seed_seq seq{static_cast<std::uint32_t>(global_seed),
                      static_cast<std::uint32_t>(global_seed >> 32),
                      static_cast<std::uint32_t>(vehicle_id_)};
    rng_ = std::mt19937_64(seq);
    particles_ = init_filter(corridors_, z0, cfg_.n_particles);
}

void IntentionFilter::set_contexts(std::vector<CorridorContext> contexts) {
    contexts_ = std::move(contexts);
}

IntentionPosterior IntentionFilter::step(const Measurement& z, double dt) {
    predict_step(particles_, contexts_, corridors_, dt, rng_, cfg_);
    bool reinit = false;
    auto post = update_step(particles_, z, corridors_, contexts_, rng_, cfg_, &reinit);
    if (reinit) ++reinit_count_;
    return post;
}

}  // namespace iamp
