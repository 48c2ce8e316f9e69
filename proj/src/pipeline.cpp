#include "iamp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "iamp/error.hpp"
#include "iamp/relations.hpp"

namespace iamp {

namespace {

std::vector<VehicleState> states_at(const Recording& rec, double t) {
    std::vector<VehicleState> out;
    for (const auto& tr : rec.tracks) {
        if (auto p = tr.at(t)) {
            out.push_back({tr.id, p->pos, p->heading, p->v, p->a, tr.length, tr.width});
        }
    }
    return out;
}

const Track* track_of(const Recording& rec, int id) {
    for (const auto& tr : rec.tracks)
        if (tr.id == id) return &tr;
    return nullptr;
}

double curvature_at_arc(const Corridor& c, double s) {
    const auto& line = c.centerline;
    if (line.size() < 2 || c.curvature_profile.size() != line.size()) return 0.0;
    if (s <= 0.0) return c.curvature_profile.front();
    if (s >= line.length()) return c.curvature_profile.back();
    std::size_t hi = 1;
    while (hi + 1 < line.size() && line.cum_at(hi) < s) ++hi;
    double s0 = line.cum_at(hi - 1), s1 = line.cum_at(hi);
    double w = s1 > s0 ? (s - s0) / (s1 - s0) : 0.0;
    return (1.0 - w) * c.curvature_profile[hi - 1] + w * c.curvature_profile[hi];
}

// Admissible speed per s cell of the chain: speed limit with a little slack,
// tightened by lateral comfort in curves.
std::vector<double> chain_v_allowed(const Corridor& c, double s_origin, const Discretization& disc,
                                    double comfort_lat) {
    std::vector<double> va(static_cast<std::size_t>(disc.n_s));
    for (int is = 0; is < disc.n_s; ++is) {
        double arc = std::clamp(s_origin + disc.s_center(is), 0.0, std::max(0.0, c.length - 1e-9));
        double lim = c.speed_limit_at(arc) * 1.1;
        double k = std::abs(curvature_at_arc(c, arc));
        if (k > 1e-9) lim = std::min(lim, std::sqrt(comfort_lat / k));
        va[static_cast<std::size_t>(is)] = lim;
    }
    return va;
}

double u_norm_of(double a, const Discretization& disc) {
    double u = a >= 0.0 ? a / disc.a_pos : a / disc.a_neg;
    return std::clamp(u, -1.0, 1.0);
}

IntentionPosterior posterior_from_particles(const IntentionFilter& f) {
    IntentionPosterior post;
    post.vehicle_id = f.vehicle_id();
    double total = 0.0;
    for (const auto& p : f.particles()) {
        post.corridor_probs[p.R] += p.weight;
        total += p.weight;
    }
    if (total > 0.0)
        for (auto& [id, w] : post.corridor_probs) w /= total;
    post.effective_sample_size = static_cast<double>(f.particles().size());
    return post;
}

struct VehicleRuntime {
    std::optional<IntentionFilter> filter;
    IntentionPosterior post;
};

// chains for one vehicle at one instant
struct VehiclePrediction {
    std::vector<CorridorPrediction> preds;  // kept corridors, probs renormalized
    std::map<int, std::vector<std::vector<double>>> interval;  // corridor -> per-step occupancy
    std::map<int, double> origin;                              // corridor -> s_origin
};

// Corridors the prediction keeps: posterior above the floor, renormalized.
std::vector<std::pair<const Corridor*, double>> kept_corridors(const IntentionFilter& f,
                                                               const IntentionPosterior& post,
                                                               double min_prob) {
    std::vector<std::pair<const Corridor*, double>> kept;
    double total = 0.0;
    for (const auto& c : f.corridors()) {
        auto it = post.corridor_probs.find(c.id);
        double p = it == post.corridor_probs.end() ? 0.0 : it->second;
        if (p >= min_prob) {
            kept.push_back({&c, p});
            total += p;
        }
    }
    if (kept.empty()) {  // posterior spread too thin; fall back to the best corridor
        const Corridor* best = nullptr;
        double best_p = -1.0;
        for (const auto& c : f.corridors()) {
            auto it = post.corridor_probs.find(c.id);
            double p = it == post.corridor_probs.end() ? 0.0 : it->second;
            if (p > best_p) {
                best_p = p;
                best = &c;
            }
        }
        if (best) kept.push_back({best, 1.0});
        return kept;
    }
    for (auto& [c, p] : kept) p /= total;
    return kept;
}

bool filter_is_stale(const VehicleRuntime& vr, const VehicleState& st, double need) {
    bool on_any = false;
    double best_remaining = -1.0;
    for (const auto& c : vr.filter->corridors()) {
        auto pr = c.centerline.project(st.pos);
        if (pr.dist <= 3.0) {
            on_any = true;
            best_remaining = std::max(best_remaining, c.length - pr.s);
        }
    }
    return !on_any || best_remaining < need;
}

}  // namespace

Dataset build_training_dataset(const LaneletMap& map, const TrackDataset& data) {
    Dataset ds;
    const double step_dt = 0.4;
    const double horizon = 4.0;
    for (const auto& rec : data.recordings) {
        if (rec.tracks.empty()) continue;
        double t_lo = 1e300, t_hi = -1e300;
        for (const auto& tr : rec.tracks) {
            t_lo = std::min(t_lo, tr.t_begin());
            t_hi = std::max(t_hi, tr.t_end());
        }
        for (long k = static_cast<long>(std::ceil(t_lo / step_dt - 1e-9));
             k * step_dt <= t_hi + 1e-9; ++k) {
            double t = k * step_dt;
            auto states = states_at(rec, t);
            if (states.empty()) continue;

            // fresh corridors for everyone present, so relations see the full scene
            std::vector<Corridor> all_corr;
            for (const auto& st : states) {
                try {
                    auto cs = enumerate_corridors(map, st.id, st.pos, st.heading, st.v);
                    all_corr.insert(all_corr.end(), cs.begin(), cs.end());
                } catch (const GeometryError&) {
                }
            }

            for (const auto& st : states) {
                const Track* tr = track_of(rec, st.id);
                if (!tr) continue;
                if (t - tr->t_begin() < horizon - 1e-9) continue;
                if (tr->t_end() - t < horizon - 1e-9) continue;

                // the corridor that best follows the actual future
                const Corridor* best = nullptr;
                double best_score = 1e300;
                for (const auto& c : all_corr) {
                    if (c.vehicle_id != st.id) continue;
                    double score = 0.0;
                    for (int m = 1; m <= 10; ++m) {
                        auto fp = tr->at(t + 0.4 * m);
                        score += c.centerline.project(fp->pos).dist;
                    }
                    score /= 10.0;
                    if (score < best_score) {
                        best_score = score;
                        best = &c;
                    }
                }
                if (!best || best_score > 2.0) continue;

                auto contexts = build_contexts(map, all_corr, states, st.id);
                std::vector<std::pair<int, double>> entries;
                for (const auto& ctx : contexts)
                    if (ctx.corridor_id == best->id) entries = ctx.entries;

                std::vector<StepObservation> history;
                bool ok = true;
                for (int j = 0; j < kHistorySteps; ++j) {
                    double ts = t - step_dt * (kHistorySteps - 1 - j);
                    auto p = tr->at(ts);
                    if (!p) {
                        ok = false;
                        break;
                    }
                    auto snap = states_at(rec, ts);
                    StepObservation obs;
                    obs.t = ts;
                    obs.a = p->a;
                    obs.v = p->v;
                    obs.s = std::clamp(best->centerline.project(p->pos).s, 0.0, best->length);
                    for (const auto& rel : lateral_relations(snap, all_corr))
                        if (rel.target_vehicle_id == st.id) obs.lead = rel;
                    obs.influencers = select_influencers(map, all_corr, snap, st.id, best->id);
                    history.push_back(std::move(obs));
                }
                if (!ok) continue;

                AccelProfile target(kProfileLen);
                for (int j = 0; j < kProfileLen; ++j) {
                    auto p = tr->at(t + 0.1 * (j + 1));
                    if (!p) {
                        ok = false;
                        break;
                    }
                    target[static_cast<std::size_t>(j)] = p->a;
                }
                if (!ok) continue;

                ds.features.push_back(extract_features(history, *best, entries));
                ds.targets.push_back(std::move(target));
            }
        }
    }
    return ds;
}

namespace {

// Build the per-corridor occupancy chains for one vehicle. `interactions`
// carries the blocking-side occupancies already predicted this instant
// (baseline only).
VehiclePrediction predict_vehicle(const VehicleState& st, const VehicleRuntime& vr,
                                  const TransitionMatrices& matrices, const PipelineConfig& cfg,
                                  int n_steps, const std::vector<CorridorDependency>& deps,
                                  const std::map<int, VehiclePrediction>& done,
                                  const Recording& rec, const LaneletMap& map,
                                  const ARModel* model, const std::vector<Corridor>& all_corr,
                                  const std::vector<CorridorContext>& contexts, double t) {
    const Discretization& disc = matrices.disc;
    VehiclePrediction out;
    auto psi = default_psi(disc.n_u);

    for (const auto& [cp, prob] : kept_corridors(*vr.filter, vr.post, cfg.min_corridor_prob)) {
        const Corridor& c = *cp;
        auto proj = c.centerline.project(st.pos);
        double s_now = std::clamp(proj.s, 0.0, c.length);
        double s_origin = s_now - 2.0 * disc.ds;  // two cells of chain behind the vehicle

        StateDistribution dist =
            StateDistribution::point_mass(disc, 2.0 * disc.ds, st.v, u_norm_of(st.a, disc));

        CorridorPrediction pred;
        pred.corridor = c;
        pred.prob = prob;
        pred.s_origin = s_origin;
        pred.disc = disc;

        std::vector<std::vector<double>> intervals;

        if (cfg.mode == PredictionMode::baseline) {
            auto layout = layout_lambda(disc, chain_v_allowed(c, s_origin, disc, cfg.comfort_lat_acc));

            // the nearest conflicting corridor ahead, when its owner is done
            const CorridorDependency* dep = nullptr;
            for (const auto& d : deps)
                if (d.dependent_vehicle_id == st.id && d.dependent_corridor_id == c.id) dep = &d;
            std::optional<InteractionMatrix> im;
            const std::vector<std::vector<double>>* blocker_iv = nullptr;
            const std::vector<StateDistribution>* blocker_steps = nullptr;
            std::vector<std::uint16_t> window_mask;
            double clear_s = 0.0;  // blocker chain arc past which it has cleared
            if (dep) {
                auto it = done.find(dep->blocking_vehicle_id);
                if (it != done.end()) {
                    auto iv = it->second.interval.find(dep->blocking_corridor_id);
                    auto og = it->second.origin.find(dep->blocking_corridor_id);
                    if (iv != it->second.interval.end() && og != it->second.origin.end()) {
                        blocker_iv = &iv->second;
                        ConflictWindow wd{dep->conflict_s_dependent - s_origin,
                                          cfg.conflict_half_extent};
                        ConflictWindow wb{dep->conflict_s_blocking - og->second,
                                          cfg.conflict_half_extent};
                        im = build_interaction(disc, wd, wb);
                        window_mask = occupancy_masks(disc, wd);
                        clear_s = wb.s_conflict + wb.half_extent;
                        for (const auto& bp : it->second.preds)
                            if (bp.corridor.id == dep->blocking_corridor_id)
                                blocker_steps = &bp.steps;
                    }
                }
            }

            for (int m = 0; m < n_steps; ++m) {
                std::vector<double> lam = layout;
                if (im && blocker_iv && m < static_cast<int>(blocker_iv->size())) {
                    auto li = interaction_lambda(*im, (*blocker_iv)[static_cast<std::size_t>(m)]);
                    for (std::size_t i = 0; i < lam.size(); ++i) lam[i] *= li[i];
                }
                // gap keeping: inputs that reach the conflict window are only
                // admitted in proportion to the blocker mass that has already
                // passed beyond it
                if (blocker_steps && m < static_cast<int>(blocker_steps->size())) {
                    double cleared = 0.0;
                    const auto& bp = (*blocker_steps)[static_cast<std::size_t>(m)].p;
                    for (int is = 0; is < disc.n_s; ++is) {
                        if (disc.s_center(is) <= clear_s) continue;
                        for (int ivv = 0; ivv < disc.n_v; ++ivv)
                            for (int iu = 0; iu < disc.n_u; ++iu)
                                cleared += bp[static_cast<std::size_t>(disc.index(is, ivv, iu))];
                    }
                    if (cleared < cfg.yield_clear_fraction)
                        for (std::size_t i = 0; i < lam.size(); ++i)
                            if (window_mask[i]) lam[i] *= cleared;
                }
                auto gamma = build_gamma_baseline(psi, std::move(lam), true);
                auto res = propagate(dist, gamma, matrices);
                dist = std::move(res.next);
                intervals.push_back(std::move(res.interval));
                pred.steps.push_back(dist);
            }
        } else {
            // learned input distribution per step, from the feature history
            const Track* tr = track_of(rec, st.id);
            std::vector<std::pair<int, double>> entries;
            for (const auto& ctx : contexts)
                if (ctx.corridor_id == c.id) entries = ctx.entries;

            std::vector<StepObservation> history;
            for (int j = 0; j < kHistorySteps; ++j) {
                double ts = t - 0.4 * (kHistorySteps - 1 - j);
                auto p = tr->at(ts);
                if (!p) throw DataError("hybrid prediction needs 3.6 s of history");
                auto snap = states_at(rec, ts);
                StepObservation obs;
                obs.t = ts;
                obs.a = p->a;
                obs.v = p->v;
                obs.s = std::clamp(c.centerline.project(p->pos).s, 0.0, c.length);
                for (const auto& rel : lateral_relations(snap, all_corr))
                    if (rel.target_vehicle_id == st.id) obs.lead = rel;
                obs.influencers = select_influencers(map, all_corr, snap, st.id, c.id);
                history.push_back(std::move(obs));
            }

            auto profile = infer(*model, extract_features(history, c, entries));
            auto accel_steps = profile_to_distributions(profile, disc);
            for (int m = 0; m < n_steps; ++m) {
                const auto& mass =
                    accel_steps[static_cast<std::size_t>(std::min<int>(m, accel_steps.size() - 1))]
                        .cell_mass;
                auto gamma = build_gamma_hybrid(psi, mass);
                auto res = propagate(dist, gamma, matrices);
                dist = std::move(res.next);
                intervals.push_back(std::move(res.interval));
                pred.steps.push_back(dist);
            }
        }

        out.interval[c.id] = std::move(intervals);
        out.origin[c.id] = s_origin;
        out.preds.push_back(std::move(pred));
    }
    return out;
}

// dependents predicted after their blockers; ties and cycles broken by id
std::vector<int> prediction_order(const std::vector<int>& vehicles,
                                  const std::vector<CorridorDependency>& deps) {
    std::set<int> remaining(vehicles.begin(), vehicles.end());
    std::set<std::pair<int, int>> edges;  // dependent -> blocking
    for (const auto& d : deps)
        if (remaining.count(d.dependent_vehicle_id) && remaining.count(d.blocking_vehicle_id) &&
            d.dependent_vehicle_id != d.blocking_vehicle_id)
            edges.insert({d.dependent_vehicle_id, d.blocking_vehicle_id});

    std::vector<int> order;
    while (!remaining.empty()) {
        int pick = -1;
        for (int v : remaining) {
            bool waiting = false;
            for (const auto& [dep, blk] : edges)
                if (dep == v && remaining.count(blk)) waiting = true;
            if (!waiting) {
                pick = v;
                break;
            }
        }
        if (pick == -1) pick = *remaining.begin();  // cycle: smallest id goes first
        order.push_back(pick);
        remaining.erase(pick);
    }
    return order;
}

}  // namespace

RunReport run_prediction(const LaneletMap& map, const TrackDataset& data,
                         const TransitionMatrices& matrices, const ARModel* model,
                         const PipelineConfig& cfg) {
    if (data.recordings.empty() || data.recordings.front().tracks.empty())
        throw DataError("run_prediction: empty track dataset");
    if (cfg.mode == PredictionMode::hybrid && !model)
        throw DataError("run_prediction: hybrid mode needs an acceleration model");

    const Recording& rec = data.recordings.front();
    const Discretization& disc = matrices.disc;
    int n_steps = std::max(1, static_cast<int>(std::floor(cfg.horizon / disc.tau + 1e-9)));

    double t_lo = 1e300, t_hi = -1e300;
    for (const auto& tr : rec.tracks) {
        t_lo = std::min(t_lo, tr.t_begin());
        t_hi = std::max(t_hi, tr.t_end());
    }

    RunReport rep;
    rep.mode = cfg.mode == PredictionMode::baseline ? "baseline" : "hybrid";
    rep.seed = cfg.seed;
    rep.repeats = cfg.repeats;

    double total_predict = 0.0;
    long n_instants = 0;

    for (int repeat = 0; repeat < cfg.repeats; ++repeat) {
        std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(repeat) * 1000003ULL;
        std::map<int, VehicleRuntime> runtime;

        for (long k = static_cast<long>(std::ceil(t_lo / cfg.eval_dt - 1e-9));
             k * cfg.eval_dt <= t_hi + 1e-9; ++k) {
            double t = k * cfg.eval_dt;
            auto states = states_at(rec, t);
            if (states.empty()) continue;

            // --- intention filters -------------------------------------------------
            std::set<int> fresh;  // created this instant: no motion to assimilate yet
            for (const auto& st : states) {
                auto& vr = runtime[st.id];
                double need = st.v * cfg.horizon + 2.0 * disc.ds + 2.0;
                if (!vr.filter || filter_is_stale(vr, st, need)) {
                    try {
                        auto cs = enumerate_corridors(map, st.id, st.pos, st.heading, st.v);
                        Measurement z0{st.pos.x, st.pos.y, st.heading, st.v, t};
                        // contexts filled in below, once every filter exists
                        vr.filter.emplace(std::move(cs), std::vector<CorridorContext>{}, z0, seed,
                                          cfg.filter);
                        vr.post = posterior_from_particles(*vr.filter);
                        fresh.insert(st.id);
                    } catch (const GeometryError&) {
                        // off the map; retry next instant (or keep the old filter)
                    }
                }
            }

            std::vector<Corridor> all_corr;
            for (const auto& st : states) {
                auto it = runtime.find(st.id);
                if (it != runtime.end() && it->second.filter) {
                    const auto& cs = it->second.filter->corridors();
                    all_corr.insert(all_corr.end(), cs.begin(), cs.end());
                }
            }

            std::map<int, std::vector<CorridorContext>> contexts;
            for (const auto& st : states) {
                auto it = runtime.find(st.id);
                if (it == runtime.end() || !it->second.filter) continue;
                contexts[st.id] = build_contexts(map, all_corr, states, st.id);
                it->second.filter->set_contexts(contexts[st.id]);
                if (fresh.count(st.id)) continue;  // initialized from this very measurement
                Measurement z{st.pos.x, st.pos.y, st.heading, st.v, t};
                it->second.post = it->second.filter->step(z, cfg.eval_dt);
            }

            // --- who gets predicted ------------------------------------------------
            std::vector<int> eligible;
            std::vector<int> predicted_ids;
            for (const auto& st : states) {
                const Track* tr = track_of(rec, st.id);
                auto it = runtime.find(st.id);
                if (!tr || it == runtime.end() || !it->second.filter) continue;
                bool has_past = t - tr->t_begin() >= cfg.horizon - 1e-9;
                bool has_future = tr->t_end() - t >= cfg.horizon - 1e-9;
                if (has_past && has_future) eligible.push_back(st.id);
                if (cfg.mode == PredictionMode::baseline || (has_past && has_future))
                    predicted_ids.push_back(st.id);
            }
            if (predicted_ids.empty()) continue;

            auto state_of = [&](int id) -> const VehicleState& {
                for (const auto& st : states)
                    if (st.id == id) return st;
                throw DataError("pipeline: missing vehicle state");
            };

            // --- timed prediction stage --------------------------------------------
            std::vector<CorridorDependency> deps;
            std::map<int, VehiclePrediction> preds;
            auto clock0 = std::chrono::steady_clock::now();
            if (cfg.mode == PredictionMode::baseline) {
                deps = corridor_dependencies(map, all_corr, states);
                for (int id : prediction_order(predicted_ids, deps)) {
                    preds[id] = predict_vehicle(state_of(id), runtime[id], matrices, cfg, n_steps,
                                                deps, preds, rec, map, model, all_corr,
                                                contexts[id], t);
                }
            } else {
                for (int id : predicted_ids) {
                    preds[id] = predict_vehicle(state_of(id), runtime[id], matrices, cfg, n_steps,
                                                deps, preds, rec, map, model, all_corr,
                                                contexts[id], t);
                }
            }
            std::chrono::duration<double> lapse = std::chrono::steady_clock::now() - clock0;
            total_predict += lapse.count();
            ++n_instants;

            if (cfg.mode == PredictionMode::hybrid)
                deps = corridor_dependencies(map, all_corr, states);  // diagnostics only

            // --- scoring -----------------------------------------------------------
            for (int id : eligible) {
                auto it = preds.find(id);
                if (it == preds.end() || it->second.preds.empty()) continue;
                const Track* tr = track_of(rec, id);
                std::vector<Vec2> truth;
                for (int m = 1; m <= n_steps; ++m) truth.push_back(tr->at(t + disc.tau * m)->pos);

                std::vector<std::pair<double, double>> per_corridor;
                for (const auto& pred : it->second.preds) {
                    std::vector<Vec2> pts;
                    for (const auto& step : pred.steps)
                        pts.push_back(expected_position(step, disc, pred.corridor, pred.s_origin));
                    per_corridor.push_back(ade_fde(pts, truth));
                }
                auto [made, mfde] = min_over_corridors(per_corridor, cfg.fusion.joint_min);
                rep.rows.push_back({repeat, t, id, made, mfde});
            }

            // --- conflict diagnostics ----------------------------------------------
            if (n_steps == 10) {
                for (const auto& d : deps) {
                    auto di = preds.find(d.dependent_vehicle_id);
                    auto bi = preds.find(d.blocking_vehicle_id);
                    if (di == preds.end() || bi == preds.end()) continue;
                    auto div = di->second.interval.find(d.dependent_corridor_id);
                    auto bov = bi->second.origin.find(d.blocking_corridor_id);
                    if (div == di->second.interval.end() || bov == bi->second.origin.end())
                        continue;

                    ConflictDiagnostic diag;
                    diag.repeat = repeat;
                    diag.timestamp = t;
                    diag.dependent_vehicle = d.dependent_vehicle_id;
                    diag.blocking_vehicle = d.blocking_vehicle_id;
                    for (const auto& pred : di->second.preds)
                        if (pred.corridor.id == d.dependent_corridor_id)
                            diag.dependent_corridor_prob = pred.prob;
                    double cd = d.conflict_s_dependent - di->second.origin[d.dependent_corridor_id];
                    double cb = d.conflict_s_blocking - bov->second;
                    for (int m = 0; m < 10; ++m) {
                        const auto& iv = div->second[static_cast<std::size_t>(m)];
                        double in_window = 0.0;
                        for (int is = 0; is < disc.n_s; ++is) {
                            double sc = disc.s_center(is);
                            if (sc < cd - cfg.conflict_half_extent ||
                                sc > cd + cfg.conflict_half_extent)
                                continue;
                            for (int ivv = 0; ivv < disc.n_v; ++ivv)
                                for (int iu = 0; iu < disc.n_u; ++iu)
                                    in_window += iv[static_cast<std::size_t>(
                                        disc.index(is, ivv, iu))];
                        }
                        diag.dependent_in_window[static_cast<std::size_t>(m)] = in_window;
                    }
                    for (const auto& pred : bi->second.preds) {
                        if (pred.corridor.id != d.blocking_corridor_id) continue;
                        diag.blocking_corridor_prob = pred.prob;
                        for (int m = 0; m < 10; ++m) {
                            double cleared = 0.0;
                            const auto& p = pred.steps[static_cast<std::size_t>(m)].p;
                            for (int is = 0; is < disc.n_s; ++is) {
                                if (disc.s_center(is) <= cb + cfg.conflict_half_extent) continue;
                                for (int ivv = 0; ivv < disc.n_v; ++ivv)
                                    for (int iu = 0; iu < disc.n_u; ++iu)
                                        cleared += p[static_cast<std::size_t>(
                                            disc.index(is, ivv, iu))];
                            }
                            diag.blocker_cleared[static_cast<std::size_t>(m)] = cleared;
                        }
                    }
                    rep.conflicts.push_back(diag);
                }
            }

            // --- trace / grids -----------------------------------------------------
            if (cfg.trace) {
                for (int id : predicted_ids) {
                    const auto& vr = runtime[id];
                    auto pit = preds.find(id);
                    if (pit == preds.end()) continue;
                    for (const auto& pred : pit->second.preds) {
                        double p_stop = 0.0;
                        for (const auto& ctx : contexts[id]) {
                            if (ctx.corridor_id != pred.corridor.id) continue;
                            double s_now = pred.s_origin + 2.0 * disc.ds;
                            for (const auto& [int_id, arc] : ctx.entries) {
                                if (arc < s_now) continue;
                                auto ps = vr.post.p_stop.find(int_id);
                                if (ps != vr.post.p_stop.end()) p_stop = ps->second;
                                break;
                            }
                        }
                        rep.trace.push_back({repeat, t, id, pred.corridor.id, pred.prob, p_stop,
                                             vr.post.effective_sample_size});
                    }
                }
            }

            if (cfg.keep_grids && repeat == 0) {
                rep.last_grids.clear();
                rep.last_truth.clear();
                for (int id : predicted_ids) {
                    auto pit = preds.find(id);
                    if (pit == preds.end() || pit->second.preds.empty()) continue;
                    auto grids = render_grids(pit->second.preds, id, cfg.fusion);
                    rep.last_grids.insert(rep.last_grids.end(), grids.begin(), grids.end());
                    const Track* tr = track_of(rec, id);
                    std::vector<Vec2> gt;
                    for (int m = 0; m <= n_steps; ++m)
                        if (auto p = tr->at(t + disc.tau * m)) gt.push_back(p->pos);
                    rep.last_truth.push_back(std::move(gt));
                }
            }
        }
    }

    rep.n_instants = n_instants;
    rep.mean_predict_seconds = n_instants > 0 ? total_predict / n_instants : 0.0;
    double made = 0.0, mfde = 0.0;
    for (const auto& r : rep.rows) {
        made += r.made;
        mfde += r.mfde;
    }
    if (!rep.rows.empty()) {
        rep.mean_made = made / rep.rows.size();
        rep.mean_mfde = mfde / rep.rows.size();
    }
    return rep;
}

void write_report(const RunReport& r, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    {
        std::ofstream out(fs::path(dir) / "metrics.csv");
        if (!out) throw DataError("write_report: cannot open metrics.csv under " + dir);
        out << "repeat,timestamp,vehicle_id,made,mfde\n";
        char buf[160];
        for (const auto& row : r.rows) {
            std::snprintf(buf, sizeof buf, "%d,%.17g,%d,%.17g,%.17g\n", row.repeat, row.timestamp,
                          row.vehicle_id, row.made, row.mfde);
            out << buf;
        }
    }

    {
        nlohmann::json j;
        j["mode"] = r.mode;
        j["seed"] = r.seed;
        j["repeats"] = r.repeats;
        j["rows"] = r.rows.size();
        j["instants"] = r.n_instants;
        j["mean_made"] = r.mean_made;
        j["mean_mfde"] = r.mean_mfde;
        j["mean_predict_seconds"] = r.mean_predict_seconds;
        std::ofstream out(fs::path(dir) / "summary.json");
        out << j.dump(2) << "\n";
    }

    if (r.trace.empty()) {
        fs::remove(fs::path(dir) / "trace.csv");
    } else {
        std::ofstream out(fs::path(dir) / "trace.csv");
        out << "repeat,timestamp,vehicle_id,corridor_id,prob,p_stop,ess\n";
        char buf[200];
        for (const auto& t : r.trace) {
            std::snprintf(buf, sizeof buf, "%d,%.17g,%d,%d,%.17g,%.17g,%.17g\n", t.repeat,
                          t.timestamp, t.vehicle_id, t.corridor_id, t.prob, t.p_stop, t.ess);
            out << buf;
        }
    }

    if (r.conflicts.empty()) {
        fs::remove(fs::path(dir) / "conflicts.csv");
    } else {
        std::ofstream out(fs::path(dir) / "conflicts.csv");
        out << "repeat,timestamp,dependent_vehicle,blocking_vehicle,"
               "dependent_corridor_prob,blocking_corridor_prob,step,"
               "dependent_in_window,blocker_cleared\n";
        char buf[280];
        for (const auto& c : r.conflicts) {
            for (int m = 0; m < 10; ++m) {
                std::snprintf(buf, sizeof buf, "%d,%.17g,%d,%d,%.17g,%.17g,%d,%.17g,%.17g\n",
                              c.repeat, c.timestamp, c.dependent_vehicle, c.blocking_vehicle,
                              c.dependent_corridor_prob, c.blocking_corridor_prob, m,
                              c.dependent_in_window[static_cast<std::size_t>(m)],
                              c.blocker_cleared[static_cast<std::size_t>(m)]);
                out << buf;
            }
        }
    }
}

LoadedReport load_report(const std::string& dir) {
    namespace fs = std::filesystem;
    LoadedReport rep;

    std::ifstream in(fs::path(dir) / "metrics.csv");
    if (!in) throw DataError("load_report: no metrics.csv under " + dir);
    std::string line;
    if (!std::getline(in, line) || line.rfind("repeat,", 0) != 0)
        throw ParseError("load_report: bad metrics.csv header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        StepMetric row;
        char* end = nullptr;
        const char* s = line.c_str();
        row.repeat = static_cast<int>(std::strtol(s, &end, 10));
        if (*end != ',') throw ParseError("load_report: bad metrics row: " + line);
        row.timestamp = std::strtod(end + 1, &end);
        if (*end != ',') throw ParseError("load_report: bad metrics row: " + line);
        row.vehicle_id = static_cast<int>(std::strtol(end + 1, &end, 10));
        if (*end != ',') throw ParseError("load_report: bad metrics row: " + line);
        row.made = std::strtod(end + 1, &end);
        if (*end != ',') throw ParseError("load_report: bad metrics row: " + line);
        row.mfde = std::strtod(end + 1, &end);
        if (*end != '\0') throw ParseError("load_report: bad metrics row: " + line);
        rep.rows.push_back(row);
    }

    std::ifstream js(fs::path(dir) / "summary.json");
    if (!js) throw DataError("load_report: no summary.json under " + dir);
    try {
        js >> rep.summary;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("load_report: summary.json: ") + e.what());
    }
    return rep;
}

std::string format_report_table(const LoadedReport& rep) {
    double made = 0.0, mfde = 0.0;
    std::map<int, std::pair<std::pair<double, double>, int>> by_vehicle;
    for (const auto& r : rep.rows) {
        made += r.made;
        mfde += r.mfde;
        auto& acc = by_vehicle[r.vehicle_id];
        acc.first.first += r.made;
        acc.first.second += r.mfde;
        acc.second += 1;
    }
    if (!rep.rows.empty()) {
        made /= rep.rows.size();
        mfde /= rep.rows.size();
    }
    double stored_made = rep.summary.value("mean_made", 0.0);
    double stored_mfde = rep.summary.value("mean_mfde", 0.0);
    if (std::abs(made - stored_made) > 1e-9 || std::abs(mfde - stored_mfde) > 1e-9)
        throw NumericError("report summary does not match its rows");

    std::ostringstream out;
    char buf[200];
    out << "mode: " << rep.summary.value("mode", std::string("?"))
        << "   rows: " << rep.rows.size()
        << "   instants: " << rep.summary.value("instants", 0) << "\n";
    std::snprintf(buf, sizeof buf, "%-12s %8s %10s %10s\n", "vehicle", "n", "mADE", "mFDE");
    out << buf;
    for (const auto& [id, acc] : by_vehicle) {
        std::snprintf(buf, sizeof buf, "%-12d %8d %10.4f %10.4f\n", id, acc.second,
                      acc.first.first / acc.second, acc.first.second / acc.second);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "%-12s %8zu %10.4f %10.4f\n", "overall", rep.rows.size(), made,
                  mfde);
    out << buf;
    std::snprintf(buf, sizeof buf, "mean prediction time per instant: %.6f s\n",
                  rep.summary.value("mean_predict_seconds", 0.0));
    out << buf;
    return out.str();
}

}  // namespace iamp
