#include "iamp/relations.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>

namespace iamp {

namespace {

const VehicleState* find_vehicle(const std::vector<VehicleState>& vehicles, int id) {
    for (const auto& v : vehicles) {
        if (v.id == id) return &v;
    }
    return nullptr;
}

double arrival_time(double dist, double v) { return dist / std::max(v, 0.1); }

}  // namespace

int regulatory_score(const LaneletMap& map, const Corridor& c) {
    bool priority = false, yield = false;
    for (const auto& reg : map.regulatory()) {
        for (int id : c.geom_seq) {
            bool in_refs = std::find(reg.refs.begin(), reg.refs.end(), id) != reg.refs.end();
            bool yielded_to =
                std::find(reg.priority_over.begin(), reg.priority_over.end(), id) !=
                reg.priority_over.end();
            switch (reg.kind) {
                case RegKind::right_of_way:
                    if (in_refs) priority = true;
                    if (yielded_to) yield = true;
                    break;
                case RegKind::yield:
                case RegKind::stop_line:
                    if (in_refs) yield = true;
                    break;
            }
        }
    }
    if (yield) return 2;  // an explicit yield overrides any inherited priority
    if (priority) return 0;
    return 1;
}

std::vector<LateralRelation> lateral_relations(const std::vector<VehicleState>& vehicles,
                                               const std::vector<Corridor>& corridors) {
    std::vector<LateralRelation> out;
    for (const auto& target : vehicles) {
        LateralRelation rel;
        rel.target_vehicle_id = target.id;
        rel.d_lead = 100.0;       // sentinel: nothing ahead
        rel.v_lead = target.v;

        double best_gap = std::numeric_limits<double>::infinity();
        for (const auto& c : corridors) {
            if (c.vehicle_id != target.id) continue;
            for (const auto& other : vehicles) {
                if (other.id == target.id) continue;
                Projection proj = c.centerline.project(other.pos);
                if (proj.dist > 2.5) continue;  // not in this lane
                double ahead = proj.s - c.start_s;
                if (ahead <= 0.0) continue;
                double gap = ahead - 0.5 * (target.length + other.length);
                if (gap < best_gap) {
                    best_gap = gap;
                    rel.leader_vehicle_id = other.id;
                    rel.d_lead = std::max(gap, 0.0);
                    rel.v_lead = other.v;
                }
            }
        }
        out.push_back(rel);
    }
    return out;
}

std::vector<IntersectionRelation> intersection_relations(const LaneletMap& map,
                                                         const std::vector<Corridor>& corridors) {
    std::vector<IntersectionRelation> out;
    for (const auto& c : corridors) {
        std::vector<IntersectionRelation> per_corridor;
        for (const auto& ix : map.intersections()) {
            double entry = std::numeric_limits<double>::infinity();
            std::size_t entry_idx = 0;
            for (std::size_t i = 0; i < c.geom_seq.size(); ++i) {
                bool member = std::find(ix.members.begin(), ix.members.end(), c.geom_seq[i]) !=
                              ix.members.end();
                if (member && c.entry_s[i] < entry) {
                    entry = c.entry_s[i];
                    entry_idx = i;
                }
            }
            if (!std::isfinite(entry)) continue;

            IntersectionRelation rel;
            rel.vehicle_id = c.vehicle_id;
            rel.corridor_id = c.id;
            rel.intersection_id = ix.id;
            rel.d_int = entry - c.start_s;
            // the lanelet we come from, when it is a declared entrance;
            // otherwise the member lanelet itself if declared
            auto is_entrance = [&](int id) {
                return std::find(ix.entrances.begin(), ix.entrances.end(), id) !=
                       ix.entrances.end();
            };
            if (entry_idx > 0 && is_entrance(c.geom_seq[entry_idx - 1])) {
                rel.entrance_id = c.geom_seq[entry_idx - 1];
            } else if (is_entrance(c.geom_seq[entry_idx])) {
                rel.entrance_id = c.geom_seq[entry_idx];
            }
            per_corridor.push_back(rel);
        }
        std::sort(per_corridor.begin(), per_corridor.end(),
                  [](const IntersectionRelation& a, const IntersectionRelation& b) {
                      return a.d_int < b.d_int;
                  });
        out.insert(out.end(), per_corridor.begin(), per_corridor.end());
    }
    return out;
}

bool choose_dependent(int score_a, double arrival_a, int vehicle_a,
                      int score_b, double arrival_b, int vehicle_b) {
    if (score_a != score_b) return score_a > score_b;
    if (std::abs(arrival_a - arrival_b) >= 0.2) return arrival_a > arrival_b;
    return vehicle_a > vehicle_b;
}

namespace {

struct Conflict {
    Vec2 point;
    double s_a = 0.0;  // arc length on corridor a's centerline
    double s_b = 0.0;
};

// First conflict between two centerlines that lies ahead of both vehicles:
// a proper crossing if one exists, otherwise the first location where the
// lines come within 5 cm (merge without crossing).
std::optional<Conflict> find_conflict(const Corridor& a, const Corridor& b) {
    Polyline ra = a.centerline.resampled(0.5);
    Polyline rb = b.centerline.resampled(0.5);
    const auto& pa = ra.points();
    const auto& pb = rb.points();

    auto make_conflict = [&](Vec2 point) {
        Conflict c;
        c.point = point;
        c.s_a = a.centerline.project(point).s;
        c.s_b = b.centerline.project(point).s;
        return c;
    };
    auto ahead_of_both = [&](const Conflict& c) {
        return c.s_a >= a.start_s - 1e-9 && c.s_b >= b.start_s - 1e-9;
    };

    std::optional<Conflict> best;
    for (std::size_t i = 0; i + 1 < pa.size(); ++i) {
        for (std::size_t j = 0; j + 1 < pb.size(); ++j) {
            auto hit = segment_intersection(pa[i], pa[i + 1], pb[j], pb[j + 1]);
            if (!hit) continue;
            Conflict c = make_conflict(hit->point);
            if (!ahead_of_both(c)) continue;
            if (!best || c.s_a + c.s_b < best->s_a + best->s_b) best = c;
        }
    }
    if (best) return best;

    // merge: centerlines converge without crossing
    for (std::size_t i = 0; i < pa.size(); ++i) {
        for (std::size_t j = 0; j < pb.size(); ++j) {
            if ((pa[i] - pb[j]).norm() < 0.05) {
                Conflict c = make_conflict((pa[i] + pb[j]) * 0.5);
                if (!ahead_of_both(c)) continue;
                return c;
            }
        }
    }
    return std::nullopt;
}

}  // namespace

std::vector<CorridorDependency> corridor_dependencies(const LaneletMap& map,
                                                      const std::vector<Corridor>& corridors,
                                                      const std::vector<VehicleState>& vehicles) {
    std::vector<CorridorDependency> candidates;

    for (std::size_t i = 0; i < corridors.size(); ++i) {
        for (std::size_t j = i + 1; j < corridors.size(); ++j) {
            const Corridor& a = corridors[i];
            const Corridor& b = corridors[j];
            if (a.vehicle_id == b.vehicle_id) continue;
            const VehicleState* va = find_vehicle(vehicles, a.vehicle_id);
            const VehicleState* vb = find_vehicle(vehicles, b.vehicle_id);
            if (!va || !vb) continue;

            auto conflict = find_conflict(a, b);
            if (!conflict) continue;
            const Conflict& c = *conflict;

            int score_a = regulatory_score(map, a);
            int score_b = regulatory_score(map, b);
            double t_a = arrival_time(c.s_a - a.start_s, va->v);
            double t_b = arrival_time(c.s_b - b.start_s, vb->v);

            CorridorDependency dep;
            if (choose_dependent(score_a, t_a, a.vehicle_id, score_b, t_b, b.vehicle_id)) {
                dep = {a.vehicle_id, a.id, b.vehicle_id, b.id, c.s_a, c.s_b};
            } else {
                dep = {b.vehicle_id, b.id, a.vehicle_id, a.id, c.s_b, c.s_a};
            }
            candidates.push_back(dep);
        }
    }

    // nearest upcoming conflict per dependent corridor
    std::sort(candidates.begin(), candidates.end(), [](const CorridorDependency& x,
                                                       const CorridorDependency& y) {
        return std::tie(x.dependent_vehicle_id, x.dependent_corridor_id, x.conflict_s_dependent,
                        x.blocking_vehicle_id, x.blocking_corridor_id) <
               std::tie(y.dependent_vehicle_id, y.dependent_corridor_id, y.conflict_s_dependent,
                        y.blocking_vehicle_id, y.blocking_corridor_id);
    });
    std::vector<CorridorDependency> nearest;
    for (const auto& dep : candidates) {
        if (!nearest.empty() && nearest.back().dependent_vehicle_id == dep.dependent_vehicle_id &&
            nearest.back().dependent_corridor_id == dep.dependent_corridor_id) {
            continue;
        }
        nearest.push_back(dep);
    }

    // keep the graph acyclic: follow chains of kept edges and drop any edge
    // that would close a loop (greedy in the deterministic order above)
    std::vector<CorridorDependency> out;
    auto reaches = [&](std::pair<int, int> from, std::pair<int, int> to) {
        // does `from` reach `to` via kept edges (dependent -> blocking)?
        std::vector<std::pair<int, int>> stack{from};
        std::set<std::pair<int, int>> seen;
        while (!stack.empty()) {
            auto cur = stack.back();
            stack.pop_back();
            if (cur == to) return true;
            if (!seen.insert(cur).second) continue;
            for (const auto& e : out) {
                if (std::make_pair(e.dependent_vehicle_id, e.dependent_corridor_id) == cur) {
                    stack.emplace_back(e.blocking_vehicle_id, e.blocking_corridor_id);
                }
            }
        }
        return false;
    };
    for (const auto& dep : nearest) {
        std::pair<int, int> d{dep.dependent_vehicle_id, dep.dependent_corridor_id};
        std::pair<int, int> b{dep.blocking_vehicle_id, dep.blocking_corridor_id};
        if (reaches(b, d)) continue;
        out.push_back(dep);
    }
    return out;
}

std::vector<Influencer> select_influencers(const LaneletMap& map,
                                           const std::vector<Corridor>& corridors,
                                           const std::vector<VehicleState>& vehicles,
                                           int target_vehicle_id, int target_corridor_id) {
    auto rels = intersection_relations(map, corridors);

    // the target's next intersection on the chosen corridor
    const IntersectionRelation* next = nullptr;
    for (const auto& r : rels) {
        if (r.vehicle_id != target_vehicle_id || r.corridor_id != target_corridor_id) continue;
        if (r.d_int < -5.0) continue;  // already through
        if (!next || r.d_int < next->d_int) next = &r;
    }
    if (!next) return {};

    const Corridor* target_corridor = nullptr;
    for (const auto& c : corridors) {
        if (c.vehicle_id == target_vehicle_id && c.id == target_corridor_id) target_corridor = &c;
    }
    int target_score = target_corridor ? regulatory_score(map, *target_corridor) : 1;

    // other vehicles approaching the same intersection: keep each one's
    // closest-corridor record
    std::map<int, const IntersectionRelation*> closest;
    std::map<int, int> others_score;
    for (const auto& r : rels) {
        if (r.vehicle_id == target_vehicle_id) continue;
        if (r.intersection_id != next->intersection_id) continue;
        if (r.d_int < -5.0) continue;
        auto it = closest.find(r.vehicle_id);
        if (it == closest.end() || r.d_int < it->second->d_int) {
            closest[r.vehicle_id] = &r;
            for (const auto& c : corridors) {
                if (c.vehicle_id == r.vehicle_id && c.id == r.corridor_id) {
                    others_score[r.vehicle_id] = regulatory_score(map, c);
                }
            }
        }
    }

    std::vector<Influencer> all;
    for (const auto& [vid, rel] : closest) {
        const VehicleState* vs = find_vehicle(vehicles, vid);
        if (!vs) continue;
        Influencer inf;
        inf.vehicle_id = vid;
        inf.d_int = rel->d_int;
        inf.v = vs->v;
        int other_score = others_score.count(vid) ? others_score[vid] : 1;
        if (other_score < target_score) {
            inf.p_rel = 1.0;
        } else if (other_score > target_score) {
            inf.p_rel = -1.0;
        }
        all.push_back(inf);
    }

    std::sort(all.begin(), all.end(), [](const Influencer& x, const Influencer& y) {
        double tx = arrival_time(std::max(x.d_int, 0.0), x.v);
        double ty = arrival_time(std::max(y.d_int, 0.0), y.v);
        if (tx != ty) return tx < ty;
        return x.vehicle_id < y.vehicle_id;
    });
    if (all.size() > 2) all.resize(2);
    return all;
}

}  // namespace iamp
