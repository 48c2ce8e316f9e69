#include "iamp/markov.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

#include "iamp/error.hpp"
#include "iamp/kernels.hpp"

namespace iamp {

int Discretization::s_cell(double s) const {
    return std::clamp(static_cast<int>(std::floor(s / ds)), 0, n_s - 1);
}
int Discretization::v_cell(double v) const {
    return std::clamp(static_cast<int>(std::floor(v / dv)), 0, n_v - 1);
}
int Discretization::u_cell(double u) const {
    return std::clamp(static_cast<int>(std::floor((u + 1.0) / du())), 0, n_u - 1);
}

void spmv(const SparseCSC& a, const double* x, double* y) {
    std::fill(y, y + a.nrows, 0.0);
    kernels::spmv_csc(a.ncols, a.colptr.data(), a.rows.data(), a.vals.data(), x, y);
}

StepResult closed_form_step(double s, double v, double u, const Discretization& disc, double dt) {
    double a = disc.accel(u);
    double vmax = disc.v_max();
    if (a > 0.0) {
        if (v >= vmax) return {s + vmax * dt, vmax};
        double t_hit = (vmax - v) / a;
        if (t_hit >= dt) return {s + v * dt + 0.5 * a * dt * dt, v + a * dt};
        double s_hit = v * t_hit + 0.5 * a * t_hit * t_hit;
        return {s + s_hit + vmax * (dt - t_hit), vmax};
    }
    if (a < 0.0) {
        if (v <= 0.0) return {s, 0.0};
        double t_hit = -v / a;
        if (t_hit >= dt) return {s + v * dt + 0.5 * a * dt * dt, v + a * dt};
        return {s + v * t_hit + 0.5 * a * t_hit * t_hit, 0.0};
    }
    return {s + v * dt, v};
}

TransitionMatrices compute_transition_matrices(const Discretization& disc) {
    TransitionMatrices out;
    out.disc = disc;

    // the dynamics are independent of s, so the landing pattern of a cell
    // depends only on (v, u): compute it once per (v, u) in terms of the
    // s-cell offset and replicate across the s axis
    int n_dim = std::max(1, static_cast<int>(std::floor(std::cbrt(double(disc.samples_per_cell)))));
    double total = double(n_dim) * n_dim * n_dim;

    struct Pattern {
        // (s-cell offset, landing v-cell) -> mass
        std::map<std::pair<int, int>, double> step;
        std::map<std::pair<int, int>, double> interval;
    };
    std::vector<Pattern> patterns(static_cast<std::size_t>(disc.n_v) * disc.n_u);

    for (int iv = 0; iv < disc.n_v; ++iv) {
        for (int iu = 0; iu < disc.n_u; ++iu) {
            Pattern& pat = patterns[static_cast<std::size_t>(iv) * disc.n_u + iu];
            for (int ia = 0; ia < n_dim; ++ia) {
                double s0 = (ia + 0.5) / n_dim * disc.ds;
                for (int ib = 0; ib < n_dim; ++ib) {
                    double v0 = (iv + (ib + 0.5) / n_dim) * disc.dv;
                    for (int ic = 0; ic < n_dim; ++ic) {
                        double u0 = -1.0 + (iu + (ic + 0.5) / n_dim) * disc.du();
                        StepResult r = closed_form_step(s0, v0, u0, disc, disc.tau);
                        int k = static_cast<int>(std::floor(r.s / disc.ds));
                        int jv = std::clamp(static_cast<int>(std::floor(r.v / disc.dv)), 0,
                                            disc.n_v - 1);
                        pat.step[{k, jv}] += 1.0 / total;
                        for (int m = 0; m < 10; ++m) {
                            double t = (m + 0.5) * disc.tau / 10.0;
                            StepResult q = closed_form_step(s0, v0, u0, disc, t);
                            int km = static_cast<int>(std::floor(q.s / disc.ds));
                            int jm = std::clamp(static_cast<int>(std::floor(q.v / disc.dv)), 0,
                                                disc.n_v - 1);
                            pat.interval[{km, jm}] += 1.0 / (10.0 * total);
                        }
                    }
                }
            }
        }
    }

    auto build = [&](bool use_interval) {
        SparseCSC m;
        m.nrows = m.ncols = disc.n_cells();
        m.colptr.reserve(m.ncols + 1);
        m.colptr.push_back(0);
        for (int is = 0; is < disc.n_s; ++is) {
            for (int iv = 0; iv < disc.n_v; ++iv) {
                for (int iu = 0; iu < disc.n_u; ++iu) {
                    const Pattern& pat = patterns[static_cast<std::size_t>(iv) * disc.n_u + iu];
                    const auto& src = use_interval ? pat.interval : pat.step;
                    // mass past the far end of the grid collapses into the
                    // last s cell, which can merge entries
                    std::map<std::int32_t, double> col;
                    for (const auto& [key, mass] : src) {
                        int land_s = std::min(is + key.first, disc.n_s - 1);
                        col[disc.index(land_s, key.second, iu)] += mass;
                    }
                    for (const auto& [row, val] : col) {
                        m.rows.push_back(row);
                        m.vals.push_back(val);
                    }
                    m.colptr.push_back(static_cast<std::int32_t>(m.rows.size()));
                }
            }
        }
        return m;
    };
    out.step = build(false);
    out.interval = build(true);
    return out;
}

namespace {

double vec_sum(const std::vector<double>& v) { return kernels::sum(v.data(), v.size()); }

}  // namespace

void save_matrices(const TransitionMatrices& m, const std::string& path) {
    nlohmann::json header{{"version", 1},
                          {"n_s", m.disc.n_s},
                          {"ds", m.disc.ds},
                          {"n_v", m.disc.n_v},
                          {"dv", m.disc.dv},
                          {"n_u", m.disc.n_u},
                          {"a_pos", m.disc.a_pos},
                          {"a_neg", m.disc.a_neg},
                          {"v_max", m.disc.v_max()},
                          {"tau", m.disc.tau},
                          {"samples_per_cell", m.disc.samples_per_cell},
                          {"step_nnz", m.step.vals.size()},
                          {"interval_nnz", m.interval.vals.size()},
                          {"step_sum", vec_sum(m.step.vals)},
                          {"interval_sum", vec_sum(m.interval.vals)}};
    std::string htxt = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out.write("IAMPMX01", 8);
    std::uint64_t hlen = htxt.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(htxt.data(), static_cast<std::streamsize>(htxt.size()));
    auto write_csc = [&](const SparseCSC& a) {
        std::uint64_t nnz = a.vals.size();
        out.write(reinterpret_cast<const char*>(&a.nrows), sizeof(a.nrows));
        out.write(reinterpret_cast<const char*>(&a.ncols), sizeof(a.ncols));
        out.write(reinterpret_cast<const char*>(&nnz), sizeof(nnz));
        out.write(reinterpret_cast<const char*>(a.colptr.data()),
                  static_cast<std::streamsize>(a.colptr.size() * sizeof(std::int32_t)));
        out.write(reinterpret_cast<const char*>(a.rows.data()),
                  static_cast<std::streamsize>(a.rows.size() * sizeof(std::int32_t)));
        out.write(reinterpret_cast<const char*>(a.vals.data()),
                  static_cast<std::streamsize>(a.vals.size() * sizeof(double)));
    };
    write_csc(m.step);
    write_csc(m.interval);
    if (!out) throw ParseError("write to '" + path + "' failed");
}

TransitionMatrices load_matrices(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open matrices file '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "IAMPMX01", 8) != 0) {
        throw ParseError("'" + path + "' is not a transition-matrices file");
    }
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in || hlen > (1u << 20)) throw ParseError("corrupt matrices header");
    std::string htxt(hlen, '\0');
    in.read(htxt.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htxt);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("corrupt matrices header: ") + e.what());
    }

    TransitionMatrices m;
    m.disc.n_s = header.at("n_s").get<int>();
    m.disc.ds = header.at("ds").get<double>();
    m.disc.n_v = header.at("n_v").get<int>();
    m.disc.dv = header.at("dv").get<double>();
    m.disc.n_u = header.at("n_u").get<int>();
    m.disc.a_pos = header.at("a_pos").get<double>();
    m.disc.a_neg = header.at("a_neg").get<double>();
    m.disc.tau = header.at("tau").get<double>();
    m.disc.samples_per_cell = header.at("samples_per_cell").get<int>();

    auto read_csc = [&](SparseCSC& a) {
        std::uint64_t nnz = 0;
        in.read(reinterpret_cast<char*>(&a.nrows), sizeof(a.nrows));
        in.read(reinterpret_cast<char*>(&a.ncols), sizeof(a.ncols));
        in.read(reinterpret_cast<char*>(&nnz), sizeof(nnz));
        if (!in || a.ncols <= 0) throw ParseError("corrupt matrices payload");
        a.colptr.resize(a.ncols + 1);
        a.rows.resize(nnz);
        a.vals.resize(nnz);
        in.read(reinterpret_cast<char*>(a.colptr.data()),
                static_cast<std::streamsize>(a.colptr.size() * sizeof(std::int32_t)));
        in.read(reinterpret_cast<char*>(a.rows.data()),
                static_cast<std::streamsize>(a.rows.size() * sizeof(std::int32_t)));
        in.read(reinterpret_cast<char*>(a.vals.data()),
                static_cast<std::streamsize>(a.vals.size() * sizeof(double)));
        if (!in) throw ParseError("corrupt matrices payload");
    };
    read_csc(m.step);
    read_csc(m.interval);

    // negated <= so NaNs in a damaged payload also fail the check
    if (m.step.vals.size() != header.at("step_nnz").get<std::uint64_t>() ||
        m.interval.vals.size() != header.at("interval_nnz").get<std::uint64_t>() ||
        !(std::abs(vec_sum(m.step.vals) - header.at("step_sum").get<double>()) <= 1e-9) ||
        !(std::abs(vec_sum(m.interval.vals) - header.at("interval_sum").get<double>()) <= 1e-9)) {
        throw ParseError("matrices file failed its checksum");
    }
    return m;
}

std::vector<double> default_psi(int n_u) {
    std::vector<double> psi(static_cast<std::size_t>(n_u) * n_u, 0.0);
    for (int j = 0; j < n_u; ++j) {
        bool edge = (j == 0 || j == n_u - 1);
        psi[static_cast<std::size_t>(j) * n_u + j] = edge ? 0.9 : 0.8;
        if (j > 0) psi[static_cast<std::size_t>(j - 1) * n_u + j] = 0.1;
        if (j + 1 < n_u) psi[static_cast<std::size_t>(j + 1) * n_u + j] = 0.1;
    }
    return psi;
}

InputTransition build_gamma_baseline(std::vector<double> psi, std::vector<double> lambda,
                                     bool per_state) {
    InputTransition g;
    g.psi = std::move(psi);
    g.lambda = std::move(lambda);
    g.per_state = per_state;
    return g;
}

InputTransition build_gamma_hybrid(std::vector<double> psi, std::vector<double> u_cell_mass) {
    InputTransition g;
    g.psi = std::move(psi);
    g.lambda = std::move(u_cell_mass);
    g.per_state = false;
    return g;
}

std::vector<double> gamma_block(const InputTransition& g, const Discretization& disc, int state) {
    const int n = disc.n_u;
    const double* lam = g.per_state ? g.lambda.data() + static_cast<std::size_t>(state) * n
                                    : g.lambda.data();
    std::vector<double> block(static_cast<std::size_t>(n) * n, 0.0);
    for (int j = 0; j < n; ++j) {
        double denom = 0.0;
        for (int i = 0; i < n; ++i) denom += g.psi[static_cast<std::size_t>(i) * n + j] * lam[i];
        if (denom > 1e-300) {
            for (int i = 0; i < n; ++i) {
                block[static_cast<std::size_t>(i) * n + j] =
                    g.psi[static_cast<std::size_t>(i) * n + j] * lam[i] / denom;
            }
        } else {
            // nothing admissible: brake as hard as possible
            block[static_cast<std::size_t>(0) * n + j] = 1.0;
        }
    }
    return block;
}

StateDistribution StateDistribution::point_mass(const Discretization& disc, double s, double v,
                                                double u_norm) {
    StateDistribution d;
    d.p.assign(disc.n_cells(), 0.0);

    // linear splatting onto the two nearest cell centers per axis keeps the
    // distribution mean at the requested point
    auto weights = [](double x, int n) {
        // x in cell-center units
        int i0 = static_cast<int>(std::floor(x));
        double frac = x - i0;
        std::array<std::pair<int, double>, 2> w{{{i0, 1.0 - frac}, {i0 + 1, frac}}};
        for (auto& [i, wt] : w) i = std::clamp(i, 0, n - 1);
        return w;
    };
    auto ws = weights(s / disc.ds - 0.5, disc.n_s);
    auto wv = weights(v / disc.dv - 0.5, disc.n_v);
    int iu = disc.u_cell(u_norm);
    for (auto [is, a] : ws) {
        for (auto [iv, b] : wv) {
            d.p[disc.index(is, iv, iu)] += a * b;
        }
    }
    return d;
}

PropagationResult propagate(const StateDistribution& p, const InputTransition& gamma,
                            const TransitionMatrices& m) {
    const Discretization& disc = m.disc;
    if (static_cast<int>(p.p.size()) != disc.n_cells()) {
        throw DimensionError("state distribution does not match the discretization");
    }

    PropagationResult out;
    std::vector<double> tmp(p.p.size());
    spmv(m.step, p.p.data(), tmp.data());

    out.next.p.assign(p.p.size(), 0.0);
    out.next.t_k = p.t_k + 1;
    const int nu = disc.n_u;
    std::vector<double> shared;
    if (!gamma.per_state) shared = gamma_block(gamma, disc, 0);
    std::vector<double> block;
    for (int state = 0; state < disc.n_states(); ++state) {
        const double* in = tmp.data() + static_cast<std::size_t>(state) * nu;
        double* dst = out.next.p.data() + static_cast<std::size_t>(state) * nu;
        bool any = false;
        for (int j = 0; j < nu; ++j) any |= (in[j] != 0.0);
        if (!any) continue;
        const double* blk = shared.data();
        if (gamma.per_state) {
            block = gamma_block(gamma, disc, state);
            blk = block.data();
        }
        kernels::gemv(nu, nu, blk, in, dst);
    }

    double total = vec_sum(out.next.p);
    if (std::abs(total - 1.0) > 1e-6) {
        throw NumericError("propagated mass drifted to " + std::to_string(total));
    }

    out.interval.assign(p.p.size(), 0.0);
    spmv(m.interval, p.p.data(), out.interval.data());
    return out;
}

std::vector<double> layout_lambda(const Discretization& disc,
                                  const std::vector<double>& v_allowed) {
    if (static_cast<int>(v_allowed.size()) != disc.n_s) {
        throw DimensionError("v_allowed must have one entry per s cell");
    }
    std::vector<double> lam(disc.n_cells(), 1.0);
    for (int is = 0; is < disc.n_s; ++is) {
        for (int iv = 0; iv < disc.n_v; ++iv) {
            for (int iu = 0; iu < disc.n_u; ++iu) {
                StepResult r = closed_form_step(disc.s_center(is), disc.v_center(iv),
                                                disc.u_center(iu), disc, disc.tau);
                if (r.v > v_allowed[disc.s_cell(r.s)] + 1e-9) {
                    lam[disc.index(is, iv, iu)] = 0.0;
                }
            }
        }
    }
    return lam;
}

std::vector<std::uint16_t> occupancy_masks(const Discretization& disc, const ConflictWindow& w) {
    // bit m covers prediction step m: two cells collide when their constant-
    // input trajectories overlap the window during the same step
    std::vector<std::uint16_t> masks(disc.n_cells(), 0);
    for (int is = 0; is < disc.n_s; ++is) {
        for (int iv = 0; iv < disc.n_v; ++iv) {
            for (int iu = 0; iu < disc.n_u; ++iu) {
                std::uint16_t mask = 0;
                for (int m = 0; m < 10; ++m) {
                    double t = (m + 0.5) * disc.tau;
                    StepResult r = closed_form_step(disc.s_center(is), disc.v_center(iv),
                                                    disc.u_center(iu), disc, t);
                    if (std::abs(r.s - w.s_conflict) <= w.half_extent) {
                        mask = static_cast<std::uint16_t>(mask | (1u << m));
                    }
                }
                masks[disc.index(is, iv, iu)] = mask;
            }
        }
    }
    return masks;
}

InteractionMatrix build_interaction(const Discretization& disc, const ConflictWindow& dependent,
                                    const ConflictWindow& blocking) {
    auto dep = occupancy_masks(disc, dependent);
    auto blk = occupancy_masks(disc, blocking);
    InteractionMatrix im;
    im.n = disc.n_cells();
    im.m.assign(static_cast<std::size_t>(im.n) * im.n, 0.0f);
    for (std::int64_t d = 0; d < im.n; ++d) {
        std::uint16_t md = dep[d];
        if (md == 0) continue;  // row stays zero
        float* row = im.m.data() + static_cast<std::size_t>(d) * im.n;
        for (std::int64_t b = 0; b < im.n; ++b) {
            if (md & blk[b]) row[b] = 1.0f;
        }
    }
    return im;
}

std::vector<double> interaction_lambda(const InteractionMatrix& im,
                                       const std::vector<double>& p_blocking) {
    if (static_cast<std::int64_t>(p_blocking.size()) != im.n) {
        throw DimensionError("blocking distribution does not match the interaction matrix");
    }
    std::vector<float> pf(p_blocking.begin(), p_blocking.end());
    std::vector<float> hit(im.n);
    kernels::gemv_f32(static_cast<std::size_t>(im.n), static_cast<std::size_t>(im.n),
                      im.m.data(), pf.data(), hit.data());
    std::vector<double> lam(im.n);
    for (std::int64_t i = 0; i < im.n; ++i) {
        lam[i] = std::clamp(1.0 - static_cast<double>(hit[i]), 0.0, 1.0);
    }
    return lam;
}

std::vector<double> s_marginal(const Discretization& disc, const std::vector<double>& p) {
    std::vector<double> m(disc.n_s, 0.0);
    for (int is = 0; is < disc.n_s; ++is) {
        const double* base = p.data() + static_cast<std::size_t>(is) * disc.n_v * disc.n_u;
        m[is] = kernels::sum(base, static_cast<std::size_t>(disc.n_v) * disc.n_u);
    }
    return m;
}

std::vector<double> v_marginal(const Discretization& disc, const std::vector<double>& p) {
    std::vector<double> m(disc.n_v, 0.0);
    for (int is = 0; is < disc.n_s; ++is) {
        for (int iv = 0; iv < disc.n_v; ++iv) {
            const double* base = p.data() + static_cast<std::size_t>(disc.index(is, iv, 0));
            m[iv] += kernels::sum(base, disc.n_u);
        }
    }
    return m;
}

double mean_s(const Discretization& disc, const std::vector<double>& p) {
    auto m = s_marginal(disc, p);
    double acc = 0.0, tot = 0.0;
    for (int is = 0; is < disc.n_s; ++is) {
        acc += m[is] * disc.s_center(is);
        tot += m[is];
    }
    return tot > 0.0 ? acc / tot : 0.0;
}

double mean_v(const Discretization& disc, const std::vector<double>& p) {
    auto m = v_marginal(disc, p);
    double acc = 0.0, tot = 0.0;
    for (int iv = 0; iv < disc.n_v; ++iv) {
        acc += m[iv] * disc.v_center(iv);
        tot += m[iv];
    }
    return tot > 0.0 ? acc / tot : 0.0;
}

}  // namespace iamp
