#include <cmath>
#include <cstdio>
#include <random>

#include "doctest.h"
#include "iamp/error.hpp"
#include "iamp/markov.hpp"

using iamp::Discretization;
using iamp::InputTransition;
using iamp::StateDistribution;
using iamp::TransitionMatrices;

namespace {

// independent fine-step integration of the clamped dynamics (trapezoidal in
// velocity, which is exact on the piecewise-linear speed profile)
iamp::StepResult euler_oracle(double s, double v, double u, const Discretization& disc,
                              double dt, double h = 1e-5) {
    double a = disc.accel(u);
    int steps = static_cast<int>(std::round(dt / h));
    for (int i = 0; i < steps; ++i) {
        double v_next = std::clamp(v + a * h, 0.0, disc.v_max());
        s += 0.5 * (v + v_next) * h;
        v = v_next;
    }
    return {s, v};
}

const TransitionMatrices& default_matrices() {
    static TransitionMatrices m = iamp::compute_transition_matrices(Discretization{});
    return m;
}

std::vector<double> random_distribution(const Discretization& disc, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(disc.n_cells());
    double tot = 0.0;
    for (auto& x : p) {
        x = u(rng) < 0.97 ? 0.0 : u(rng);  // sparse support, like real chains
        tot += x;
    }
    if (tot == 0.0) {
        p[0] = 1.0;
    } else {
        for (auto& x : p) x /= tot;
    }
    return p;
}

std::vector<double> one_hot(int n, int idx) {
    std::vector<double> v(n, 0.0);
    v[idx] = 1.0;
    return v;
}

}  // namespace

TEST_CASE("closed-form step: coasting, top-speed clamp, stop clamp") {
    Discretization d;
    auto r = iamp::closed_form_step(0, 5, 0, d, 0.4);
    CHECK(r.s == doctest::Approx(2.0));
    CHECK(r.v == doctest::Approx(5.0));

    auto top = iamp::closed_form_step(0, d.v_max(), 1.0, d, 0.4);
    CHECK(top.s == doctest::Approx(d.v_max() * 0.4));
    CHECK(top.v == doctest::Approx(d.v_max()));

    // v = 1, full braking (3 m/s^2): stops after 1/3 s having moved 1/6 m
    auto stop = iamp::closed_form_step(0, 1, -1.0, d, 0.4);
    CHECK(stop.v == doctest::Approx(0.0));
    CHECK(stop.s == doctest::Approx(1.0 / 6.0).epsilon(1e-9));
    auto oracle = euler_oracle(0, 1, -1.0, d, 0.4);
    CHECK(std::abs(stop.s - oracle.s) < 1e-6);
    CHECK(std::abs(stop.v - oracle.v) < 1e-6);
}

TEST_CASE("closed-form step matches fine integration on random inputs") {
    Discretization d;
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> uv(0.0, d.v_max()), uu(-1.0, 1.0);
    for (int k = 0; k < 40; ++k) {
        double v = uv(rng), u = uu(rng);
        auto got = iamp::closed_form_step(3.0, v, u, d, 0.4);
        auto want = euler_oracle(3.0, v, u, d, 0.4);
        CHECK(std::abs(got.s - want.s) < 1e-6);
        CHECK(std::abs(got.v - want.v) < 1e-6);
    }
}

TEST_CASE("single-sample transition is a unit mass on the landing cell") {
    Discretization d;
    d.samples_per_cell = 1;  // cell centers only
    auto m = iamp::compute_transition_matrices(d);
    // u = 0 cell center, v cell with center 5 m/s: lands 2 m ahead, same v
    int iu0 = d.n_u / 2;
    CHECK(d.u_center(iu0) == doctest::Approx(0.0));
    int col = d.index(3, 4, iu0);  // s center 7, v center 4.5
    double land_s = 7.0 + 4.5 * 0.4;
    int want_row = d.index(d.s_cell(land_s), 4, iu0);
    REQUIRE(m.step.colptr[col + 1] - m.step.colptr[col] == 1);
    CHECK(m.step.rows[m.step.colptr[col]] == want_row);
    CHECK(m.step.vals[m.step.colptr[col]] == doctest::Approx(1.0));
}

TEST_CASE("every transition column is stochastic") {
    const auto& m = default_matrices();
    for (int c = 0; c < m.step.ncols; ++c) {
        double sum = 0.0;
        for (auto k = m.step.colptr[c]; k < m.step.colptr[c + 1]; ++k) {
            CHECK(m.step.vals[k] >= 0.0);
            CHECK(m.step.vals[k] <= 1.0);
            sum += m.step.vals[k];
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-9);
    }
    for (int c = 0; c < m.interval.ncols; ++c) {
        double sum = 0.0;
        for (auto k = m.interval.colptr[c]; k < m.interval.colptr[c + 1]; ++k) {
            sum += m.interval.vals[k];
        }
        REQUIRE(sum <= 1.0 + 1e-9);
    }
}

TEST_CASE("transition columns match a Monte-Carlo integration of the dynamics") {
    const auto& m = default_matrices();
    const Discretization& d = m.disc;
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> pick_s(0, d.n_s - 4), pick_v(0, d.n_v - 1),
        pick_u(0, d.n_u - 1);
    std::uniform_real_distribution<double> un(0.0, 1.0);

    for (int rep = 0; rep < 5; ++rep) {
        int is = pick_s(rng), iv = pick_v(rng), iu = pick_u(rng);
        int col = d.index(is, iv, iu);

        const int N = 30000;
        std::vector<double> mc(d.n_cells(), 0.0);
        for (int k = 0; k < N; ++k) {
            double s0 = (is + un(rng)) * d.ds;
            double v0 = (iv + un(rng)) * d.dv;
            double u0 = -1.0 + (iu + un(rng)) * d.du();
            auto r = euler_oracle(s0, v0, u0, d, d.tau, d.tau / 200.0);
            int land_s = std::min(d.n_s - 1, static_cast<int>(std::floor(r.s / d.ds)));
            int land_v = std::clamp(static_cast<int>(std::floor(r.v / d.dv)), 0, d.n_v - 1);
            mc[d.index(land_s, land_v, iu)] += 1.0 / N;
        }

        std::vector<double> col_vals(d.n_cells(), 0.0);
        for (auto k = m.step.colptr[col]; k < m.step.colptr[col + 1]; ++k) {
            col_vals[m.step.rows[k]] = m.step.vals[k];
        }
        double tv = 0.0;
        for (int i = 0; i < d.n_cells(); ++i) tv += std::abs(col_vals[i] - mc[i]);
        CHECK(tv / 2.0 <= 0.05);
    }
}

TEST_CASE("default input mixing is ergodic with a uniform stationary law") {
    Discretization d;
    auto psi = iamp::default_psi(d.n_u);
    // column sums
    for (int j = 0; j < d.n_u; ++j) {
        double s = 0.0;
        for (int i = 0; i < d.n_u; ++i) s += psi[i * d.n_u + j];
        CHECK(s == doctest::Approx(1.0));
    }
    // power iteration from a corner distribution
    std::vector<double> p = one_hot(d.n_u, 0);
    for (int it = 0; it < 2000; ++it) {
        std::vector<double> q(d.n_u, 0.0);
        for (int i = 0; i < d.n_u; ++i) {
            for (int j = 0; j < d.n_u; ++j) q[i] += psi[i * d.n_u + j] * p[j];
        }
        p = q;
    }
    for (double x : p) CHECK(x == doctest::Approx(1.0 / d.n_u).epsilon(1e-6));
}

TEST_CASE("gamma with uniform priorities reduces to the mixing matrix") {
    Discretization d;
    auto psi = iamp::default_psi(d.n_u);
    auto g = iamp::build_gamma_baseline(psi, std::vector<double>(d.n_u, 1.0), false);
    auto block = iamp::gamma_block(g, d, 0);
    for (int i = 0; i < d.n_u * d.n_u; ++i) CHECK(block[i] == doctest::Approx(psi[i]));
}

TEST_CASE("one-hot priority concentrates gamma on the braking cell") {
    Discretization d;
    auto g = iamp::build_gamma_baseline(iamp::default_psi(d.n_u), one_hot(d.n_u, 0), false);
    auto block = iamp::gamma_block(g, d, 0);
    for (int j = 0; j < d.n_u; ++j) {
        for (int i = 0; i < d.n_u; ++i) {
            double want = (i == 0) ? 1.0 : 0.0;
            // psi's support does not reach cell 0 from far columns: those
            // columns fall back to the braking cell too
            CHECK(block[i * d.n_u + j] == doctest::Approx(want));
        }
    }
}

TEST_CASE("identity matrices leave the distribution unchanged") {
    Discretization d;
    d.n_s = 4;
    d.n_v = 2;
    d.n_u = 3;
    TransitionMatrices m;
    m.disc = d;
    auto identity = [&]() {
        iamp::SparseCSC a;
        a.nrows = a.ncols = d.n_cells();
        for (int i = 0; i < d.n_cells(); ++i) {
            a.colptr.push_back(i);
            a.rows.push_back(i);
            a.vals.push_back(1.0);
        }
        a.colptr.push_back(d.n_cells());
        return a;
    };
    m.step = identity();
    m.interval = identity();

    std::vector<double> psi(9, 0.0);
    psi[0] = psi[4] = psi[8] = 1.0;
    auto g = iamp::build_gamma_baseline(psi, std::vector<double>(3, 1.0), false);

    std::mt19937_64 rng(3);
    StateDistribution p;
    p.p = random_distribution(d, rng);
    auto r = iamp::propagate(p, g, m);
    for (int i = 0; i < d.n_cells(); ++i) {
        CHECK(r.next.p[i] == doctest::Approx(p.p[i]));
        CHECK(r.interval[i] == doctest::Approx(p.p[i]));
    }
}

TEST_CASE("two steps equal one squared-matrix step on a toy chain") {
    Discretization d;
    d.n_s = 3;
    d.n_v = 1;
    d.n_u = 1;
    TransitionMatrices m;
    m.disc = d;
    // dense 3x3 column-stochastic matrix in CSC form
    double a[9] = {0.5, 0.3, 0.2,   // column 0
                   0.1, 0.8, 0.1,   // column 1
                   0.0, 0.4, 0.6};  // column 2
    m.step.nrows = m.step.ncols = 3;
    for (int c = 0; c < 3; ++c) {
        m.step.colptr.push_back(3 * c);
        for (int r = 0; r < 3; ++r) {
            m.step.rows.push_back(r);
            m.step.vals.push_back(a[3 * c + r]);
        }
    }
    m.step.colptr.push_back(9);
    m.interval = m.step;

    auto g = iamp::build_gamma_baseline({1.0}, {1.0}, false);
    StateDistribution p;
    p.p = {0.2, 0.5, 0.3};
    auto once = iamp::propagate(p, g, m);
    auto twice = iamp::propagate(once.next, g, m);

    // (M*M)*p computed densely here
    double m2[9];
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += a[3 * k + i] * a[3 * j + k];
            m2[3 * j + i] = acc;
        }
    }
    for (int i = 0; i < 3; ++i) {
        double want = 0.0;
        for (int j = 0; j < 3; ++j) want += m2[3 * j + i] * p.p[j];
        CHECK(twice.next.p[i] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("point mass initialization keeps the requested moments") {
    Discretization d;
    auto p = StateDistribution::point_mass(d, 10.0, 10.0, 0.0);
    CHECK(iamp::mean_s(d, p.p) == doctest::Approx(10.0));
    CHECK(iamp::mean_v(d, p.p) == doctest::Approx(10.0));  // splits across the 9/10 cell edge
    double tot = 0.0;
    for (double x : p.p) tot += x;
    CHECK(tot == doctest::Approx(1.0));
}

TEST_CASE("full-throttle propagation follows the closed-form distance") {
    const auto& m = default_matrices();
    const Discretization& d = m.disc;
    auto g = iamp::build_gamma_baseline(iamp::default_psi(d.n_u), one_hot(d.n_u, d.n_u - 1),
                                        false);
    double u_hi = d.u_center(d.n_u - 1);
    StateDistribution p = StateDistribution::point_mass(d, 10.0, 2.0, u_hi);
    for (int k = 0; k < 10; ++k) p = iamp::propagate(p, g, m).next;

    auto want = euler_oracle(10.0, 2.0, u_hi, d, 10 * d.tau);
    CHECK(std::abs(iamp::mean_s(d, p.p) - want.s) < d.ds);
    CHECK(std::abs(iamp::mean_v(d, p.p) - want.v) < d.dv);
}

TEST_CASE("zero-acceleration input mass holds the mean speed") {
    const auto& m = default_matrices();
    const Discretization& d = m.disc;
    auto g = iamp::build_gamma_hybrid(iamp::default_psi(d.n_u), one_hot(d.n_u, d.n_u / 2));
    StateDistribution p = StateDistribution::point_mass(d, 10.0, 8.0, 0.0);
    for (int k = 0; k < 10; ++k) p = iamp::propagate(p, g, m).next;
    CHECK(std::abs(iamp::mean_v(d, p.p) - 8.0) < d.dv);
    CHECK(std::abs(iamp::mean_s(d, p.p) - (10.0 + 8.0 * 4.0)) < d.ds);
}

TEST_CASE("braking-heavy input mass lowers speed over the horizon") {
    const auto& m = default_matrices();
    const Discretization& d = m.disc;
    std::vector<double> brake_mass(d.n_u, 0.0);
    brake_mass[0] = 0.5;
    brake_mass[1] = 0.3;
    brake_mass[2] = 0.2;
    auto g = iamp::build_gamma_hybrid(iamp::default_psi(d.n_u), brake_mass);
    StateDistribution p = StateDistribution::point_mass(d, 10.0, 12.0, 0.0);
    double v_prev = iamp::mean_v(d, p.p);
    for (int k = 0; k < 5; ++k) {
        p = iamp::propagate(p, g, m).next;
        double v_now = iamp::mean_v(d, p.p);
        CHECK(v_now < v_prev + 1e-9);
        v_prev = v_now;
    }
}

TEST_CASE("mass is conserved over a 10-step horizon") {
    const auto& m = default_matrices();
    const Discretization& d = m.disc;
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 10; ++rep) {
        StateDistribution p;
        p.p = random_distribution(d, rng);
        auto g = iamp::build_gamma_hybrid(iamp::default_psi(d.n_u),
                                          random_distribution(Discretization{.n_s = 1, .n_v = 1},
                                                              rng));
        for (int k = 0; k < 10; ++k) p = iamp::propagate(p, g, m).next;
        double tot = 0.0;
        for (double x : p.p) tot += x;
        CHECK(std::abs(tot - 1.0) < 1e-6);
    }
}

TEST_CASE("shifting input mass toward braking never lengthens the path") {
    const auto& m = default_matrices();
    const Discretization& d = m.disc;
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> un(0.0, 1.0);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> mass(d.n_u);
        double tot = 0.0;
        for (auto& x : mass) {
            x = un(rng);
            tot += x;
        }
        for (auto& x : mass) x /= tot;
        // shifted: every cell's mass moves one cell toward stronger braking
        std::vector<double> shifted(d.n_u, 0.0);
        shifted[0] = mass[0] + mass[1];
        for (int i = 1; i + 1 < d.n_u; ++i) shifted[i] = mass[i + 1];

        StateDistribution p0;
        p0.p = random_distribution(d, rng);
        auto ga = iamp::build_gamma_hybrid(iamp::default_psi(d.n_u), mass);
        auto gb = iamp::build_gamma_hybrid(iamp::default_psi(d.n_u), shifted);
        StateDistribution pa = p0, pb = p0;
        for (int k = 0; k < 3; ++k) {
            pa = iamp::propagate(pa, ga, m).next;
            pb = iamp::propagate(pb, gb, m).next;
        }
        CHECK(iamp::mean_s(d, pb.p) <= iamp::mean_s(d, pa.p) + 1e-9);
    }
}

TEST_CASE("layout admissibility zeroes inputs that overshoot the allowed speed") {
    Discretization d;
    d.n_s = 10;
    std::vector<double> v_allowed(d.n_s, 8.0);
    auto lam = iamp::layout_lambda(d, v_allowed);
    // a state already at 7.5 m/s accelerating hard exceeds 8 m/s
    int hot = d.index(2, 7, d.n_u - 1);  // v center 7.5, strong throttle
    CHECK(lam[hot] == 0.0);
    // coasting at 4.5 m/s stays legal
    CHECK(lam[d.index(2, 4, d.n_u / 2)] == 1.0);
    // braking is always admissible at legal speeds
    CHECK(lam[d.index(2, 7, 0)] == 1.0);
}

TEST_CASE("interaction is empty when the blocker is past the window") {
    Discretization d;
    d.n_s = 20;
    iamp::ConflictWindow dep{15.0, 2.5};
    iamp::ConflictWindow blk{10.0, 2.5};
    auto im = iamp::build_interaction(d, dep, blk);
    // blocking mass far beyond its conflict point, and fast: never returns
    auto pb = StateDistribution::point_mass(d, 30.0, 10.0, 0.0);
    auto lam = iamp::interaction_lambda(im, pb.p);
    for (double x : lam) CHECK(x == doctest::Approx(1.0));
}

TEST_CASE("a blocker parked on the conflict forbids approaching inputs") {
    Discretization d;
    d.n_s = 20;
    double conflict = 25.0;
    iamp::ConflictWindow w{conflict, 2.5};
    auto im = iamp::build_interaction(d, w, w);
    // blocker at rest exactly on the conflict point
    auto pb = StateDistribution::point_mass(d, conflict, 0.0, 0.0);
    auto lam = iamp::interaction_lambda(im, pb.p);

    // dependent 10 m short of the conflict at 5 m/s: any non-braking input
    // reaches the window within the horizon while the blocker sits in it
    int is = d.s_cell(conflict - 10.0);
    for (int iv = 5; iv < d.n_v; ++iv) {
        for (int iu = d.n_u / 2; iu < d.n_u; ++iu) {
            CHECK(lam[d.index(is, iv, iu)] == doctest::Approx(0.0));
        }
    }
    // full braking from 5 m/s stops short of the window (25/6 m < 7.5 m)
    CHECK(lam[d.index(is, 5, 0)] == doctest::Approx(1.0));

    // gamma built from this priority keeps throttle mass near zero
    auto g = iamp::build_gamma_baseline(iamp::default_psi(d.n_u), lam, true);
    for (int iv = 5; iv < d.n_v; ++iv) {
        auto block = iamp::gamma_block(g, d, is * d.n_v + iv);
        for (int j = 0; j < d.n_u; ++j) {
            double throttle = 0.0;
            for (int i = 0; i < d.n_u; ++i) {
                if (d.u_center(i) > 0) throttle += block[i * d.n_u + j];
            }
            CHECK(throttle < 0.05);
        }
    }
}

TEST_CASE("interaction priorities match brute-force overlap enumeration") {
    Discretization d;
    d.n_s = 6;
    d.n_v = 3;
    d.n_u = 3;
    iamp::ConflictWindow dep{7.0, 2.0};
    iamp::ConflictWindow blk{5.0, 2.0};
    auto im = iamp::build_interaction(d, dep, blk);

    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> un(0.0, 1.0);
    std::vector<double> pb(d.n_cells());
    double tot = 0.0;
    for (auto& x : pb) {
        x = un(rng);
        tot += x;
    }
    for (auto& x : pb) x /= tot;

    auto lam = iamp::interaction_lambda(im, pb);

    // oracle: simulate both cell centers step by step and accumulate the
    // blocking mass that shares a window interval with the dependent cell
    for (int cell = 0; cell < d.n_cells(); ++cell) {
        int is = cell / (d.n_v * d.n_u), iv = (cell / d.n_u) % d.n_v, iu = cell % d.n_u;
        double hit_mass = 0.0;
        for (int bcell = 0; bcell < d.n_cells(); ++bcell) {
            int bs = bcell / (d.n_v * d.n_u), bv = (bcell / d.n_u) % d.n_v, bu = bcell % d.n_u;
            bool overlap = false;
            for (int m = 0; m < 10 && !overlap; ++m) {
                double t = (m + 0.5) * d.tau;
                auto rd = iamp::closed_form_step(d.s_center(is), d.v_center(iv), d.u_center(iu),
                                                 d, t);
                auto rb = iamp::closed_form_step(d.s_center(bs), d.v_center(bv), d.u_center(bu),
                                                 d, t);
                overlap = std::abs(rd.s - dep.s_conflict) <= dep.half_extent &&
                          std::abs(rb.s - blk.s_conflict) <= blk.half_extent;
            }
            if (overlap) hit_mass += pb[bcell];
        }
        CHECK(lam[cell] == doctest::Approx(std::clamp(1.0 - hit_mass, 0.0, 1.0)).epsilon(1e-4));
    }
}

TEST_CASE("matrices survive a save/load round trip and reject corruption") {
    Discretization d;
    d.n_s = 8;
    d.samples_per_cell = 64;
    auto m = iamp::compute_transition_matrices(d);
    const char* path = "roundtrip_matrices.bin";
    iamp::save_matrices(m, path);
    auto back = iamp::load_matrices(path);
    CHECK(back.disc.n_s == d.n_s);
    CHECK(back.disc.n_u == d.n_u);
    CHECK(back.disc.samples_per_cell == 64);
    REQUIRE(back.step.vals.size() == m.step.vals.size());
    for (std::size_t i = 0; i < m.step.vals.size(); ++i) {
        CHECK(back.step.vals[i] == m.step.vals[i]);
    }

    // flip one payload byte: the checksum must catch it
    {
        std::FILE* f = std::fopen(path, "r+b");
        REQUIRE(f);
        std::fseek(f, -9, SEEK_END);
        int c = std::fgetc(f);
        std::fseek(f, -9, SEEK_END);
        std::fputc(c ^ 0x40, f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(iamp::load_matrices(path), iamp::ParseError);
    std::remove(path);
}

TEST_CASE("propagation rejects mismatched distributions") {
    const auto& m = default_matrices();
    StateDistribution p;
    p.p.assign(10, 0.1);
    auto g = iamp::build_gamma_hybrid(iamp::default_psi(m.disc.n_u), one_hot(m.disc.n_u, 0));
    CHECK_THROWS_AS(iamp::propagate(p, g, m), iamp::DimensionError);
}
