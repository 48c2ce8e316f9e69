#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace iamp {

// Joint (s, v, u) cell grid for the longitudinal chain. u is the normalized
// acceleration input in [-1, 1]; negative inputs scale by a_neg (braking),
// positive by a_pos, giving the asymmetric physical range [-a_neg, a_pos].
struct Discretization {
    int n_s = 60;
    double ds = 2.0;
    int n_v = 15;
    double dv = 1.0;
    int n_u = 11;
    double a_pos = 2.0;
    double a_neg = 3.0;
    double tau = 0.4;
    int samples_per_cell = 4096;

    double v_max() const { return n_v * dv; }
    double s_max() const { return n_s * ds; }
    double du() const { return 2.0 / n_u; }
    int n_states() const { return n_s * n_v; }
    int n_cells() const { return n_s * n_v * n_u; }
    int index(int is, int iv, int iu) const { return (is * n_v + iv) * n_u + iu; }
    double s_center(int is) const { return (is + 0.5) * ds; }
    double v_center(int iv) const { return (iv + 0.5) * dv; }
    double u_center(int iu) const { return -1.0 + (iu + 0.5) * du(); }
    double accel(double u) const { return u < 0.0 ? a_neg * u : a_pos * u; }
    int s_cell(double s) const;
    int v_cell(double v) const;
    int u_cell(double u) const;
};

struct SparseCSC {
    std::int32_t nrows = 0;
    std::int32_t ncols = 0;
    std::vector<std::int32_t> colptr;
    std::vector<std::int32_t> rows;
    std::vector<double> vals;
};

// y = A x
void spmv(const SparseCSC& a, const double* x, double* y);

struct TransitionMatrices {
    Discretization disc;
    SparseCSC step;      // one-step transition, column stochastic
    SparseCSC interval;  // occupancy over the step interval
};

// Integrate s' = v, v' = accel(u) over dt with the speed clamped to
// [0, v_max]; the clamp crossing is handled analytically.
struct StepResult {
    double s;
    double v;
};
StepResult closed_form_step(double s, double v, double u, const Discretization& disc, double dt);

// Cell-mapping abstraction of the dynamics: stratified samples per cell are
// advanced with closed_form_step and binned; landing cells past the end of
// the s range collapse into the last cell. Interval occupancy is sampled at
// ten midpoints of the step.
TransitionMatrices compute_transition_matrices(const Discretization& disc);

void save_matrices(const TransitionMatrices& m, const std::string& path);
TransitionMatrices load_matrices(const std::string& path);

// Input mixing. psi is n_u x n_u column stochastic; lambda weights are per
// u cell, either shared by all (s, v) states or per state (n_states * n_u,
// u fastest).
struct InputTransition {
    std::vector<double> psi;
    std::vector<double> lambda;
    bool per_state = false;
};

std::vector<double> default_psi(int n_u);

InputTransition build_gamma_baseline(std::vector<double> psi, std::vector<double> lambda,
                                     bool per_state);
InputTransition build_gamma_hybrid(std::vector<double> psi, std::vector<double> u_cell_mass);

// One n_u x n_u column-stochastic block of Gamma for a given state:
// gamma_ij = psi_ij * lambda_i / sum_i psi_ij * lambda_i, with an all-braking
// fallback column when the denominator vanishes.
std::vector<double> gamma_block(const InputTransition& g, const Discretization& disc, int state);

struct StateDistribution {
    std::vector<double> p;
    int t_k = 0;

    static StateDistribution point_mass(const Discretization& disc, double s, double v,
                                        double u_norm);
};

struct PropagationResult {
    StateDistribution next;
    std::vector<double> interval;  // occupancy mass over [t_k, t_k + tau]
};

// One chain step: p_next = Gamma * (step * p), p_interval = interval * p.
// Throws NumericError when the propagated mass drifts from 1 by > 1e-6.
PropagationResult propagate(const StateDistribution& p, const InputTransition& gamma,
                            const TransitionMatrices& m);

// Admissibility of each (state, u) from road layout: 1 when the closed-form
// step from the cell center lands at a speed within v_allowed of the landing
// s cell, else 0. v_allowed combines speed limit and curvature comfort.
std::vector<double> layout_lambda(const Discretization& disc,
                                  const std::vector<double>& v_allowed);

// Collision coupling between a dependent and a blocking corridor around a
// shared conflict point. Positions are in each corridor's chain frame.
struct ConflictWindow {
    double s_conflict = 0.0;
    double half_extent = 2.5;  // half vehicle length + margin
};

// Per-cell bitmask of the ten step sub-intervals during which the cell-center
// trajectory overlaps the conflict window.
std::vector<std::uint16_t> occupancy_masks(const Discretization& disc, const ConflictWindow& w);

struct InteractionMatrix {
    std::int64_t n = 0;
    std::vector<float> m;  // n x n dense; row = dependent cell, col = blocking cell
};

InteractionMatrix build_interaction(const Discretization& disc, const ConflictWindow& dependent,
                                    const ConflictWindow& blocking);

// lambda(cell) = clamp(1 - sum_b interaction[cell, b] * p_blocking[b], 0, 1)
std::vector<double> interaction_lambda(const InteractionMatrix& im,
                                       const std::vector<double>& p_blocking);

// diagnostics
std::vector<double> s_marginal(const Discretization& disc, const std::vector<double>& p);
std::vector<double> v_marginal(const Discretization& disc, const std::vector<double>& p);
double mean_s(const Discretization& disc, const std::vector<double>& p);
double mean_v(const Discretization& disc, const std::vector<double>& p);

}  // namespace iamp
