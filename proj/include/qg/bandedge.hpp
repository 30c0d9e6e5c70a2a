#pragma once

#include <cstdint>
#include <vector>

#include "qg/lattice.hpp"

namespace qg {

/// Band-end functions m_-(E) <= m_+(E) of the almost-sure spectrum of
/// M(E) - lambda*A and the energies where one of them vanishes.
struct EdgeReport {
    struct DetectedEdge {
        double energy = 0;
        int vanishing_factor = 0; ///< -1: m_- vanishes, +1: m_+ vanishes
        double residual = 0;      ///< |vanishing factor| after refinement
    };
    std::vector<double> grid_energies;
    std::vector<double> m_minus, m_plus;
    std::vector<DetectedEdge> edges;
    std::vector<Interval> dirichlet_windows;
};

EdgeReport detect_edges(const LatticeSpec& spec, const DisorderModel& model, double lo, double hi,
                        int grid_points = 512);

double band_end_lower(const LatticeSpec& spec, const DisorderModel& model, double energy);
double band_end_upper(const LatticeSpec& spec, const DisorderModel& model, double energy);

struct IDSPoint {
    double epsilon = 0;
    double n_hat = 0;          ///< mean eigenvalue fraction <= epsilon
    double ci_half_width = 0;  ///< 1.96 x standard error across samples
};

/// Empirical integrated density of states of the edge-shifted operator
/// M(E0) - lambda*A - m_-(E0), whose spectrum starts at 0 almost surely.
struct IDSCurve {
    double reference_energy = 0;
    int box_radius = 0;
    int samples = 0;
    double shift = 0; ///< m_-(E0)
    std::vector<IDSPoint> points;
};

IDSCurve ids_curve(const LatticeSpec& spec, const DisorderModel& model, double reference_energy,
                   int box_radius, int n_samples, const std::vector<double>& eps_grid,
                   unsigned threads = 1);

/// Logarithmic grid, per_decade points per decade of epsilon.
std::vector<double> log_eps_grid(double lo, double hi, int per_decade = 16);

struct LifshitzFit {
    double slope = 0; ///< of log|log N| against log eps; about -d/2 at a tail
    double std_err = 0;
    double r_squared = 0;
    std::size_t used = 0;
    std::size_t dropped = 0; ///< points with N_hat outside (0,1)
};

LifshitzFit lifshitz_fit(const IDSCurve& curve, double eps_lo, double eps_hi);

struct ProbabilityRow {
    int radius = 0;
    double p_hat = 0;     ///< empirical P(min eigenvalue <= eps)
    double bound_rhs = 0; ///< N^d * N_hat_ref(eps)
    double ratio = 0;     ///< p_hat / bound_rhs
};

/// Checks the finite-volume probability bound against a reference IDS
/// estimate from a larger box (reference_radius <= 0 picks 2*max radius).
std::vector<ProbabilityRow> probability_bound_check(const LatticeSpec& spec,
                                                    const DisorderModel& model,
                                                    double reference_energy, double eps,
                                                    const std::vector<int>& radii, int n_samples,
                                                    int reference_radius = 0, unsigned threads = 1);

struct CTRow {
    int distance = 0;
    double max_abs_entry = 0;
};

/// Gap-conditioned resolvent decay: keeps samples with
/// inf spec(M_W(E) - lambda*A_W) > eps and tabulates max |R(0, m)| per
/// distance. Meaningful where the band-end function m_-(E) is nonnegative
/// (the operator then sits above zero for every realization); rate is the
/// fitted exponential decay rate (positive = decay).
struct CTTable {
    double eps = 0;
    int kept = 0, discarded = 0;
    std::vector<CTRow> rows;
    double rate = 0;
    double r_squared = 0;
};

CTTable combes_thomas_check(const LatticeSpec& spec, const DisorderModel& model, double energy,
                            double lambda, const Box& box, int n_samples, double eps,
                            unsigned threads = 1);

} // namespace qg
