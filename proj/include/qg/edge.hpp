#pragma once

#include <cstddef>
#include <vector>

#include "qg/errors.hpp"

namespace qg {

/// Scalar potential on one edge class.
struct Potential {
    enum class Kind { zero, constant, piecewise_constant, grid_sampled };
    Kind kind = Kind::zero;
    double constant_value = 0.0;
    std::vector<double> breakpoints; ///< interior cut points, strictly increasing in (0, length)
    std::vector<double> values;      ///< piecewise: breakpoints.size()+1 levels; grid: >= 2 uniform samples

    static Potential zero() { return {}; }
    static Potential constant(double c) {
        Potential p;
        p.kind = Kind::constant;
        p.constant_value = c;
        return p;
    }
    static Potential piecewise(std::vector<double> breaks, std::vector<double> vals) {
        Potential p;
        p.kind = Kind::piecewise_constant;
        p.breakpoints = std::move(breaks);
        p.values = std::move(vals);
        return p;
    }
    static Potential grid(std::vector<double> samples) {
        Potential p;
        p.kind = Kind::grid_sampled;
        p.values = std::move(samples);
        return p;
    }
    /// True when the solution is available in closed form per piece.
    bool analytic() const { return kind != Kind::grid_sampled; }
};

/// One edge class: interval [0, length] with a potential and solver settings.
struct EdgeProfile {
    double length = 1.0;
    Potential potential;
    int integration_steps = 4096;

    void validate() const; ///< throws InvalidProfile
    double potential_at(double t) const;
};

/// Boundary data of the two fundamental solutions at the far end:
/// phi(0)=0, phi'(0)=1 and theta(0)=1, theta'(0)=0.
struct BoundaryValues {
    double phi_l = 0, theta_l = 0, dphi_l = 0, dtheta_l = 0;
    double eta = 0; ///< theta_l + dphi_l
};

/// Full per-edge basis at one energy: boundary data plus sampled profiles of
/// phi and phihat(t) = phi_l*theta(t) - theta_l*phi(t) (the solution vanishing
/// at t = length with derivative -1 there).
struct EdgeBasis {
    double energy = 0;
    double length = 0;
    double phi_l = 0, theta_l = 0, dphi_l = 0, dtheta_l = 0;
    double eta = 0;

    std::vector<double> grid; ///< integration nodes, grid[0]=0 .. grid.back()=length
    std::vector<double> phi, dphi, theta, dtheta;
    std::vector<double> phihat, dphihat;
    std::vector<double> potential_nodes; ///< U at the nodes (for interpolation slopes)

    double eval_phi(double t) const;
    double eval_dphi(double t) const;
    double eval_phihat(double t) const;
    double eval_dphihat(double t) const;
};

/// Integrates the fundamental system for -y'' + U y = E y on [0, length].
/// Analytic potentials go through exact per-piece transfer matrices; sampled
/// potentials through the fixed-step RK4 kernel.
EdgeBasis solve_basis(const EdgeProfile& profile, double energy);

BoundaryValues boundary_values(const EdgeProfile& profile, double energy);
std::vector<BoundaryValues> boundary_values_batch(const EdgeProfile& profile,
                                                  const std::vector<double>& energies);

/// All roots of E -> phi(length; E) in [lo, hi], strictly increasing, each
/// refined to |dE| <= 1e-10.
std::vector<double> dirichlet_eigenvalues(const EdgeProfile& profile, double lo, double hi);

/// Guard radius around Dirichlet points: energies with
/// |phi(length;E)| < dirichlet_threshold are rejected downstream.
double dirichlet_threshold(const EdgeProfile& profile);
bool passes_dirichlet_guard(const EdgeProfile& profile, double energy);

/// Green function of -d^2/dt^2 + U - E on [0, length] with Dirichlet ends.
double dirichlet_green(const EdgeProfile& profile, double energy, double t, double t2);

/// max over nodes of |phi*dtheta - theta*dphi + 1| / max(1, |phi*dtheta| +
/// |theta*dphi|); the Wronskian is identically -1, and the normalization
/// keeps the check meaningful where the solutions grow past 1e8.
double wronskian_defect(const EdgeBasis& basis);

} // namespace qg
