#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "qg/lattice.hpp"

namespace qg {

/// Sampled eigenfunction component on the edge from vertex m in direction j.
struct EdgeFunction {
    std::array<int, 3> m{0, 0, 0};
    int direction = 0;
    std::vector<double> t;
    std::vector<double> value;
    double sup_norm = 0;
    double l2_norm = 0;
};

struct GraphEigenpair {
    double energy = 0;
    double lambda = 0;
    Box box;
    Eigen::VectorXd lattice_vector; ///< normalized kernel vector of M(E) - lambda*A
    std::vector<double> disorder;
    double residual = 0; ///< ||(M(E) - lambda*A) xi||
    bool degenerate = false; ///< another branch crossed within 1e-9 in E
    std::vector<EdgeFunction> edge_functions; ///< filled by reconstruct_eigenfunction
};

/// Finds every E in (lo, hi) where an eigenvalue branch of M(E) - lambda*A
/// crosses zero. Branches are sampled on a uniform grid (default width/512)
/// and bisected; they are nondecreasing in E on Dirichlet-free windows, so
/// sign changes bracket all crossings. Throws WindowSplitRequired when the
/// window contains a Dirichlet eigenvalue of some edge.
std::vector<GraphEigenpair> find_eigenvalues(const LatticeSpec& spec, const Box& box,
                                             const std::vector<double>& disorder, double lambda,
                                             double lo, double hi, int grid_points = 512);

/// Fills edge_functions from the per-edge basis profiles (all edges incident
/// to the box; the vertex values outside the box are zero).
void reconstruct_eigenfunction(const LatticeSpec& spec, GraphEigenpair& pair);

struct VertexConditionReport {
    double max_continuity_defect = 0;
    double max_kirchhoff_defect = 0; ///< |f'(m) - lambda*alpha(m) f(m)|
    double max_boundary_value = 0;   ///< |f| at Dirichlet vertices outside the box
};

/// Evaluates the vertex conditions from the analytic derivative profiles.
VertexConditionReport check_vertex_conditions(const LatticeSpec& spec, const GraphEigenpair& pair);

struct DecayFit {
    double slope = 0;
    double r_squared = 0;
    std::array<int, 3> peak{0, 0, 0};
    std::size_t points = 0;
};

/// Least-squares slope of log sup-site-norm against graph distance from the
/// peak site.
DecayFit eigenfunction_decay(const GraphEigenpair& pair);

struct GraphPoint {
    std::array<int, 3> m{0, 0, 0};
    int direction = 0;
    double t = 0;
};

struct GreenKernelQuery {
    double energy = 0;
    GraphPoint source, target;
    Box box;
};

/// Green kernel of the finite-volume operator: the on-edge Dirichlet Green
/// function plus the four resolvent-weighted basis products. Throws
/// NearSingular when M(E)-lambda*A has an eigenvalue within 1e-10 of zero.
double green_kernel(const GreenKernelQuery& query, const LatticeSpec& spec,
                    const std::vector<double>& disorder, double lambda);

struct ConvergenceRow {
    int radius = 0;
    double eigenvalue = 0;
    double diff_from_prev = 0; ///< 0 for the first row
};

/// Tracks the eigenvalue nearest target_energy across box radii with a fixed
/// disorder realization (per-site draws extend consistently across boxes).
std::vector<ConvergenceRow> convergence_test(const LatticeSpec& spec, const DisorderModel& model,
                                             double lambda, double target_energy,
                                             const std::vector<int>& radii,
                                             double search_halfwidth = 0.5,
                                             std::uint64_t sample_index = 0, int grid_points = 128);

} // namespace qg
