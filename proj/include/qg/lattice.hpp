#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "qg/edge.hpp"
#include "qg/errors.hpp"

namespace qg {

/// Periodic lattice of vertices Z^d with one edge class per direction.
struct LatticeSpec {
    int dimension = 1;
    std::vector<EdgeProfile> edge_profiles;

    void validate() const;
};

/// i.i.d. vertex coupling distribution, coupling strength and master seed.
/// Draws are fully determined by (master_seed, sample_index, site coordinate),
/// so a realization extends consistently across nested boxes.
struct DisorderModel {
    enum class Density { uniform, truncated_gaussian };
    Density density = Density::uniform;
    double alpha_minus = 0.0;
    double alpha_plus = 0.0;
    double mu = 0.0;    ///< truncated_gaussian only
    double sigma = 1.0; ///< truncated_gaussian only
    double coupling = 0.0;
    std::uint64_t master_seed = 0;

    void validate() const;
    bool degenerate() const;
    double sup_density() const; ///< +inf for the degenerate case
    double pdf(double x) const;
    double cdf(double x) const;
    double quantile(double u) const; ///< u in [0,1]
};

/// Cube Lambda_N = {m : max_j |m_j| <= N} with a row-major site indexing
/// (first coordinate fastest).
struct Box {
    int radius = 0;
    int dimension = 1;

    std::int64_t side() const { return 2ll * radius + 1; }
    std::int64_t size() const;
    std::array<int, 3> coordinate(std::int64_t index) const;
    std::int64_t index(const std::array<int, 3>& m) const; ///< -1 when outside
    bool contains(const std::array<int, 3>& m) const;
    std::uint64_t site_code(const std::array<int, 3>& m) const; ///< box-independent packing
};

/// a(E) and b_j(E) of the energy-dependent hopping operator.
struct HoppingCoefficients {
    double energy = 0;
    double a = 0;
    std::vector<double> b;
    std::vector<double> eta;

    double abs_b_sum() const;   ///< sum_j |b_j|
    double abs_b_pow(double s) const; ///< sum_j |b_j|^s
};

struct LatticeOperator {
    Box box;
    double energy = 0;
    double lambda = 0;
    Eigen::MatrixXd matrix;
    std::vector<double> disorder;
};

/// Symmetric tridiagonal form of the d=1 operator.
struct Tridiag {
    std::vector<double> diag, off;
};

HoppingCoefficients hopping_coefficients(const LatticeSpec& spec, double energy);

std::vector<double> sample_disorder(const DisorderModel& model, const Box& box,
                                    std::uint64_t sample_index);

/// Dense M_Lambda(E) - lambda*A on the box (plain restriction outside).
/// Boxes beyond 4096 sites must use the sparse or tridiagonal forms.
LatticeOperator build_operator(const LatticeSpec& spec, double energy, const Box& box,
                               const std::vector<double>& disorder, double lambda);
LatticeOperator build_operator(const HoppingCoefficients& hopping, const Box& box,
                               const std::vector<double>& disorder, double lambda);

Eigen::SparseMatrix<double> sparse_operator(const HoppingCoefficients& hopping, const Box& box,
                                            const std::vector<double>& disorder, double lambda);

Tridiag tridiag_operator(const HoppingCoefficients& hopping, const Box& box,
                         const std::vector<double>& disorder, double lambda);

/// Almost-sure band condition at E (product of the two spectral-edge factors).
struct BandFactors {
    double lower = 0; ///< 2 sum|b| + a + lambda*alpha_plus   (lower spectral edge)
    double upper = 0; ///< 2 sum|b| - a - lambda*alpha_minus  (upper spectral edge)
};

BandFactors band_factors(const LatticeSpec& spec, const DisorderModel& model, double energy);
bool band_indicator(const LatticeSpec& spec, const DisorderModel& model, double energy);

struct Interval {
    double lo = 0, hi = 0;
};

struct BandGridRow {
    double energy = 0;
    int indicator = 0; ///< -1 unclassified (Dirichlet window), else 0/1
    double lower_factor = 0, upper_factor = 0;
    bool in_dirichlet_window = false;
};

struct BandScan {
    std::vector<Interval> bands;
    std::vector<Interval> dirichlet_windows;
    std::vector<BandGridRow> grid;
};

/// Scans [lo, hi] at the given energy resolution; band endpoints are refined
/// to 1e-8. Dirichlet exclusion windows are reported, never interpolated.
BandScan band_edges(const LatticeSpec& spec, const DisorderModel& model, double lo, double hi,
                    double resolution);

std::vector<Interval> dirichlet_exclusion_windows(const LatticeSpec& spec, double lo, double hi);

/// Eigenvalue counting for the tridiagonal form (Sturm sequences through the
/// kernel dispatch) and the smallest eigenvalue by bisection.
std::vector<std::int64_t> count_eigenvalues_below(const Tridiag& t,
                                                  const std::vector<double>& shifts);
double smallest_eigenvalue(const Tridiag& t, double tol = 1e-12);

} // namespace qg
