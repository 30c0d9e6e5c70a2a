#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "qg/lattice.hpp"

namespace qg {

struct PairSpec {
    std::array<int, 3> from{0, 0, 0};
    std::array<int, 3> to{0, 0, 0};
};

struct PairMoment {
    std::array<int, 3> from{0, 0, 0};
    std::array<int, 3> to{0, 0, 0};
    int distance = 0;
    double mean = 0;
    double std_err = 0;
};

/// Monte Carlo estimate of E |(M_Lambda(E) - lambda A)^-1 (m, m')|^s.
struct MomentEstimate {
    double energy = 0, lambda = 0, s = 0;
    int samples = 0;
    long capped_count = 0;          ///< resolvent entries clipped at 1e12
    bool heavy_tail_warning = false; ///< capped entries exceeded 1% of the total
    std::vector<PairMoment> pairs;
};

/// One linear solve per target column per sample; draws are keyed by
/// (master_seed, sample index, site), so results are independent of the
/// thread count.
MomentEstimate fractional_moments(const LatticeSpec& spec, const Box& box,
                                  const DisorderModel& model, double energy, double s,
                                  const std::vector<PairSpec>& pairs, int n_samples,
                                  unsigned threads = 1);

struct DecayParams {
    double amplitude = 0; ///< A in A e^{-a r}
    double rate = 0;      ///< a; positive means observed exponential decay
    double r_squared = 0;
    std::vector<std::size_t> excluded; ///< pair indices with nonpositive means
};

/// Log-linear least squares of the moment means against pair distance.
DecayParams fit_decay(const MomentEstimate& estimate);

/// Distribution constants entering the finite-volume criteria. Estimated
/// values are lower bounds from randomized search plus local refinement.
struct CriterionConstants {
    double s = 0.2;
    double c_s = 0;
    double d_s = 0;
    double c_tilde = 0; ///< c_s * d_s^2
    enum class Provenance { user_supplied, estimated } provenance = Provenance::user_supplied;
    int trials = 0;
    std::string trace;
};

CriterionConstants user_constants(double s, double c_s, double d_s);
CriterionConstants estimate_constants(const DisorderModel& model, double s, int trials);

/// Search objectives behind estimate_constants, exposed for cross-checks:
/// max over the four entries of E_{rho x rho} |(A - diag(u,v))^{-1}_{jk}|^s,
/// and the decoupling ratio E(|f|^s|g|^s) / (E|f|^s E|g|^s) with
/// f(V) = (V-a)^{-1}, g(V) = (V-b)(V-c)^{-1}. `refined` switches from the
/// fixed-order search rule to adaptive quadrature.
double cs_objective(const std::array<std::complex<double>, 4>& matrix, const DisorderModel& model,
                    double s, bool refined);
double ds_objective(std::complex<double> a, std::complex<double> b, std::complex<double> c,
                    const DisorderModel& model, double s, bool refined);

struct CriterionReport {
    double energy = 0, lambda = 0, s = 0;
    double c_e = 0;            ///< 2 sum_j |b_j(E)|^s
    double moment_integral = 0; ///< int |a(E) + lambda V|^{-s} rho(dV)
    double c_tilde = 0;
    double value = 0; ///< c(E) (1 + c(E) c_tilde / lambda^s) * integral
    double beta = 0;
    bool satisfied = false;
};

/// Single-point criterion. The integrable singularity of the integrand at
/// V = -a/lambda is removed analytically by the substitution w = (V-V*)^(1-s).
CriterionReport single_point_criterion(const LatticeSpec& spec, const DisorderModel& model,
                                       double energy, double s,
                                       const CriterionConstants& constants, double beta);

struct KernelEntry {
    std::array<int, 3> m{0, 0, 0}; ///< inner boundary site of Lambda
    std::array<int, 3> n{0, 0, 0}; ///< outer boundary site
    double value = 0;
};

struct KernelSum {
    Box box;
    double energy = 0, lambda = 0, s = 0;
    std::vector<double> t_site; ///< T^s_{m,boundary} per box index
    double theta_sum = 0;       ///< Theta^s_Lambda
    std::vector<KernelEntry> k_table;
    double total = 0; ///< criterion value attained (max over sampled subsets)
};

struct SubsetValue {
    std::string label;
    double value = 0;
    double std_err = 0;
};

struct FiniteVolumeReport {
    KernelSum kernel;
    double beta = 1.0;
    bool satisfied = false;
    bool sup_is_lower_bound = true; ///< the sup over subsets is sampled, not enumerated
    int n_samples = 0, n_subsets = 0;
    long capped_count = 0;
    bool heavy_tail_warning = false;
    std::vector<SubsetValue> subsets; ///< [0] is the full box
};

/// Finite-volume criterion on the box. The sup over W subset Lambda is
/// sampled: always the full box and every single-site deletion, then random
/// subsets containing the origin.
FiniteVolumeReport finite_volume_criterion(const LatticeSpec& spec, const DisorderModel& model,
                                           const Box& box, double energy, double s,
                                           const CriterionConstants& constants, int n_samples,
                                           int n_subsets, double beta = 1.0, unsigned threads = 1);

/// Same evaluation from precomputed hopping coefficients (only a(E) and
/// b_j(E) enter the kernels).
FiniteVolumeReport finite_volume_criterion(const HoppingCoefficients& hopping,
                                           const DisorderModel& model, const Box& box, double s,
                                           const CriterionConstants& constants, int n_samples,
                                           int n_subsets, double beta = 1.0, unsigned threads = 1);

} // namespace qg
