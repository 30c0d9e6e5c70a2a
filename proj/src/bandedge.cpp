#include "qg/bandedge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "qg/fit.hpp"
#include "qg/parallel.hpp"

namespace qg {

namespace {

/// Eigenvalue counting and smallest eigenvalue for one realization, routed by
/// dimension and size: Sturm sequences for d=1, dense diagonalization up to
/// 4096 sites, sparse LDL^T inertia beyond.
struct SampleSpectrum {
    Tridiag tridiag;            // d = 1
    Eigen::VectorXd eigenvalues; // dense path
    const HoppingCoefficients* hopping = nullptr;
    const Box* box = nullptr;
    const std::vector<double>* disorder = nullptr;
    double lambda = 0, shift = 0;
    bool use_tridiag = false, use_dense = false;

    std::int64_t count_below(double x) const;
    double smallest() const;
};

std::int64_t count_inertia_sparse(const HoppingCoefficients& hopping, const Box& box,
                                  const std::vector<double>& disorder, double lambda,
                                  double shift) {
    Eigen::SparseMatrix<double> mat = sparse_operator(hopping, box, disorder, lambda);
    for (int attempt = 0; attempt < 4; ++attempt) {
        Eigen::SparseMatrix<double> shifted = mat;
        const double jitter = attempt == 0 ? 0.0 : attempt * 1e-11 * std::max(1.0, std::fabs(shift));
        for (int k = 0; k < shifted.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(shifted, k); it; ++it)
                if (it.row() == it.col()) it.valueRef() -= shift + jitter;
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(shifted);
        if (ldlt.info() != Eigen::Success) continue;
        const auto& d = ldlt.vectorD();
        bool ok = true;
        std::int64_t neg = 0;
        for (Eigen::Index i = 0; i < d.size(); ++i) {
            if (!std::isfinite(d[i]) || d[i] == 0.0) {
                ok = false;
                break;
            }
            if (d[i] < 0) ++neg;
        }
        if (ok) return neg;
    }
    throw NearSingular("sparse inertia count: factorization failed near the shift");
}

std::int64_t SampleSpectrum::count_below(double x) const {
    // Sturm counting is strict; nudge the shift so the semantics are "<= x".
    if (use_tridiag)
        return count_eigenvalues_below(
            tridiag, {std::nextafter(x + shift, std::numeric_limits<double>::infinity())})[0];
    if (use_dense) {
        std::int64_t c = 0;
        for (Eigen::Index i = 0; i < eigenvalues.size(); ++i)
            if (eigenvalues[i] - shift <= x) ++c;
        return c;
    }
    return count_inertia_sparse(*hopping, *box, *disorder, lambda, x + shift);
}

double SampleSpectrum::smallest() const {
    if (use_tridiag) return smallest_eigenvalue(tridiag) - shift;
    if (use_dense) return eigenvalues.minCoeff() - shift;
    // sparse path: bisection on the inertia count within Gershgorin bounds
    double lo = 0, hi = 0;
    bool first = true;
    const std::int64_t n = box->size();
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = -hopping->a - lambda * (*disorder)[std::size_t(i)];
        double r = 0;
        for (int j = 0; j < box->dimension; ++j) r += 2.0 * std::fabs(hopping->b[j]);
        if (first || d - r < lo) lo = d - r;
        if (first || d < hi) hi = d;
        first = false;
    }
    lo -= shift;
    hi -= shift;
    hi += 1e-12;
    while (hi - lo > 1e-10 * std::max(1.0, std::fabs(hi))) {
        const double mid = 0.5 * (lo + hi);
        if (count_below(mid) >= 1)
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

SampleSpectrum make_spectrum(const HoppingCoefficients& hopping, const Box& box,
                             const std::vector<double>& disorder, double lambda, double shift) {
    SampleSpectrum s;
    s.hopping = &hopping;
    s.box = &box;
    s.disorder = &disorder;
    s.lambda = lambda;
    s.shift = shift;
    if (box.dimension == 1) {
        s.use_tridiag = true;
        s.tridiag = tridiag_operator(hopping, box, disorder, lambda);
    } else if (box.size() <= 4096) {
        s.use_dense = true;
        const auto op = build_operator(hopping, box, disorder, lambda);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.matrix, Eigen::EigenvaluesOnly);
        s.eigenvalues = es.eigenvalues();
    }
    return s;
}

} // namespace

double band_end_lower(const LatticeSpec& spec, const DisorderModel& model, double energy) {
    const auto h = hopping_coefficients(spec, energy);
    return -2.0 * h.abs_b_sum() - h.a - model.coupling * model.alpha_plus;
}

double band_end_upper(const LatticeSpec& spec, const DisorderModel& model, double energy) {
    const auto h = hopping_coefficients(spec, energy);
    return 2.0 * h.abs_b_sum() - h.a - model.coupling * model.alpha_minus;
}

EdgeReport detect_edges(const LatticeSpec& spec, const DisorderModel& model, double lo, double hi,
                        int grid_points) {
    spec.validate();
    model.validate();
    EdgeReport report;
    report.dirichlet_windows = dirichlet_exclusion_windows(spec, lo, hi);

    std::vector<Interval> segments;
    double cursor = lo;
    for (const auto& w : report.dirichlet_windows) {
        if (w.lo > cursor) segments.push_back({cursor, w.lo});
        cursor = std::max(cursor, w.hi);
    }
    if (cursor < hi) segments.push_back({cursor, hi});

    auto refine_zero = [&](auto&& f, double a, double b) {
        double fa = f(a);
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (a + b);
            const double fm = f(mid);
            if (std::fabs(fm) <= 1e-8 || b - a < 1e-15 * std::max(1.0, std::fabs(mid)))
                return mid;
            if ((fa < 0) != (fm < 0))
                b = mid;
            else {
                a = mid;
                fa = fm;
            }
        }
        return 0.5 * (a + b);
    };

    for (const auto& seg : segments) {
        const auto n = std::size_t(std::max(2, grid_points));
        std::vector<double> es(n + 1), mm(n + 1), mp(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            es[i] = seg.lo + (seg.hi - seg.lo) * double(i) / double(n);
            mm[i] = band_end_lower(spec, model, es[i]);
            mp[i] = band_end_upper(spec, model, es[i]);
        }
        report.grid_energies.insert(report.grid_energies.end(), es.begin(), es.end());
        report.m_minus.insert(report.m_minus.end(), mm.begin(), mm.end());
        report.m_plus.insert(report.m_plus.end(), mp.begin(), mp.end());

        for (std::size_t i = 0; i < n; ++i) {
            if ((mm[i] < 0) != (mm[i + 1] < 0)) {
                auto f = [&](double e) { return band_end_lower(spec, model, e); };
                const double root = refine_zero(f, es[i], es[i + 1]);
                report.edges.push_back({root, -1, std::fabs(f(root))});
            }
            if ((mp[i] < 0) != (mp[i + 1] < 0)) {
                auto f = [&](double e) { return band_end_upper(spec, model, e); };
                const double root = refine_zero(f, es[i], es[i + 1]);
                report.edges.push_back({root, +1, std::fabs(f(root))});
            }
        }
    }
    std::sort(report.edges.begin(), report.edges.end(),
              [](const EdgeReport::DetectedEdge& a, const EdgeReport::DetectedEdge& b) {
                  return a.energy < b.energy;
              });
    return report;
}

std::vector<double> log_eps_grid(double lo, double hi, int per_decade) {
    if (!(lo > 0) || !(hi > lo)) throw Error("log_eps_grid: need 0 < lo < hi");
    std::vector<double> out;
    const double decades = std::log10(hi / lo);
    const auto n = std::size_t(std::ceil(decades * per_decade)) + 1;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(lo * std::pow(10.0, decades * double(i) / double(n - 1)));
    out.back() = hi;
    return out;
}

IDSCurve ids_curve(const LatticeSpec& spec, const DisorderModel& model, double reference_energy,
                   int box_radius, int n_samples, const std::vector<double>& eps_grid,
                   unsigned threads) {
    spec.validate();
    model.validate();
    if (n_samples < 1) throw Error("ids_curve: need at least one sample");
    const auto hopping = hopping_coefficients(spec, reference_energy);
    const double shift = band_end_lower(spec, model, reference_energy);

    const Box box{box_radius, spec.dimension};
    const double volume = double(box.size());
    const std::size_t ne = eps_grid.size();

    std::vector<std::vector<double>> fractions{std::size_t(n_samples)};
    parallel_for(std::size_t(n_samples), threads, [&](std::size_t t) {
        const auto disorder = sample_disorder(model, box, t);
        auto& row = fractions[t];
        row.resize(ne);
        if (box.dimension == 1) {
            const Tridiag tri = tridiag_operator(hopping, box, disorder, model.coupling);
            std::vector<double> shifts(ne);
            for (std::size_t k = 0; k < ne; ++k)
                shifts[k] = std::nextafter(eps_grid[k] + shift,
                                           std::numeric_limits<double>::infinity());
            const auto counts = count_eigenvalues_below(tri, shifts);
            for (std::size_t k = 0; k < ne; ++k) row[k] = double(counts[k]) / volume;
        } else {
            const auto sp = make_spectrum(hopping, box, disorder, model.coupling, shift);
            for (std::size_t k = 0; k < ne; ++k)
                row[k] = double(sp.count_below(eps_grid[k])) / volume;
        }
    });

    IDSCurve curve;
    curve.reference_energy = reference_energy;
    curve.box_radius = box_radius;
    curve.samples = n_samples;
    curve.shift = shift;
    curve.points.resize(ne);
    for (std::size_t k = 0; k < ne; ++k) {
        double sum = 0;
        for (int t = 0; t < n_samples; ++t) sum += fractions[std::size_t(t)][k];
        const double mean = sum / double(n_samples);
        double sq = 0;
        for (int t = 0; t < n_samples; ++t) {
            const double d = fractions[std::size_t(t)][k] - mean;
            sq += d * d;
        }
        const double se =
            n_samples > 1 ? std::sqrt(sq / double(n_samples - 1) / double(n_samples)) : 0.0;
        curve.points[k] = {eps_grid[k], mean, 1.96 * se};
    }
    return curve;
}

LifshitzFit lifshitz_fit(const IDSCurve& curve, double eps_lo, double eps_hi) {
    LifshitzFit fit;
    std::vector<double> xs, ys;
    for (const auto& p : curve.points) {
        if (p.epsilon < eps_lo || p.epsilon > eps_hi) continue;
        if (!(p.n_hat > 0.0) || !(p.n_hat < 1.0)) {
            ++fit.dropped;
            continue;
        }
        xs.push_back(std::log(p.epsilon));
        ys.push_back(std::log(-std::log(p.n_hat)));
    }
    if (xs.size() < 4)
        throw InsufficientData("lifshitz_fit: fewer than 4 usable points");
    const LineFit line = fit_line(xs, ys);
    fit.slope = line.slope;
    fit.std_err = line.slope_std_err;
    fit.r_squared = line.r_squared;
    fit.used = xs.size();
    return fit;
}

std::vector<ProbabilityRow> probability_bound_check(const LatticeSpec& spec,
                                                    const DisorderModel& model,
                                                    double reference_energy, double eps,
                                                    const std::vector<int>& radii, int n_samples,
                                                    int reference_radius, unsigned threads) {
    spec.validate();
    model.validate();
    if (radii.empty()) throw Error("probability_bound_check: no radii");
    const auto hopping = hopping_coefficients(spec, reference_energy);
    const double shift = band_end_lower(spec, model, reference_energy);
    const int max_radius = *std::max_element(radii.begin(), radii.end());
    if (reference_radius <= 0) reference_radius = 2 * max_radius;

    const IDSCurve ref =
        ids_curve(spec, model, reference_energy, reference_radius, n_samples, {eps}, threads);
    const double n_hat_ref = ref.points[0].n_hat;

    std::vector<ProbabilityRow> rows;
    for (int radius : radii) {
        const Box box{radius, spec.dimension};
        std::vector<char> hit(std::size_t(n_samples), 0);
        parallel_for(std::size_t(n_samples), threads, [&](std::size_t t) {
            const auto disorder = sample_disorder(model, box, t);
            const auto sp = make_spectrum(hopping, box, disorder, model.coupling, shift);
            hit[t] = sp.smallest() <= eps ? 1 : 0;
        });
        double p = 0;
        for (char h : hit) p += h;
        p /= double(n_samples);
        ProbabilityRow row;
        row.radius = radius;
        row.p_hat = p;
        row.bound_rhs = std::pow(double(radius), spec.dimension) * n_hat_ref;
        row.ratio = row.bound_rhs > 0 ? p / row.bound_rhs
                                      : (p > 0 ? std::numeric_limits<double>::infinity() : 0.0);
        rows.push_back(row);
    }
    return rows;
}

CTTable combes_thomas_check(const LatticeSpec& spec, const DisorderModel& model, double energy,
                            double lambda, const Box& box, int n_samples, double eps,
                            unsigned threads) {
    spec.validate();
    model.validate();
    if (box.size() > 4096) throw Error("combes_thomas_check: box too large for the dense path");
    const auto hopping = hopping_coefficients(spec, energy);

    const std::int64_t n = box.size();
    const std::array<int, 3> origin{0, 0, 0};
    const std::int64_t origin_idx = box.index(origin);

    int max_dist = 0;
    std::vector<int> dist_of(std::size_t(n), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        const auto m = box.coordinate(i);
        int d = 0;
        for (int j = 0; j < box.dimension; ++j) d += std::abs(m[j]);
        dist_of[std::size_t(i)] = d;
        max_dist = std::max(max_dist, d);
    }

    std::vector<std::vector<double>> best{std::size_t(n_samples)};
    std::vector<char> kept(std::size_t(n_samples), 0);
    parallel_for(std::size_t(n_samples), threads, [&](std::size_t t) {
        const auto disorder = sample_disorder(model, box, t);
        const auto op = build_operator(hopping, box, disorder, lambda);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.matrix, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() <= eps) return;
        kept[t] = 1;
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
        rhs[origin_idx] = 1.0;
        const Eigen::VectorXd col = Eigen::PartialPivLU<Eigen::MatrixXd>(op.matrix).solve(rhs);
        auto& row = best[t];
        row.assign(std::size_t(max_dist) + 1, 0.0);
        for (std::int64_t i = 0; i < n; ++i)
            row[std::size_t(dist_of[std::size_t(i)])] =
                std::max(row[std::size_t(dist_of[std::size_t(i)])], std::fabs(col[i]));
    });

    CTTable table;
    table.eps = eps;
    for (char k : kept) (k ? table.kept : table.discarded) += 1;
    if (table.kept == 0)
        throw ConditioningFailure("combes_thomas_check: no sample satisfied the gap condition");

    std::vector<double> max_entry(std::size_t(max_dist) + 1, 0.0);
    for (std::size_t t = 0; t < std::size_t(n_samples); ++t) {
        if (!kept[t]) continue;
        for (std::size_t d = 0; d <= std::size_t(max_dist); ++d)
            max_entry[d] = std::max(max_entry[d], best[t][d]);
    }
    std::vector<double> xs, ys;
    for (std::size_t d = 0; d <= std::size_t(max_dist); ++d) {
        table.rows.push_back({int(d), max_entry[d]});
        if (max_entry[d] > 0) {
            xs.push_back(double(d));
            ys.push_back(std::log(max_entry[d]));
        }
    }
    const LineFit line = fit_line(xs, ys);
    table.rate = -line.slope;
    table.r_squared = line.r_squared;
    return table;
}

} // namespace qg
