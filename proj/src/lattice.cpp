#include "qg/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qg/kernels/kernels.hpp"

namespace qg {

namespace {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Acklam's rational approximation with one Halley correction step.
double normal_quantile(double p) {
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    if (p >= 1.0) return std::numeric_limits<double>::infinity();
    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

} // namespace

void LatticeSpec::validate() const {
    if (dimension < 1 || dimension > 3)
        throw InvalidModel("lattice dimension must be 1, 2 or 3");
    if (edge_profiles.size() != std::size_t(dimension))
        throw InvalidModel("need one edge profile per direction");
    for (const auto& p : edge_profiles) p.validate();
}

void DisorderModel::validate() const {
    if (!(alpha_minus <= alpha_plus))
        throw InvalidModel("disorder support must satisfy alpha_minus <= alpha_plus");
    if (!(coupling >= 0.0) || !std::isfinite(coupling))
        throw InvalidModel("coupling must be a nonnegative real");
    if (density == Density::truncated_gaussian) {
        if (!(sigma > 0.0)) throw InvalidModel("truncated gaussian needs sigma > 0");
        if (!(alpha_minus < alpha_plus))
            throw InvalidModel("truncated gaussian needs a nondegenerate support");
    }
}

bool DisorderModel::degenerate() const {
    return density == Density::uniform && alpha_minus == alpha_plus;
}

double DisorderModel::sup_density() const {
    if (density == Density::uniform) {
        const double w = alpha_plus - alpha_minus;
        return w > 0 ? 1.0 / w : std::numeric_limits<double>::infinity();
    }
    const double za = (alpha_minus - mu) / sigma, zb = (alpha_plus - mu) / sigma;
    const double mass = normal_cdf(zb) - normal_cdf(za);
    const double zpeak = std::clamp(0.0, za, zb);
    return normal_pdf(zpeak) / (sigma * mass);
}

double DisorderModel::pdf(double x) const {
    if (x < alpha_minus || x > alpha_plus) return 0.0;
    if (density == Density::uniform) return sup_density();
    const double za = (alpha_minus - mu) / sigma, zb = (alpha_plus - mu) / sigma;
    const double mass = normal_cdf(zb) - normal_cdf(za);
    return normal_pdf((x - mu) / sigma) / (sigma * mass);
}

double DisorderModel::cdf(double x) const {
    if (x <= alpha_minus) return 0.0;
    if (x >= alpha_plus) return 1.0;
    if (density == Density::uniform) return (x - alpha_minus) / (alpha_plus - alpha_minus);
    const double za = (alpha_minus - mu) / sigma, zb = (alpha_plus - mu) / sigma;
    const double fa = normal_cdf(za);
    return (normal_cdf((x - mu) / sigma) - fa) / (normal_cdf(zb) - fa);
}

double DisorderModel::quantile(double u) const {
    u = std::clamp(u, 0.0, 1.0);
    if (density == Density::uniform)
        return alpha_minus + u * (alpha_plus - alpha_minus);
    const double za = (alpha_minus - mu) / sigma, zb = (alpha_plus - mu) / sigma;
    const double fa = normal_cdf(za), fb = normal_cdf(zb);
    const double x = mu + sigma * normal_quantile(fa + u * (fb - fa));
    return std::clamp(x, alpha_minus, alpha_plus);
}

std::int64_t Box::size() const {
    std::int64_t n = 1;
    for (int j = 0; j < dimension; ++j) n *= side();
    return n;
}

std::array<int, 3> Box::coordinate(std::int64_t index) const {
    std::array<int, 3> m{0, 0, 0};
    for (int j = 0; j < dimension; ++j) {
        m[j] = int(index % side()) - radius;
        index /= side();
    }
    return m;
}

std::int64_t Box::index(const std::array<int, 3>& m) const {
    std::int64_t idx = 0, stride = 1;
    for (int j = 0; j < dimension; ++j) {
        if (m[j] < -radius || m[j] > radius) return -1;
        idx += (m[j] + radius) * stride;
        stride *= side();
    }
    return idx;
}

bool Box::contains(const std::array<int, 3>& m) const { return index(m) >= 0; }

std::uint64_t Box::site_code(const std::array<int, 3>& m) const {
    // 21 bits per axis, offset so coordinates up to 2^20-1 in magnitude pack
    // injectively and independently of the box
    constexpr std::uint64_t offset = 1u << 20;
    constexpr std::uint64_t mask = (1u << 21) - 1;
    std::uint64_t code = 0;
    for (int j = 0; j < dimension; ++j)
        code |= ((std::uint64_t(std::int64_t(m[j]) + offset)) & mask) << (21 * j);
    return code;
}

double HoppingCoefficients::abs_b_sum() const {
    double s = 0;
    for (double v : b) s += std::fabs(v);
    return s;
}

double HoppingCoefficients::abs_b_pow(double p) const {
    double s = 0;
    for (double v : b) s += std::pow(std::fabs(v), p);
    return s;
}

HoppingCoefficients hopping_coefficients(const LatticeSpec& spec, double energy) {
    spec.validate();
    HoppingCoefficients h;
    h.energy = energy;
    h.b.resize(spec.dimension);
    h.eta.resize(spec.dimension);
    for (int j = 0; j < spec.dimension; ++j) {
        const auto bv = boundary_values(spec.edge_profiles[j], energy);
        if (std::fabs(bv.phi_l) < dirichlet_threshold(spec.edge_profiles[j]))
            throw DirichletProximity("hopping_coefficients: energy inside a Dirichlet window");
        h.b[j] = 1.0 / bv.phi_l;
        h.eta[j] = bv.eta;
        h.a += bv.eta * h.b[j];
    }
    return h;
}

std::vector<double> sample_disorder(const DisorderModel& model, const Box& box,
                                    std::uint64_t sample_index) {
    model.validate();
    const std::int64_t n = box.size();
    std::vector<std::uint64_t> codes(n);
    for (std::int64_t i = 0; i < n; ++i) codes[i] = box.site_code(box.coordinate(i));
    std::vector<double> u(n);
    kernels::dispatch().philox_uniform(model.master_seed, sample_index, codes.data(),
                                       std::size_t(n), u.data());
    std::vector<double> out(n);
    if (model.density == DisorderModel::Density::uniform) {
        const double w = model.alpha_plus - model.alpha_minus;
        for (std::int64_t i = 0; i < n; ++i) out[i] = model.alpha_minus + u[i] * w;
    } else {
        for (std::int64_t i = 0; i < n; ++i) out[i] = model.quantile(u[i]);
    }
    return out;
}

LatticeOperator build_operator(const LatticeSpec& spec, double energy, const Box& box,
                               const std::vector<double>& disorder, double lambda) {
    return build_operator(hopping_coefficients(spec, energy), box, disorder, lambda);
}

LatticeOperator build_operator(const HoppingCoefficients& hopping, const Box& box,
                               const std::vector<double>& disorder, double lambda) {
    const std::int64_t n = box.size();
    if (n > 4096)
        throw Error("build_operator: dense storage is limited to 4096 sites");
    if (std::int64_t(disorder.size()) != n)
        throw Error("build_operator: disorder sample size mismatch");

    LatticeOperator op;
    op.box = box;
    op.energy = hopping.energy;
    op.lambda = lambda;
    op.disorder = disorder;
    op.matrix = Eigen::MatrixXd::Zero(n, n);
    for (std::int64_t i = 0; i < n; ++i) {
        op.matrix(i, i) = -hopping.a - lambda * disorder[i];
        auto m = box.coordinate(i);
        for (int j = 0; j < box.dimension; ++j) {
            for (int dir : {-1, 1}) {
                auto mm = m;
                mm[j] += dir;
                const std::int64_t k = box.index(mm);
                if (k >= 0) op.matrix(i, k) = hopping.b[j];
            }
        }
    }
    return op;
}

Eigen::SparseMatrix<double> sparse_operator(const HoppingCoefficients& hopping, const Box& box,
                                            const std::vector<double>& disorder, double lambda) {
    const std::int64_t n = box.size();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(std::size_t(n) * (1 + 2 * box.dimension));
    for (std::int64_t i = 0; i < n; ++i) {
        trip.emplace_back(i, i, -hopping.a - lambda * disorder[i]);
        auto m = box.coordinate(i);
        for (int j = 0; j < box.dimension; ++j) {
            for (int dir : {-1, 1}) {
                auto mm = m;
                mm[j] += dir;
                const std::int64_t k = box.index(mm);
                if (k >= 0) trip.emplace_back(i, k, hopping.b[j]);
            }
        }
    }
    Eigen::SparseMatrix<double> mat(n, n);
    mat.setFromTriplets(trip.begin(), trip.end());
    return mat;
}

Tridiag tridiag_operator(const HoppingCoefficients& hopping, const Box& box,
                         const std::vector<double>& disorder, double lambda) {
    if (box.dimension != 1)
        throw Error("tridiag_operator: requires dimension 1");
    const std::int64_t n = box.size();
    Tridiag t;
    t.diag.resize(n);
    t.off.assign(std::size_t(n - 1), hopping.b[0]);
    for (std::int64_t i = 0; i < n; ++i) t.diag[i] = -hopping.a - lambda * disorder[i];
    return t;
}

BandFactors band_factors(const LatticeSpec& spec, const DisorderModel& model, double energy) {
    const auto h = hopping_coefficients(spec, energy);
    const double s = h.abs_b_sum();
    BandFactors f;
    f.lower = 2.0 * s + h.a + model.coupling * model.alpha_plus;
    f.upper = 2.0 * s - h.a - model.coupling * model.alpha_minus;
    return f;
}

bool band_indicator(const LatticeSpec& spec, const DisorderModel& model, double energy) {
    const BandFactors f = band_factors(spec, model, energy);
    return f.upper * f.lower >= 0.0;
}

namespace {

/// Expands the |phi_l| < threshold neighborhood around a Dirichlet point.
Interval guard_window(const EdgeProfile& profile, double root) {
    const double delta = dirichlet_threshold(profile);
    auto above = [&](double e) {
        return std::fabs(boundary_values(profile, e).phi_l) >= delta;
    };
    auto expand_side = [&](int sign) {
        double step = 1e-9 * std::max(1.0, std::fabs(root));
        double inside = root;
        for (int it = 0; it < 80; ++it) {
            const double probe = root + sign * step;
            if (above(probe)) {
                // bisect the crossing between inside and probe
                double a = inside, b = probe;
                for (int k = 0; k < 80; ++k) {
                    const double mid = 0.5 * (a + b);
                    if (above(mid))
                        b = mid;
                    else
                        a = mid;
                }
                return b;
            }
            inside = probe;
            step *= 2.0;
        }
        return root + sign * step;
    };
    const double lo = expand_side(-1), hi = expand_side(+1);
    return {std::min(lo, hi), std::max(lo, hi)};
}

std::vector<Interval> merge_intervals(std::vector<Interval> v) {
    std::sort(v.begin(), v.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::vector<Interval> out;
    for (const auto& w : v) {
        if (!out.empty() && w.lo <= out.back().hi)
            out.back().hi = std::max(out.back().hi, w.hi);
        else
            out.push_back(w);
    }
    return out;
}

} // namespace

std::vector<Interval> dirichlet_exclusion_windows(const LatticeSpec& spec, double lo, double hi) {
    spec.validate();
    const double pad = 0.1;
    std::vector<Interval> windows;
    for (const auto& profile : spec.edge_profiles) {
        for (double root : dirichlet_eigenvalues(profile, lo - pad, hi + pad)) {
            const Interval w = guard_window(profile, root);
            if (w.hi >= lo && w.lo <= hi)
                windows.push_back({std::max(w.lo, lo), std::min(w.hi, hi)});
        }
    }
    return merge_intervals(std::move(windows));
}

BandScan band_edges(const LatticeSpec& spec, const DisorderModel& model, double lo, double hi,
                    double resolution) {
    spec.validate();
    model.validate();
    if (!(resolution > 0) || !(hi > lo))
        throw Error("band_edges: invalid window or resolution");

    BandScan scan;
    scan.dirichlet_windows = dirichlet_exclusion_windows(spec, lo, hi);

    auto in_window = [&](double e) {
        for (const auto& w : scan.dirichlet_windows)
            if (e >= w.lo && e <= w.hi) return true;
        return false;
    };
    auto indicator_at = [&](double e) { return band_indicator(spec, model, e); };

    // classifiable segments: window minus exclusion windows
    std::vector<Interval> segments;
    double cursor = lo;
    for (const auto& w : scan.dirichlet_windows) {
        if (w.lo > cursor) segments.push_back({cursor, w.lo});
        cursor = std::max(cursor, w.hi);
    }
    if (cursor < hi) segments.push_back({cursor, hi});

    // grid rows over the full window (CSV view)
    const auto n_rows = std::size_t((hi - lo) / resolution) + 1;
    scan.grid.reserve(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) {
        const double e = std::min(lo + double(i) * resolution, hi);
        BandGridRow row;
        row.energy = e;
        row.in_dirichlet_window = in_window(e);
        if (row.in_dirichlet_window) {
            row.indicator = -1;
            row.lower_factor = std::numeric_limits<double>::quiet_NaN();
            row.upper_factor = std::numeric_limits<double>::quiet_NaN();
        } else {
            const BandFactors f = band_factors(spec, model, e);
            row.lower_factor = f.lower;
            row.upper_factor = f.upper;
            row.indicator = (f.lower * f.upper >= 0.0) ? 1 : 0;
        }
        scan.grid.push_back(row);
    }

    auto refine_edge = [&](double e_true, double e_false) {
        double a = e_true, b = e_false;
        while (std::fabs(b - a) > 1e-8) {
            const double mid = 0.5 * (a + b);
            if (indicator_at(mid))
                a = mid;
            else
                b = mid;
        }
        return 0.5 * (a + b);
    };

    for (const auto& seg : segments) {
        const auto n = std::max<std::size_t>(2, std::size_t((seg.hi - seg.lo) / resolution) + 2);
        std::vector<double> es(n);
        for (std::size_t i = 0; i < n; ++i)
            es[i] = seg.lo + (seg.hi - seg.lo) * double(i) / double(n - 1);
        std::vector<char> ind(n);
        for (std::size_t i = 0; i < n; ++i) ind[i] = indicator_at(es[i]) ? 1 : 0;

        std::size_t i = 0;
        while (i < n) {
            if (!ind[i]) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j + 1 < n && ind[j + 1]) ++j;
            Interval band;
            band.lo = (i == 0) ? seg.lo : refine_edge(es[i], es[i - 1]);
            band.hi = (j == n - 1) ? seg.hi : refine_edge(es[j], es[j + 1]);
            scan.bands.push_back(band);
            i = j + 1;
        }
    }
    return scan;
}

std::vector<std::int64_t> count_eigenvalues_below(const Tridiag& t,
                                                  const std::vector<double>& shifts) {
    std::vector<std::int64_t> counts(shifts.size());
    kernels::dispatch().sturm_counts(t.diag.data(), t.off.data(), t.diag.size(), shifts.data(),
                                     shifts.size(), counts.data());
    return counts;
}

double smallest_eigenvalue(const Tridiag& t, double tol) {
    const std::size_t n = t.diag.size();
    double lo = t.diag[0], hi = t.diag[0];
    for (std::size_t i = 0; i < n; ++i) {
        double r = 0;
        if (i > 0) r += std::fabs(t.off[i - 1]);
        if (i + 1 < n) r += std::fabs(t.off[i]);
        lo = std::min(lo, t.diag[i] - r);
        hi = std::min(hi, t.diag[i]); // smallest eigenvalue is at most min_i diag
    }
    hi += tol;
    const double scale = std::max(1.0, std::max(std::fabs(lo), std::fabs(hi)));
    while (hi - lo > tol * scale) {
        const double mid = 0.5 * (lo + hi);
        if (count_eigenvalues_below(t, {mid})[0] >= 1)
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace qg
