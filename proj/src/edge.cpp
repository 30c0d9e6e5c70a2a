#include "qg/edge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qg/kernels/kernels.hpp"

namespace qg {

namespace {

constexpr double kEnergyLimit = 1e8;
constexpr double kOverflowLimit = 1e300;

/// cos-like and sin-like propagators for y'' = -mu y over a step of length t:
/// C = cos(sqrt(mu) t), S = sin(sqrt(mu) t)/sqrt(mu), continued to mu <= 0.
struct CS {
    double c, s;
};

CS extended_cs(double mu, double t) {
    const double z = mu * t * t;
    if (std::fabs(z) < 1e-12) {
        // series in z keeps the mu -> 0 limit smooth
        const double c = 1.0 - z / 2.0 + z * z / 24.0;
        const double s = t * (1.0 - z / 6.0 + z * z / 120.0);
        return {c, s};
    }
    if (mu > 0) {
        const double r = std::sqrt(mu);
        return {std::cos(r * t), std::sin(r * t) / r};
    }
    const double k = std::sqrt(-mu);
    if (k * t > 700.0)
        throw NumericalOverflow("edge solve: hyperbolic growth exceeds double range");
    return {std::cosh(k * t), std::sinh(k * t) / k};
}

struct Piece {
    double start, end, u;
};

std::vector<Piece> pieces_of(const EdgeProfile& p) {
    std::vector<Piece> pieces;
    switch (p.potential.kind) {
        case Potential::Kind::zero:
            pieces.push_back({0.0, p.length, 0.0});
            break;
        case Potential::Kind::constant:
            pieces.push_back({0.0, p.length, p.potential.constant_value});
            break;
        case Potential::Kind::piecewise_constant: {
            double prev = 0.0;
            for (std::size_t i = 0; i < p.potential.breakpoints.size(); ++i) {
                pieces.push_back({prev, p.potential.breakpoints[i], p.potential.values[i]});
                prev = p.potential.breakpoints[i];
            }
            pieces.push_back({prev, p.length, p.potential.values.back()});
            break;
        }
        case Potential::Kind::grid_sampled:
            break;
    }
    return pieces;
}

struct State2 {
    double y, dy;
};

inline State2 advance(const State2& s, double mu, double dt) {
    const CS cs = extended_cs(mu, dt);
    return {s.y * cs.c + s.dy * cs.s, -mu * cs.s * s.y + cs.c * s.dy};
}

void check_overflow(const State2& a, const State2& b) {
    if (std::fabs(a.y) > kOverflowLimit || std::fabs(a.dy) > kOverflowLimit ||
        std::fabs(b.y) > kOverflowLimit || std::fabs(b.dy) > kOverflowLimit)
        throw NumericalOverflow("edge solve: solution exceeds 1e300");
}

/// Cubic Hermite evaluation on a uniform grid.
double hermite(const std::vector<double>& grid, const std::vector<double>& y,
               const std::vector<double>& dy, double t) {
    const std::size_t n = grid.size();
    const double h = grid[1] - grid[0];
    double pos = t / h;
    auto i = std::size_t(std::clamp(pos, 0.0, double(n - 2)));
    if (i > n - 2) i = n - 2;
    const double s = (t - grid[i]) / h;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    return y[i] * h00 + h * dy[i] * h10 + y[i + 1] * h01 + h * dy[i + 1] * h11;
}

std::vector<double> sampled_potential(const EdgeProfile& p, std::size_t n_points) {
    // n_points uniform samples over [0, length] (closed), linear interpolation
    // for grid_sampled inputs.
    std::vector<double> out(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
        const double t = p.length * double(i) / double(n_points - 1);
        out[i] = p.potential_at(t);
    }
    return out;
}

void solve_analytic(const EdgeProfile& profile, double energy, EdgeBasis& basis) {
    const auto pieces = pieces_of(profile);
    const std::size_t n_pieces = pieces.size();

    // states at piece starts
    std::vector<State2> phi_at(n_pieces + 1), theta_at(n_pieces + 1);
    phi_at[0] = {0.0, 1.0};
    theta_at[0] = {1.0, 0.0};
    for (std::size_t k = 0; k < n_pieces; ++k) {
        const double mu = energy - pieces[k].u;
        const double dt = pieces[k].end - pieces[k].start;
        phi_at[k + 1] = advance(phi_at[k], mu, dt);
        theta_at[k + 1] = advance(theta_at[k], mu, dt);
        check_overflow(phi_at[k + 1], theta_at[k + 1]);
    }

    const std::size_t n_nodes = basis.grid.size();
    std::size_t k = 0;
    for (std::size_t i = 0; i < n_nodes; ++i) {
        const double t = basis.grid[i];
        while (k + 1 < n_pieces && t > pieces[k].end) ++k;
        const double mu = energy - pieces[k].u;
        const State2 p = advance(phi_at[k], mu, t - pieces[k].start);
        const State2 th = advance(theta_at[k], mu, t - pieces[k].start);
        basis.phi[i] = p.y;
        basis.dphi[i] = p.dy;
        basis.theta[i] = th.y;
        basis.dtheta[i] = th.dy;
    }
}

void solve_rk4(const EdgeProfile& profile, double energy, EdgeBasis& basis) {
    const auto steps = std::size_t(profile.integration_steps);
    const std::vector<double> u_half = sampled_potential(profile, 2 * steps + 1);
    const double h = profile.length / double(steps);

    double phi = 0.0, dphi = 1.0, theta = 1.0, dtheta = 0.0;
    kernels::EdgeBatch state{&phi, &dphi, &theta, &dtheta, 1};
    kernels::EdgeTrace trace{basis.phi.data(), basis.dphi.data(), basis.theta.data(),
                             basis.dtheta.data()};
    const int overflow =
        kernels::dispatch().edge_propagate(u_half.data(), steps, h, &energy, state, trace);
    if (overflow)
        throw NumericalOverflow("edge solve: solution exceeds 1e300");
}

} // namespace

void EdgeProfile::validate() const {
    if (!(length > 0.0) || !std::isfinite(length))
        throw InvalidProfile("edge length must be positive");
    if (integration_steps <= 0)
        throw InvalidProfile("integration_steps must be positive");
    switch (potential.kind) {
        case Potential::Kind::zero:
            break;
        case Potential::Kind::constant:
            if (!std::isfinite(potential.constant_value))
                throw InvalidProfile("constant potential must be finite");
            break;
        case Potential::Kind::piecewise_constant: {
            if (potential.values.size() != potential.breakpoints.size() + 1)
                throw InvalidProfile("piecewise potential needs breakpoints.size()+1 values");
            double prev = 0.0;
            for (double b : potential.breakpoints) {
                if (!(b > prev) || !(b < length))
                    throw InvalidProfile("breakpoints must be strictly increasing inside (0, length)");
                prev = b;
            }
            for (double v : potential.values)
                if (!std::isfinite(v)) throw InvalidProfile("potential values must be finite");
            break;
        }
        case Potential::Kind::grid_sampled:
            if (potential.values.size() < 2)
                throw InvalidProfile("grid potential needs at least 2 samples");
            for (double v : potential.values)
                if (!std::isfinite(v)) throw InvalidProfile("potential values must be finite");
            break;
    }
}

double EdgeProfile::potential_at(double t) const {
    switch (potential.kind) {
        case Potential::Kind::zero:
            return 0.0;
        case Potential::Kind::constant:
            return potential.constant_value;
        case Potential::Kind::piecewise_constant: {
            const auto& b = potential.breakpoints;
            const std::size_t k = std::upper_bound(b.begin(), b.end(), t) - b.begin();
            return potential.values[k];
        }
        case Potential::Kind::grid_sampled: {
            const auto& v = potential.values;
            const double h = length / double(v.size() - 1);
            double pos = std::clamp(t / h, 0.0, double(v.size() - 1));
            const auto i = std::min(std::size_t(pos), v.size() - 2);
            const double s = pos - double(i);
            return v[i] * (1.0 - s) + v[i + 1] * s;
        }
    }
    return 0.0;
}

double EdgeBasis::eval_phi(double t) const { return hermite(grid, phi, dphi, t); }
double EdgeBasis::eval_phihat(double t) const { return hermite(grid, phihat, dphihat, t); }

double EdgeBasis::eval_dphi(double t) const {
    // slope of dphi is phi'' = (U - E) phi
    std::vector<double> ddphi(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        ddphi[i] = (potential_nodes[i] - energy) * phi[i];
    return hermite(grid, dphi, ddphi, t);
}

double EdgeBasis::eval_dphihat(double t) const {
    std::vector<double> dd(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        dd[i] = (potential_nodes[i] - energy) * phihat[i];
    return hermite(grid, dphihat, dd, t);
}

EdgeBasis solve_basis(const EdgeProfile& profile, double energy) {
    profile.validate();
    if (std::fabs(energy) > kEnergyLimit)
        throw Error("solve_basis: |energy| exceeds 1e8");

    EdgeBasis basis;
    basis.energy = energy;
    basis.length = profile.length;
    const auto steps = std::size_t(profile.integration_steps);
    basis.grid.resize(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i)
        basis.grid[i] = profile.length * double(i) / double(steps);
    basis.grid.back() = profile.length;
    basis.phi.resize(steps + 1);
    basis.dphi.resize(steps + 1);
    basis.theta.resize(steps + 1);
    basis.dtheta.resize(steps + 1);

    if (profile.potential.analytic())
        solve_analytic(profile, energy, basis);
    else
        solve_rk4(profile, energy, basis);

    basis.phi_l = basis.phi.back();
    basis.dphi_l = basis.dphi.back();
    basis.theta_l = basis.theta.back();
    basis.dtheta_l = basis.dtheta.back();
    basis.eta = basis.theta_l + basis.dphi_l;

    basis.phihat.resize(steps + 1);
    basis.dphihat.resize(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) {
        basis.phihat[i] = basis.phi_l * basis.theta[i] - basis.theta_l * basis.phi[i];
        basis.dphihat[i] = basis.phi_l * basis.dtheta[i] - basis.theta_l * basis.dphi[i];
    }
    basis.potential_nodes.resize(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i)
        basis.potential_nodes[i] = profile.potential_at(basis.grid[i]);
    return basis;
}

BoundaryValues boundary_values(const EdgeProfile& profile, double energy) {
    return boundary_values_batch(profile, {energy})[0];
}

std::vector<BoundaryValues> boundary_values_batch(const EdgeProfile& profile,
                                                  const std::vector<double>& energies) {
    profile.validate();
    for (double e : energies)
        if (std::fabs(e) > kEnergyLimit) throw Error("boundary_values: |energy| exceeds 1e8");

    std::vector<BoundaryValues> out(energies.size());
    if (profile.potential.analytic()) {
        const auto pieces = pieces_of(profile);
        for (std::size_t j = 0; j < energies.size(); ++j) {
            State2 p{0.0, 1.0}, th{1.0, 0.0};
            for (const auto& piece : pieces) {
                const double mu = energies[j] - piece.u;
                const double dt = piece.end - piece.start;
                p = advance(p, mu, dt);
                th = advance(th, mu, dt);
                check_overflow(p, th);
            }
            out[j] = {p.y, th.y, p.dy, th.dy, th.y + p.dy};
        }
        return out;
    }

    const auto steps = std::size_t(profile.integration_steps);
    const std::vector<double> u_half = sampled_potential(profile, 2 * steps + 1);
    const double h = profile.length / double(steps);
    const std::size_t n = energies.size();
    std::vector<double> phi(n, 0.0), dphi(n, 1.0), theta(n, 1.0), dtheta(n, 0.0);
    kernels::EdgeBatch state{phi.data(), dphi.data(), theta.data(), dtheta.data(), n};
    const int overflow =
        kernels::dispatch().edge_propagate(u_half.data(), steps, h, energies.data(), state, {});
    if (overflow)
        throw NumericalOverflow("edge solve: solution exceeds 1e300");
    for (std::size_t j = 0; j < n; ++j)
        out[j] = {phi[j], theta[j], dphi[j], dtheta[j], theta[j] + dphi[j]};
    return out;
}

double dirichlet_threshold(const EdgeProfile& profile) {
    return 1e-6 * std::max(1.0, profile.length);
}

bool passes_dirichlet_guard(const EdgeProfile& profile, double energy) {
    return std::fabs(boundary_values(profile, energy).phi_l) >= dirichlet_threshold(profile);
}

namespace {

double phi_l_at(const EdgeProfile& profile, double energy) {
    return boundary_values(profile, energy).phi_l;
}

double refine_root(const EdgeProfile& profile, double lo, double hi, double flo, double fhi) {
    // bisection to width 1e-6, then secant to 1e-10
    for (int it = 0; it < 200 && hi - lo > 1e-6; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = phi_l_at(profile, mid);
        if (fm == 0.0) return mid;
        if ((flo < 0) != (fm < 0)) {
            hi = mid;
            fhi = fm;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    double x0 = lo, x1 = hi, f0 = flo, f1 = fhi;
    for (int it = 0; it < 100; ++it) {
        double x2 = (f1 != f0) ? x1 - f1 * (x1 - x0) / (f1 - f0) : 0.5 * (lo + hi);
        if (!(x2 > lo && x2 < hi)) x2 = 0.5 * (lo + hi); // fall back inside the bracket
        const double f2 = phi_l_at(profile, x2);
        if (f2 == 0.0 || std::fabs(x2 - x1) <= 1e-10 || hi - lo <= 1e-10) return x2;
        if ((flo < 0) != (f2 < 0)) {
            hi = x2;
            fhi = f2;
        } else {
            lo = x2;
            flo = f2;
        }
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f2;
    }
    throw RootFindingFailure("dirichlet_eigenvalues: refinement did not converge");
}

} // namespace

std::vector<double> dirichlet_eigenvalues(const EdgeProfile& profile, double lo, double hi) {
    profile.validate();
    if (!(std::isfinite(lo) && std::isfinite(hi)) || lo > hi)
        throw Error("dirichlet_eigenvalues: invalid window");

    // Roots are asymptotically uniform in u = sign(E) sqrt|E| with spacing
    // pi/length; scan at a fraction of that.
    auto to_u = [](double e) { return e >= 0 ? std::sqrt(e) : -std::sqrt(-e); };
    auto to_e = [](double u) { return u >= 0 ? u * u : -u * u; };
    const double du = (M_PI / profile.length) / 16.0;
    const double u0 = to_u(lo), u1 = to_u(hi);
    const auto n = std::size_t((u1 - u0) / du) + 2;

    std::vector<double> es(n);
    for (std::size_t i = 0; i < n; ++i)
        es[i] = to_e(std::min(u0 + double(i) * du, u1));
    es.back() = hi;

    const auto bv = boundary_values_batch(profile, es);
    std::vector<double> roots;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double f0 = bv[i].phi_l, f1 = bv[i + 1].phi_l;
        if (es[i + 1] <= es[i]) continue;
        if (f0 == 0.0) {
            roots.push_back(es[i]);
            continue;
        }
        if ((f0 < 0) != (f1 < 0))
            roots.push_back(refine_root(profile, es[i], es[i + 1], f0, f1));
    }
    if (!bv.empty() && bv.back().phi_l == 0.0) roots.push_back(es.back());
    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end(),
                            [](double a, double b) { return std::fabs(a - b) < 1e-9; }),
                roots.end());
    return roots;
}

double dirichlet_green(const EdgeProfile& profile, double energy, double t, double t2) {
    if (t < 0 || t > profile.length || t2 < 0 || t2 > profile.length)
        throw Error("dirichlet_green: point outside [0, length]");
    const EdgeBasis basis = solve_basis(profile, energy);
    if (std::fabs(basis.phi_l) < dirichlet_threshold(profile))
        throw DirichletProximity("dirichlet_green: energy too close to a Dirichlet eigenvalue");
    const double a = std::min(t, t2), b = std::max(t, t2);
    return basis.eval_phi(a) * basis.eval_phihat(b) / basis.phi_l;
}

double wronskian_defect(const EdgeBasis& basis) {
    double worst = 0.0;
    for (std::size_t i = 0; i < basis.grid.size(); ++i) {
        const double p = basis.phi[i] * basis.dtheta[i];
        const double q = basis.theta[i] * basis.dphi[i];
        const double scale = std::max(1.0, std::fabs(p) + std::fabs(q));
        worst = std::max(worst, std::fabs(p - q + 1.0) / scale);
    }
    return worst;
}

} // namespace qg
