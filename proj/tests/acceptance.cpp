// Acceptance suite: one pass/fail line per criterion. Exit code is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fd_oracle.hpp"
#include "qg/bandedge.hpp"
#include "qg/fmm.hpp"
#include "qg/spectra.hpp"

using namespace qg;

namespace {

int g_failures = 0;

struct Ctx {
    std::ostringstream detail;
    bool ok = true;

    void require(bool cond, const std::string& msg) {
        if (!cond) {
            ok = false;
            if (!failure_note.empty()) failure_note += "; ";
            failure_note += msg;
        }
    }
    std::string failure_note;
};

void criterion(int id, const std::string& name, const std::function<void(Ctx&)>& body) {
    Ctx ctx;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(ctx);
    } catch (const std::exception& e) {
        ctx.ok = false;
        ctx.failure_note = std::string("exception: ") + e.what();
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!ctx.ok) ++g_failures;
    std::printf("criterion %2d %s (%6.2fs) %s%s%s\n", id, ctx.ok ? "PASS" : "FAIL", dt,
                name.c_str(), ctx.detail.str().empty() ? "" : (": " + ctx.detail.str()).c_str(),
                ctx.ok ? "" : ("  [" + ctx.failure_note + "]").c_str());
    std::fflush(stdout);
}

LatticeSpec free_lattice(int d, double length = 1.0) {
    LatticeSpec spec;
    spec.dimension = d;
    for (int j = 0; j < d; ++j) {
        EdgeProfile p;
        p.length = length;
        spec.edge_profiles.push_back(p);
    }
    return spec;
}

DisorderModel uniform_model(double lo, double hi, double coupling, std::uint64_t seed) {
    DisorderModel m;
    m.alpha_minus = lo;
    m.alpha_plus = hi;
    m.coupling = coupling;
    m.master_seed = seed;
    return m;
}

struct FreeClosedForm {
    double phi_l, theta_l, eta;
};

FreeClosedForm free_closed_form(double l, double e) {
    if (e > 0) {
        const double r = std::sqrt(e);
        return {std::sin(r * l) / r, std::cos(r * l), std::cos(r * l) + std::cos(r * l)};
    }
    if (e < 0) {
        const double k = std::sqrt(-e);
        return {std::sinh(k * l) / k, std::cosh(k * l), 2.0 * std::cosh(k * l)};
    }
    return {l, 1.0, 2.0};
}

struct EdgeCase {
    double length, energy;
};

std::vector<EdgeCase> edge_cases_200() {
    std::mt19937_64 rng(20250811);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<EdgeCase> cases;
    for (int i = 0; i < 200; ++i)
        cases.push_back({0.3 + 2.7 * unif(rng), 200.0 * unif(rng) - 100.0});
    return cases;
}

} // namespace

int main() {
    // 1. closed-form edge oracle, both solver paths, 200 random (l, E)
    criterion(1, "closed-form edge oracle (200 random free edges, both paths)", [](Ctx& c) {
        const auto t0 = std::chrono::steady_clock::now();
        double worst = 0;
        for (const auto& ec : edge_cases_200()) {
            const auto exact = free_closed_form(ec.length, ec.energy);
            const double scale = std::max({1.0, std::fabs(exact.phi_l), std::fabs(exact.theta_l)});

            EdgeProfile analytic;
            analytic.length = ec.length;
            EdgeProfile sampled = analytic;
            sampled.potential = Potential::grid(std::vector<double>(33, 0.0));
            for (const auto* profile : {&analytic, &sampled}) {
                const auto got = boundary_values(*profile, ec.energy);
                worst = std::max(worst, std::fabs(got.phi_l - exact.phi_l) / scale);
                worst = std::max(worst, std::fabs(got.theta_l - exact.theta_l) / scale);
                worst = std::max(worst, std::fabs(got.eta - exact.eta) / scale);
            }
        }
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        c.detail << "max rel defect " << worst << ", " << dt << "s";
        c.require(worst <= 1e-8, "relative defect above 1e-8");
        c.require(dt < 5.0, "runtime above 5s");
    });

    // 2. Wronskian conservation on the same cases
    criterion(2, "wronskian conservation (same 200 cases)", [](Ctx& c) {
        double worst = 0;
        for (const auto& ec : edge_cases_200()) {
            EdgeProfile analytic;
            analytic.length = ec.length;
            EdgeProfile sampled = analytic;
            sampled.potential = Potential::grid(std::vector<double>(33, 0.0));
            worst = std::max(worst, wronskian_defect(solve_basis(analytic, ec.energy)));
            worst = std::max(worst, wronskian_defect(solve_basis(sampled, ec.energy)));
        }
        c.detail << "max defect " << worst;
        c.require(worst <= 1e-8, "defect above 1e-8");
    });

    // 3. quantum-graph eigenvalues against the finite-difference oracle
    criterion(3, "eigenvalue oracle (5-vertex chain + single vertex)", [](Ctx& c) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto spec = free_lattice(1);

        const Box single{0, 1};
        const auto lone = find_eigenvalues(spec, single, {0.0}, 0.0, 0.1, 9.0);
        c.require(lone.size() == 1, "single vertex: expected exactly one eigenvalue");
        if (!lone.empty())
            c.require(std::fabs(lone[0].energy - M_PI * M_PI / 4.0) <= 1e-9,
                      "single vertex eigenvalue off (pi/2)^2");

        const Box box{2, 1};
        const double lambda = 2.0;
        const auto model = uniform_model(0.0, 1.0, lambda, 4321);
        const auto disorder = sample_disorder(model, box, 0);
        const auto pairs = find_eigenvalues(spec, box, disorder, lambda, 0.1, 9.0);
        const testing::FdGraph fd(spec.edge_profiles[0], 2, disorder, lambda, 1000);
        const auto oracle = fd.eigenvalues_in(0.1, 9.0);
        c.require(pairs.size() == oracle.size(), "eigenvalue count mismatch vs oracle");
        double worst = 0;
        for (std::size_t k = 0; k < std::min(pairs.size(), oracle.size()); ++k)
            worst = std::max(worst, std::fabs(pairs[k].energy - oracle[k]));
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        c.detail << pairs.size() << " eigenvalues, max |dE| " << worst << ", " << dt << "s";
        c.require(worst <= 5e-3, "eigenvalue defect above 5e-3");
        c.require(dt < 60.0, "runtime above 60s");
    });

    // 4. vertex conditions across a 50-eigenpair regression suite
    criterion(4, "vertex-condition exactness (50 eigenpairs)", [](Ctx& c) {
        std::size_t pairs_checked = 0;
        double worst = 0;
        auto sweep = [&](const LatticeSpec& spec, int radius, double lambda, std::uint64_t seed,
                         double lo, double hi) {
            const Box box{radius, spec.dimension};
            const auto model = uniform_model(0.0, 1.0, lambda, seed);
            const auto disorder = sample_disorder(model, box, 0);
            auto found = find_eigenvalues(spec, box, disorder, lambda, lo, hi, 384);
            for (auto& pair : found) {
                reconstruct_eigenfunction(spec, pair);
                const auto report = check_vertex_conditions(spec, pair);
                worst = std::max({worst, report.max_continuity_defect,
                                  report.max_kirchhoff_defect, report.max_boundary_value});
                ++pairs_checked;
            }
        };
        const auto d1 = free_lattice(1);
        sweep(d1, 5, 1.0, 11, 0.2, 8.5);
        sweep(d1, 5, 2.5, 12, 0.2, 8.5);
        sweep(d1, 6, 0.5, 15, 0.2, 8.5);
        sweep(d1, 7, 50.0, 13, 0.2, 8.5);
        sweep(free_lattice(2), 1, 1.5, 14, 0.2, 8.5);
        sweep(free_lattice(2), 1, 0.8, 16, 0.2, 8.5);
        c.detail << pairs_checked << " eigenpairs, max defect " << worst;
        c.require(pairs_checked >= 50, "fewer than 50 eigenpairs collected");
        c.require(worst <= 1e-6, "vertex-condition defect above 1e-6");
    });

    // 5. band indicator oracle on a 1e4-point grid
    criterion(5, "band oracle: indicator true iff E >= 0 on [-5,5]", [](Ctx& c) {
        const auto spec = free_lattice(1);
        const auto model = uniform_model(0.0, 0.0, 0.0, 1);
        c.require(dirichlet_exclusion_windows(spec, -5.0, 5.0).empty(),
                  "unexpected dirichlet window");
        int mismatches = 0;
        for (int i = 0; i < 10000; ++i) {
            const double e = -5.0 + 10.0 * double(i) / 9999.0;
            if (band_indicator(spec, model, e) != (e >= 0.0)) ++mismatches;
        }
        c.detail << mismatches << " mismatches over 10000 grid points";
        c.require(mismatches == 0, "indicator disagrees with the sign of E");
    });

    // 6. eigenvalue-branch monotonicity over 100 random instances
    criterion(6, "branch monotonicity in E (100 random instances)", [](Ctx& c) {
        std::mt19937_64 rng(60606);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        double worst = 1e300;
        for (int rep = 0; rep < 100; ++rep) {
            const int d = (rep % 2) + 1;
            LatticeSpec spec;
            spec.dimension = d;
            for (int j = 0; j < d; ++j) {
                EdgeProfile p;
                p.length = 0.7 + 0.6 * unif(rng);
                spec.edge_profiles.push_back(p);
            }
            const Box box{d == 1 ? 4 : 1, d};
            const double lambda = 3.0 * unif(rng);
            const auto model = uniform_model(-1.0, 1.0, lambda, 1000 + std::uint64_t(rep));
            const auto disorder = sample_disorder(model, box, 0);
            const double e = -3.0 + 7.9 * unif(rng);
            const double delta = 1e-5;
            const auto a = build_operator(spec, e, box, disorder, lambda);
            const auto b = build_operator(spec, e + delta, box, disorder, lambda);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(a.matrix, Eigen::EigenvaluesOnly);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(b.matrix, Eigen::EigenvaluesOnly);
            for (Eigen::Index k = 0; k < ea.eigenvalues().size(); ++k)
                worst = std::min(worst, (eb.eigenvalues()[k] - ea.eigenvalues()[k]) / delta);
        }
        c.detail << "min branch slope " << worst;
        c.require(worst >= -1e-8, "a sorted branch decreased in E");
    });

    // 7. fractional-moment decay at strong disorder, thread-independent
    criterion(7, "fractional-moment decay (d=1, lambda=20, 2e4 samples)", [](Ctx& c) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto spec = free_lattice(1);
        const Box box{12, 1};
        const auto model = uniform_model(-1.0, 1.0, 20.0, 12);
        std::vector<PairSpec> pairs;
        for (int k = 0; k <= 8; ++k) {
            PairSpec p;
            p.from = {k, 0, 0};
            pairs.push_back(p);
        }
        const auto est3 = fractional_moments(spec, box, model, 1.0, 0.2, pairs, 20000, 3);
        const auto est1 = fractional_moments(spec, box, model, 1.0, 0.2, pairs, 20000, 1);
        double thread_defect = 0;
        for (std::size_t k = 0; k < est1.pairs.size(); ++k)
            thread_defect = std::max(thread_defect,
                                     std::fabs(est1.pairs[k].mean - est3.pairs[k].mean));
        const auto fit = fit_decay(est3);
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        c.detail << "rate " << fit.rate << ", r2 " << fit.r_squared << ", thread defect "
                 << thread_defect << ", " << dt << "s";
        c.require(fit.rate > 0.0, "no positive decay rate");
        c.require(fit.r_squared > 0.9, "r^2 at most 0.9");
        c.require(thread_defect <= 1e-12, "thread count changed the means");
        c.require(dt < 300.0, "runtime above 5 minutes");
    });

    // 8. lambda-scaling of the single-point criterion
    criterion(8, "criterion lambda-scaling within 30% of 4^-s", [](Ctx& c) {
        const auto spec = free_lattice(1);
        const double s = 0.2;
        const auto base = uniform_model(-1.0, 1.0, 1.0, 2024);
        const auto constants = estimate_constants(base, s, 10000);
        const double target = std::pow(4.0, -s);
        double worst = 0;
        for (double e : {0.5, 2.0, 5.0}) {
            auto at = [&](double lambda) {
                auto model = base;
                model.coupling = lambda;
                return single_point_criterion(spec, model, e, s, constants, 0.5).value;
            };
            const double ratio = at(40.0) / at(10.0);
            worst = std::max(worst, std::fabs(ratio - target) / target);
        }
        c.detail << "max relative deviation " << worst << " (C~ = " << constants.c_tilde << ")";
        c.require(worst < 0.3, "ratio deviates more than 30%");
    });

    // 9. single-point vs finite-volume criterion on {0}
    criterion(9, "criterion consistency on Lambda={0} (10 configurations)", [](Ctx& c) {
        const auto spec = free_lattice(1);
        const double s = 0.2;
        const auto constants = user_constants(s, 2.0, 1.2);
        const Box origin{0, 1};
        const double energies[] = {0.5, 1.3, 2.2, 3.0, 4.5};
        double worst_sigma = 0;
        for (int k = 0; k < 10; ++k) {
            const double lo = (k % 2) ? -1.0 : 0.0;
            const auto model = uniform_model(lo, 1.0, 5.0 + 4.5 * k, 500 + std::uint64_t(k));
            const double e = energies[k % 5];
            const auto sp = single_point_criterion(spec, model, e, s, constants, 0.5);
            const auto fv =
                finite_volume_criterion(spec, model, origin, e, s, constants, 4000, 4, 1.0, 2);
            const double se = std::max(fv.subsets[0].std_err, 1e-300);
            worst_sigma = std::max(worst_sigma, std::fabs(fv.subsets[0].value - sp.value) / se);
        }
        c.detail << "max |difference|/SE " << worst_sigma;
        c.require(worst_sigma < 3.0, "disagreement beyond 3 standard errors");
    });

    // 10. green kernel against the finite-difference resolvent
    criterion(10, "green kernel oracle (20 queries in a gap)", [](Ctx& c) {
        const auto spec = free_lattice(1);
        const int radius = 3;
        const Box box{radius, 1};
        const auto model = uniform_model(0.0, 1.0, 1.0, 55);
        const auto disorder = sample_disorder(model, box, 0);
        const testing::FdGraph fd(spec.edge_profiles[0], radius, disorder, 1.0, 1000);

        std::mt19937_64 rng(1010);
        std::uniform_int_distribution<int> edge_pick(-radius - 1, radius);
        std::uniform_int_distribution<int> t_pick(1, 999);
        double worst = 0, worst_sym = 0;
        for (int q = 0; q < 20; ++q) {
            GreenKernelQuery query;
            query.energy = -0.4 - 0.15 * q;
            query.box = box;
            query.source = {{edge_pick(rng), 0, 0}, 0, t_pick(rng) / 1000.0};
            query.target = {{edge_pick(rng), 0, 0}, 0, t_pick(rng) / 1000.0};
            const double ours = green_kernel(query, spec, disorder, 1.0);
            const double oracle =
                fd.resolvent(query.energy, fd.index_of(query.source.m[0], query.source.t),
                             fd.index_of(query.target.m[0], query.target.t));
            worst = std::max(worst, std::fabs(ours - oracle));
            GreenKernelQuery swapped = query;
            std::swap(swapped.source, swapped.target);
            worst_sym =
                std::max(worst_sym, std::fabs(green_kernel(swapped, spec, disorder, 1.0) - ours));
        }
        c.detail << "max |defect| " << worst << ", max symmetry defect " << worst_sym;
        c.require(worst <= 1e-3, "resolvent defect above 1e-3");
        c.require(worst_sym <= 1e-8, "symmetry defect above 1e-8");
    });

    // 11. Lifshitz-tail slope
    criterion(11, "lifshitz slope in [-0.7,-0.3] (d=1, N=1000, 200 samples)", [](Ctx& c) {
        // synthetic curve first: the fit itself is exact
        IDSCurve synthetic;
        for (double eps : log_eps_grid(1e-3, 1.0, 8))
            synthetic.points.push_back({eps, std::exp(-std::pow(eps, -0.5)), 0.0});
        const auto exact = lifshitz_fit(synthetic, 1e-3, 1.0);
        c.require(std::fabs(exact.slope + 0.5) <= 1e-10, "synthetic fit not exact");

        const auto t0 = std::chrono::steady_clock::now();
        LatticeSpec spec;
        spec.dimension = 1;
        EdgeProfile edge;
        edge.length = 1.68;
        spec.edge_profiles.push_back(edge);
        const auto model = uniform_model(0.0, 1.0, 0.5, 2025);
        const auto curve =
            ids_curve(spec, model, -25.0, 1000, 200, log_eps_grid(0.01, 0.2, 16), 2);
        const auto fit = lifshitz_fit(curve, 0.01, 0.2);
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        c.detail << "slope " << fit.slope << " +- " << fit.std_err << ", r2 " << fit.r_squared
                 << ", " << dt << "s";
        c.require(fit.slope >= -0.7 && fit.slope <= -0.3, "slope outside [-0.7, -0.3]");
        c.require(dt < 600.0, "runtime above 10 minutes");
    });

    // 12. strong-resolvent convergence of a localized eigenvalue
    criterion(12, "eigenvalue convergence |E(N)-E(2N)| <= 1e-8 (lambda=50)", [](Ctx& c) {
        const auto spec = free_lattice(1);
        const auto model = uniform_model(0.0, 1.0, 50.0, 99);
        const auto rows = convergence_test(spec, model, 50.0, 2.5582, {20, 40, 80}, 0.2, 0, 96);
        double worst = 0;
        for (std::size_t k = 1; k < rows.size(); ++k)
            worst = std::max(worst, rows[k].diff_from_prev);
        c.detail << "max |E(N)-E(2N)| " << worst;
        c.require(rows.size() == 3, "missing rows");
        c.require(worst <= 1e-8, "eigenvalue did not converge to 1e-8");
    });

    // 13. Combes-Thomas decay, rate nondecreasing in the gap
    criterion(13, "combes-thomas decay rates across a 3-point gap grid", [](Ctx& c) {
        const auto spec = free_lattice(1);
        const auto model = uniform_model(-5.0, -4.0, 1.0, 61);
        const Box box{15, 1};
        double prev = -1.0;
        std::ostringstream rates;
        for (double eps : {0.3, 0.45, 0.6}) {
            const auto table = combes_thomas_check(spec, model, 0.75, 1.0, box, 60, eps);
            rates << " " << table.rate << "(kept " << table.kept << ")";
            c.require(table.rate > 0.0, "nonpositive decay rate");
            c.require(table.rate >= prev, "rate decreased with the gap");
            prev = table.rate;
        }
        c.detail << "rates" << rates.str();
    });

    if (g_failures == 0)
        std::printf("acceptance: all 13 criteria passed\n");
    else
        std::printf("acceptance: %d criteria FAILED\n", g_failures);
    return g_failures;
}
