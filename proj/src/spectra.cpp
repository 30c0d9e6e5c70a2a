#include "qg/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qg/fit.hpp"

namespace qg {

namespace {

Eigen::VectorXd sorted_eigenvalues(const LatticeSpec& spec, const Box& box,
                                   const std::vector<double>& disorder, double lambda, double e) {
    const auto op = build_operator(spec, e, box, disorder, lambda);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.matrix, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

} // namespace

std::vector<GraphEigenpair> find_eigenvalues(const LatticeSpec& spec, const Box& box,
                                             const std::vector<double>& disorder, double lambda,
                                             double lo, double hi, int grid_points) {
    spec.validate();
    if (!(hi > lo)) throw Error("find_eigenvalues: empty window");
    for (const auto& profile : spec.edge_profiles) {
        const auto roots = dirichlet_eigenvalues(profile, lo, hi);
        if (!roots.empty())
            throw WindowSplitRequired("find_eigenvalues: window contains a Dirichlet eigenvalue at E=" +
                                      std::to_string(roots.front()));
    }

    const std::size_t g = std::max(2, grid_points);
    std::vector<double> es(g + 1);
    for (std::size_t i = 0; i <= g; ++i) es[i] = lo + (hi - lo) * double(i) / double(g);

    const std::int64_t n = box.size();
    std::vector<Eigen::VectorXd> spectra(g + 1);
    for (std::size_t i = 0; i <= g; ++i)
        spectra[i] = sorted_eigenvalues(spec, box, disorder, lambda, es[i]);

    // k-th sorted branch is nondecreasing in E here, so a sign change brackets
    // exactly one upward crossing
    std::vector<double> crossings;
    std::vector<GraphEigenpair> pairs;
    for (std::int64_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < g; ++i) {
            const double f0 = spectra[i][k], f1 = spectra[i + 1][k];
            if (!(f0 < 0.0 && f1 >= 0.0)) continue;
            double a = es[i], b = es[i + 1];
            while (b - a > 1e-10) {
                const double mid = 0.5 * (a + b);
                const double fm = sorted_eigenvalues(spec, box, disorder, lambda, mid)[k];
                if (fm < 0.0)
                    a = mid;
                else
                    b = mid;
            }
            const double root = 0.5 * (a + b);
            crossings.push_back(root);

            GraphEigenpair pair;
            pair.energy = root;
            pair.lambda = lambda;
            pair.box = box;
            pair.disorder = disorder;
            const auto op = build_operator(spec, root, box, disorder, lambda);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(op.matrix);
            std::int64_t best = 0;
            for (std::int64_t q = 1; q < n; ++q)
                if (std::fabs(solver.eigenvalues()[q]) < std::fabs(solver.eigenvalues()[best]))
                    best = q;
            pair.lattice_vector = solver.eigenvectors().col(best);
            pair.lattice_vector.normalize();
            pair.residual = (op.matrix * pair.lattice_vector).norm();
            pairs.push_back(std::move(pair));
        }
    }

    std::sort(pairs.begin(), pairs.end(),
              [](const GraphEigenpair& a, const GraphEigenpair& b) { return a.energy < b.energy; });
    for (std::size_t i = 0; i + 1 < pairs.size(); ++i) {
        if (pairs[i + 1].energy - pairs[i].energy < 1e-9) {
            pairs[i].degenerate = true;
            pairs[i + 1].degenerate = true;
        }
    }
    return pairs;
}

void reconstruct_eigenfunction(const LatticeSpec& spec, GraphEigenpair& pair) {
    spec.validate();
    pair.edge_functions.clear();
    const Box& box = pair.box;

    std::vector<EdgeBasis> bases;
    bases.reserve(spec.dimension);
    for (int j = 0; j < spec.dimension; ++j)
        bases.push_back(solve_basis(spec.edge_profiles[j], pair.energy));

    auto xi = [&](const std::array<int, 3>& m) -> double {
        const std::int64_t idx = box.index(m);
        return idx >= 0 ? pair.lattice_vector[idx] : 0.0;
    };

    // every edge incident to the box: (m, j) with m or m+h_j inside
    for (std::int64_t i = 0; i < box.size(); ++i) {
        const auto m = box.coordinate(i);
        for (int j = 0; j < spec.dimension; ++j) {
            for (int back = 0; back <= 1; ++back) {
                auto start = m;
                if (back) start[j] -= 1;
                if (back && box.contains(start)) continue; // already emitted from its own site
                const auto& basis = bases[j];
                auto end = start;
                end[j] += 1;
                const double b = 1.0 / basis.phi_l;
                const double xs = xi(start), xe = xi(end);

                EdgeFunction f;
                f.m = start;
                f.direction = j;
                f.t = basis.grid;
                f.value.resize(basis.grid.size());
                for (std::size_t q = 0; q < basis.grid.size(); ++q)
                    f.value[q] = b * (xe * basis.phi[q] + xs * basis.phihat[q]);
                for (double v : f.value) f.sup_norm = std::max(f.sup_norm, std::fabs(v));
                double acc = 0;
                for (std::size_t q = 0; q + 1 < f.value.size(); ++q) {
                    const double h = f.t[q + 1] - f.t[q];
                    acc += 0.5 * h * (f.value[q] * f.value[q] + f.value[q + 1] * f.value[q + 1]);
                }
                f.l2_norm = std::sqrt(acc);
                pair.edge_functions.push_back(std::move(f));
            }
        }
    }
}

VertexConditionReport check_vertex_conditions(const LatticeSpec& spec, const GraphEigenpair& pair) {
    VertexConditionReport report;
    const Box& box = pair.box;

    std::vector<EdgeBasis> bases;
    for (int j = 0; j < spec.dimension; ++j)
        bases.push_back(solve_basis(spec.edge_profiles[j], pair.energy));

    auto xi = [&](const std::array<int, 3>& m) -> double {
        const std::int64_t idx = box.index(m);
        return idx >= 0 ? pair.lattice_vector[idx] : 0.0;
    };

    for (std::int64_t i = 0; i < box.size(); ++i) {
        const auto m = box.coordinate(i);
        const double fm = xi(m);
        double derivative_sum = 0;
        for (int j = 0; j < spec.dimension; ++j) {
            const auto& basis = bases[j];
            const double b = 1.0 / basis.phi_l;
            auto up = m, down = m;
            up[j] += 1;
            down[j] -= 1;

            // outgoing edge (m, j): value and derivative at t=0
            const double v_out = b * (xi(up) * basis.phi.front() + fm * basis.phihat.front());
            const double d_out = b * (xi(up) * basis.dphi.front() + fm * basis.dphihat.front());
            report.max_continuity_defect =
                std::max(report.max_continuity_defect, std::fabs(v_out - fm));
            derivative_sum += d_out;

            // incoming edge (m-h_j, j): value and derivative at t=l
            const double v_in = b * (fm * basis.phi.back() + xi(down) * basis.phihat.back());
            const double d_in = b * (fm * basis.dphi.back() + xi(down) * basis.dphihat.back());
            report.max_continuity_defect =
                std::max(report.max_continuity_defect, std::fabs(v_in - fm));
            derivative_sum -= d_in;
        }
        const std::int64_t idx = box.index(m);
        const double alpha = pair.disorder[idx];
        report.max_kirchhoff_defect = std::max(
            report.max_kirchhoff_defect, std::fabs(derivative_sum - pair.lambda * alpha * fm));
    }

    // values at vertices just outside the box (Dirichlet side)
    for (std::int64_t i = 0; i < box.size(); ++i) {
        const auto m = box.coordinate(i);
        for (int j = 0; j < spec.dimension; ++j) {
            const auto& basis = bases[j];
            const double b = 1.0 / basis.phi_l;
            auto up = m, down = m;
            up[j] += 1;
            down[j] -= 1;
            if (!box.contains(up)) {
                // edge (m, j) ends at the outside vertex m+h_j
                const double v = b * (0.0 * basis.phi.back() + xi(m) * basis.phihat.back());
                report.max_boundary_value = std::max(report.max_boundary_value, std::fabs(v));
            }
            if (!box.contains(down)) {
                // edge (m-h_j, j) starts at the outside vertex m-h_j
                const double v = b * (xi(m) * basis.phi.front() + 0.0 * basis.phihat.front());
                report.max_boundary_value = std::max(report.max_boundary_value, std::fabs(v));
            }
        }
    }
    return report;
}

DecayFit eigenfunction_decay(const GraphEigenpair& pair) {
    if (pair.edge_functions.empty())
        throw Error("eigenfunction_decay: reconstruct the eigenfunction first");
    const Box& box = pair.box;

    // per-site profile: sup over outgoing edges (m, j)
    std::vector<double> site_value(std::size_t(box.size()), 0.0);
    for (const auto& f : pair.edge_functions) {
        const std::int64_t idx = box.index(f.m);
        if (idx >= 0) site_value[idx] = std::max(site_value[idx], f.sup_norm);
    }
    std::int64_t peak = 0;
    for (std::int64_t i = 0; i < box.size(); ++i)
        if (site_value[i] > site_value[peak]) peak = i;

    DecayFit fit;
    fit.peak = box.coordinate(peak);
    std::vector<double> xs, ys;
    for (std::int64_t i = 0; i < box.size(); ++i) {
        if (site_value[i] <= 0) continue;
        const auto m = box.coordinate(i);
        int dist = 0;
        for (int j = 0; j < box.dimension; ++j) dist += std::abs(m[j] - fit.peak[j]);
        xs.push_back(double(dist));
        ys.push_back(std::log(site_value[i]));
    }
    const LineFit line = fit_line(xs, ys);
    fit.slope = line.slope;
    fit.r_squared = line.r_squared;
    fit.points = line.n;
    return fit;
}

double green_kernel(const GreenKernelQuery& query, const LatticeSpec& spec,
                    const std::vector<double>& disorder, double lambda) {
    spec.validate();
    const Box& box = query.box;
    for (const GraphPoint* p : {&query.source, &query.target}) {
        if (p->direction < 0 || p->direction >= spec.dimension)
            throw Error("green_kernel: direction out of range");
        const double l = spec.edge_profiles[p->direction].length;
        if (p->t < 0 || p->t > l) throw Error("green_kernel: point outside its edge");
    }

    const auto op = build_operator(spec, query.energy, box, disorder, lambda);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(op.matrix);
    const auto& ev = solver.eigenvalues();
    double min_abs = std::numeric_limits<double>::infinity();
    for (Eigen::Index q = 0; q < ev.size(); ++q) min_abs = std::min(min_abs, std::fabs(ev[q]));
    if (min_abs <= 1e-10)
        throw NearSingular("green_kernel: M(E) - lambda*A has an eigenvalue within 1e-10 of zero");

    auto resolvent = [&](std::int64_t p, std::int64_t q) -> double {
        if (p < 0 || q < 0) return 0.0;
        double acc = 0;
        for (Eigen::Index k = 0; k < ev.size(); ++k)
            acc += solver.eigenvectors()(p, k) * solver.eigenvectors()(q, k) / ev[k];
        return acc;
    };

    const EdgeBasis src = solve_basis(spec.edge_profiles[query.source.direction], query.energy);
    const EdgeBasis tgt = solve_basis(spec.edge_profiles[query.target.direction], query.energy);
    const double bs = 1.0 / src.phi_l, bt = 1.0 / tgt.phi_l;

    auto ms = query.source.m, mt = query.target.m;
    auto ms_up = ms, mt_up = mt;
    ms_up[query.source.direction] += 1;
    mt_up[query.target.direction] += 1;
    const std::int64_t i_s = box.index(ms), i_su = box.index(ms_up);
    const std::int64_t i_t = box.index(mt), i_tu = box.index(mt_up);

    const double phi_s = src.eval_phi(query.source.t);
    const double hat_s = src.eval_phihat(query.source.t);
    const double phi_t = tgt.eval_phi(query.target.t);
    const double hat_t = tgt.eval_phihat(query.target.t);

    const double correction =
        bs * bt *
        (resolvent(i_s, i_t) * hat_s * hat_t + resolvent(i_su, i_t) * phi_s * hat_t +
         resolvent(i_s, i_tu) * hat_s * phi_t + resolvent(i_su, i_tu) * phi_s * phi_t);

    double same_edge = 0;
    if (ms == mt && query.source.direction == query.target.direction) {
        const double a = std::min(query.source.t, query.target.t);
        const double b = std::max(query.source.t, query.target.t);
        same_edge = src.eval_phi(a) * src.eval_phihat(b) / src.phi_l;
    }
    return same_edge - correction;
}

std::vector<ConvergenceRow> convergence_test(const LatticeSpec& spec, const DisorderModel& model,
                                             double lambda, double target_energy,
                                             const std::vector<int>& radii,
                                             double search_halfwidth, std::uint64_t sample_index,
                                             int grid_points) {
    spec.validate();
    model.validate();

    // clip the search window to the Dirichlet-free interval around the target
    double lo = target_energy - search_halfwidth, hi = target_energy + search_halfwidth;
    for (const auto& w : dirichlet_exclusion_windows(spec, lo, hi)) {
        if (w.hi <= target_energy)
            lo = std::max(lo, w.hi);
        else if (w.lo >= target_energy)
            hi = std::min(hi, w.lo);
        else
            throw Error("convergence_test: target energy inside a Dirichlet window");
    }

    std::vector<ConvergenceRow> rows;
    for (int radius : radii) {
        Box box{radius, spec.dimension};
        const auto disorder = sample_disorder(model, box, sample_index);
        const auto pairs = find_eigenvalues(spec, box, disorder, lambda, lo, hi, grid_points);
        if (pairs.empty())
            throw Error("convergence_test: no eigenvalue near the target at N=" +
                        std::to_string(radius));
        double best = pairs.front().energy;
        for (const auto& p : pairs)
            if (std::fabs(p.energy - target_energy) < std::fabs(best - target_energy))
                best = p.energy;
        ConvergenceRow row;
        row.radius = radius;
        row.eigenvalue = best;
        row.diff_from_prev = rows.empty() ? 0.0 : std::fabs(best - rows.back().eigenvalue);
        rows.push_back(row);
    }
    return rows;
}

} // namespace qg
