#pragma once

// Test-only mesh discretization of the d=2 quantum graph on a box: one
// unknown per interior edge point plus one shared unknown per in-box vertex
// (continuity is built into the indexing), Dirichlet zero at outside
// vertices. Assembled from the quadratic form, so the discrete problem is a
// symmetric pencil (K + V) f = E M f with a diagonal positive mass matrix;
// eigenvalues are located by LDL^T inertia bisection.

#include <cmath>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "qg/lattice.hpp"

namespace qg::testing {

class FdGraph2d {
  public:
    FdGraph2d(const LatticeSpec& spec, const Box& box, const std::vector<double>& alpha,
              double lambda, int points_per_edge)
        : ppe_(points_per_edge) {
        const std::int64_t n_sites = box.size();

        struct EdgeRef {
            std::array<int, 3> start;
            int dir;
        };
        std::vector<EdgeRef> edges;
        for (std::int64_t i = 0; i < n_sites; ++i) {
            const auto m = box.coordinate(i);
            for (int j = 0; j < box.dimension; ++j) {
                edges.push_back({m, j});
                auto down = m;
                down[j] -= 1;
                if (!box.contains(down)) edges.push_back({down, j});
            }
        }

        n_ = std::size_t(n_sites) + edges.size() * std::size_t(ppe_ - 1);
        std::vector<Eigen::Triplet<double>> k_trip;
        std::vector<double> mass(n_, 0.0), diag(n_, 0.0);

        auto vertex_unknown = [&](const std::array<int, 3>& m) -> std::int64_t {
            return box.index(m); // -1 encodes the Dirichlet boundary
        };

        std::size_t interior_base = std::size_t(n_sites);
        for (const auto& e : edges) {
            const auto& profile = spec.edge_profiles[std::size_t(e.dir)];
            const double h = profile.length / double(ppe_);
            auto end = e.start;
            end[e.dir] += 1;
            const std::int64_t u0 = vertex_unknown(e.start);
            const std::int64_t u1 = vertex_unknown(end);

            auto unknown_at = [&](int k) -> std::int64_t { // k in [0, ppe]
                if (k == 0) return u0;
                if (k == ppe_) return u1;
                return std::int64_t(interior_base) + k - 1;
            };
            for (int k = 0; k < ppe_; ++k) {
                const std::int64_t a = unknown_at(k), b = unknown_at(k + 1);
                if (a >= 0) diag[std::size_t(a)] += 1.0 / h;
                if (b >= 0) diag[std::size_t(b)] += 1.0 / h;
                if (a >= 0 && b >= 0) {
                    k_trip.emplace_back(a, b, -1.0 / h);
                    k_trip.emplace_back(b, a, -1.0 / h);
                }
            }
            for (int k = 0; k <= ppe_; ++k) {
                const std::int64_t a = unknown_at(k);
                if (a < 0) continue;
                const double w = (k == 0 || k == ppe_) ? 0.5 * h : h;
                mass[std::size_t(a)] += w;
                diag[std::size_t(a)] += w * profile.potential_at(double(k) * h);
            }
            interior_base += std::size_t(ppe_ - 1);
        }
        for (std::int64_t i = 0; i < n_sites; ++i)
            diag[std::size_t(i)] += lambda * alpha[std::size_t(i)];

        for (std::size_t i = 0; i < n_; ++i) k_trip.emplace_back(i, i, diag[i]);
        stiffness_.resize(Eigen::Index(n_), Eigen::Index(n_));
        stiffness_.setFromTriplets(k_trip.begin(), k_trip.end());
        mass_ = std::move(mass);
    }

    std::int64_t count_below(double energy) const {
        Eigen::SparseMatrix<double> shifted = stiffness_;
        for (int k = 0; k < shifted.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(shifted, k); it; ++it)
                if (it.row() == it.col()) it.valueRef() -= energy * mass_[std::size_t(it.row())];
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(shifted);
        if (ldlt.info() != Eigen::Success) return -1;
        std::int64_t neg = 0;
        for (Eigen::Index i = 0; i < ldlt.vectorD().size(); ++i)
            if (ldlt.vectorD()[i] < 0) ++neg;
        return neg;
    }

    std::vector<double> eigenvalues_in(double lo, double hi) const {
        const std::int64_t c_lo = count_below(lo), c_hi = count_below(hi);
        std::vector<double> out;
        for (std::int64_t k = c_lo; k < c_hi; ++k) {
            double a = lo, b = hi;
            while (b - a > 1e-10 * std::max(1.0, std::fabs(b))) {
                const double mid = 0.5 * (a + b);
                if (count_below(mid) > k)
                    b = mid;
                else
                    a = mid;
            }
            out.push_back(0.5 * (a + b));
        }
        return out;
    }

  private:
    int ppe_;
    std::size_t n_ = 0;
    Eigen::SparseMatrix<double> stiffness_;
    std::vector<double> mass_;
};

} // namespace qg::testing
