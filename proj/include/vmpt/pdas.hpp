#pragma once

#include "vmpt/qp.hpp"
#include "vmpt/types.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <random>
#include <utility>
#include <vector>

namespace vmpt {

/// Active-set bookkeeping of the primal-dual method. `active` holds -1/0/+1
/// for lower-active/free/upper-active; `mu` is the signed bound multiplier
/// (lower minus upper part), zero on free nodes.
struct ActiveSetState {
    std::vector<std::int8_t> active;
    Vector mu;
    double nu = 0.0;
    int iters = 0;
    double kkt_residual = 0.0;
};

struct PdasOptions {
    double c_scale = 1.0;  // active-set predictor weight, scaled by diag(A)
    int max_iterations = 200;
    double cg_tol = 1e-13;
    int cg_max_iterations = 2000;
};

namespace detail {

inline SparseMatrix reduced_matrix(const SparseMatrix& a, const std::vector<int>& red,
                                   int n_free) {
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(a.nonZeros()));
    for (int col = 0; col < a.outerSize(); ++col) {
        if (red[static_cast<std::size_t>(col)] < 0) continue;
        for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
            const int ri = red[static_cast<std::size_t>(it.row())];
            if (ri < 0) continue;
            trip.emplace_back(ri, red[static_cast<std::size_t>(col)], it.value());
        }
    }
    SparseMatrix s(n_free, n_free);
    s.setFromTriplets(trip.begin(), trip.end());
    return s;
}

/// Direct solve of [S w; w^T 0] [y; nu] = [rhs; r]. Without a mass row this
/// is an LDLT solve with a positivity check on the pivots.
class BorderedSolver {
public:
    BorderedSolver(const SparseMatrix& s, const Vector& w) : n_(s.rows()), has_mass_(w.size() > 0) {
        if (!has_mass_) {
            ldlt_.compute(s);
            if (ldlt_.info() != Eigen::Success)
                throw IndefiniteOperator("subproblem operator factorization failed");
            const auto& d = ldlt_.vectorD();
            if (n_ > 0 && !(d.minCoeff() > 0.0))
                throw IndefiniteOperator("subproblem operator is not positive definite");
            return;
        }
        std::vector<Triplet> trip;
        trip.reserve(static_cast<std::size_t>(s.nonZeros()) + 2 * static_cast<std::size_t>(n_));
        for (int col = 0; col < s.outerSize(); ++col)
            for (SparseMatrix::InnerIterator it(s, col); it; ++it)
                trip.emplace_back(static_cast<int>(it.row()), col, it.value());
        for (int i = 0; i < n_; ++i) {
            trip.emplace_back(i, n_, w[i]);
            trip.emplace_back(n_, i, w[i]);
        }
        SparseMatrix m(n_ + 1, n_ + 1);
        m.setFromTriplets(trip.begin(), trip.end());
        lu_.compute(m);
        if (lu_.info() != Eigen::Success)
            throw IndefiniteOperator("bordered subproblem system is singular");
    }

    // returns (y, nu)
    std::pair<Vector, double> solve(const Vector& rhs, double r) const {
        if (!has_mass_) {
            if (n_ == 0) return {Vector(), 0.0};
            return {ldlt_.solve(rhs), 0.0};
        }
        Vector full(n_ + 1);
        full.head(n_) = rhs;
        full[n_] = r;
        const Vector sol = lu_.solve(full);
        return {sol.head(n_), sol[n_]};
    }

private:
    int n_;
    bool has_mass_;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
    Eigen::SparseLU<SparseMatrix> lu_;
};

/// Multiplier estimate when every node is bound-active: the weighted median
/// of the stationarity breakpoints -r_i/w_i, minimizing the total
/// complementarity violation sum_i w_i * max(0, sign_i (r_i + nu w_i)).
inline double all_active_multiplier(const Vector& resid0, const Vector& w,
                                    const std::vector<std::int8_t>& active) {
    struct Point {
        double t, w;
    };
    std::vector<Point> pts;
    double slope = 0.0;
    for (Index i = 0; i < resid0.size(); ++i) {
        if (active[static_cast<std::size_t>(i)] == 0 || !(w[i] > 0.0)) continue;
        pts.push_back({-resid0[i] / w[i], w[i]});
        if (active[static_cast<std::size_t>(i)] < 0) slope -= w[i];
    }
    if (pts.empty()) return 0.0;
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.t < b.t; });
    for (const Point& p : pts) {
        slope += p.w;
        if (slope >= 0.0) return p.t;
    }
    return pts.back().t;
}

} // namespace detail

/// Primal-dual active-set solve of the projection-type subproblem. y_init
/// must be feasible; `warm` optionally seeds multipliers and active sets from
/// a previous solve on the same region.
inline std::pair<Vector, ActiveSetState> solve_projection(const QPProblem& qp, const Vector& y_init,
                                                          const PdasOptions& opts = {},
                                                          const ActiveSetState* warm = nullptr) {
    const Index n = qp.size();
    const FeasibleRegion& reg = qp.region;
    const bool has_mass = reg.has_mass();
    const double b_scale = 1.0 + qp.b.template lpNorm<Eigen::Infinity>();

    Vector cw(n);
    {
        const Vector diag = qp.a_sparse.diagonal();
        const double dmax = diag.size() > 0 ? diag.cwiseAbs().maxCoeff() : 1.0;
        for (Index i = 0; i < n; ++i)
            cw[i] = opts.c_scale * (diag[i] > 1e-14 * dmax ? diag[i] : std::max(dmax, 1.0));
    }

    Vector y = y_init;
    Vector mu = (warm && warm->mu.size() == n) ? warm->mu : Vector::Zero(n);
    std::vector<std::int8_t> active(static_cast<std::size_t>(n), 0);
    auto predict = [&](const Vector& yy, const Vector& mm) {
        std::vector<std::int8_t> next(static_cast<std::size_t>(n), 0);
        for (Index i = 0; i < n; ++i) {
            const double low_score = mm[i] + cw[i] * (reg.lower[i] - yy[i]);
            const double up_score = -mm[i] + cw[i] * (yy[i] - reg.upper[i]);
            if (low_score > 0.0 && low_score >= up_score)
                next[static_cast<std::size_t>(i)] = -1;
            else if (up_score > 0.0)
                next[static_cast<std::size_t>(i)] = 1;
        }
        return next;
    };
    // how strongly node i wants to switch to state next[i]
    auto flip_strength = [&](const Vector& yy, const Vector& mm, Index i, std::int8_t to) {
        const double low_score = mm[i] + cw[i] * (reg.lower[i] - yy[i]);
        const double up_score = -mm[i] + cw[i] * (yy[i] - reg.upper[i]);
        if (to < 0) return low_score;
        if (to > 0) return up_score;
        return active[static_cast<std::size_t>(i)] < 0 ? -low_score : -up_score;
    };
    active = predict(y, mu);

    ActiveSetState state;
    state.active = active;
    double nu = warm ? warm->nu : 0.0;
    int prev_flips = static_cast<int>(n) + 1;
    int flip_cap = static_cast<int>(n) + 1;

    for (int it = 1; it <= opts.max_iterations; ++it) {
        // fix active nodes at their bounds
        std::vector<int> red(static_cast<std::size_t>(n), -1);
        int n_free = 0;
        Vector y_fixed = Vector::Zero(n);
        for (Index i = 0; i < n; ++i) {
            if (active[static_cast<std::size_t>(i)] < 0)
                y_fixed[i] = reg.lower[i];
            else if (active[static_cast<std::size_t>(i)] > 0)
                y_fixed[i] = reg.upper[i];
            else
                red[static_cast<std::size_t>(i)] = n_free++;
        }

        if (n_free > 0) {
            const SparseMatrix s_ii = detail::reduced_matrix(qp.a_sparse, red, n_free);
            Vector w_i(n_free);
            double mass_rhs = 0.0;
            if (has_mass) {
                for (Index i = 0; i < n; ++i)
                    if (red[static_cast<std::size_t>(i)] >= 0)
                        w_i[red[static_cast<std::size_t>(i)]] = reg.mass_weights[i];
                mass_rhs = reg.mass_target - reg.mass_weights.dot(y_fixed);
            }
            Vector y_free;
            if (!qp.has_implicit()) {
                detail::BorderedSolver solver(s_ii, has_mass ? w_i : Vector());
                const Vector coupled = qp.apply(y_fixed) + qp.b;
                Vector rhs(n_free);
                for (Index i = 0; i < n; ++i)
                    if (red[static_cast<std::size_t>(i)] >= 0)
                        rhs[red[static_cast<std::size_t>(i)]] = -coupled[i];
                auto [yf, nu_new] = solver.solve(rhs, mass_rhs);
                y_free = std::move(yf);
                nu = nu_new;
            } else if (qp.has_gram()) {
                // the implicit part is G^T K^{-1} G: solve the equivalent
                // sparse symmetric augmented system
                //   [ S_II  G_I^T  w ] [y]   [ -b_I - S_IA y_A ]
                //   [ G_I   -K     0 ] [v] = [ -G y_fixed      ]
                //   [ w^T   0      0 ] [nu]  [ r - w_A^T y_A   ]
                const Index nd = qp.gram_k.rows();
                const Index dim = n_free + nd + (has_mass ? 1 : 0);
                std::vector<Triplet> trip;
                trip.reserve(static_cast<std::size_t>(s_ii.nonZeros()) +
                             2 * static_cast<std::size_t>(qp.gram_g.nonZeros()) +
                             static_cast<std::size_t>(qp.gram_k.nonZeros()) +
                             2 * static_cast<std::size_t>(n_free));
                for (int col = 0; col < s_ii.outerSize(); ++col)
                    for (SparseMatrix::InnerIterator itr(s_ii, col); itr; ++itr)
                        trip.emplace_back(static_cast<int>(itr.row()), col, itr.value());
                for (int col = 0; col < qp.gram_g.outerSize(); ++col) {
                    const int rc = red[static_cast<std::size_t>(col)];
                    if (rc < 0) continue;
                    for (SparseMatrix::InnerIterator itr(qp.gram_g, col); itr; ++itr) {
                        trip.emplace_back(static_cast<int>(n_free + itr.row()), rc, itr.value());
                        trip.emplace_back(rc, static_cast<int>(n_free + itr.row()), itr.value());
                    }
                }
                for (int col = 0; col < qp.gram_k.outerSize(); ++col)
                    for (SparseMatrix::InnerIterator itr(qp.gram_k, col); itr; ++itr)
                        trip.emplace_back(static_cast<int>(n_free + itr.row()),
                                          static_cast<int>(n_free + col), -itr.value());
                if (has_mass)
                    for (Index i = 0; i < n_free; ++i) {
                        trip.emplace_back(static_cast<int>(i), static_cast<int>(dim - 1), w_i[i]);
                        trip.emplace_back(static_cast<int>(dim - 1), static_cast<int>(i), w_i[i]);
                    }
                SparseMatrix aug(dim, dim);
                aug.setFromTriplets(trip.begin(), trip.end());
                Eigen::SparseLU<SparseMatrix> lu(aug);
                if (lu.info() != Eigen::Success)
                    throw IndefiniteOperator("augmented subproblem system is singular");

                Vector aug_rhs = Vector::Zero(dim);
                const Vector coupled_sparse = qp.a_sparse * y_fixed + qp.b;
                for (Index i = 0; i < n; ++i)
                    if (red[static_cast<std::size_t>(i)] >= 0)
                        aug_rhs[red[static_cast<std::size_t>(i)]] = -coupled_sparse[i];
                aug_rhs.segment(n_free, nd) = -(qp.gram_g * y_fixed);
                if (has_mass) aug_rhs[dim - 1] = mass_rhs;
                const Vector sol = lu.solve(aug_rhs);
                y_free = sol.head(n_free);
                nu = has_mass ? sol[dim - 1] : 0.0;
            } else {
                // projected PCG, preconditioned by the sparse part
                detail::BorderedSolver solver(s_ii, has_mass ? w_i : Vector());
                const Vector coupled = qp.apply(y_fixed) + qp.b;
                Vector rhs(n_free);
                for (Index i = 0; i < n; ++i)
                    if (red[static_cast<std::size_t>(i)] >= 0)
                        rhs[red[static_cast<std::size_t>(i)]] = -coupled[i];
                auto [y0, nu0] = solver.solve(rhs, mass_rhs);
                y_free = std::move(y0);
                nu = nu0;
                Vector y_full = y_fixed;
                for (Index i = 0; i < n; ++i)
                    if (red[static_cast<std::size_t>(i)] >= 0)
                        y_full[i] = y_free[red[static_cast<std::size_t>(i)]];
                Vector g_full = qp.apply(y_full) + qp.b;
                Vector g(n_free);
                for (Index i = 0; i < n; ++i)
                    if (red[static_cast<std::size_t>(i)] >= 0)
                        g[red[static_cast<std::size_t>(i)]] = g_full[i];

                auto nu_of = [&](const Vector& gg) {
                    if (!has_mass) return 0.0;
                    return -w_i.dot(gg) / w_i.dot(w_i);
                };
                auto proj_res_norm = [&](const Vector& gg) {
                    if (!has_mass) return gg.norm();
                    return (gg + nu_of(gg) * w_i).norm();
                };

                const double tol = opts.cg_tol * b_scale * std::sqrt(static_cast<double>(n_free));
                if (proj_res_norm(g) > tol) {
                    auto precond = [&](const Vector& gg) { return solver.solve(gg, 0.0).first; };
                    Vector z = precond(g);
                    Vector d = -z;
                    double gz = g.dot(z);
                    for (int cg = 0; cg < opts.cg_max_iterations; ++cg) {
                        Vector d_full = Vector::Zero(n);
                        for (Index i = 0; i < n; ++i)
                            if (red[static_cast<std::size_t>(i)] >= 0)
                                d_full[i] = d[red[static_cast<std::size_t>(i)]];
                        const Vector q_full = qp.apply(d_full);
                        Vector q(n_free);
                        for (Index i = 0; i < n; ++i)
                            if (red[static_cast<std::size_t>(i)] >= 0)
                                q[red[static_cast<std::size_t>(i)]] = q_full[i];
                        const double curv = d.dot(q);
                        if (!(curv > 0.0))
                            throw IndefiniteOperator("nonpositive curvature in subproblem CG");
                        const double alpha = gz / curv;
                        y_free += alpha * d;
                        g += alpha * q;
                        if (proj_res_norm(g) <= tol) break;
                        const Vector z_new = precond(g);
                        const double gz_new = g.dot(z_new);
                        d = -z_new + (gz_new / gz) * d;
                        z = z_new;
                        gz = gz_new;
                    }
                }
                nu = nu_of(g);
            }
            for (Index i = 0; i < n; ++i)
                if (red[static_cast<std::size_t>(i)] >= 0)
                    y_fixed[i] = y_free[red[static_cast<std::size_t>(i)]];
        } else if (has_mass) {
            nu = detail::all_active_multiplier(qp.apply(y_fixed) + qp.b, reg.mass_weights, active);
        } else {
            nu = 0.0;
        }
        y = y_fixed;

        // multipliers: stationarity residual on active nodes, zero on free
        const Vector resid = qp.apply(y) + qp.b +
                             (has_mass ? (nu * reg.mass_weights).eval() : Vector::Zero(n));
        mu.setZero();
        double kkt = 0.0;
        double dual_viol = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (active[static_cast<std::size_t>(i)] != 0) {
                mu[i] = resid[i];
                dual_viol = std::max(
                    dual_viol, active[static_cast<std::size_t>(i)] < 0 ? -mu[i] : mu[i]);
            } else {
                kkt = std::max(kkt, std::abs(resid[i]));
            }
        }

        auto next = predict(y, mu);
        state.iters = it;
        state.kkt_residual = kkt;

        // full KKT acceptance guards against roundoff-degenerate bound
        // activity flipping the predictor forever
        const double kkt_tol = 1e-11 * b_scale;
        const bool kkt_ok = kkt <= kkt_tol && dual_viol <= kkt_tol &&
                            reg.bound_violation(y) <= kkt_tol &&
                            (!has_mass || reg.mass_violation(y) <= kkt_tol * reg.mass_scale());
        if (kkt_ok) {
            state.active = active;
            state.mu = mu;
            state.nu = nu;
            return {y, state};
        }
#ifdef VMPT_PDAS_DEBUG
        {
            int nlo = 0, nup = 0, changes = 0;
            for (Index i = 0; i < n; ++i) {
                nlo += active[static_cast<std::size_t>(i)] < 0;
                nup += active[static_cast<std::size_t>(i)] > 0;
                changes += next[static_cast<std::size_t>(i)] != active[static_cast<std::size_t>(i)];
            }
            std::fprintf(stderr, "pdas it=%d nlo=%d nup=%d nfree=%d nu=%.6g kkt=%.3g bviol=%.3g mviol=%.3g changes=%d\n",
                         it, nlo, nup, static_cast<int>(n) - nlo - nup, nu, kkt,
                         reg.bound_violation(y), reg.mass_violation(y), changes);
        }
#endif
        if (next == active) {
            const bool mass_ok =
                !has_mass || reg.mass_violation(y) <= 1e-9 * reg.mass_scale();
            if (mass_ok) {
                state.active = active;
                state.mu = mu;
                state.nu = nu;
                return {y, state};
            }
            // every node pinned but the mass row is violated: free the node
            // with the weakest multiplier and keep going
            Index weakest = -1;
            double weakest_mu = std::numeric_limits<double>::infinity();
            for (Index i = 0; i < n; ++i)
                if (next[static_cast<std::size_t>(i)] != 0 && std::abs(mu[i]) < weakest_mu) {
                    weakest_mu = std::abs(mu[i]);
                    weakest = i;
                }
            if (weakest >= 0) next[static_cast<std::size_t>(weakest)] = 0;
        }

        // damping: once the flip count stops shrinking the updates are
        // oscillating; keep only the strongest-scoring flips and halve the
        // allowance until the set settles
        std::vector<Index> flips;
        for (Index i = 0; i < n; ++i)
            if (next[static_cast<std::size_t>(i)] != active[static_cast<std::size_t>(i)])
                flips.push_back(i);
        const int n_flips = static_cast<int>(flips.size());
        if (n_flips >= prev_flips) flip_cap = std::max(1, std::min(flip_cap, n_flips) / 2);
        prev_flips = n_flips;
        if (n_flips > flip_cap) {
            std::sort(flips.begin(), flips.end(), [&](Index a, Index b) {
                const double sa = flip_strength(y, mu, a, next[static_cast<std::size_t>(a)]);
                const double sb = flip_strength(y, mu, b, next[static_cast<std::size_t>(b)]);
                if (sa != sb) return sa > sb;
                return a < b;
            });
            for (int f = flip_cap; f < n_flips; ++f)
                next[static_cast<std::size_t>(flips[static_cast<std::size_t>(f)])] =
                    active[static_cast<std::size_t>(flips[static_cast<std::size_t>(f)])];
        }
        active = next;
    }
    throw MaxPdasIterations("active set did not settle within the iteration cap");
}

/// Probe the variational inequality (A y + b, eta - y) >= 0 over feasible
/// eta: coordinate perturbations projected back to the region plus
/// probe_count random feasible points. Returns the smallest left-hand side;
/// solutions of the subproblem stay above a small negative roundoff margin.
inline double vi_residual(const QPProblem& qp, const Vector& y, int probe_count,
                          unsigned seed = 20240901u) {
    const Index n = qp.size();
    const Vector grad = qp.apply(y) + qp.b;
    const double step = 0.1 * (1.0 + y.template lpNorm<Eigen::Infinity>());
    double worst = 0.0;
    auto consider = [&](const Vector& eta) { worst = std::min(worst, grad.dot(eta - y)); };

    for (Index i = 0; i < n; ++i) {
        for (const double s : {step, -step}) {
            Vector probe = y;
            probe[i] += s;
            consider(project_to_region(probe, qp.region));
        }
    }
    std::mt19937_64 rng(seed);
    const double span = 1.0 + y.template lpNorm<Eigen::Infinity>();
    for (int k = 0; k < probe_count; ++k) {
        Vector probe(n);
        for (Index i = 0; i < n; ++i) {
            const double lo = std::max(qp.region.lower[i], y[i] - 10.0 * span);
            const double hi = std::min(qp.region.upper[i], y[i] + 10.0 * span);
            probe[i] = std::uniform_real_distribution<double>(lo, hi)(rng);
        }
        consider(project_to_region(probe, qp.region));
    }
    return worst;
}

} // namespace vmpt
