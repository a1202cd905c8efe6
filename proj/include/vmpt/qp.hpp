#pragma once

#include "vmpt/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace vmpt {

/// Discrete feasible set: per-node box bounds plus an optional weighted-sum
/// (mass) equality w^T y = target. Weights must be positive where present.
struct FeasibleRegion {
    Vector lower;
    Vector upper;
    Vector mass_weights; // empty: no mass constraint
    double mass_target = 0.0;

    static FeasibleRegion box(const Vector& lo, const Vector& hi) {
        return FeasibleRegion{lo, hi, Vector(), 0.0};
    }

    bool has_mass() const { return mass_weights.size() > 0; }
    Index size() const { return lower.size(); }

    double bound_violation(const Vector& y) const {
        double v = 0.0;
        for (Index i = 0; i < y.size(); ++i) {
            v = std::max(v, lower[i] - y[i]);
            v = std::max(v, y[i] - upper[i]);
        }
        return v;
    }

    double mass_violation(const Vector& y) const {
        if (!has_mass()) return 0.0;
        return std::abs(mass_weights.dot(y) - mass_target);
    }

    bool contains(const Vector& y, double tol) const {
        return bound_violation(y) <= tol && mass_violation(y) <= tol * mass_scale();
    }

    double mass_scale() const {
        if (!has_mass()) return 1.0;
        return 1.0 + std::abs(mass_target) + mass_weights.sum();
    }
};

/// Clamp x to the box and, when a mass row is present, shift by the constant
/// s solving w^T clamp(x + s) = target. The map s -> mass is monotone, so a
/// bisection finds s; a final spread over interior nodes removes the
/// remaining defect. Throws InfeasibleVolumeFraction when the target lies
/// outside [w^T lower, w^T upper].
inline Vector project_to_region(const Vector& x, const FeasibleRegion& r) {
    const Index n = x.size();
    auto clamp_shift = [&](double s) {
        Vector y(n);
        for (Index i = 0; i < n; ++i) y[i] = std::clamp(x[i] + s, r.lower[i], r.upper[i]);
        return y;
    };
    if (!r.has_mass()) return clamp_shift(0.0);

    const Vector& w = r.mass_weights;
    const double lo_mass = w.dot(r.lower), hi_mass = w.dot(r.upper);
    const double scale = r.mass_scale();
    if (r.mass_target < lo_mass - 1e-12 * scale || r.mass_target > hi_mass + 1e-12 * scale)
        throw InfeasibleVolumeFraction("project_to_region: mass target unreachable within bounds");

    auto mass_at = [&](double s) { return w.dot(clamp_shift(s)); };
    double step = 1.0 + x.cwiseAbs().maxCoeff();
    for (Index i = 0; i < n; ++i) {
        if (std::isfinite(r.lower[i])) step = std::max(step, std::abs(r.lower[i] - x[i]));
        if (std::isfinite(r.upper[i])) step = std::max(step, std::abs(r.upper[i] - x[i]));
    }
    double s_lo = -step, s_hi = step;
    for (int it = 0; it < 200 && mass_at(s_lo) > r.mass_target; ++it) s_lo *= 2.0;
    for (int it = 0; it < 200 && mass_at(s_hi) < r.mass_target; ++it) s_hi *= 2.0;
    for (int it = 0; it < 200 && s_hi - s_lo > 0.0; ++it) {
        const double s = 0.5 * (s_lo + s_hi);
        if (mass_at(s) < r.mass_target)
            s_lo = s;
        else
            s_hi = s;
    }
    Vector y = clamp_shift(0.5 * (s_lo + s_hi));

    // distribute the leftover over nodes with enough margin
    double defect = r.mass_target - w.dot(y);
    if (defect != 0.0) {
        double free_mass = 0.0;
        const double margin = 2.0 * std::abs(defect) / std::max(w.minCoeff(), 1e-300);
        for (Index i = 0; i < n; ++i)
            if (y[i] - r.lower[i] > margin && r.upper[i] - y[i] > margin) free_mass += w[i];
        if (free_mass > 0.0) {
            const double shift = defect / free_mass;
            for (Index i = 0; i < n; ++i)
                if (y[i] - r.lower[i] > margin && r.upper[i] - y[i] > margin) y[i] += shift;
        }
    }
    if (r.mass_violation(y) > 1e-10 * scale)
        throw InfeasibleVolumeFraction("project_to_region: could not meet the mass target");
    return y;
}

/// Quadratic subproblem min 1/2 y^T A y + b^T y over a FeasibleRegion.
/// A is a sparse symmetric part plus an optional implicit symmetric term
/// applied matrix-free. When the implicit term has the factored form
/// G^T K^{-1} G (K sparse SPD), the factor matrices are carried along so the
/// active-set solver can treat it exactly through an augmented system.
struct QPProblem {
    SparseMatrix a_sparse;
    std::function<Vector(const Vector&)> a_implicit; // may be empty
    SparseMatrix gram_g; // empty when the implicit part is not factored
    SparseMatrix gram_k;
    Vector b;
    FeasibleRegion region;

    Index size() const { return b.size(); }
    bool has_implicit() const { return static_cast<bool>(a_implicit); }
    bool has_gram() const { return gram_g.rows() > 0; }

    Vector apply(const Vector& y) const {
        Vector out = a_sparse * y;
        if (a_implicit) out += a_implicit(y);
        return out;
    }

    double objective(const Vector& y) const { return 0.5 * y.dot(apply(y)) + b.dot(y); }
};

} // namespace vmpt
