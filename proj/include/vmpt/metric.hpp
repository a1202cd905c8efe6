#pragma once

#include "vmpt/fem.hpp"
#include "vmpt/qp.hpp"
#include "vmpt/trimesh.hpp"
#include "vmpt/types.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <string>
#include <utility>

namespace vmpt {

enum class MetricKind { L2, H1, ScaledH1, SecondOrder, Lbfgs };

inline std::string to_string(MetricKind k) {
    switch (k) {
    case MetricKind::L2: return "l2";
    case MetricKind::H1: return "h1";
    case MetricKind::ScaledH1: return "scaled_h1";
    case MetricKind::SecondOrder: return "second_order";
    case MetricKind::Lbfgs: return "lbfgs";
    }
    return "?";
}

/// A symmetric positive definite bilinear form: sparse part plus an optional
/// implicit (matrix-free) part. c1 is the coercivity constant a(p,p) >=
/// c1 |p|^2 in the form's coercivity norm; for the L2 metric that norm is the
/// discrete L2 norm rather than the H norm, and for the L-BFGS form no
/// uniform constant exists (coercivity_guaranteed = false).
struct MetricForm {
    MetricKind kind = MetricKind::H1;
    SparseMatrix sparse;
    std::function<Vector(const Vector&)> implicit_part; // may be empty
    SparseMatrix gram_g; // factored implicit part G^T K^{-1} G, when available
    SparseMatrix gram_k;
    double c1 = 1.0;
    bool coercivity_in_h_norm = true;
    bool coercivity_guaranteed = true;

    Vector apply(const Vector& p) const {
        Vector out = sparse * p;
        if (implicit_part) out += implicit_part(p);
        return out;
    }

    double inner(const Vector& p, const Vector& y) const { return p.dot(apply(y)); }

    /// Squared norm in which c1 is stated; h_form is the problem's H inner
    /// product matrix.
    double coercivity_norm_sq(const Vector& v, const SparseMatrix& h_form) const {
        if (coercivity_in_h_norm) return v.dot(h_form * v);
        return v.dot(sparse * v) / c1;
    }

    /// Subproblem min 1/2 |y - phi|_a^2 + lambda <grad, y - phi> over the
    /// region, written as min 1/2 y^T A y + b^T y.
    QPProblem make_subproblem(const Vector& phi, const Vector& grad, double lambda,
                              FeasibleRegion region) const {
        QPProblem qp;
        qp.a_sparse = sparse;
        qp.a_implicit = implicit_part;
        qp.gram_g = gram_g;
        qp.gram_k = gram_k;
        qp.b = lambda * grad - apply(phi);
        qp.region = std::move(region);
        return qp;
    }
};

/// scale * (grad p, grad y) on the mesh; c1 = scale w.r.t. the H norm.
/// n_components is the multiplicity carried by the reduced representative of
/// an isotropic vector-field form (2 for two-phase directions (w, -w)).
inline MetricForm make_h1_metric(const TriMesh& mesh, double scale = 1.0, int n_components = 1) {
    if (!(scale > 0.0)) throw Error("make_h1_metric: scale must be positive");
    MetricForm f;
    f.kind = scale == 1.0 ? MetricKind::H1 : MetricKind::ScaledH1;
    f.sparse = (scale * n_components) * assemble_h1_form(mesh);
    f.c1 = scale;
    return f;
}

/// Lumped mass-matrix form, the standard choice for active-set methods on
/// obstacle-type problems (keeps the bound part of the subproblem pointwise).
/// c1 = 1 w.r.t. its own discrete L2 norm only; the continuous H-coercivity
/// assumption does not hold for this metric.
inline MetricForm make_l2_metric(const TriMesh& mesh, int n_components = 1) {
    MetricForm f;
    f.kind = MetricKind::L2;
    const Vector w = static_cast<double>(n_components) * integration_weights(mesh);
    SparseMatrix m(mesh.n_nodes(), mesh.n_nodes());
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(mesh.n_nodes()));
    for (Index i = 0; i < w.size(); ++i) trip.emplace_back(static_cast<int>(i), static_cast<int>(i), w[i]);
    m.setFromTriplets(trip.begin(), trip.end());
    f.sparse = std::move(m);
    f.c1 = 1.0;
    f.coercivity_in_h_norm = false;
    return f;
}

/// Serves a fixed form every iteration.
class FixedMetricFactory {
public:
    explicit FixedMetricFactory(MetricForm form) : form_(std::move(form)) {}
    const MetricForm& make(int, const Vector&, const Vector&) const { return form_; }

private:
    MetricForm form_;
};

/// Limited-memory BFGS representation of a bilinear form: base sparse form
/// plus rank-one corrections from stored (p_k, y_k) pairs,
///   a_{k+1}(u,v) = a_k(u,v) - a_k(p_k,u) a_k(p_k,v)/a_k(p_k,p_k)
///                 + <y_k,u><y_k,v>/<y_k,p_k>.
/// Applications recurse over the stored pairs; u_j = A_j p_j is cached and
/// rebuilt when the ring buffer evicts a pair.
class LbfgsMemory {
public:
    explicit LbfgsMemory(SparseMatrix base, int depth = 10)
        : base_(std::move(base)), depth_(depth) {}

    int size() const { return static_cast<int>(pairs_.size()); }
    int depth() const { return depth_; }

    /// Stores the pair unless the curvature <y,p> fails the positivity
    /// threshold; returns whether it was stored.
    bool push(const Vector& p, const Vector& y) {
        const double e = y.dot(p);
        if (!(e > 1e-12 * y.norm() * p.norm())) return false;
        Pair pr;
        pr.p = p;
        pr.y = y;
        pr.u = apply(p);
        pr.d = p.dot(pr.u);
        pr.e = e;
        if (!(pr.d > 0.0)) throw IndefiniteOperator("L-BFGS base form lost positivity");
        pairs_.push_back(std::move(pr));
        if (size() > depth_) {
            pairs_.pop_front();
            rebuild();
        }
        return true;
    }

    Vector apply(const Vector& v) const {
        Vector out = base_ * v;
        out += apply_corrections(v);
        return out;
    }

    /// Only the rank-one corrections (operator minus the base part).
    Vector apply_corrections(const Vector& v) const {
        Vector out = Vector::Zero(v.size());
        for (const auto& pr : pairs_)
            out += (pr.y.dot(v) / pr.e) * pr.y - (pr.u.dot(v) / pr.d) * pr.u;
        return out;
    }

    const SparseMatrix& base() const { return base_; }

private:
    struct Pair {
        Vector p, y, u;
        double d = 0.0, e = 0.0;
    };

    void rebuild() {
        for (std::size_t j = 0; j < pairs_.size(); ++j) {
            Vector u = base_ * pairs_[j].p;
            for (std::size_t i = 0; i < j; ++i) {
                const auto& pi = pairs_[i];
                u += (pi.y.dot(pairs_[j].p) / pi.e) * pi.y - (pi.u.dot(pairs_[j].p) / pi.d) * pi.u;
            }
            pairs_[j].u = std::move(u);
            pairs_[j].d = pairs_[j].p.dot(pairs_[j].u);
            if (!(pairs_[j].d > 0.0))
                throw IndefiniteOperator("L-BFGS memory lost positivity after eviction");
        }
    }

    SparseMatrix base_;
    int depth_;
    std::deque<Pair> pairs_;
};

/// Metric factory applying BFGS updates to a fixed base form. The solver
/// feeds accepted steps through push_pair.
class LbfgsMetricFactory {
public:
    LbfgsMetricFactory(SparseMatrix base, double c1_base, int depth = 10)
        : memory_(std::move(base), depth), c1_(c1_base) {}

    void push_pair(const Vector& p, const Vector& y) { memory_.push(p, y); }

    MetricForm make(int, const Vector&, const Vector&) const {
        MetricForm f;
        f.kind = MetricKind::Lbfgs;
        f.sparse = memory_.base();
        f.c1 = c1_;
        f.coercivity_guaranteed = false;
        if (memory_.size() > 0) {
            LbfgsMemory snapshot = memory_;
            f.implicit_part = [snapshot = std::move(snapshot)](const Vector& v) {
                return snapshot.apply_corrections(v);
            };
        }
        return f;
    }

    const LbfgsMemory& memory() const { return memory_; }

private:
    LbfgsMemory memory_;
    double c1_;
};

} // namespace vmpt
