#pragma once

#include "vmpt/elasticity.hpp"
#include "vmpt/fem.hpp"
#include "vmpt/metric.hpp"
#include "vmpt/qp.hpp"
#include "vmpt/trimesh.hpp"
#include "vmpt/types.hpp"

#include <cmath>
#include <random>
#include <utility>
#include <vector>

namespace vmpt {

/// Admissible set description: volume fractions m (nonnegative, summing to
/// one). The shifted design variable obeys phi >= -m componentwise, a
/// pointwise zero-sum across components and a zero mean value.
struct FeasibleSet {
    Vector fractions;

    explicit FeasibleSet(Vector m) : fractions(std::move(m)) {
        if (fractions.size() < 2)
            throw InfeasibleVolumeFraction("FeasibleSet: need at least two materials");
        if (fractions.minCoeff() < 0.0)
            throw InfeasibleVolumeFraction("FeasibleSet: negative volume fraction");
        if (std::abs(fractions.sum() - 1.0) > 1e-12)
            throw InfeasibleVolumeFraction("FeasibleSet: fractions must sum to one");
    }

    int n_materials() const { return static_cast<int>(fractions.size()); }

    /// Discrete region for the two-material scalar reduction: the zero-sum
    /// constraint eliminates the second component, leaving the box
    /// [-m1, m2] per node plus one weighted mean-value row.
    FeasibleRegion discretize(const TriMesh& mesh) const {
        if (n_materials() != 2)
            throw Error("FeasibleSet: only the two-material reduction is implemented");
        const Index n = mesh.n_nodes();
        FeasibleRegion r;
        r.lower = Vector::Constant(n, -fractions[0]);
        r.upper = Vector::Constant(n, fractions[1]);
        r.mass_weights = integration_weights(mesh);
        r.mass_target = 0.0;
        return r;
    }
};

/// Two-material design variable on a mesh, stored as the shifted first
/// component; the second component is its negative.
class PhaseField {
public:
    PhaseField(const TriMesh& mesh, Vector fractions, Vector coeffs)
        : mesh_(&mesh), fractions_(std::move(fractions)), coeffs_(std::move(coeffs)) {
        if (coeffs_.size() != mesh.n_nodes()) throw Error("PhaseField: size mismatch");
    }

    const TriMesh& mesh() const { return *mesh_; }
    const Vector& fractions() const { return fractions_; }
    int n_components() const { return static_cast<int>(fractions_.size()); }
    const Vector& coeffs() const { return coeffs_; }

    /// Shifted component i (only two components).
    Vector component(int i) const { return i == 0 ? coeffs_ : (-coeffs_).eval(); }
    /// Unshifted hard-material fraction, in [0,1] for feasible fields.
    Vector hard_fraction() const { return coeffs_.array() + fractions_[0]; }

private:
    const TriMesh* mesh_;
    Vector fractions_;
    Vector coeffs_;
};

struct ProblemParams {
    double epsilon = 0.04;
    double gamma = 0.5;
    Vector fractions = (Vector(2) << 0.5, 0.5).finished();
    StiffnessModel stiffness;
    Eigen::Vector2d traction = Eigen::Vector2d(0.0, -1.0);
    double load_center = 0.5; // y-coordinate of the loaded segment's center
    double load_width = 0.25;

    void validate() const {
        if (!(epsilon > 0.0) || !std::isfinite(epsilon))
            throw ConfigError("epsilon must be positive and finite");
        if (!(gamma > 0.0) || !std::isfinite(gamma))
            throw ConfigError("gamma must be positive and finite");
    }
};

/// Reduced mean-compliance functional of the cantilever problem:
///   j(phi) = compliance(S(phi + m)) + gamma * E(phi + m)
/// on the shifted two-material design variable, with the elastic state
/// eliminated. The last evaluated design point keeps its state solve and
/// stiffness factorization cached for the gradient and the second-order
/// metric.
class ComplianceProblem {
public:
    ComplianceProblem(const TriMesh& mesh, ProblemParams params)
        : mesh_(&mesh), params_(std::move(params)),
          stiffness_form_(assemble_h1_form(mesh)),
          h_form_(2.0 * stiffness_form_),
          weights_(integration_weights(mesh)),
          region_(FeasibleSet(params_.fractions).discretize(mesh)),
          elasticity_(mesh, params_.stiffness, mesh.left_edge_nodes(),
                      mesh.right_edge_segments(params_.load_center - 0.5 * params_.load_width,
                                               params_.load_center + 0.5 * params_.load_width),
                      params_.traction) {
        params_.validate();
        if (params_.traction.squaredNorm() > 0.0 &&
            mesh.right_edge_segments(params_.load_center - 0.5 * params_.load_width,
                                     params_.load_center + 0.5 * params_.load_width)
                .empty())
            throw Error("ComplianceProblem: load segment contains no boundary edges");
    }

    const TriMesh& mesh() const { return *mesh_; }
    const ProblemParams& params() const { return params_; }
    const FeasibleRegion& feasible_region() const { return region_; }
    const SparseMatrix& h_form() const { return h_form_; }
    const Vector& integration_weights_vector() const { return weights_; }
    ElasticitySystem& elasticity() { return elasticity_; }

    /// Suggested initial scaling 0.005 / (gamma * epsilon).
    double default_lambda0() const { return 0.005 / (params_.gamma * params_.epsilon); }

    /// Ginzburg-Landau energy of the unshifted field phi + m: exact
    /// quadrature for the gradient square, centroid rule for the potential
    /// psi0(x) = (1 - x.x)/2.
    double gl_energy(const Vector& c) const {
        const double m1 = params_.fractions[0], m2 = params_.fractions[1];
        double grad_part = c.dot(stiffness_form_ * c); // |grad phi|^2 = 2 |grad c|^2
        double pot = 0.0;
        for (int t = 0; t < mesh_->n_triangles(); ++t) {
            const double ct = centroid_value(*mesh_, c, t);
            const double x1 = ct + m1, x2 = m2 - ct;
            pot += mesh_->triangle_area(t) * 0.5 * (1.0 - x1 * x1 - x2 * x2);
        }
        return params_.epsilon * grad_part + pot / params_.epsilon;
    }

    double value(const Vector& c) {
        ensure_state(c);
        return compliance_ + params_.gamma * gl_;
    }

    double compliance(const Vector& c) {
        ensure_state(c);
        return compliance_;
    }

    const DisplacementField& state(const Vector& c) {
        ensure_state(c);
        return u_;
    }

    /// Discrete dual vector of the reduced derivative: pairing with a nodal
    /// direction w gives
    ///   gamma int { eps grad phi : grad v + psi0'(phi+m).v / eps }
    ///   - int C'(phi+m) v  e(u):e(u)
    /// for v = (w, -w). No adjoint solve: the compliance term is self-adjoint.
    Vector gradient(const Vector& c) {
        ensure_state(c);
        const double m1 = params_.fractions[0], m2 = params_.fractions[1];
        Vector g = (2.0 * params_.gamma * params_.epsilon) * (stiffness_form_ * c);
        const double pot_scale = params_.gamma / params_.epsilon;
        for (int t = 0; t < mesh_->n_triangles(); ++t) {
            const auto& tri = mesh_->triangle(t);
            const double ct = centroid_value(*mesh_, c, t);
            const double w = -pot_scale * (2.0 * ct + m1 - m2) * mesh_->triangle_area(t) / 3.0;
            for (int v : tri) g[v] += w;
        }
        g -= elasticity_.interpolation_derivative_pairing(hard_fraction(c), u_, u_);
        return g;
    }

    /// Sensitivity of the state map at the cached design point.
    DisplacementField linearized_state(const Vector& c, const Vector& p) {
        ensure_state(c);
        return elasticity_.solve_linearized(hard_fraction(c), u_, p);
    }

    Vector hard_fraction(const Vector& c) const { return c.array() + params_.fractions[0]; }

    PhaseField field(const Vector& c) const { return PhaseField(*mesh_, params_.fractions, c); }

private:
    void ensure_state(const Vector& c) {
        if (has_cache_ && cached_c_.size() == c.size() && (cached_c_ - c).squaredNorm() == 0.0)
            return;
        elasticity_.factorize(hard_fraction(c));
        u_ = elasticity_.solve_state();
        compliance_ = elasticity_.compliance(u_);
        gl_ = gl_energy(c);
        cached_c_ = c;
        has_cache_ = true;
    }

    const TriMesh* mesh_;
    ProblemParams params_;
    SparseMatrix stiffness_form_;
    SparseMatrix h_form_;
    Vector weights_;
    FeasibleRegion region_;
    ElasticitySystem elasticity_;

    Vector cached_c_;
    bool has_cache_ = false;
    DisplacementField u_;
    double compliance_ = 0.0;
    double gl_ = 0.0;
};

/// phi0 = m, i.e. a uniform mixture (zero in shifted coordinates).
inline Vector uniform_initial(const TriMesh& mesh) { return Vector::Zero(mesh.n_nodes()); }

/// Seeded nodal noise projected onto the feasible set.
inline Vector random_initial(const TriMesh& mesh, const FeasibleRegion& region, unsigned seed) {
    std::mt19937_64 rng(seed);
    Vector c(mesh.n_nodes());
    for (Index i = 0; i < c.size(); ++i)
        c[i] = std::uniform_real_distribution<double>(region.lower[i], region.upper[i])(rng);
    return project_to_region(c, region);
}

/// Metric with second-order information,
///   a_k(p,y) = gamma eps (p,y)_H - 2 int C'(m+phi_k)(y) e(z_p):e(u_k),
/// applied through the linearized state z_p; the stiffness factorization of
/// the current design point is reused for every application. The returned
/// form is valid until the problem evaluates a different design point.
class SecondOrderMetricFactory {
public:
    explicit SecondOrderMetricFactory(ComplianceProblem& problem) : problem_(&problem) {}

    MetricForm make(int, const Vector& c, const Vector&) const {
        ComplianceProblem& prob = *problem_;
        prob.value(c); // ensure the cached state matches c
        const double ge = prob.params().gamma * prob.params().epsilon;
        MetricForm f;
        f.kind = MetricKind::SecondOrder;
        f.sparse = ge * prob.h_form();
        f.c1 = ge;
        const Vector chi = prob.hard_fraction(c);
        f.implicit_part = [&prob, chi, c](const Vector& p) {
            const DisplacementField z = prob.linearized_state(c, p);
            return (-2.0 * prob.elasticity().interpolation_derivative_pairing(
                               chi, z, prob.state(c)))
                .eval();
        };
        // factored view of the same operator, 2 G^T K^{-1} G
        f.gram_g = std::sqrt(2.0) * prob.elasticity().sensitivity_matrix(chi, prob.state(c));
        f.gram_k = prob.elasticity().assemble_constrained(chi);
        return f;
    }

    /// Direct evaluation of the defining (sensitivity) form.
    double inner_via_sensitivity(const Vector& c, const Vector& p, const Vector& y) {
        ComplianceProblem& prob = *problem_;
        prob.value(c);
        const double ge = prob.params().gamma * prob.params().epsilon;
        const Vector chi = prob.hard_fraction(c);
        const DisplacementField z_p = prob.linearized_state(c, p);
        const double cross =
            prob.elasticity().interpolation_derivative_pairing(chi, z_p, prob.state(c)).dot(y);
        return ge * p.dot(prob.h_form() * y) - 2.0 * cross;
    }

    /// Equivalent elastic-energy form gamma eps (p,y)_H + 2 int C e(z_p):e(z_y).
    double inner_via_linearized_pair(const Vector& c, const Vector& p, const Vector& y) {
        ComplianceProblem& prob = *problem_;
        prob.value(c);
        const double ge = prob.params().gamma * prob.params().epsilon;
        const Vector chi = prob.hard_fraction(c);
        const DisplacementField z_p = prob.linearized_state(c, p);
        const DisplacementField z_y = prob.linearized_state(c, y);
        return ge * p.dot(prob.h_form() * y) +
               2.0 * prob.elasticity().stiffness_inner(chi, z_p, z_y);
    }

private:
    ComplianceProblem* problem_;
};

} // namespace vmpt
