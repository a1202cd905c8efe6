#pragma once

#include "vmpt/fem.hpp"
#include "vmpt/trimesh.hpp"
#include "vmpt/types.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

namespace vmpt {

/// Nodal displacement, two components per vertex, interleaved (ux0, uy0, ux1, ...).
struct DisplacementField {
    Vector dofs;

    double ux(int node) const { return dofs[2 * node]; }
    double uy(int node) const { return dofs[2 * node + 1]; }
    Index n_nodes() const { return dofs.size() / 2; }
};

/// Isotropic plane-strain material pair with quadratic interpolation of the
/// stiffness tensor in the hard-phase fraction chi.
struct StiffnessModel {
    double e_hard = 1.0;
    double e_soft = 1e-4;
    double nu_hard = 0.3;
    double nu_soft = 0.3;

    static Eigen::Matrix3d isotropic(double e, double nu) {
        const double lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        const double mu = e / (2.0 * (1.0 + nu));
        Eigen::Matrix3d c = Eigen::Matrix3d::Zero();
        c(0, 0) = c(1, 1) = lam + 2.0 * mu;
        c(0, 1) = c(1, 0) = lam;
        c(2, 2) = mu;
        return c;
    }

    Eigen::Matrix3d hard() const { return isotropic(e_hard, nu_hard); }
    Eigen::Matrix3d soft() const { return isotropic(e_soft, nu_soft); }
    Eigen::Matrix3d delta() const { return hard() - soft(); }

    // q maps chi monotonically onto [0,1], constant outside.
    static double interp(double chi) {
        const double c = std::clamp(chi, 0.0, 1.0);
        return c * c;
    }
    static double interp_deriv(double chi) {
        if (chi < 0.0 || chi > 1.0) return 0.0;
        return 2.0 * chi;
    }

    Eigen::Matrix3d at(double chi) const { return soft() + interp(chi) * delta(); }
};

/// Assembled linear-elasticity machinery on a fixed mesh: Dirichlet nodes
/// pinned in both components, traction g on a set of boundary edges.
/// The stiffness matrix depends on the nodal hard-phase fraction chi and is
/// refactorized per design point; the sparsity pattern is analyzed once.
class ElasticitySystem {
public:
    ElasticitySystem(const TriMesh& mesh, StiffnessModel stiffness,
                     std::vector<int> dirichlet_nodes,
                     std::vector<std::array<int, 2>> traction_edges,
                     Eigen::Vector2d traction)
        : mesh_(&mesh), stiffness_(std::move(stiffness)),
          c_soft_(stiffness_.soft()), c_delta_(stiffness_.delta()),
          dirichlet_nodes_(std::move(dirichlet_nodes)),
          traction_edges_(std::move(traction_edges)), traction_(traction),
          constrained_(2 * mesh.n_nodes(), false),
          load_(Vector::Zero(2 * mesh.n_nodes())) {
        for (int v : dirichlet_nodes_) {
            constrained_[2 * v] = true;
            constrained_[2 * v + 1] = true;
        }
        for (const auto& e : traction_edges_) {
            const double dx = mesh.x(e[1]) - mesh.x(e[0]);
            const double dy = mesh.y(e[1]) - mesh.y(e[0]);
            const double half = 0.5 * std::hypot(dx, dy);
            for (int v : e)
                for (int d = 0; d < 2; ++d)
                    load_[2 * v + d] += half * traction_[d];
        }
        for (Index d = 0; d < load_.size(); ++d)
            if (constrained_[static_cast<std::size_t>(d)]) load_[d] = 0.0;
        solver_ = std::make_unique<Eigen::SimplicialLDLT<SparseMatrix>>();
    }

    const TriMesh& mesh() const { return *mesh_; }
    const StiffnessModel& stiffness() const { return stiffness_; }
    const Vector& load() const { return load_; }
    int n_dofs() const { return 2 * mesh_->n_nodes(); }
    bool is_constrained(int dof) const { return constrained_[static_cast<std::size_t>(dof)]; }

    /// Strain-displacement matrix of triangle t (engineering shear row).
    Eigen::Matrix<double, 3, 6> strain_matrix(int t) const {
        const auto g = mesh_->shape_gradients(t);
        Eigen::Matrix<double, 3, 6> b = Eigen::Matrix<double, 3, 6>::Zero();
        for (int a = 0; a < 3; ++a) {
            b(0, 2 * a) = g(0, a);
            b(1, 2 * a + 1) = g(1, a);
            b(2, 2 * a) = g(1, a);
            b(2, 2 * a + 1) = g(0, a);
        }
        return b;
    }

    /// Stiffness matrix K(chi) without boundary conditions.
    SparseMatrix assemble_raw(const Vector& chi) const {
        return assemble_impl(chi, /*apply_bc=*/false);
    }

    /// K(chi) with Dirichlet rows/columns replaced by identity.
    SparseMatrix assemble_constrained(const Vector& chi) const {
        return assemble_impl(chi, /*apply_bc=*/true);
    }

    /// Sensitivity coupling G with G e_i = right-hand side of the linearized
    /// state equation for the nodal direction e_i, so that
    /// solve_linearized(chi, u, p) = K^{-1} G p. Constrained rows are zero.
    SparseMatrix sensitivity_matrix(const Vector& chi, const DisplacementField& u) const {
        std::vector<Triplet> trip;
        trip.reserve(static_cast<std::size_t>(mesh_->n_triangles()) * 18);
        for (int t = 0; t < mesh_->n_triangles(); ++t) {
            const auto& tri = mesh_->triangle(t);
            const double area = mesh_->triangle_area(t);
            const double qd = StiffnessModel::interp_deriv(centroid_value(*mesh_, chi, t));
            if (qd == 0.0) continue;
            const auto b = strain_matrix(t);
            Eigen::Matrix<double, 6, 1> ue;
            gather(u.dofs, tri, ue);
            const Eigen::Matrix<double, 6, 1> fe =
                (-area * qd / 3.0) * (b.transpose() * (c_delta_ * (b * ue)));
            for (int a = 0; a < 3; ++a)
                for (int d = 0; d < 2; ++d) {
                    const int row = 2 * tri[a] + d;
                    if (constrained_[static_cast<std::size_t>(row)]) continue;
                    for (int col_node : tri) trip.emplace_back(row, col_node, fe[2 * a + d]);
                }
        }
        SparseMatrix g(n_dofs(), mesh_->n_nodes());
        g.setFromTriplets(trip.begin(), trip.end());
        return g;
    }

    /// Assemble K(chi) with Dirichlet rows/columns replaced by identity, then
    /// factorize. Must be called before the solve routines.
    void factorize(const Vector& chi) {
        const SparseMatrix k = assemble_impl(chi, /*apply_bc=*/true);
        if (!pattern_analyzed_) {
            solver_->analyzePattern(k);
            pattern_analyzed_ = true;
        }
        solver_->factorize(k);
        if (solver_->info() != Eigen::Success)
            throw SingularSystem("elasticity factorization failed");
        const auto& d = solver_->vectorD();
        const double dmax = d.cwiseAbs().maxCoeff();
        if (!(d.minCoeff() > 1e-14 * dmax))
            throw SingularSystem("elasticity operator is not positive definite (missing Dirichlet boundary?)");
        factorized_ = true;
    }

    bool factorized() const { return factorized_; }

    /// Back-substitution with the cached factorization.
    Vector solve(const Vector& rhs) const {
        if (!factorized_) throw Error("ElasticitySystem::solve before factorize");
        return solver_->solve(rhs);
    }

    /// State u with K(chi) u = f for the stored traction load.
    DisplacementField solve_state() const {
        DisplacementField u{solve(load_)};
        return u;
    }

    double compliance(const DisplacementField& u) const { return load_.dot(u.dofs); }

    /// Directional derivative of the state map: z_p solves
    ///   K(chi) z_p = -A'(chi)[p] u
    /// for the nodal direction p, reusing the cached factorization.
    DisplacementField solve_linearized(const Vector& chi, const DisplacementField& u,
                                       const Vector& p) const {
        if (!factorized_) throw Error("ElasticitySystem::solve_linearized before factorize");
        Vector rhs = Vector::Zero(n_dofs());
        for (int t = 0; t < mesh_->n_triangles(); ++t) {
            const auto& tri = mesh_->triangle(t);
            const double area = mesh_->triangle_area(t);
            const double qd = StiffnessModel::interp_deriv(centroid_value(*mesh_, chi, t));
            if (qd == 0.0) continue;
            const double p_t = centroid_value(*mesh_, p, t);
            if (p_t == 0.0) continue;
            const auto b = strain_matrix(t);
            Eigen::Matrix<double, 6, 1> ue;
            gather(u.dofs, tri, ue);
            const Eigen::Vector3d stress = c_delta_ * (b * ue);
            const Eigen::Matrix<double, 6, 1> fe = -area * qd * p_t * (b.transpose() * stress);
            scatter_constrained(fe, tri, rhs);
        }
        return DisplacementField{solve(rhs)};
    }

    /// Nodal vector whose i-th entry is
    ///   sum_T area * q'(chi_T)/3 * (eps(a) : dC : eps(b))|_T  for i in T,
    /// the pairing of the stiffness-interpolation derivative with nodal hats.
    Vector interpolation_derivative_pairing(const Vector& chi, const DisplacementField& a,
                                            const DisplacementField& b) const {
        Vector out = Vector::Zero(mesh_->n_nodes());
        for (int t = 0; t < mesh_->n_triangles(); ++t) {
            const auto& tri = mesh_->triangle(t);
            const double area = mesh_->triangle_area(t);
            const double qd = StiffnessModel::interp_deriv(centroid_value(*mesh_, chi, t));
            if (qd == 0.0) continue;
            const auto bm = strain_matrix(t);
            Eigen::Matrix<double, 6, 1> ae, be;
            gather(a.dofs, tri, ae);
            gather(b.dofs, tri, be);
            const double dens = (bm * ae).dot(c_delta_ * (bm * be));
            const double w = area * qd * dens / 3.0;
            for (int v : tri) out[v] += w;
        }
        return out;
    }

    /// int_Omega C(chi) eps(a) : eps(b).
    double stiffness_inner(const Vector& chi, const DisplacementField& a,
                           const DisplacementField& b) const {
        double out = 0.0;
        for (int t = 0; t < mesh_->n_triangles(); ++t) {
            const auto& tri = mesh_->triangle(t);
            const double area = mesh_->triangle_area(t);
            const Eigen::Matrix3d c =
                c_soft_ + StiffnessModel::interp(centroid_value(*mesh_, chi, t)) * c_delta_;
            const auto bm = strain_matrix(t);
            Eigen::Matrix<double, 6, 1> ae, be;
            gather(a.dofs, tri, ae);
            gather(b.dofs, tri, be);
            out += area * (bm * ae).dot(c * (bm * be));
        }
        return out;
    }

private:
    static void gather(const Vector& dofs, const std::array<int, 3>& tri,
                       Eigen::Matrix<double, 6, 1>& e) {
        for (int a = 0; a < 3; ++a) {
            e[2 * a] = dofs[2 * tri[a]];
            e[2 * a + 1] = dofs[2 * tri[a] + 1];
        }
    }

    void scatter_constrained(const Eigen::Matrix<double, 6, 1>& fe, const std::array<int, 3>& tri,
                             Vector& rhs) const {
        for (int a = 0; a < 3; ++a)
            for (int d = 0; d < 2; ++d) {
                const int dof = 2 * tri[a] + d;
                if (!constrained_[static_cast<std::size_t>(dof)]) rhs[dof] += fe[2 * a + d];
            }
    }

    SparseMatrix assemble_impl(const Vector& chi, bool apply_bc) const {
        if (chi.size() != mesh_->n_nodes())
            throw Error("assemble_elasticity: chi size mismatch");
        std::vector<Triplet> trip;
        trip.reserve(static_cast<std::size_t>(mesh_->n_triangles()) * 36 +
                     (apply_bc ? constrained_.size() : 0));
        for (int t = 0; t < mesh_->n_triangles(); ++t) {
            const auto& tri = mesh_->triangle(t);
            const double area = mesh_->triangle_area(t);
            if (!(area > 0.0)) throw DegenerateMesh("assemble_elasticity: nonpositive triangle area");
            const Eigen::Matrix3d c =
                c_soft_ + StiffnessModel::interp(centroid_value(*mesh_, chi, t)) * c_delta_;
            const auto b = strain_matrix(t);
            const Eigen::Matrix<double, 6, 6> ke = area * b.transpose() * c * b;
            for (int a = 0; a < 3; ++a)
                for (int d = 0; d < 2; ++d) {
                    const int row = 2 * tri[a] + d;
                    if (apply_bc && constrained_[static_cast<std::size_t>(row)]) continue;
                    for (int a2 = 0; a2 < 3; ++a2)
                        for (int d2 = 0; d2 < 2; ++d2) {
                            const int col = 2 * tri[a2] + d2;
                            if (apply_bc && constrained_[static_cast<std::size_t>(col)]) continue;
                            trip.emplace_back(row, col, ke(2 * a + d, 2 * a2 + d2));
                        }
                }
        }
        if (apply_bc)
            for (std::size_t dof = 0; dof < constrained_.size(); ++dof)
                if (constrained_[dof])
                    trip.emplace_back(static_cast<int>(dof), static_cast<int>(dof), 1.0);
        SparseMatrix k(n_dofs(), n_dofs());
        k.setFromTriplets(trip.begin(), trip.end());
        return k;
    }

    const TriMesh* mesh_;
    StiffnessModel stiffness_;
    Eigen::Matrix3d c_soft_, c_delta_;
    std::vector<int> dirichlet_nodes_;
    std::vector<std::array<int, 2>> traction_edges_;
    Eigen::Vector2d traction_;
    std::vector<bool> constrained_;
    Vector load_;
    std::unique_ptr<Eigen::SimplicialLDLT<SparseMatrix>> solver_;
    bool pattern_analyzed_ = false;
    bool factorized_ = false;
};

} // namespace vmpt
