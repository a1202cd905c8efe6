#pragma once

#include "vmpt/trimesh.hpp"
#include "vmpt/types.hpp"

#include <vector>

namespace vmpt {

/// Scalar P1 stiffness matrix (grad u, grad v). Pure Neumann: the constant
/// vector spans its kernel.
inline SparseMatrix assemble_h1_form(const TriMesh& mesh) {
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(mesh.n_triangles()) * 9);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangle(t);
        const double area = mesh.triangle_area(t);
        if (!(area > 0.0)) throw DegenerateMesh("assemble_h1_form: nonpositive triangle area");
        const auto g = mesh.shape_gradients(t);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                trip.emplace_back(tri[a], tri[b], area * g.col(a).dot(g.col(b)));
    }
    SparseMatrix m(mesh.n_nodes(), mesh.n_nodes());
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

/// Scalar P1 mass matrix (u, v), exact integration.
inline SparseMatrix assemble_l2_form(const TriMesh& mesh) {
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(mesh.n_triangles()) * 9);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangle(t);
        const double area = mesh.triangle_area(t);
        if (!(area > 0.0)) throw DegenerateMesh("assemble_l2_form: nonpositive triangle area");
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                trip.emplace_back(tri[a], tri[b], area / 12.0 * (a == b ? 2.0 : 1.0));
    }
    SparseMatrix m(mesh.n_nodes(), mesh.n_nodes());
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

/// Weights w with w^T c = integral of the P1 interpolant of c.
inline Vector integration_weights(const TriMesh& mesh) {
    Vector w = Vector::Zero(mesh.n_nodes());
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangle(t);
        const double third = mesh.triangle_area(t) / 3.0;
        for (int a = 0; a < 3; ++a) w[tri[a]] += third;
    }
    return w;
}

/// Value of the P1 field c at the centroid of triangle t.
inline double centroid_value(const TriMesh& mesh, const Vector& c, int t) {
    const auto& tri = mesh.triangle(t);
    return (c[tri[0]] + c[tri[1]] + c[tri[2]]) / 3.0;
}

} // namespace vmpt
