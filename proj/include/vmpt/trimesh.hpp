#pragma once

#include "vmpt/types.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace vmpt {

/// Structured triangulation of an axis-aligned rectangle [0,lx] x [0,ly].
/// Every grid cell is split into two right triangles with counterclockwise
/// vertex order. Nodes are numbered lexicographically, x fastest.
class TriMesh {
public:
    TriMesh(int nx, int ny, double lx, double ly)
        : nx_(nx), ny_(ny), lx_(lx), ly_(ly) {
        if (nx < 1 || ny < 1 || !(lx > 0.0) || !(ly > 0.0))
            throw DegenerateMesh("TriMesh: need nx,ny >= 1 and positive edge lengths");
        const int nvx = nx + 1, nvy = ny + 1;
        coords_.resize(static_cast<std::size_t>(nvx) * nvy);
        for (int j = 0; j < nvy; ++j)
            for (int i = 0; i < nvx; ++i)
                coords_[static_cast<std::size_t>(j) * nvx + i] = {lx * i / nx, ly * j / ny};
        tris_.reserve(static_cast<std::size_t>(nx) * ny * 2);
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                const int v00 = node_index(i, j);
                const int v10 = node_index(i + 1, j);
                const int v01 = node_index(i, j + 1);
                const int v11 = node_index(i + 1, j + 1);
                tris_.push_back({v00, v10, v11});
                tris_.push_back({v00, v11, v01});
            }
        }
    }

    /// Uniform mesh with square cells of edge h; lx and ly must be integer
    /// multiples of h.
    static TriMesh rectangle_with_h(double h, double lx, double ly) {
        if (!(h > 0.0)) throw DegenerateMesh("TriMesh: nonpositive h");
        const double fx = lx / h, fy = ly / h;
        const int nx = static_cast<int>(std::lround(fx));
        const int ny = static_cast<int>(std::lround(fy));
        if (nx < 1 || ny < 1 || std::abs(fx - nx) > 1e-9 * fx || std::abs(fy - ny) > 1e-9 * fy)
            throw DegenerateMesh("TriMesh: domain is not an integer multiple of h");
        return TriMesh(nx, ny, lx, ly);
    }

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    double lx() const { return lx_; }
    double ly() const { return ly_; }
    double hx() const { return lx_ / nx_; }
    double hy() const { return ly_ / ny_; }
    double area() const { return lx_ * ly_; }

    int n_nodes() const { return (nx_ + 1) * (ny_ + 1); }
    int n_triangles() const { return static_cast<int>(tris_.size()); }

    int node_index(int i, int j) const { return j * (nx_ + 1) + i; }
    const std::array<double, 2>& coord(int v) const { return coords_[static_cast<std::size_t>(v)]; }
    double x(int v) const { return coords_[static_cast<std::size_t>(v)][0]; }
    double y(int v) const { return coords_[static_cast<std::size_t>(v)][1]; }
    const std::array<int, 3>& triangle(int t) const { return tris_[static_cast<std::size_t>(t)]; }

    double triangle_area(int t) const {
        const auto& tri = tris_[static_cast<std::size_t>(t)];
        const double ax = x(tri[0]), ay = y(tri[0]);
        const double bx = x(tri[1]), by = y(tri[1]);
        const double cx = x(tri[2]), cy = y(tri[2]);
        return 0.5 * ((bx - ax) * (cy - ay) - (cx - ax) * (by - ay));
    }

    /// Gradients of the three P1 hat functions on triangle t, one column per
    /// local vertex; constant on the triangle.
    Eigen::Matrix<double, 2, 3> shape_gradients(int t) const {
        const auto& tri = tris_[static_cast<std::size_t>(t)];
        const double ax = x(tri[0]), ay = y(tri[0]);
        const double bx = x(tri[1]), by = y(tri[1]);
        const double cx = x(tri[2]), cy = y(tri[2]);
        const double det = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay);
        Eigen::Matrix<double, 2, 3> g;
        g(0, 0) = (by - cy) / det;
        g(1, 0) = (cx - bx) / det;
        g(0, 1) = (cy - ay) / det;
        g(1, 1) = (ax - cx) / det;
        g(0, 2) = (ay - by) / det;
        g(1, 2) = (bx - ax) / det;
        return g;
    }

    /// Nodes on the boundary edge x = 0.
    std::vector<int> left_edge_nodes() const {
        std::vector<int> out;
        for (int j = 0; j <= ny_; ++j) out.push_back(node_index(0, j));
        return out;
    }

    /// Vertical boundary edges on x = lx whose endpoints satisfy
    /// y in [y0, y1] (inclusive, small slack for roundoff).
    std::vector<std::array<int, 2>> right_edge_segments(double y0, double y1) const {
        std::vector<std::array<int, 2>> out;
        const double tol = 1e-12 * (1.0 + ly_);
        for (int j = 0; j < ny_; ++j) {
            const int a = node_index(nx_, j);
            const int b = node_index(nx_, j + 1);
            if (y(a) >= y0 - tol && y(b) <= y1 + tol) out.push_back({a, b});
        }
        return out;
    }

private:
    int nx_, ny_;
    double lx_, ly_;
    std::vector<std::array<double, 2>> coords_;
    std::vector<std::array<int, 3>> tris_;
};

} // namespace vmpt
