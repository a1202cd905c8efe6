#pragma once

#include "vmpt/elasticity.hpp"
#include "vmpt/trimesh.hpp"
#include "vmpt/types.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace vmpt {

namespace detail {
inline std::string fmt_field(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}
} // namespace detail

/// Legacy-VTK unstructured grid with the design fraction as point scalars
/// and the displacement as point vectors.
inline void write_vtk(std::ostream& os, const TriMesh& mesh, const Vector& phi,
                      const DisplacementField& u) {
    os << "# vtk DataFile Version 3.0\n";
    os << "design and displacement fields\n";
    os << "ASCII\n";
    os << "DATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << mesh.n_nodes() << " double\n";
    for (int v = 0; v < mesh.n_nodes(); ++v)
        os << detail::fmt_field(mesh.x(v)) << ' ' << detail::fmt_field(mesh.y(v)) << " 0\n";
    os << "CELLS " << mesh.n_triangles() << ' ' << 4 * mesh.n_triangles() << "\n";
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto& tri = mesh.triangle(t);
        os << "3 " << tri[0] << ' ' << tri[1] << ' ' << tri[2] << "\n";
    }
    os << "CELL_TYPES " << mesh.n_triangles() << "\n";
    for (int t = 0; t < mesh.n_triangles(); ++t) os << "5\n";
    os << "POINT_DATA " << mesh.n_nodes() << "\n";
    os << "SCALARS phi double 1\n";
    os << "LOOKUP_TABLE default\n";
    for (int v = 0; v < mesh.n_nodes(); ++v) os << detail::fmt_field(phi[v]) << "\n";
    os << "VECTORS displacement double\n";
    for (int v = 0; v < mesh.n_nodes(); ++v)
        os << detail::fmt_field(u.ux(v)) << ' ' << detail::fmt_field(u.uy(v)) << " 0\n";
}

/// Plain nodal dump, one row per vertex.
inline void write_field_csv(std::ostream& os, const TriMesh& mesh, const Vector& phi,
                            const DisplacementField& u) {
    os << "x,y,phi,ux,uy\n";
    for (int v = 0; v < mesh.n_nodes(); ++v)
        os << detail::fmt_field(mesh.x(v)) << ',' << detail::fmt_field(mesh.y(v)) << ','
           << detail::fmt_field(phi[v]) << ',' << detail::fmt_field(u.ux(v)) << ','
           << detail::fmt_field(u.uy(v)) << "\n";
}

struct NodalDump {
    Vector x, y, phi, ux, uy;
};

inline NodalDump read_field_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("x,y,phi", 0) != 0)
        throw ConfigError("field csv: missing 'x,y,phi,ux,uy' header");
    std::vector<std::array<double, 5>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::array<double, 5> r{};
        const char* p = line.c_str();
        char* end = nullptr;
        for (int f = 0; f < 5; ++f) {
            r[static_cast<std::size_t>(f)] = std::strtod(p, &end);
            if (end == p || (f < 4 && *end != ','))
                throw ConfigError("field csv: malformed row '" + line + "'");
            p = end + 1;
        }
        rows.push_back(r);
    }
    NodalDump d;
    const Index n = static_cast<Index>(rows.size());
    d.x.resize(n);
    d.y.resize(n);
    d.phi.resize(n);
    d.ux.resize(n);
    d.uy.resize(n);
    for (Index i = 0; i < n; ++i) {
        d.x[i] = rows[static_cast<std::size_t>(i)][0];
        d.y[i] = rows[static_cast<std::size_t>(i)][1];
        d.phi[i] = rows[static_cast<std::size_t>(i)][2];
        d.ux[i] = rows[static_cast<std::size_t>(i)][3];
        d.uy[i] = rows[static_cast<std::size_t>(i)][4];
    }
    return d;
}

} // namespace vmpt
