#pragma once

// Triangle meshes: OBJ subset I/O, area-weighted vertex normals, and
// per-vertex curvature tensors fitted from edge-wise normal differences.

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "graphwalk/core.hpp"
#include "graphwalk/threads.hpp"

namespace graphwalk {

struct TriMesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<Index, 3>> faces;
};

// ASCII OBJ subset: only `v x y z` and `f a b c` lines (1-based indices).
inline TriMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mesh file: " + path);
    TriMesh mesh;
    std::string line;
    Index line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Eigen::Vector3d p;
            if (!(ls >> p.x() >> p.y() >> p.z()))
                throw IoError("malformed vertex at line " + std::to_string(line_no));
            mesh.vertices.push_back(p);
        } else if (tag == "f") {
            std::array<Index, 3> f{};
            if (!(ls >> f[0] >> f[1] >> f[2]))
                throw IoError("malformed face at line " + std::to_string(line_no));
            for (Index& v : f) {
                if (v < 1 || v > static_cast<Index>(mesh.vertices.size()))
                    throw IoError("face index out of range at line " + std::to_string(line_no));
                --v;  // to 0-based
            }
            mesh.faces.push_back(f);
        }
        // other tags (vn, vt, o, ...) are ignored
    }
    return mesh;
}

inline void save_obj(const std::string& path, const TriMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write mesh file: " + path);
    char buf[128];
    for (const auto& p : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", p.x(), p.y(), p.z());
        out << buf;
    }
    for (const auto& f : mesh.faces)
        out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
    if (!out) throw IoError("failed writing mesh file: " + path);
}

struct VertexNormals {
    std::vector<Eigen::Vector3d> n;
    Index degenerate_faces = 0;  // skipped with a notice, not an error
};

// Area-weighted average of incident face normals; cross(e1,e2)/2 carries
// both the face normal direction and the area weight.
inline VertexNormals vertex_normals(const TriMesh& mesh) {
    const Index nv = static_cast<Index>(mesh.vertices.size());
    VertexNormals out;
    out.n.assign(static_cast<size_t>(nv), Eigen::Vector3d::Zero());
    std::vector<char> in_face(static_cast<size_t>(nv), 0);
    for (const auto& f : mesh.faces) {
        const Eigen::Vector3d& a = mesh.vertices[static_cast<size_t>(f[0])];
        const Eigen::Vector3d e1 = mesh.vertices[static_cast<size_t>(f[1])] - a;
        const Eigen::Vector3d e2 = mesh.vertices[static_cast<size_t>(f[2])] - a;
        for (Index v : f) in_face[static_cast<size_t>(v)] = 1;
        const Eigen::Vector3d an = 0.5 * e1.cross(e2);
        if (an.norm() < 1e-14) {
            ++out.degenerate_faces;
            continue;
        }
        for (Index v : f) out.n[static_cast<size_t>(v)] += an;
    }
    for (Index v = 0; v < nv; ++v) {
        if (!in_face[static_cast<size_t>(v)])
            throw InvalidInputError("vertex " + std::to_string(v) + " belongs to no face");
        const Real len = out.n[static_cast<size_t>(v)].norm();
        if (len < 1e-14)
            throw InvalidInputError("vertex " + std::to_string(v) +
                                    " has a vanishing accumulated normal");
        out.n[static_cast<size_t>(v)] /= len;
    }
    return out;
}

struct VertexCurvature {
    Real k_min = 0.0, k_max = 0.0;
    Eigen::Vector3d dir_min = Eigen::Vector3d::Zero();
    Eigen::Vector3d dir_max = Eigen::Vector3d::Zero();
    Eigen::Vector3d normal = Eigen::Vector3d::Zero();
    Real c11 = 0.0, c12 = 0.0, c22 = 0.0;  // fitted tensor in the tangent basis
    bool typed = false;  // false when < 3 independent edge constraints

    Real k_gauss() const { return k_min * k_max; }
    Real k_mean() const { return 0.5 * (k_min + k_max); }
};

namespace detail {
// Deterministic orthonormal tangent basis for a unit normal.
inline void tangent_basis(const Eigen::Vector3d& n, Eigen::Vector3d& t1, Eigen::Vector3d& t2) {
    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (std::abs(n[a]) < std::abs(n[axis])) axis = a;
    Eigen::Vector3d ref = Eigen::Vector3d::Zero();
    ref[axis] = 1.0;
    t1 = n.cross(ref).normalized();
    t2 = n.cross(t1);
}
} // namespace detail

// Symmetric 2x2 curvature tensor per vertex, least-squares fitted to the
// edge-wise estimates k_edge = (n_v - n_u) . (x_v - x_u) / |x_v - x_u|^2
// (convex-positive for outward-oriented surfaces). Vertices with fewer than
// 3 independent constraints stay untyped.
inline std::vector<VertexCurvature> curvature_tensor(const TriMesh& mesh,
                                                     const VertexNormals& normals) {
    const Index nv = static_cast<Index>(mesh.vertices.size());
    std::vector<std::set<Index>> adj(static_cast<size_t>(nv));
    for (const auto& f : mesh.faces)
        for (int i = 0; i < 3; ++i) {
            adj[static_cast<size_t>(f[i])].insert(f[(i + 1) % 3]);
            adj[static_cast<size_t>(f[i])].insert(f[(i + 2) % 3]);
        }

    std::vector<VertexCurvature> out(static_cast<size_t>(nv));
    parallel_for(nv, [&](Index u) {
        VertexCurvature& vc = out[static_cast<size_t>(u)];
        const Eigen::Vector3d& nu = normals.n[static_cast<size_t>(u)];
        vc.normal = nu;
        Eigen::Vector3d t1, t2;
        detail::tangent_basis(nu, t1, t2);

        std::vector<Eigen::Vector3d> rows;  // (a^2, 2ab, b^2)
        std::vector<Real> rhs;
        for (Index v : adj[static_cast<size_t>(u)]) {
            const Eigen::Vector3d e = mesh.vertices[static_cast<size_t>(v)] -
                                      mesh.vertices[static_cast<size_t>(u)];
            const Real elen2 = e.squaredNorm();
            if (elen2 < 1e-20) continue;
            const Real k_edge = (normals.n[static_cast<size_t>(v)] - nu).dot(e) / elen2;
            Eigen::Vector2d t(e.dot(t1), e.dot(t2));
            const Real tlen = t.norm();
            if (tlen < 1e-12) continue;  // edge parallel to the normal
            t /= tlen;
            rows.emplace_back(t.x() * t.x(), 2.0 * t.x() * t.y(), t.y() * t.y());
            rhs.push_back(k_edge);
        }
        if (rows.size() < 3) return;  // untyped

        Eigen::MatrixXd A(static_cast<Index>(rows.size()), 3);
        Eigen::VectorXd b(static_cast<Index>(rows.size()));
        for (size_t i = 0; i < rows.size(); ++i) {
            A.row(static_cast<Index>(i)) = rows[i].transpose();
            b(static_cast<Index>(i)) = rhs[i];
        }
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
        if (svd.rank() < 3) return;  // dependent constraints: untyped
        const Eigen::Vector3d c = svd.solve(b);

        Eigen::Matrix2d C;
        C << c(0), c(1), c(1), c(2);
        vc.c11 = c(0);
        vc.c12 = c(1);
        vc.c22 = c(2);
        const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(C);
        vc.k_min = es.eigenvalues()(0);
        vc.k_max = es.eigenvalues()(1);
        const Eigen::Vector2d vmin = es.eigenvectors().col(0);
        const Eigen::Vector2d vmax = es.eigenvectors().col(1);
        vc.dir_min = (vmin.x() * t1 + vmin.y() * t2).normalized();
        vc.dir_max = (vmax.x() * t1 + vmax.y() * t2).normalized();
        vc.typed = true;
    });
    return out;
}

// ---- synthetic mesh generators (grid coordinates) ----

inline TriMesh make_icosphere(Real radius, int subdivisions, const Eigen::Vector3d& center) {
    const Real phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Eigen::Vector3d> v = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
    std::vector<std::array<Index, 3>> f = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (auto& p : v) p.normalize();

    for (int s = 0; s < subdivisions; ++s) {
        std::unordered_map<uint64_t, Index> midpoint;
        auto mid = [&](Index a, Index b) -> Index {
            const uint64_t key = (static_cast<uint64_t>(std::min(a, b)) << 32) |
                                 static_cast<uint64_t>(std::max(a, b));
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const Index id = static_cast<Index>(v.size());
            v.push_back((0.5 * (v[static_cast<size_t>(a)] + v[static_cast<size_t>(b)]))
                            .normalized());
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<std::array<Index, 3>> nf;
        nf.reserve(f.size() * 4);
        for (const auto& t : f) {
            const Index ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
            nf.push_back({t[0], ab, ca});
            nf.push_back({t[1], bc, ab});
            nf.push_back({t[2], ca, bc});
            nf.push_back({ab, bc, ca});
        }
        f = std::move(nf);
    }

    TriMesh mesh;
    mesh.vertices.reserve(v.size());
    for (const auto& p : v) mesh.vertices.push_back(center + radius * p);
    mesh.faces = std::move(f);
    return mesh;
}

// Open tube along the z axis (no caps): analytic curvatures (0, 1/radius)
// with the maximum-curvature direction circumferential.
inline TriMesh make_cylinder(Real radius, Real height, int n_seg, int n_rings,
                             const Eigen::Vector3d& center) {
    if (n_seg < 3 || n_rings < 2) throw InvalidInputError("cylinder needs n_seg >= 3, n_rings >= 2");
    TriMesh mesh;
    for (int r = 0; r < n_rings; ++r) {
        const Real z = height * (static_cast<Real>(r) / (n_rings - 1) - 0.5);
        for (int s = 0; s < n_seg; ++s) {
            const Real ang = 2.0 * std::numbers::pi * s / n_seg;
            mesh.vertices.push_back(center + Eigen::Vector3d(radius * std::cos(ang),
                                                             radius * std::sin(ang), z));
        }
    }
    auto id = [&](int r, int s) { return static_cast<Index>(r * n_seg + (s % n_seg)); };
    for (int r = 0; r + 1 < n_rings; ++r)
        for (int s = 0; s < n_seg; ++s) {
            // outward orientation (counter-clockwise seen from outside)
            mesh.faces.push_back({id(r, s), id(r, s + 1), id(r + 1, s)});
            mesh.faces.push_back({id(r, s + 1), id(r + 1, s + 1), id(r + 1, s)});
        }
    return mesh;
}

// Disjoint union used by the two-population curvature tests: a large sphere
// plus a thin tube placed beside it.
inline TriMesh make_sphere_tube(Real r_sphere, Real r_tube, Real tube_len,
                                const Eigen::Vector3d& sphere_center,
                                const Eigen::Vector3d& tube_center) {
    TriMesh mesh = make_icosphere(r_sphere, 3, sphere_center);
    const TriMesh tube = make_cylinder(r_tube, tube_len, 24,
                                       std::max(8, static_cast<int>(tube_len)), tube_center);
    const Index base = static_cast<Index>(mesh.vertices.size());
    mesh.vertices.insert(mesh.vertices.end(), tube.vertices.begin(), tube.vertices.end());
    for (const auto& f : tube.faces)
        mesh.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
    return mesh;
}

} // namespace graphwalk
