#pragma once

#include <array>

#include "cdanse/mesh.hpp"

namespace cdanse {

/// Reference-element shape functions in barycentric coordinates
/// l = (1-xi-eta, xi, eta).  Local P2 node order: the three vertices followed
/// by the midpoints of edges (0,1), (1,2), (2,0); matches
/// StructuredTriMesh::triangle_edges.

inline std::array<double, 3> p1_values(const std::array<double, 3>& l) { return l; }

/// Reference gradients (d/dxi, d/deta) of the P1 basis; constant.
inline std::array<std::array<double, 2>, 3> p1_ref_grads() {
    return {{{-1.0, -1.0}, {1.0, 0.0}, {0.0, 1.0}}};
}

inline std::array<double, 6> p2_values(const std::array<double, 3>& l) {
    return {l[0] * (2.0 * l[0] - 1.0), l[1] * (2.0 * l[1] - 1.0), l[2] * (2.0 * l[2] - 1.0),
            4.0 * l[0] * l[1],         4.0 * l[1] * l[2],         4.0 * l[2] * l[0]};
}

inline std::array<std::array<double, 2>, 6> p2_ref_grads(const std::array<double, 3>& l) {
    const double g0 = 4.0 * l[0] - 1.0;
    const double g1 = 4.0 * l[1] - 1.0;
    const double g2 = 4.0 * l[2] - 1.0;
    return {{{-g0, -g0},
             {g1, 0.0},
             {0.0, g2},
             {4.0 * (l[0] - l[1]), -4.0 * l[1]},
             {4.0 * l[2], 4.0 * l[1]},
             {-4.0 * l[2], 4.0 * (l[0] - l[2])}}};
}

/// Affine element geometry: physical gradients are J^{-T} times reference
/// gradients, with J the (constant) edge-vector Jacobian of the triangle.
struct ElementGeometry {
    double inv_jt[2][2];  // J^{-T}
    double det_j;         // 2 * triangle area

    ElementGeometry(const StructuredTriMesh& mesh, int t) {
        const auto& tri = mesh.triangles()[t];
        Vec2 a = mesh.vertex(tri[0]), b = mesh.vertex(tri[1]), c = mesh.vertex(tri[2]);
        double j00 = b.x - a.x, j01 = c.x - a.x;
        double j10 = b.y - a.y, j11 = c.y - a.y;
        det_j = j00 * j11 - j01 * j10;
        // inv(J) = [j11 -j01; -j10 j00] / det; transpose it.
        inv_jt[0][0] = j11 / det_j;
        inv_jt[0][1] = -j10 / det_j;
        inv_jt[1][0] = -j01 / det_j;
        inv_jt[1][1] = j00 / det_j;
    }

    std::array<double, 2> physical_grad(const std::array<double, 2>& ref_grad) const {
        return {inv_jt[0][0] * ref_grad[0] + inv_jt[0][1] * ref_grad[1],
                inv_jt[1][0] * ref_grad[0] + inv_jt[1][1] * ref_grad[1]};
    }
};

}  // namespace cdanse
