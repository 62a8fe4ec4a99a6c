#pragma once

#include <Eigen/Sparse>
#include <functional>
#include <stdexcept>
#include <vector>

#include "cdanse/elements.hpp"
#include "cdanse/quadrature.hpp"
#include "cdanse/spaces.hpp"

namespace cdanse {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

namespace detail {

/// Per-quadrature-point data reused across the element loop: P2/P1 values at
/// the rule nodes (element-independent) and physical gradients (element-wise).
struct RuleCache {
    QuadratureRule rule;
    std::vector<std::array<double, 6>> p2;
    std::vector<std::array<std::array<double, 2>, 6>> p2_ref_grad;
    std::vector<std::array<double, 3>> p1;

    explicit RuleCache(int degree) : rule(triangle_rule(degree)) {
        for (const auto& n : rule.nodes) {
            p2.push_back(p2_values(n.bary));
            p2_ref_grad.push_back(p2_ref_grads(n.bary));
            p1.push_back(p1_values(n.bary));
        }
    }
};

}  // namespace detail

/// Stiffness (nu grad u, grad v) over the vector P2 space; block-diagonal by
/// component.  Symmetric positive semidefinite; definite after boundary-DOF
/// elimination.
inline SparseMatrix assemble_stiffness(const TaylorHoodSpace& space, double nu,
                                       int quad_degree = 4) {
    if (!(nu > 0.0)) throw std::invalid_argument("assemble_stiffness: viscosity must be positive");
    const auto& mesh = space.mesh();
    detail::RuleCache cache(quad_degree);
    const int stride = space.scalar_node_count();
    std::vector<Triplet> trips;
    trips.reserve(std::size_t(mesh.triangle_count()) * 72);
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        ElementGeometry geom(mesh, t);
        auto nodes = space.element_scalar_nodes(t);
        double local[6][6] = {};
        for (std::size_t q = 0; q < cache.rule.nodes.size(); ++q) {
            std::array<std::array<double, 2>, 6> grad;
            for (int k = 0; k < 6; ++k) grad[k] = geom.physical_grad(cache.p2_ref_grad[q][k]);
            const double w = cache.rule.nodes[q].weight * geom.det_j;
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j)
                    local[i][j] += w * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
        }
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) {
                const double v = nu * local[i][j];
                trips.emplace_back(nodes[i], nodes[j], v);
                trips.emplace_back(stride + nodes[i], stride + nodes[j], v);
            }
    }
    SparseMatrix A(space.velocity_dof_count(), space.velocity_dof_count());
    A.setFromTriplets(trips.begin(), trips.end());
    return A;
}

/// Divergence pairing B with B[q-row, v-col] = (q, div v); one row per
/// pressure DOF.
inline SparseMatrix assemble_divergence(const TaylorHoodSpace& space, int quad_degree = 4) {
    const auto& mesh = space.mesh();
    detail::RuleCache cache(quad_degree);
    const int stride = space.scalar_node_count();
    std::vector<Triplet> trips;
    trips.reserve(std::size_t(mesh.triangle_count()) * 36);
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        ElementGeometry geom(mesh, t);
        auto nodes = space.element_scalar_nodes(t);
        const auto& tri = mesh.triangles()[t];
        double local[3][6][2] = {};
        for (std::size_t q = 0; q < cache.rule.nodes.size(); ++q) {
            const double w = cache.rule.nodes[q].weight * geom.det_j;
            for (int j = 0; j < 6; ++j) {
                auto g = geom.physical_grad(cache.p2_ref_grad[q][j]);
                for (int i = 0; i < 3; ++i) {
                    local[i][j][0] += w * cache.p1[q][i] * g[0];
                    local[i][j][1] += w * cache.p1[q][i] * g[1];
                }
            }
        }
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 6; ++j) {
                trips.emplace_back(tri[i], nodes[j], local[i][j][0]);
                trips.emplace_back(tri[i], stride + nodes[j], local[i][j][1]);
            }
    }
    SparseMatrix B(space.pressure_dof_count(), space.velocity_dof_count());
    B.setFromTriplets(trips.begin(), trips.end());
    return B;
}

/// Vector P2 mass matrix.
inline SparseMatrix assemble_mass(const TaylorHoodSpace& space, int quad_degree = 4) {
    const auto& mesh = space.mesh();
    detail::RuleCache cache(quad_degree);
    const int stride = space.scalar_node_count();
    std::vector<Triplet> trips;
    trips.reserve(std::size_t(mesh.triangle_count()) * 72);
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        ElementGeometry geom(mesh, t);
        auto nodes = space.element_scalar_nodes(t);
        double local[6][6] = {};
        for (std::size_t q = 0; q < cache.rule.nodes.size(); ++q) {
            const double w = cache.rule.nodes[q].weight * geom.det_j;
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) local[i][j] += w * cache.p2[q][i] * cache.p2[q][j];
        }
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) {
                trips.emplace_back(nodes[i], nodes[j], local[i][j]);
                trips.emplace_back(stride + nodes[i], stride + nodes[j], local[i][j]);
            }
    }
    SparseMatrix M(space.velocity_dof_count(), space.velocity_dof_count());
    M.setFromTriplets(trips.begin(), trips.end());
    return M;
}

/// Scalar P1 mass matrix on a mesh (pressure space, or a coarse observation
/// space).
inline SparseMatrix assemble_p1_mass(const StructuredTriMesh& mesh, int quad_degree = 4) {
    detail::RuleCache cache(quad_degree);
    std::vector<Triplet> trips;
    trips.reserve(std::size_t(mesh.triangle_count()) * 9);
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        ElementGeometry geom(mesh, t);
        const auto& tri = mesh.triangles()[t];
        for (std::size_t q = 0; q < cache.rule.nodes.size(); ++q) {
            const double w = cache.rule.nodes[q].weight * geom.det_j;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    trips.emplace_back(tri[i], tri[j], w * cache.p1[q][i] * cache.p1[q][j]);
        }
    }
    SparseMatrix M(mesh.vertex_count(), mesh.vertex_count());
    M.setFromTriplets(trips.begin(), trips.end());
    return M;
}

/// Two-component block-diagonal copy of a scalar matrix (component-blocked
/// DOF layout).
inline SparseMatrix vector_blocks(const SparseMatrix& scalar) {
    const int n = int(scalar.rows());
    std::vector<Triplet> trips;
    trips.reserve(std::size_t(scalar.nonZeros()) * 2);
    for (int k = 0; k < scalar.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(scalar, k); it; ++it) {
            trips.emplace_back(int(it.row()), int(it.col()), it.value());
            trips.emplace_back(n + int(it.row()), n + int(it.col()), it.value());
        }
    SparseMatrix M(2 * n, 2 * n);
    M.setFromTriplets(trips.begin(), trips.end());
    return M;
}

/// Linearized convection C(w) with (C(w) u) . v = b(w, u, v) = ((w.grad) u, v);
/// componentwise coupling, so block-diagonal like the stiffness.  With skew
/// set, returns the skew-symmetrized form 0.5*[b(w,u,v) - b(w,v,u)], i.e.
/// 0.5*(C - C^T), which satisfies v^T C v = 0 exactly.
inline SparseMatrix assemble_convection(const TaylorHoodSpace& space,
                                        const VelocityPressureField& w, bool skew = true,
                                        int quad_degree = 4) {
    if (w.space != &space)
        throw std::invalid_argument("assemble_convection: field lives on a different space");
    const auto& mesh = space.mesh();
    detail::RuleCache cache(quad_degree);
    const int stride = space.scalar_node_count();
    std::vector<Triplet> trips;
    trips.reserve(std::size_t(mesh.triangle_count()) * 72);
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        ElementGeometry geom(mesh, t);
        auto nodes = space.element_scalar_nodes(t);
        double wx[6], wy[6];
        for (int k = 0; k < 6; ++k) {
            wx[k] = w.velocity[nodes[k]];
            wy[k] = w.velocity[stride + nodes[k]];
        }
        double local[6][6] = {};
        for (std::size_t q = 0; q < cache.rule.nodes.size(); ++q) {
            const double wq = cache.rule.nodes[q].weight * geom.det_j;
            double ax = 0.0, ay = 0.0;
            for (int k = 0; k < 6; ++k) {
                ax += cache.p2[q][k] * wx[k];
                ay += cache.p2[q][k] * wy[k];
            }
            for (int j = 0; j < 6; ++j) {
                auto g = geom.physical_grad(cache.p2_ref_grad[q][j]);
                const double conv = ax * g[0] + ay * g[1];
                for (int i = 0; i < 6; ++i) local[i][j] += wq * cache.p2[q][i] * conv;
            }
        }
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) {
                trips.emplace_back(nodes[i], nodes[j], local[i][j]);
                trips.emplace_back(stride + nodes[i], stride + nodes[j], local[i][j]);
            }
    }
    SparseMatrix C(space.velocity_dof_count(), space.velocity_dof_count());
    C.setFromTriplets(trips.begin(), trips.end());
    if (skew) {
        SparseMatrix Ct = C.transpose();
        C = 0.5 * (C - Ct);
    }
    return C;
}

/// Load vector L with L . v = (f, v).
inline Eigen::VectorXd assemble_rhs(const TaylorHoodSpace& space, const VectorFn& f,
                                    int quad_degree = 4) {
    const auto& mesh = space.mesh();
    detail::RuleCache cache(quad_degree);
    const int stride = space.scalar_node_count();
    Eigen::VectorXd L = Eigen::VectorXd::Zero(space.velocity_dof_count());
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        ElementGeometry geom(mesh, t);
        auto nodes = space.element_scalar_nodes(t);
        for (std::size_t q = 0; q < cache.rule.nodes.size(); ++q) {
            Vec2 x = mesh.barycentric_to_point(t, cache.rule.nodes[q].bary);
            Vec2 fv = f(x);
            const double w = cache.rule.nodes[q].weight * geom.det_j;
            for (int i = 0; i < 6; ++i) {
                L[nodes[i]] += w * cache.p2[q][i] * fv.x;
                L[stride + nodes[i]] += w * cache.p2[q][i] * fv.y;
            }
        }
    }
    return L;
}

/// Pressure-integral vector c with c[q] = int q dx; pairs the zero-mean
/// constraint and the compatibility column of the saddle system.
inline Eigen::VectorXd assemble_pressure_integral(const TaylorHoodSpace& space,
                                                  int quad_degree = 4) {
    const auto& mesh = space.mesh();
    detail::RuleCache cache(quad_degree);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(space.pressure_dof_count());
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        ElementGeometry geom(mesh, t);
        const auto& tri = mesh.triangles()[t];
        for (std::size_t q = 0; q < cache.rule.nodes.size(); ++q) {
            const double w = cache.rule.nodes[q].weight * geom.det_j;
            for (int i = 0; i < 3; ++i) c[tri[i]] += w * cache.p1[q][i];
        }
    }
    return c;
}

/// Dirichlet boundary data as parallel (dof, value) arrays, ascending by dof.
struct DirichletData {
    std::vector<int> dofs;
    Eigen::VectorXd values;
};

/// Boundary velocity values sampled from an analytic field at the P2 boundary
/// nodes (vertices and boundary-edge midpoints).
inline DirichletData velocity_dirichlet(const TaylorHoodSpace& space, const VectorFn& g) {
    DirichletData bc;
    bc.dofs = space.boundary_velocity_dofs();
    bc.values.resize(Eigen::Index(bc.dofs.size()));
    const int stride = space.scalar_node_count();
    for (std::size_t k = 0; k < bc.dofs.size(); ++k) {
        const int dof = bc.dofs[k];
        const int node = dof % stride;
        const int comp = dof / stride;
        Vec2 u = g(space.scalar_node_coord(node));
        bc.values[Eigen::Index(k)] = comp == 0 ? u.x : u.y;
    }
    return bc;
}

inline DirichletData homogeneous_dirichlet(const TaylorHoodSpace& space) {
    return velocity_dirichlet(space, [](Vec2) { return Vec2{0.0, 0.0}; });
}

}  // namespace cdanse
