#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "cdanse/elements.hpp"
#include "cdanse/mesh.hpp"

namespace cdanse {

using VectorFn = std::function<Vec2(Vec2)>;
using ScalarFn = std::function<double(Vec2)>;

/// Taylor-Hood (P2 velocity / P1 pressure) degree-of-freedom management.
///
/// Scalar P2 nodes are the mesh vertices followed by the edge midpoints.
/// Velocity DOFs are blocked by component: all x-DOFs first, then all y-DOFs,
/// so velocity DOF (c, n) = c * scalar_node_count + n.  Pressure DOFs are the
/// vertices.  Immutable after construction.
class TaylorHoodSpace {
public:
    explicit TaylorHoodSpace(const StructuredTriMesh& mesh) : mesh_(&mesh) {
        const int nv = mesh.vertex_count();
        const int ne = mesh.edge_count();
        scalar_nodes_ = nv + ne;
        boundary_scalar_nodes_.reserve(std::size_t(scalar_nodes_));
        for (int v = 0; v < nv; ++v)
            if (mesh.vertex_on_boundary(v)) boundary_scalar_nodes_.push_back(v);
        for (int e = 0; e < ne; ++e)
            if (mesh.edge_on_boundary(e)) boundary_scalar_nodes_.push_back(nv + e);
        boundary_velocity_dofs_.reserve(boundary_scalar_nodes_.size() * 2);
        for (int c = 0; c < 2; ++c)
            for (int n : boundary_scalar_nodes_) boundary_velocity_dofs_.push_back(c * scalar_nodes_ + n);
    }

    const StructuredTriMesh& mesh() const { return *mesh_; }

    int scalar_node_count() const { return scalar_nodes_; }
    int velocity_dof_count() const { return 2 * scalar_nodes_; }
    int pressure_dof_count() const { return mesh_->vertex_count(); }

    int velocity_dof(int component, int scalar_node) const {
        return component * scalar_nodes_ + scalar_node;
    }

    /// Scalar P2 nodes of triangle t: vertices then edge midpoints (0,1),(1,2),(2,0).
    std::array<int, 6> element_scalar_nodes(int t) const {
        const auto& tri = mesh_->triangles()[t];
        const auto& te = mesh_->triangle_edges()[t];
        const int nv = mesh_->vertex_count();
        return {tri[0], tri[1], tri[2], nv + te[0], nv + te[1], nv + te[2]};
    }

    Vec2 scalar_node_coord(int n) const {
        const int nv = mesh_->vertex_count();
        return n < nv ? mesh_->vertex(n) : mesh_->edge_midpoint(n - nv);
    }

    /// Velocity DOFs on the Dirichlet boundary, ascending.
    const std::vector<int>& boundary_velocity_dofs() const { return boundary_velocity_dofs_; }
    const std::vector<int>& boundary_scalar_nodes() const { return boundary_scalar_nodes_; }

private:
    const StructuredTriMesh* mesh_;
    int scalar_nodes_;
    std::vector<int> boundary_scalar_nodes_;
    std::vector<int> boundary_velocity_dofs_;
};

/// Coefficient vectors for one velocity-pressure pair on a Taylor-Hood space.
struct VelocityPressureField {
    const TaylorHoodSpace* space = nullptr;
    Eigen::VectorXd velocity;  // length velocity_dof_count, component-blocked
    Eigen::VectorXd pressure;  // length pressure_dof_count

    VelocityPressureField() = default;
    explicit VelocityPressureField(const TaylorHoodSpace& s)
        : space(&s),
          velocity(Eigen::VectorXd::Zero(s.velocity_dof_count())),
          pressure(Eigen::VectorXd::Zero(s.pressure_dof_count())) {}

    /// Velocity and pressure at a point, via O(1) point location.
    std::pair<Vec2, double> evaluate(Vec2 p) const {
        auto [t, bary] = space->mesh().locate(p);
        auto nodes = space->element_scalar_nodes(t);
        auto n2 = p2_values(bary);
        Vec2 u{0.0, 0.0};
        const int stride = space->scalar_node_count();
        for (int k = 0; k < 6; ++k) {
            u.x += n2[k] * velocity[nodes[k]];
            u.y += n2[k] * velocity[stride + nodes[k]];
        }
        auto n1 = p1_values(bary);
        const auto& tri = space->mesh().triangles()[t];
        double pr = 0.0;
        for (int k = 0; k < 3; ++k) pr += n1[k] * pressure[tri[k]];
        return {u, pr};
    }

    Vec2 velocity_at(Vec2 p) const { return evaluate(p).first; }
};

inline TaylorHoodSpace build_taylor_hood(const StructuredTriMesh& mesh) {
    return TaylorHoodSpace(mesh);
}

/// Nodal interpolant: velocity coefficients are values of fn at the P2 nodes,
/// pressure coefficients values of pfn at the vertices.
inline VelocityPressureField interpolate_function(const TaylorHoodSpace& space, const VectorFn& fn,
                                                  const ScalarFn& pfn = nullptr) {
    VelocityPressureField f(space);
    const int stride = space.scalar_node_count();
    for (int n = 0; n < stride; ++n) {
        Vec2 u = fn(space.scalar_node_coord(n));
        f.velocity[n] = u.x;
        f.velocity[stride + n] = u.y;
    }
    if (pfn)
        for (int v = 0; v < space.pressure_dof_count(); ++v)
            f.pressure[v] = pfn(space.mesh().vertex(v));
    return f;
}

inline std::pair<Vec2, double> evaluate_field(const VelocityPressureField& field, Vec2 p) {
    return field.evaluate(p);
}

/// Legacy ASCII VTK dump with vertex point data (velocity vectors, pressure
/// scalars).  P2 vertex coefficients are the vertex values directly.
inline void write_vtk(const VelocityPressureField& field, std::ostream& os,
                      const std::string& title = "cdanse field") {
    const auto& mesh = field.space->mesh();
    write_vtk(mesh, os, title);
    const int nv = mesh.vertex_count();
    const int stride = field.space->scalar_node_count();
    os << "POINT_DATA " << nv << "\n";
    os << "VECTORS velocity double\n";
    for (int v = 0; v < nv; ++v)
        os << field.velocity[v] << " " << field.velocity[stride + v] << " 0\n";
    os << "SCALARS pressure double 1\nLOOKUP_TABLE default\n";
    for (int v = 0; v < nv; ++v) os << field.pressure[v] << "\n";
}

}  // namespace cdanse
