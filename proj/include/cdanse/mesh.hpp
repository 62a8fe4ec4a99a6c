#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace cdanse {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

/// Axis-aligned rectangle (x0,y0)-(x1,y1).
struct Rect {
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }

    bool contains(Vec2 p, double tol) const {
        return p.x >= x0 - tol && p.x <= x1 + tol && p.y >= y0 - tol && p.y <= y1 + tol;
    }
    bool same_as(const Rect& o, double tol) const {
        return std::abs(x0 - o.x0) <= tol && std::abs(y0 - o.y0) <= tol &&
               std::abs(x1 - o.x1) <= tol && std::abs(y1 - o.y1) <= tol;
    }
};

inline Rect unit_square() { return Rect{0.0, 0.0, 1.0, 1.0}; }

class OutOfDomainError : public std::runtime_error {
public:
    explicit OutOfDomainError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
struct PairHash {
    std::size_t operator()(const std::array<int, 2>& e) const {
        return std::hash<std::int64_t>()((std::int64_t(e[0]) << 32) ^ std::uint32_t(e[1]));
    }
};
}  // namespace detail

/// Uniform triangulation of a rectangle: nx-by-ny cells, each split along the
/// lower-left to upper-right diagonal into two counterclockwise triangles.
/// Vertices are numbered row-major, triangles cell-by-cell, edges in order of
/// first appearance while walking triangles.  Immutable after construction.
class StructuredTriMesh {
public:
    static constexpr double kBoundaryTol = 1e-12;

    StructuredTriMesh(int nx, int ny, Rect domain) : nx_(nx), ny_(ny), domain_(domain) {
        if (nx < 1 || ny < 1)
            throw std::invalid_argument("StructuredTriMesh: cell counts must be positive");
        if (!(domain.x1 > domain.x0) || !(domain.y1 > domain.y0))
            throw std::invalid_argument("StructuredTriMesh: degenerate domain rectangle");
        dx_ = domain.width() / nx;
        dy_ = domain.height() / ny;
        build_vertices();
        build_triangles();
        build_edges();
        flag_boundary();
    }

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    const Rect& domain() const { return domain_; }
    double dx() const { return dx_; }
    double dy() const { return dy_; }

    int vertex_count() const { return int(vertices_.size()); }
    int triangle_count() const { return int(triangles_.size()); }
    int edge_count() const { return int(edges_.size()); }

    const std::vector<Vec2>& vertices() const { return vertices_; }
    const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
    /// Unique edges as sorted vertex-index pairs.
    const std::vector<std::array<int, 2>>& edges() const { return edges_; }
    /// Edge indices of triangle t for local edges (0,1), (1,2), (2,0).
    const std::vector<std::array<int, 3>>& triangle_edges() const { return triangle_edges_; }

    bool vertex_on_boundary(int v) const { return boundary_vertex_[v] != 0; }
    bool edge_on_boundary(int e) const { return boundary_edge_[e] != 0; }
    const std::vector<std::uint8_t>& boundary_vertex_flags() const { return boundary_vertex_; }
    const std::vector<std::uint8_t>& boundary_edge_flags() const { return boundary_edge_; }

    Vec2 vertex(int v) const { return vertices_[v]; }
    Vec2 edge_midpoint(int e) const {
        const auto& ed = edges_[e];
        return 0.5 * (vertices_[ed[0]] + vertices_[ed[1]]);
    }

    double signed_area(int t) const {
        const auto& tri = triangles_[t];
        Vec2 a = vertices_[tri[0]], b = vertices_[tri[1]], c = vertices_[tri[2]];
        return 0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
    }

    /// Largest triangle diameter (longest edge over all cells).  This is the
    /// mesh size recorded as H for coarse observation meshes.
    double mesh_size() const { return std::hypot(dx_, dy_); }

    /// Locate the triangle containing p and its barycentric coordinates there.
    /// O(1) via the structured layout.  Throws OutOfDomainError when p is
    /// outside the domain closure (absolute tolerance 1e-12).
    std::pair<int, std::array<double, 3>> locate(Vec2 p) const {
        if (!domain_.contains(p, kBoundaryTol))
            throw OutOfDomainError("locate: point (" + std::to_string(p.x) + ", " +
                                   std::to_string(p.y) + ") outside domain");
        double fx = (p.x - domain_.x0) / dx_;
        double fy = (p.y - domain_.y0) / dy_;
        int i = std::min(std::max(int(std::floor(fx)), 0), nx_ - 1);
        int j = std::min(std::max(int(std::floor(fy)), 0), ny_ - 1);
        double xi = fx - i, eta = fy - j;
        // Cell diagonal runs corner (0,0) -> (1,1); below it is the first triangle.
        int t = 2 * (j * nx_ + i) + (eta > xi ? 1 : 0);
        auto bary = barycentric(t, p);
        for (double& l : bary) {
            if (l < 0.0 && l > -64.0 * kBoundaryTol) l = 0.0;
        }
        return {t, bary};
    }

    /// Barycentric coordinates of p with respect to triangle t.
    std::array<double, 3> barycentric(int t, Vec2 p) const {
        const auto& tri = triangles_[t];
        Vec2 a = vertices_[tri[0]], b = vertices_[tri[1]], c = vertices_[tri[2]];
        double det = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        double l2 = ((p.x - a.x) * (c.y - a.y) - (p.y - a.y) * (c.x - a.x)) / det;
        double l3 = ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)) / det;
        return {1.0 - l2 - l3, l2, l3};
    }

    Vec2 barycentric_to_point(int t, const std::array<double, 3>& l) const {
        const auto& tri = triangles_[t];
        return l[0] * vertices_[tri[0]] + l[1] * vertices_[tri[1]] + l[2] * vertices_[tri[2]];
    }

private:
    void build_vertices() {
        vertices_.reserve(std::size_t(nx_ + 1) * (ny_ + 1));
        for (int j = 0; j <= ny_; ++j)
            for (int i = 0; i <= nx_; ++i)
                vertices_.push_back({domain_.x0 + i * dx_, domain_.y0 + j * dy_});
    }

    int vid(int i, int j) const { return j * (nx_ + 1) + i; }

    void build_triangles() {
        triangles_.reserve(std::size_t(2) * nx_ * ny_);
        for (int j = 0; j < ny_; ++j) {
            for (int i = 0; i < nx_; ++i) {
                int a = vid(i, j), b = vid(i + 1, j), c = vid(i + 1, j + 1), d = vid(i, j + 1);
                triangles_.push_back({a, b, c});
                triangles_.push_back({a, c, d});
            }
        }
    }

    void build_edges() {
        std::unordered_map<std::array<int, 2>, int, detail::PairHash> index;
        index.reserve(triangles_.size() * 2);
        triangle_edges_.resize(triangles_.size());
        for (std::size_t t = 0; t < triangles_.size(); ++t) {
            const auto& tri = triangles_[t];
            for (int k = 0; k < 3; ++k) {
                int a = tri[k], b = tri[(k + 1) % 3];
                std::array<int, 2> key{std::min(a, b), std::max(a, b)};
                auto it = index.find(key);
                if (it == index.end()) {
                    it = index.emplace(key, int(edges_.size())).first;
                    edges_.push_back(key);
                }
                triangle_edges_[t][k] = it->second;
            }
        }
    }

    bool on_rect_boundary(Vec2 p) const {
        return std::abs(p.x - domain_.x0) <= kBoundaryTol || std::abs(p.x - domain_.x1) <= kBoundaryTol ||
               std::abs(p.y - domain_.y0) <= kBoundaryTol || std::abs(p.y - domain_.y1) <= kBoundaryTol;
    }

    void flag_boundary() {
        boundary_vertex_.resize(vertices_.size(), 0);
        for (std::size_t v = 0; v < vertices_.size(); ++v)
            boundary_vertex_[v] = on_rect_boundary(vertices_[v]) ? 1 : 0;
        boundary_edge_.resize(edges_.size(), 0);
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            Vec2 a = vertices_[edges_[e][0]], b = vertices_[edges_[e][1]];
            // Both endpoints on the same side; rules out the cell diagonals.
            bool same_side =
                (std::abs(a.x - domain_.x0) <= kBoundaryTol && std::abs(b.x - domain_.x0) <= kBoundaryTol) ||
                (std::abs(a.x - domain_.x1) <= kBoundaryTol && std::abs(b.x - domain_.x1) <= kBoundaryTol) ||
                (std::abs(a.y - domain_.y0) <= kBoundaryTol && std::abs(b.y - domain_.y0) <= kBoundaryTol) ||
                (std::abs(a.y - domain_.y1) <= kBoundaryTol && std::abs(b.y - domain_.y1) <= kBoundaryTol);
            boundary_edge_[e] = same_side ? 1 : 0;
        }
    }

    int nx_, ny_;
    Rect domain_;
    double dx_, dy_;
    std::vector<Vec2> vertices_;
    std::vector<std::array<int, 3>> triangles_;
    std::vector<std::array<int, 2>> edges_;
    std::vector<std::array<int, 3>> triangle_edges_;
    std::vector<std::uint8_t> boundary_vertex_;
    std::vector<std::uint8_t> boundary_edge_;
};

inline StructuredTriMesh build_rect_mesh(int nx, int ny, Rect domain = unit_square()) {
    return StructuredTriMesh(nx, ny, domain);
}

/// Legacy ASCII VTK dump of the triangulation (POINTS / CELLS / CELL_TYPES).
inline void write_vtk(const StructuredTriMesh& mesh, std::ostream& os,
                      const std::string& title = "cdanse mesh") {
    os << "# vtk DataFile Version 2.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << mesh.vertex_count() << " double\n";
    for (const auto& v : mesh.vertices()) os << v.x << " " << v.y << " 0\n";
    os << "CELLS " << mesh.triangle_count() << " " << 4 * mesh.triangle_count() << "\n";
    for (const auto& t : mesh.triangles()) os << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
    os << "CELL_TYPES " << mesh.triangle_count() << "\n";
    for (int t = 0; t < mesh.triangle_count(); ++t) os << "5\n";
}

}  // namespace cdanse
