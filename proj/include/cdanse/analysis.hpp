#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cdanse/assembly.hpp"
#include "cdanse/linsolve.hpp"
#include "cdanse/mms.hpp"
#include "cdanse/saddle.hpp"
#include "cdanse/spaces.hpp"

namespace cdanse {

struct FieldNorms {
    double l2 = 0.0;
    double h1_semi = 0.0;
    double div_l2 = 0.0;
};

namespace detail {

/// Quadrature loop over velocity value/gradient/divergence of a coefficient
/// vector, accumulating the three squared norms.
inline FieldNorms velocity_norms_from_coeffs(const TaylorHoodSpace& space,
                                             const Eigen::VectorXd& vel, int quad_degree) {
    const auto& mesh = space.mesh();
    RuleCache cache(quad_degree);
    const int stride = space.scalar_node_count();
    double l2 = 0.0, h1 = 0.0, dv = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        ElementGeometry geom(mesh, t);
        auto nodes = space.element_scalar_nodes(t);
        double cx[6], cy[6];
        for (int k = 0; k < 6; ++k) {
            cx[k] = vel[nodes[k]];
            cy[k] = vel[stride + nodes[k]];
        }
        for (std::size_t q = 0; q < cache.rule.nodes.size(); ++q) {
            const double w = cache.rule.nodes[q].weight * geom.det_j;
            double ux = 0.0, uy = 0.0, g00 = 0.0, g01 = 0.0, g10 = 0.0, g11 = 0.0;
            for (int k = 0; k < 6; ++k) {
                const double v = cache.p2[q][k];
                auto g = geom.physical_grad(cache.p2_ref_grad[q][k]);
                ux += v * cx[k];
                uy += v * cy[k];
                g00 += g[0] * cx[k];
                g01 += g[1] * cx[k];
                g10 += g[0] * cy[k];
                g11 += g[1] * cy[k];
            }
            l2 += w * (ux * ux + uy * uy);
            h1 += w * (g00 * g00 + g01 * g01 + g10 * g10 + g11 * g11);
            const double div = g00 + g11;
            dv += w * div * div;
        }
    }
    return {std::sqrt(l2), std::sqrt(h1), std::sqrt(dv)};
}

}  // namespace detail

inline FieldNorms norms(const VelocityPressureField& field, int quad_degree = 4) {
    return detail::velocity_norms_from_coeffs(*field.space, field.velocity, quad_degree);
}

/// Norms of the velocity difference a - b (same space required); used for
/// Picard increments and pairwise solution distances.
inline FieldNorms difference_norms(const VelocityPressureField& a, const VelocityPressureField& b,
                                   int quad_degree = 4) {
    if (a.space != b.space) throw std::invalid_argument("difference_norms: fields on different spaces");
    return detail::velocity_norms_from_coeffs(*a.space, a.velocity - b.velocity, quad_degree);
}

inline double pressure_mean(const VelocityPressureField& field, int quad_degree = 4) {
    Eigen::VectorXd c = assemble_pressure_integral(*field.space, quad_degree);
    return c.dot(field.pressure) / field.space->mesh().domain().area();
}

/// Errors of a discrete field against a manufactured solution.  Pressure error
/// is measured mean-free on both sides.
struct ErrorRow {
    double e_l2_u = 0.0;
    double e_h1_u = 0.0;
    double e_l2_p = 0.0;
    double div_l2 = 0.0;
};

inline ErrorRow error_vs_exact(const VelocityPressureField& field, const ManufacturedSolution& sol,
                               int quad_degree = 4) {
    const TaylorHoodSpace& space = *field.space;
    const auto& mesh = space.mesh();
    detail::RuleCache cache(quad_degree);
    const int stride = space.scalar_node_count();
    const double area = mesh.domain().area();

    // mean pressures first, so the error compares mean-free representatives
    double pmean_ex = 0.0, pmean_h = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        ElementGeometry geom(mesh, t);
        const auto& tri = mesh.triangles()[t];
        for (std::size_t q = 0; q < cache.rule.nodes.size(); ++q) {
            const double w = cache.rule.nodes[q].weight * geom.det_j;
            Vec2 x = mesh.barycentric_to_point(t, cache.rule.nodes[q].bary);
            pmean_ex += w * sol.pressure(x);
            double ph = 0.0;
            for (int i = 0; i < 3; ++i) ph += cache.p1[q][i] * field.pressure[tri[i]];
            pmean_h += w * ph;
        }
    }
    pmean_ex /= area;
    pmean_h /= area;

    double el2 = 0.0, eh1 = 0.0, elp = 0.0, dv = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        ElementGeometry geom(mesh, t);
        auto nodes = space.element_scalar_nodes(t);
        const auto& tri = mesh.triangles()[t];
        double cx[6], cy[6];
        for (int k = 0; k < 6; ++k) {
            cx[k] = field.velocity[nodes[k]];
            cy[k] = field.velocity[stride + nodes[k]];
        }
        for (std::size_t q = 0; q < cache.rule.nodes.size(); ++q) {
            const double w = cache.rule.nodes[q].weight * geom.det_j;
            Vec2 x = mesh.barycentric_to_point(t, cache.rule.nodes[q].bary);
            double ux = 0.0, uy = 0.0, g00 = 0.0, g01 = 0.0, g10 = 0.0, g11 = 0.0, ph = 0.0;
            for (int k = 0; k < 6; ++k) {
                const double v = cache.p2[q][k];
                auto g = geom.physical_grad(cache.p2_ref_grad[q][k]);
                ux += v * cx[k];
                uy += v * cy[k];
                g00 += g[0] * cx[k];
                g01 += g[1] * cx[k];
                g10 += g[0] * cy[k];
                g11 += g[1] * cy[k];
            }
            for (int i = 0; i < 3; ++i) ph += cache.p1[q][i] * field.pressure[tri[i]];
            Vec2 ue = sol.velocity(x);
            Mat2 ge = sol.velocity_gradient(x);
            const double pe = sol.pressure(x) - pmean_ex;
            const double dx0 = ux - ue.x, dy0 = uy - ue.y;
            el2 += w * (dx0 * dx0 + dy0 * dy0);
            const double d00 = g00 - ge[0][0], d01 = g01 - ge[0][1];
            const double d10 = g10 - ge[1][0], d11 = g11 - ge[1][1];
            eh1 += w * (d00 * d00 + d01 * d01 + d10 * d10 + d11 * d11);
            const double dp = (ph - pmean_h) - pe;
            elp += w * dp * dp;
            const double div = g00 + g11;
            dv += w * div * div;
        }
    }
    ErrorRow row;
    row.e_l2_u = std::sqrt(el2);
    row.e_h1_u = std::sqrt(eh1);
    row.e_l2_p = std::sqrt(elp);
    row.div_l2 = std::sqrt(dv);
    return row;
}

/// Error rows over a mesh sequence with observed rates log2(e_{2h}/e_h).
struct ErrorReport {
    std::vector<double> h;
    std::vector<ErrorRow> rows;
    std::vector<double> rate_l2_u;
    std::vector<double> rate_h1_u;
    std::vector<double> rate_l2_p;
};

inline ErrorReport convergence_report(const std::vector<double>& hs,
                                      const std::vector<ErrorRow>& rows) {
    if (hs.size() != rows.size()) throw std::invalid_argument("convergence_report: length mismatch");
    ErrorReport rep;
    rep.h = hs;
    rep.rows = rows;
    auto rate = [](double coarse, double fine) {
        if (!(coarse > 0.0) || !(fine > 0.0)) return std::numeric_limits<double>::quiet_NaN();
        return std::log2(coarse / fine);
    };
    for (std::size_t i = 1; i < rows.size(); ++i) {
        rep.rate_l2_u.push_back(rate(rows[i - 1].e_l2_u, rows[i].e_l2_u));
        rep.rate_h1_u.push_back(rate(rows[i - 1].e_h1_u, rows[i].e_h1_u));
        rep.rate_l2_p.push_back(rate(rows[i - 1].e_l2_p, rows[i].e_l2_p));
    }
    return rep;
}

/// Discrete dual norms of f: ||f||_{-1,h} over the full zero-trace velocity
/// space (Riesz solve) and ||f||_{*,h} over the discretely divergence-free
/// subspace (Stokes solve).  Both return ||grad r_h|| of the representative.
inline std::pair<double, double> dual_norm_estimate(const VectorFn& f, const TaylorHoodSpace& space,
                                                    int quad_degree = 4) {
    const int n_u = space.velocity_dof_count();
    SparseMatrix K1 = assemble_stiffness(space, 1.0, quad_degree);
    Eigen::VectorXd L = assemble_rhs(space, f, quad_degree);
    DirichletData bc = homogeneous_dirichlet(space);

    SaddleSystem riesz = build_saddle_system(n_u, K1, L, nullptr, nullptr,
                                             PressureConstraint::mean_zero_lagrange, &bc);
    Eigen::VectorXd r = solve_linear(riesz.A, riesz.rhs);
    const double minus1 = std::sqrt(std::max(r.dot(K1 * r), 0.0));

    SparseMatrix B = assemble_divergence(space, quad_degree);
    Eigen::VectorXd c = assemble_pressure_integral(space, quad_degree);
    SaddleSystem stokes = build_saddle_system(n_u, K1, L, &B, &c,
                                              PressureConstraint::mean_zero_lagrange, &bc);
    Eigen::VectorXd x = solve_saddle(stokes);
    Eigen::VectorXd u = stokes.velocity_part(x);
    const double star = std::sqrt(std::max(u.dot(K1 * u), 0.0));
    return {minus1, star};
}

}  // namespace cdanse
