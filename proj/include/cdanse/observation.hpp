#pragma once

#include <Eigen/SparseCholesky>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cdanse/assembly.hpp"
#include "cdanse/spaces.hpp"

namespace cdanse {

enum class ObservationMode { nodal_interp, l2_projection };

/// Which nudging form enters the momentum equation:
///   IH_IH: mu (I_H w - I_H u, I_H v)
///   IH_v:  mu (I_H w - I_H u, v)      (the Remark-1 alternative)
/// For l2_projection the two coincide (I_H is L2-self-adjoint).
enum class NudgingVariant { IH_IH, IH_v };

/// I_H from the fine velocity space to a coarse P1 vector space.  Coarse DOFs
/// are component-blocked like the fine space: x-values then y-values, each of
/// length coarse vertex count.
struct ObservationOperator {
    ObservationMode mode = ObservationMode::nodal_interp;
    StructuredTriMesh coarse;
    const TaylorHoodSpace* fine = nullptr;

    explicit ObservationOperator(StructuredTriMesh coarse_mesh) : coarse(std::move(coarse_mesh)) {}
    double H = 0.0;      // coarse max cell diameter
    SparseMatrix R;      // nodal mode only; see interpolation_matrix()
    SparseMatrix Mh;     // coarse P1 vector mass
    SparseMatrix Mcf;    // cross mass, coarse P1 test x fine P2 trial
    SparseMatrix P;      // coarse-to-fine prolongation (P1 field sampled at fine nodes)
    std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> mh_solver;

    int coarse_dof_count() const { return 2 * coarse.vertex_count(); }

    /// Coarse coefficients of I_H v for fine coefficients v.
    Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
        if (mode == ObservationMode::nodal_interp) return R * v;
        return mh_solver->solve(Mcf * v);
    }

    Eigen::VectorXd prolong(const Eigen::VectorXd& coarse_coeffs) const { return P * coarse_coeffs; }

    /// Matrix realization of I_H; materialized on demand in projection mode
    /// (its rows are structurally dense there, so keep to modest sizes).
    SparseMatrix interpolation_matrix() const {
        if (mode == ObservationMode::nodal_interp) return R;
        SparseMatrix X = mh_solver->solve(Mcf);
        X.prune(0.0, 0.0);
        return X;
    }
};

inline ObservationOperator build_observation(const StructuredTriMesh& coarse_mesh,
                                             const TaylorHoodSpace& fine,
                                             ObservationMode mode = ObservationMode::nodal_interp,
                                             int quad_degree = 4) {
    if (!coarse_mesh.domain().same_as(fine.mesh().domain(), 1e-12))
        throw std::invalid_argument("build_observation: coarse and fine meshes cover different domains");
    ObservationOperator op(coarse_mesh);
    op.mode = mode;
    op.fine = &fine;
    op.H = coarse_mesh.mesh_size();
    const int vc = coarse_mesh.vertex_count();
    const int stride = fine.scalar_node_count();
    const int n_u = fine.velocity_dof_count();

    op.Mh = vector_blocks(assemble_p1_mass(coarse_mesh, quad_degree));

    {  // cross mass, integrated over fine elements
        detail::RuleCache cache(quad_degree);
        const auto& fm = fine.mesh();
        std::vector<Triplet> trips;
        trips.reserve(std::size_t(fm.triangle_count()) * cache.rule.nodes.size() * 36);
        for (int t = 0; t < fm.triangle_count(); ++t) {
            ElementGeometry geom(fm, t);
            auto nodes = fine.element_scalar_nodes(t);
            for (std::size_t q = 0; q < cache.rule.nodes.size(); ++q) {
                Vec2 x = fm.barycentric_to_point(t, cache.rule.nodes[q].bary);
                auto [ct, cbary] = op.coarse.locate(x);
                const auto& ctri = op.coarse.triangles()[ct];
                const double w = cache.rule.nodes[q].weight * geom.det_j;
                for (int i = 0; i < 3; ++i) {
                    const double ci = w * cbary[std::size_t(i)];
                    for (int j = 0; j < 6; ++j) {
                        const double v = ci * cache.p2[q][j];
                        trips.emplace_back(ctri[i], nodes[j], v);
                        trips.emplace_back(vc + ctri[i], stride + nodes[j], v);
                    }
                }
            }
        }
        op.Mcf.resize(2 * vc, n_u);
        op.Mcf.setFromTriplets(trips.begin(), trips.end());
    }

    {  // prolongation: evaluate the coarse P1 field at every fine scalar node
        std::vector<Triplet> trips;
        trips.reserve(std::size_t(stride) * 6);
        for (int n = 0; n < stride; ++n) {
            auto [ct, cbary] = op.coarse.locate(fine.scalar_node_coord(n));
            const auto& ctri = op.coarse.triangles()[ct];
            for (int i = 0; i < 3; ++i) {
                const double v = cbary[std::size_t(i)];
                if (v == 0.0) continue;
                trips.emplace_back(n, ctri[i], v);
                trips.emplace_back(stride + n, vc + ctri[i], v);
            }
        }
        op.P.resize(n_u, 2 * vc);
        op.P.setFromTriplets(trips.begin(), trips.end());
    }

    if (mode == ObservationMode::nodal_interp) {
        std::vector<Triplet> trips;
        trips.reserve(std::size_t(vc) * 12);
        for (int j = 0; j < vc; ++j) {
            auto [ft, fbary] = fine.mesh().locate(coarse_mesh.vertices()[std::size_t(j)]);
            auto nodes = fine.element_scalar_nodes(ft);
            auto vals = p2_values(fbary);
            for (int k = 0; k < 6; ++k) {
                if (vals[std::size_t(k)] == 0.0) continue;
                trips.emplace_back(j, nodes[std::size_t(k)], vals[std::size_t(k)]);
                trips.emplace_back(vc + j, stride + nodes[std::size_t(k)], vals[std::size_t(k)]);
            }
        }
        op.R.resize(2 * vc, n_u);
        op.R.setFromTriplets(trips.begin(), trips.end());
    } else {
        op.mh_solver = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>();
        op.mh_solver->compute(op.Mh);
        if (op.mh_solver->info() != Eigen::Success)
            throw std::runtime_error("build_observation: coarse mass factorization failed");
    }
    return op;
}

/// Nudging matrix N and the map u_obs -> nudging right-hand side N u_obs.
/// IH_IH: N = mu R^T Mh R; IH_v: N = mu Mcf^T R.  In projection mode both
/// equal mu Mcf^T Mh^{-1} Mcf, whose rows are structurally dense; intended for
/// tests and small meshes there (the solver uses an augmented system instead).
inline std::pair<SparseMatrix, std::function<Eigen::VectorXd(const Eigen::VectorXd&)>>
assemble_nudging(const ObservationOperator& op, double mu,
                 NudgingVariant variant = NudgingVariant::IH_IH) {
    if (mu < 0.0) throw std::invalid_argument("assemble_nudging: mu must be nonnegative");
    const int n_u = op.fine->velocity_dof_count();
    SparseMatrix N(n_u, n_u);
    if (mu > 0.0) {
        SparseMatrix Rm = op.interpolation_matrix();
        if (variant == NudgingVariant::IH_IH) {
            SparseMatrix MhR = op.Mh * Rm;
            N = mu * (SparseMatrix(Rm.transpose()) * MhR);
        } else {
            N = mu * (SparseMatrix(op.Mcf.transpose()) * Rm);
        }
        N.prune(0.0, 0.0);
    }
    auto rhs_map = [N](const Eigen::VectorXd& u_obs) { return Eigen::VectorXd(N * u_obs); };
    return {N, rhs_map};
}

/// Empirical C_I: max over probes of ||I_H v - v|| / (H ||grad v||), fine-space
/// norms, probe fields taken as their fine interpolants.  Probes with zero
/// gradient are skipped; an all-skipped probe list is an error.
inline double estimate_CI(const ObservationOperator& op, const std::vector<VectorFn>& probes,
                          int quad_degree = 4) {
    const TaylorHoodSpace& fine = *op.fine;
    SparseMatrix K = assemble_stiffness(fine, 1.0, quad_degree);
    SparseMatrix M = assemble_mass(fine, quad_degree);
    double cmax = -1.0;
    for (const auto& fn : probes) {
        VelocityPressureField v = interpolate_function(fine, fn);
        const double grad2 = v.velocity.dot(K * v.velocity);
        if (grad2 < 1e-24) continue;
        Eigen::VectorXd diff = op.prolong(op.apply(v.velocity)) - v.velocity;
        const double err2 = diff.dot(M * diff);
        cmax = std::max(cmax, std::sqrt(std::max(err2, 0.0)) / (op.H * std::sqrt(grad2)));
    }
    if (cmax < 0.0) throw std::invalid_argument("estimate_CI: every probe had zero gradient");
    return cmax;
}

/// Empirical L2 boundedness constant: max ||I_H v||_{L2 coarse} / ||v||_{L2 fine}.
inline double estimate_boundedness(const ObservationOperator& op,
                                   const std::vector<VectorFn>& probes, int quad_degree = 4) {
    SparseMatrix M = assemble_mass(*op.fine, quad_degree);
    double cmax = -1.0;
    for (const auto& fn : probes) {
        VelocityPressureField v = interpolate_function(*op.fine, fn);
        const double norm2 = v.velocity.dot(M * v.velocity);
        if (norm2 < 1e-24) continue;
        Eigen::VectorXd c = op.apply(v.velocity);
        cmax = std::max(cmax, std::sqrt(std::max(c.dot(op.Mh * c), 0.0) / norm2));
    }
    if (cmax < 0.0) throw std::invalid_argument("estimate_boundedness: every probe was zero");
    return cmax;
}

/// Documented default probe set for C_I: low-frequency trig fields, polynomial
/// fields, and grid-Nyquist oscillations matched to the coarse resolution (the
/// last keep the estimate stable as H varies; smooth probes alone decay ~ H).
inline std::vector<VectorFn> default_ci_probes(const ObservationOperator& op) {
    const double pi = M_PI;
    Rect d = op.coarse.domain();
    const double lx = d.x1 - d.x0, ly = d.y1 - d.y0;
    const double kx = double(op.coarse.nx()), ky = double(op.coarse.ny());
    auto sx = [d, lx](double k, double x) { return std::sin(k * M_PI * (x - d.x0) / lx); };
    auto sy = [d, ly](double k, double y) { return std::sin(k * M_PI * (y - d.y0) / ly); };
    std::vector<VectorFn> probes;
    probes.push_back([pi](Vec2 p) { return Vec2{std::sin(pi * p.x) * std::sin(pi * p.y), 0.0}; });
    probes.push_back([pi](Vec2 p) { return Vec2{0.0, std::sin(2.0 * pi * p.x) * std::sin(pi * p.y)}; });
    probes.push_back([pi](Vec2 p) {
        return Vec2{std::cos(pi * p.x) * std::cos(pi * p.y), std::sin(pi * p.x) * std::sin(pi * p.y)};
    });
    probes.push_back([](Vec2 p) { return Vec2{p.x * p.x, p.x * p.y}; });
    probes.push_back([](Vec2 p) { return Vec2{p.x * p.y * p.y, p.y * p.y * p.y}; });
    probes.push_back([sx, sy, kx, ky](Vec2 p) { return Vec2{sx(kx, p.x) * sy(ky, p.y), 0.0}; });
    probes.push_back([sx, sy, kx, ky](Vec2 p) { return Vec2{0.0, sx(kx, p.x) * sy(ky, p.y)}; });
    return probes;
}

}  // namespace cdanse
