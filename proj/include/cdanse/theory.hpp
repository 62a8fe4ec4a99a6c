#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "cdanse/analysis.hpp"
#include "cdanse/observation.hpp"

namespace cdanse {

/// Trilinear-form and interpolation constants.  M, M1, M2 default to 1.0 and
/// are labeled nominal; no rigorous values are computed.
struct TheoryConstants {
    double M = 1.0;
    double M1 = 1.0;
    double M2 = 1.0;
    double C_I = 1.0;
    std::string provenance = "nominal";

    void validate() const {
        if (!(M > 0.0) || !(M1 > 0.0) || !(M2 > 0.0) || !(C_I > 0.0))
            throw std::invalid_argument("TheoryConstants: all constants must be positive");
    }
};

/// alpha = M nu^{-2} ||f||_*
inline double compute_alpha(double nu, double f_dual_norm, double M) {
    if (!(nu > 0.0) || !(M > 0.0))
        throw std::invalid_argument("compute_alpha: nu and M must be positive");
    if (f_dual_norm < 0.0) throw std::invalid_argument("compute_alpha: negative dual norm");
    return M * f_dual_norm / (nu * nu);
}

inline double compute_mu_min(double nu, double C_I, double H) {
    if (!(nu > 0.0) || !(C_I > 0.0) || !(H > 0.0))
        throw std::invalid_argument("compute_mu_min: arguments must be positive");
    return nu / (4.0 * C_I * C_I * H * H);
}

inline double compute_lambda(double nu, double C_I, double H, double mu) {
    return std::min(compute_mu_min(nu, C_I, H), mu);
}

/// Admissibility of a supplied (H, mu) pair against the uniqueness conditions:
/// general branch H <= 2M^2/(3 sqrt(3) C_I M1^2 alpha^2), 2D branch
/// H <= M/(2 C_I M2 alpha), both with mu >= nu/(4 C_I^2 H^2).  alpha < 1 is
/// the small-data regime: no restriction, bounds reported as +inf.
struct ConditionReport {
    double alpha = 0.0;
    double f_dual_norm = 0.0;
    double H = 0.0;
    double mu = 0.0;
    double lambda = 0.0;
    double H_max_general = 0.0;
    double H_max_2d = 0.0;
    double mu_min = 0.0;
    bool small_data = false;
    bool condition_satisfied_general = false;
    bool condition_satisfied_2d = false;
    bool f_dual_is_estimate = true;
    std::string constants_provenance = "nominal";
    std::string f_norm_mesh;
};

inline ConditionReport theorem_bounds(const TheoryConstants& constants, double alpha, double nu,
                                      double H, double mu) {
    constants.validate();
    if (alpha < 0.0) throw std::invalid_argument("theorem_bounds: negative alpha");
    const double inf = std::numeric_limits<double>::infinity();
    ConditionReport rep;
    rep.alpha = alpha;
    rep.f_dual_norm = alpha * nu * nu / constants.M;
    rep.H = H;
    rep.mu = mu;
    rep.mu_min = compute_mu_min(nu, constants.C_I, H);
    rep.lambda = compute_lambda(nu, constants.C_I, H, mu);
    rep.small_data = alpha < 1.0;
    rep.constants_provenance = constants.provenance;
    if (alpha == 0.0) {
        rep.H_max_general = inf;
        rep.H_max_2d = inf;
    } else {
        rep.H_max_general =
            2.0 * constants.M * constants.M /
            (3.0 * std::sqrt(3.0) * constants.C_I * constants.M1 * constants.M1 * alpha * alpha);
        rep.H_max_2d = constants.M / (2.0 * constants.C_I * constants.M2 * alpha);
    }
    if (rep.small_data) {
        rep.H_max_general = inf;
        rep.H_max_2d = inf;
        rep.condition_satisfied_general = true;
        rep.condition_satisfied_2d = true;
    } else {
        rep.condition_satisfied_general = H <= rep.H_max_general && mu >= rep.mu_min;
        rep.condition_satisfied_2d = H <= rep.H_max_2d && mu >= rep.mu_min;
    }
    return rep;
}

/// Both sides of the energy identity
///   nu ||grad e||^2 + mu ||I_H e||^2 = -b~(e, u, e),   e = w - u,
/// and the coercivity lower bound
///   nu ||grad e||^2 + mu ||I_H e||^2 >= (3 nu/4)||grad e||^2 + (lambda/2)||e||^2.
/// The bound is algebraic once C_I covers the actual field e, so it is
/// evaluated with ci_used = max(C_I, e's own interpolation ratio); ci_exceeded
/// records whether the supplied constant was too small for this field.
struct ProofChainRecord {
    double grad_e_sq = 0.0;
    double l2_e_sq = 0.0;
    double ih_e_sq = 0.0;
    double lhs_energy = 0.0;      // nu ||grad e||^2 + mu ||I_H e||^2
    double rhs_convection = 0.0;  // -b~(e, u, e)
    double identity_slack = 0.0;  // lhs_energy - rhs_convection
    double lower_bound = 0.0;
    double bound_slack = 0.0;  // lhs_energy - lower_bound, >= -1e-10 expected
    double ci_field = 0.0;
    double ci_used = 0.0;
    double lambda_used = 0.0;
    bool ci_exceeded = false;
};

inline ProofChainRecord proof_chain_check(const VelocityPressureField& w,
                                          const VelocityPressureField& u,
                                          const TheoryConstants& constants, double nu, double mu,
                                          const ObservationOperator& op, int quad_degree = 4) {
    if (w.space != u.space || w.space != op.fine)
        throw std::invalid_argument("proof_chain_check: fields and operator live on different spaces");
    constants.validate();
    const TaylorHoodSpace& space = *w.space;

    VelocityPressureField e(space);
    e.velocity = w.velocity - u.velocity;
    FieldNorms en = norms(e, quad_degree);

    ProofChainRecord rec;
    rec.grad_e_sq = en.h1_semi * en.h1_semi;
    rec.l2_e_sq = en.l2 * en.l2;
    Eigen::VectorXd ihe = op.apply(e.velocity);
    rec.ih_e_sq = ihe.dot(op.Mh * ihe);
    rec.lhs_energy = nu * rec.grad_e_sq + mu * rec.ih_e_sq;

    SparseMatrix Ce = assemble_convection(space, e, true, quad_degree);
    rec.rhs_convection = -e.velocity.dot(Ce * u.velocity);
    rec.identity_slack = rec.lhs_energy - rec.rhs_convection;

    // interpolation ratio of this specific e
    if (rec.grad_e_sq > 0.0) {
        Eigen::VectorXd diff = op.prolong(ihe) - e.velocity;
        SparseMatrix M = assemble_mass(space, quad_degree);
        rec.ci_field = std::sqrt(std::max(diff.dot(M * diff), 0.0)) /
                       (op.H * std::sqrt(rec.grad_e_sq));
    }
    rec.ci_used = std::max(constants.C_I, rec.ci_field);
    rec.ci_exceeded = rec.ci_field > constants.C_I;
    rec.lambda_used = compute_lambda(nu, rec.ci_used, op.H, mu);
    rec.lower_bound = 0.75 * nu * rec.grad_e_sq + 0.5 * rec.lambda_used * rec.l2_e_sq;
    rec.bound_slack = rec.lhs_energy - rec.lower_bound;
    return rec;
}

}  // namespace cdanse
