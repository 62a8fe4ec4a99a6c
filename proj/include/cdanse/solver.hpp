#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cdanse/analysis.hpp"
#include "cdanse/assembly.hpp"
#include "cdanse/linsolve.hpp"
#include "cdanse/observation.hpp"
#include "cdanse/saddle.hpp"
#include "cdanse/theory.hpp"

namespace cdanse {

enum class InitialGuess { zero, stokes, given };
enum class ConvectionForm { skew, plain };

struct SolveConfig {
    double nu = 1.0;  // Re = 1/nu
    double mu = 0.0;
    double tol_rel = 1e-9;
    double tol_abs = 1e-12;
    int max_iter = 200;
    InitialGuess initial_guess = InitialGuess::stokes;
    ConvectionForm convection = ConvectionForm::skew;
    NudgingVariant nudging_variant = NudgingVariant::IH_IH;
    PressureConstraint pressure_constraint = PressureConstraint::mean_zero_lagrange;
    double damping = 1.0;           // 1 = undamped Picard
    double divergence_guard = 1e6;  // bail when the relative increment exceeds this
    int quad_degree = 4;

    void validate() const {
        if (!(nu > 0.0)) throw std::invalid_argument("SolveConfig: nu must be positive");
        if (mu < 0.0) throw std::invalid_argument("SolveConfig: mu must be nonnegative");
        if (!(tol_rel > 0.0) || !(tol_abs > 0.0))
            throw std::invalid_argument("SolveConfig: tolerances must be positive");
        if (max_iter < 1) throw std::invalid_argument("SolveConfig: max_iter must be >= 1");
        if (!(damping > 0.0) || damping > 1.0)
            throw std::invalid_argument("SolveConfig: damping must lie in (0, 1]");
    }
};

struct SolveReport {
    bool converged = false;
    bool diverged = false;
    bool linear_failure = false;
    std::string failure_message;
    int iterations = 0;
    std::vector<double> increment_history;  // relative H1-seminorm increments
    double nonlinear_residual = 0.0;        // ||A(w) x - rhs|| / max(1, ||rhs||)
    double div_l2 = 0.0;
    double pressure_mean = 0.0;
    double wall_time_seconds = 0.0;
    std::optional<ConditionReport> condition;
};

/// One nonlinear problem instance.  op == nullptr (or mu == 0) is the plain
/// NSE; otherwise the nudging term is added with observations u_obs (fine
/// velocity coefficients).
struct CdaProblem {
    const TaylorHoodSpace* space = nullptr;
    SolveConfig config;
    VectorFn f;
    DirichletData bc;
    const ObservationOperator* op = nullptr;
    const Eigen::VectorXd* u_obs = nullptr;
    const VelocityPressureField* guess = nullptr;   // for InitialGuess::given
    const TheoryConstants* constants = nullptr;     // attach a ConditionReport
};

namespace detail {

/// Shared Picard machinery: constant matrices assembled once, one linear
/// saddle solve per step with symbolic-analysis reuse.
class PicardEngine {
public:
    PicardEngine(const CdaProblem& prob)
        : prob_(prob), space_(*prob.space), cfg_(prob.config) {
        cfg_.validate();
        K_ = assemble_stiffness(space_, cfg_.nu, cfg_.quad_degree);
        B_ = assemble_divergence(space_, cfg_.quad_degree);
        c_ = assemble_pressure_integral(space_, cfg_.quad_degree);
        L_ = assemble_rhs(space_, prob.f, cfg_.quad_degree);
        rhs_vel_ = L_;
        nudging_ = prob.op != nullptr && cfg_.mu > 0.0;
        if (nudging_) {
            if (!prob.u_obs) throw std::invalid_argument("PicardEngine: observations missing");
            if (prob.op->fine != &space_)
                throw std::invalid_argument("PicardEngine: observation operator on a different space");
            if (prob.op->mode == ObservationMode::l2_projection) {
                proj_ = ProjectionNudging{cfg_.mu, &prob.op->Mcf, &prob.op->Mh, prob.u_obs};
            } else {
                auto [N, rhs_map] = assemble_nudging(*prob.op, cfg_.mu, cfg_.nudging_variant);
                N_ = std::move(N);
                rhs_vel_ += rhs_map(*prob.u_obs);
                explicit_n_ = true;
            }
        }
    }

    /// Solves the linearized system at convecting field w; returns the full
    /// solution vector of the saddle system.
    Eigen::VectorXd step(const VelocityPressureField& w, bool with_convection) {
        SaddleSystem sys = compose(w, with_convection);
        solver_.compute(sys, pattern_ready_);
        pattern_ready_ = true;
        last_system_ = std::move(sys);
        return solver_.solve(last_system_.rhs);
    }

    /// Relative residual of the last composed system at solution x, after
    /// recomposing with the convecting field w (nonlinear residual when
    /// w = solution itself).
    double nonlinear_residual(const VelocityPressureField& w, const Eigen::VectorXd& x,
                              bool with_convection) {
        SaddleSystem sys = compose(w, with_convection);
        const double denom = std::max(1.0, sys.rhs.norm());
        return (sys.A * x - sys.rhs).norm() / denom;
    }

    const SaddleSystem& last_system() const { return last_system_; }
    const TaylorHoodSpace& space() const { return space_; }

    VelocityPressureField extract(const Eigen::VectorXd& x) const {
        VelocityPressureField f(space_);
        f.velocity = last_system_.velocity_part(x);
        f.pressure = last_system_.pressure_part(x);
        return f;
    }

private:
    SaddleSystem compose(const VelocityPressureField& w, bool with_convection) {
        SparseMatrix A_vel;
        if (with_convection) {
            SparseMatrix C = assemble_convection(space_, w, cfg_.convection == ConvectionForm::skew,
                                                 cfg_.quad_degree);
            A_vel = explicit_n_ ? SparseMatrix(K_ + C + N_) : SparseMatrix(K_ + C);
        } else {
            A_vel = explicit_n_ ? SparseMatrix(K_ + N_) : K_;
        }
        return build_saddle_system(space_.velocity_dof_count(), A_vel, rhs_vel_, &B_, &c_,
                                   cfg_.pressure_constraint, &prob_.bc,
                                   proj_.Mcf ? &proj_ : nullptr);
    }

    const CdaProblem& prob_;
    const TaylorHoodSpace& space_;
    SolveConfig cfg_;
    SparseMatrix K_, B_, N_;
    Eigen::VectorXd c_, L_, rhs_vel_;
    ProjectionNudging proj_;
    bool nudging_ = false;
    bool explicit_n_ = false;
    bool pattern_ready_ = false;
    SaddleSolver solver_;
    SaddleSystem last_system_;
};

}  // namespace detail

/// Linear Stokes solve sharing the problem's viscosity, forcing, and boundary
/// data; also the generator of `stokes` initial guesses.
inline std::pair<VelocityPressureField, SolveReport> solve_stokes(const TaylorHoodSpace& space,
                                                                  const SolveConfig& config,
                                                                  const VectorFn& f,
                                                                  const DirichletData& bc) {
    const auto t0 = std::chrono::steady_clock::now();
    CdaProblem prob;
    prob.space = &space;
    prob.config = config;
    prob.config.mu = 0.0;
    prob.f = f;
    prob.bc = bc;
    detail::PicardEngine engine(prob);
    VelocityPressureField zero(space);
    SolveReport rep;
    VelocityPressureField sol(space);
    try {
        Eigen::VectorXd x = engine.step(zero, false);
        sol = engine.extract(x);
        rep.converged = true;
        rep.iterations = 1;
        rep.nonlinear_residual = engine.nonlinear_residual(zero, x, false);
    } catch (const LinearSolveError& err) {
        rep.linear_failure = true;
        rep.failure_message = err.what();
    }
    if (rep.converged) {
        FieldNorms n = norms(sol, config.quad_degree);
        rep.div_l2 = n.div_l2;
        rep.pressure_mean = pressure_mean(sol, config.quad_degree);
    }
    rep.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(sol), rep};
}

/// One Picard step: solves a(w_{k+1}, v) + b(w_k, w_{k+1}, v) + nudging = <f, v>
/// with the configured boundary data.
inline VelocityPressureField picard_step(const TaylorHoodSpace& space, const SolveConfig& config,
                                         const VelocityPressureField& w_k, const VectorFn& f,
                                         const DirichletData& bc,
                                         const Eigen::VectorXd* u_obs = nullptr,
                                         const ObservationOperator* op = nullptr) {
    if (w_k.space != &space) throw std::invalid_argument("picard_step: iterate on a different space");
    CdaProblem prob;
    prob.space = &space;
    prob.config = config;
    prob.f = f;
    prob.bc = bc;
    prob.op = op;
    prob.u_obs = u_obs;
    detail::PicardEngine engine(prob);
    Eigen::VectorXd x = engine.step(w_k, true);
    return engine.extract(x);
}

/// Picard iteration for the (nudged) steady NSE.  mu = 0 or op == nullptr
/// degenerates to the plain NSE.  Non-convergence within max_iter is reported,
/// not thrown; linear-solver failures are likewise recorded.
inline std::pair<VelocityPressureField, SolveReport> solve_cda_nse(const CdaProblem& prob) {
    const auto t0 = std::chrono::steady_clock::now();
    prob.config.validate();
    const TaylorHoodSpace& space = *prob.space;
    const SolveConfig& cfg = prob.config;
    SolveReport rep;

    VelocityPressureField w(space);
    switch (cfg.initial_guess) {
        case InitialGuess::zero:
            break;
        case InitialGuess::stokes: {
            auto [stokes, srep] = solve_stokes(space, cfg, prob.f, prob.bc);
            if (srep.linear_failure) {
                rep.linear_failure = true;
                rep.failure_message = "stokes initial guess: " + srep.failure_message;
                return {std::move(stokes), rep};
            }
            w = std::move(stokes);
            break;
        }
        case InitialGuess::given:
            if (!prob.guess || prob.guess->space != &space)
                throw std::invalid_argument("solve_cda_nse: missing or mismatched initial guess field");
            w = *prob.guess;
            break;
    }

    detail::PicardEngine engine(prob);
    Eigen::VectorXd x;
    for (int k = 0; k < cfg.max_iter; ++k) {
        VelocityPressureField w_next(space);
        try {
            x = engine.step(w, true);
            w_next = engine.extract(x);
        } catch (const LinearSolveError& err) {
            rep.linear_failure = true;
            rep.failure_message = "iteration " + std::to_string(k + 1) + ": " + err.what();
            break;
        }
        if (cfg.damping < 1.0) {
            w_next.velocity = w.velocity + cfg.damping * (w_next.velocity - w.velocity);
            w_next.pressure = w.pressure + cfg.damping * (w_next.pressure - w.pressure);
        }
        const double dn = difference_norms(w_next, w, cfg.quad_degree).h1_semi;
        const double scale = norms(w_next, cfg.quad_degree).h1_semi;
        const double rel = scale > 0.0 ? dn / scale : dn;
        rep.increment_history.push_back(rel);
        rep.iterations = k + 1;
        w = std::move(w_next);
        if (!std::isfinite(dn) || !std::isfinite(scale) || rel > cfg.divergence_guard) {
            rep.diverged = true;
            break;
        }
        if (rel <= cfg.tol_rel || dn <= cfg.tol_abs) {
            rep.converged = true;
            break;
        }
    }

    if (!rep.linear_failure && !rep.diverged && rep.iterations > 0 &&
        w.velocity.allFinite()) {
        rep.nonlinear_residual = engine.nonlinear_residual(w, x, true);
        FieldNorms n = norms(w, cfg.quad_degree);
        rep.div_l2 = n.div_l2;
        rep.pressure_mean = pressure_mean(w, cfg.quad_degree);
    }
    if (prob.constants && prob.op) {
        auto [m1, star] = dual_norm_estimate(prob.f, space, cfg.quad_degree);
        (void)m1;
        const double alpha = compute_alpha(cfg.nu, star, prob.constants->M);
        ConditionReport cr = theorem_bounds(*prob.constants, alpha, cfg.nu, prob.op->H, cfg.mu);
        cr.f_norm_mesh = "h=" + std::to_string(space.mesh().mesh_size());
        rep.condition = cr;
    }
    rep.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(w), rep};
}

/// Plain steady NSE (mu = 0) convenience wrapper.
inline std::pair<VelocityPressureField, SolveReport> solve_nse(const TaylorHoodSpace& space,
                                                               const SolveConfig& config,
                                                               const VectorFn& f,
                                                               const DirichletData& bc) {
    CdaProblem prob;
    prob.space = &space;
    prob.config = config;
    prob.config.mu = 0.0;
    prob.f = f;
    prob.bc = bc;
    return solve_cda_nse(prob);
}

}  // namespace cdanse
