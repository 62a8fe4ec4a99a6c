#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <stdexcept>
#include <string>

#ifdef CDANSE_HAVE_UMFPACK
#include <Eigen/UmfPackSupport>
#endif

#include "cdanse/assembly.hpp"

namespace cdanse {

class LinearSolveError : public std::runtime_error {
public:
    explicit LinearSolveError(const std::string& what) : std::runtime_error(what) {}
};

/// Sparse direct solver with symbolic-analysis reuse and iterative refinement.
///
/// Backend is UMFPACK when available, Eigen SparseLU otherwise.  Every solve
/// is refined until the normwise backward error
///   ||b - A x|| / (||A||_inf ||x|| + ||b||)
/// drops below kResidualTol; a solve that cannot reach the contract throws.
class SparseLinearSolver {
public:
    static constexpr double kResidualTol = 1e-10;
    static constexpr int kMaxRefine = 3;

    /// Factorizes A.  With same_pattern set, reuses the symbolic analysis
    /// from the previous compute() (Picard iterations share one sparsity
    /// pattern).
    void compute(const SparseMatrix& A, bool same_pattern = false) {
        a_ = A;
        a_.makeCompressed();
        norm_a_inf_ = row_sum_norm(a_);
        if (!analyzed_ || !same_pattern) {
            solver_.analyzePattern(a_);
            analyzed_ = true;
        }
        solver_.factorize(a_);
        if (solver_.info() != Eigen::Success)
            throw LinearSolveError("sparse factorization failed (singular or structurally deficient matrix)");
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& b) {
        if (!analyzed_) throw LinearSolveError("solve before compute");
        Eigen::VectorXd x = solver_.solve(b);
        if (solver_.info() != Eigen::Success) throw LinearSolveError("sparse back-substitution failed");
        last_backward_error_ = backward_error(x, b);
        refine_steps_ = 0;
        while (last_backward_error_ > kResidualTol && refine_steps_ < kMaxRefine) {
            Eigen::VectorXd r = b - a_ * x;
            Eigen::VectorXd dx = solver_.solve(r);
            if (solver_.info() != Eigen::Success) break;
            x += dx;
            ++refine_steps_;
            last_backward_error_ = backward_error(x, b);
        }
        if (!(last_backward_error_ <= kResidualTol))
            throw LinearSolveError("linear solve residual contract violated (backward error " +
                                   std::to_string(last_backward_error_) + ")");
        return x;
    }

    double last_backward_error() const { return last_backward_error_; }
    int refine_steps() const { return refine_steps_; }

    static const char* backend() {
#ifdef CDANSE_HAVE_UMFPACK
        return "umfpack";
#else
        return "eigen-sparselu";
#endif
    }

private:
    double backward_error(const Eigen::VectorXd& x, const Eigen::VectorXd& b) const {
        const double denom = norm_a_inf_ * x.norm() + b.norm();
        if (denom == 0.0) return (a_ * x - b).norm();
        return (b - a_ * x).norm() / denom;
    }

    static double row_sum_norm(const SparseMatrix& a) {
        Eigen::VectorXd rows = Eigen::VectorXd::Zero(a.rows());
        for (int k = 0; k < a.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(a, k); it; ++it)
                rows[it.row()] += std::abs(it.value());
        return rows.size() ? rows.maxCoeff() : 0.0;
    }

#ifdef CDANSE_HAVE_UMFPACK
    Eigen::UmfPackLU<SparseMatrix> solver_;
#else
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> solver_;
#endif
    SparseMatrix a_;
    double norm_a_inf_ = 0.0;
    double last_backward_error_ = 0.0;
    int refine_steps_ = 0;
    bool analyzed_ = false;
};

inline Eigen::VectorXd solve_linear(const SparseMatrix& A, const Eigen::VectorXd& b) {
    SparseLinearSolver s;
    s.compute(A);
    return s.solve(b);
}

}  // namespace cdanse
