#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string>

namespace camtraj {

using SparseMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

/// minimize ½ xᵀHx + cᵀx  subject to  A x = b,  lower ≤ x ≤ upper.
/// H must be symmetric positive semi-definite; only its lower triangle is read.
/// Infinite bounds are allowed.
struct QpProblem {
  SparseMat H;
  Eigen::VectorXd c;
  SparseMat A;
  Eigen::VectorXd b;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct QpSettings {
  int max_iterations = 100;
  double tol_primal = 1e-11;
  double tol_dual = 1e-9;
  double tol_gap = 1e-10;
  double reg_primal = 1e-10;
  double reg_dual = 1e-11;
  int refinement_steps = 3;
  int equilibration_passes = 10;
};

enum class QpStatus { kSolved, kMaxIterations, kNumericalError };

struct QpResult {
  QpStatus status = QpStatus::kNumericalError;
  Eigen::VectorXd x;
  Eigen::VectorXd y;        // equality multipliers: ∇ = Hx + c - Aᵀy - z_lower + z_upper
  Eigen::VectorXd z_lower;  // zero where the bound is infinite
  Eigen::VectorXd z_upper;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;

  bool solved() const { return status == QpStatus::kSolved; }
};

/// Primal-dual interior point (Mehrotra predictor-corrector) on the sparse
/// quasi-definite KKT system. `x_start` is projected into the bound interior.
QpResult solveQp(const QpProblem& qp, const Eigen::VectorXd& x_start, const QpSettings& settings = {});

std::string toString(QpStatus status);

}  // namespace camtraj
