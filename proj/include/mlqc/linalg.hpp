#pragma once

#include <Eigen/Dense>

namespace mlqc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// (M + Mᵀ) / 2.
MatrixXd symmetrize(const MatrixXd& M);

/// Frobenius inner product ⟨A, B⟩ = tr(AᵀB).
double frobenius_inner(const MatrixXd& A, const MatrixXd& B);

/// Smallest eigenvalue of the symmetric part of M. Returns +inf for empty M.
double min_symmetric_eigenvalue(const MatrixXd& M);

/// λ_min ≥ −rel_tol·(1 + ‖M‖_F).
bool is_psd(const MatrixXd& M, double rel_tol);

/// Column-major stacking: vec(AXB) = (Bᵀ ⊗ A) vec(X).
VectorXd vec(const MatrixXd& M);
MatrixXd unvec(const VectorXd& v, Eigen::Index rows, Eigen::Index cols);

MatrixXd kron(const MatrixXd& A, const MatrixXd& B);

/// Symmetric square root S with S·S = M, negative eigenvalues clamped to zero.
/// Used to draw samples from N(0, M) when M is only semidefinite.
MatrixXd psd_sqrt(const MatrixXd& M);

}  // namespace mlqc
