#include "mlqc/linalg.hpp"

#include <limits>

namespace mlqc {

MatrixXd symmetrize(const MatrixXd& M) {
  return 0.5 * (M + M.transpose());
}

double frobenius_inner(const MatrixXd& A, const MatrixXd& B) {
  return (A.array() * B.array()).sum();
}

double min_symmetric_eigenvalue(const MatrixXd& M) {
  if (M.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(symmetrize(M),
                                              Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return eig.eigenvalues().minCoeff();
}

bool is_psd(const MatrixXd& M, double rel_tol) {
  const double lambda = min_symmetric_eigenvalue(M);
  return lambda >= -rel_tol * (1.0 + M.norm());
}

VectorXd vec(const MatrixXd& M) {
  return Eigen::Map<const VectorXd>(M.data(), M.size());
}

MatrixXd unvec(const VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const MatrixXd>(v.data(), rows, cols);
}

MatrixXd kron(const MatrixXd& A, const MatrixXd& B) {
  MatrixXd out(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    }
  }
  return out;
}

MatrixXd psd_sqrt(const MatrixXd& M) {
  if (M.size() == 0) return M;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(symmetrize(M));
  const VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace mlqc
