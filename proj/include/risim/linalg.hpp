// linalg.hpp — shared dense linear-algebra aliases and small helpers.

#pragma once

#include <Eigen/Dense>
#include <complex>

namespace risim {

using cd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr cd kI{0.0, 1.0};

// Hermitian part: the unique H with Re tr(M V) = tr(H V) for all Hermitian V.
inline CMat herm(const CMat& m) { return 0.5 * (m + m.adjoint()); }

inline Mat sym(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline double re_trace(const CMat& m) { return m.trace().real(); }

// Smallest/largest eigenvalue of a self-adjoint matrix.
inline double min_eig(const Mat& m) {
  return Eigen::SelfAdjointEigenSolver<Mat>(sym(m), Eigen::EigenvaluesOnly)
      .eigenvalues()
      .minCoeff();
}
inline double min_eig(const CMat& m) {
  return Eigen::SelfAdjointEigenSolver<CMat>(herm(m), Eigen::EigenvaluesOnly)
      .eigenvalues()
      .minCoeff();
}
inline double max_eig(const Mat& m) {
  return Eigen::SelfAdjointEigenSolver<Mat>(sym(m), Eigen::EigenvaluesOnly)
      .eigenvalues()
      .maxCoeff();
}
inline double max_eig(const CMat& m) {
  return Eigen::SelfAdjointEigenSolver<CMat>(herm(m), Eigen::EigenvaluesOnly)
      .eigenvalues()
      .maxCoeff();
}

}  // namespace risim
