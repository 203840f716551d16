#pragma once

#include <Eigen/Dense>

#include <limits>

namespace mals {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Numerical-rank cutoff: max(rows, cols) * eps * sigma_max.
inline double rank_threshold(Index rows, Index cols, double sigma_max) {
  return static_cast<double>(std::max(rows, cols)) *
         std::numeric_limits<double>::epsilon() * sigma_max;
}

inline Index rank_from_singular_values(const VectorXd& sv, Index rows, Index cols) {
  if (sv.size() == 0) return 0;
  const double thresh = rank_threshold(rows, cols, sv(0));
  Index r = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > thresh) ++r;
  return r;
}

/// Moore-Penrose pseudoinverse via SVD with the shared rank cutoff.
inline MatrixXd pinv(const MatrixXd& a) {
  if (a.size() == 0) return MatrixXd(a.cols(), a.rows());
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  const double thresh = sv.size() ? rank_threshold(a.rows(), a.cols(), sv(0)) : 0.0;
  VectorXd inv = VectorXd::Zero(sv.size());
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > thresh) inv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Singular values of a wide matrix; switches to the Gram matrix when the
/// column count makes a direct SVD wasteful. Used for rank certificates.
inline VectorXd singular_values(const MatrixXd& a) {
  if (a.cols() <= 4096 && a.rows() <= 4096) {
    Eigen::BDCSVD<MatrixXd> svd(a);
    return svd.singularValues();
  }
  const MatrixXd gram = a * a.transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
  VectorXd sv(es.eigenvalues().size());
  for (Index i = 0; i < sv.size(); ++i) {
    const double ev = es.eigenvalues()(sv.size() - 1 - i);  // descending
    sv(i) = ev > 0 ? std::sqrt(ev) : 0.0;
  }
  return sv;
}

}  // namespace mals
