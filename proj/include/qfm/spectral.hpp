#pragma once

// Dense symmetric eigendecomposition, time demeaning, rotation matrix and OLS.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <atomic>
#include <cmath>
#include <string>

#include "qfm/error.hpp"

namespace qfm {

/// Singular values of X, descending (taken from the R factor when X is tall).
inline Eigen::VectorXd singular_values(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.rows() > X.cols()) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
    const Eigen::MatrixXd R = qr.matrixQR().topRows(X.cols()).triangularView<Eigen::Upper>();
    return Eigen::JacobiSVD<Eigen::MatrixXd>(R).singularValues();
  }
  return Eigen::JacobiSVD<Eigen::MatrixXd>(X).singularValues();
}

/// Number of singular values >= rel_tol * largest.
inline int numerical_rank(const Eigen::Ref<const Eigen::MatrixXd>& X, double rel_tol = 1e-10) {
  const Eigen::VectorXd sv = singular_values(X);
  if (sv.size() == 0 || !(sv(0) > 0.0)) return 0;
  int rank = 0;
  for (Eigen::Index k = 0; k < sv.size(); ++k)
    if (sv(k) >= rel_tol * sv(0)) ++rank;
  return rank;
}

struct EigenPairs {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // columns orthonormal, sign-fixed
};

namespace detail {
inline std::atomic<long long> sym_eig_calls{0};
}

/// How many times sym_eig has run in this process.
inline long long sym_eig_call_count() { return detail::sym_eig_calls.load(); }

/// Largest-magnitude entry of each column made positive (first index on ties).
inline void fix_signs(Eigen::MatrixXd& V) {
  for (Eigen::Index k = 0; k < V.cols(); ++k) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
      const double a = std::abs(V(i, k));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (V(arg, k) < 0.0) V.col(k) = -V.col(k);
  }
}

inline EigenPairs sym_eig(const Eigen::Ref<const Eigen::MatrixXd>& S) {
  detail::sym_eig_calls.fetch_add(1, std::memory_order_relaxed);
  require(S.rows() == S.cols(), ErrorCode::DimensionMismatch, "sym_eig needs a square matrix");
  require(S.allFinite(), ErrorCode::NonFinite, "sym_eig input has non-finite entries");
  const Eigen::MatrixXd A = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  require(es.info() == Eigen::Success, ErrorCode::NonFinite, "eigensolver did not converge");
  EigenPairs out;
  out.values = es.eigenvalues().reverse();
  out.vectors = es.eigenvectors().rowwise().reverse();
  fix_signs(out.vectors);
  return out;
}

/// Y * M_T: each row minus its time mean. The subtraction is repeated until
/// the recomputed row sum is negligible against the row norm, so every
/// stopping state is a fixed point and applying it twice returns the same bits.
inline Eigen::MatrixXd demean_time(const Eigen::Ref<const Eigen::MatrixXd>& Y) {
  Eigen::MatrixXd out = Y;
  if (Y.cols() == 0) return out;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (int pass = 0; pass < 16; ++pass) {
      const double sum = out.row(r).sum();
      if (std::abs(sum) <= 1e-13 * out.row(r).norm()) break;
      const Eigen::RowVectorXd next = out.row(r).array() - sum / static_cast<double>(out.cols());
      if (next == out.row(r)) break;
      out.row(r) = next;
    }
  }
  return out;
}

/// M_T F for a T x K matrix: column means removed.
inline Eigen::MatrixXd center_columns(const Eigen::Ref<const Eigen::MatrixXd>& F) {
  return demean_time(F.transpose()).transpose();
}

/// H = (F' M_T Fh)(Fh' M_T Fh)^{-1}.
inline Eigen::MatrixXd rotation_H(const Eigen::Ref<const Eigen::MatrixXd>& F_true,
                                  const Eigen::Ref<const Eigen::MatrixXd>& F_hat) {
  require(F_true.rows() == F_hat.rows(), ErrorCode::DimensionMismatch, "factor matrices need equal T");
  const Eigen::MatrixXd Fc = center_columns(F_hat);
  const Eigen::MatrixXd G = Fc.transpose() * Fc;
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(G).singularValues();
  require(sv.size() > 0 && sv(0) > 0.0 && sv(sv.size() - 1) > 1e-12 * sv(0), ErrorCode::SingularGram,
          "F_hat' M_T F_hat is numerically singular");
  const Eigen::MatrixXd C = F_true.transpose() * Fc;
  // C G^{-1} = (G^{-1} C')'
  return G.ldlt().solve(C.transpose()).transpose();
}

/// Least-squares coefficients; with intercept the constant comes first.
inline Eigen::VectorXd ols(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                           bool intercept) {
  require(X.rows() == y.size(), ErrorCode::DimensionMismatch, "ols: X and y row counts differ");
  Eigen::MatrixXd D(X.rows(), X.cols() + (intercept ? 1 : 0));
  if (intercept) {
    D.col(0).setOnes();
    D.rightCols(X.cols()) = X;
  } else {
    D = X;
  }
  require(D.rows() >= D.cols(), ErrorCode::RankDeficient, "ols: fewer observations than regressors");
  const int rank = numerical_rank(D);
  require(rank == D.cols(), ErrorCode::RankDeficient,
          "ols design has rank " + std::to_string(rank) + " < " + std::to_string(D.cols()));
  return D.colPivHouseholderQr().solve(y);
}

}  // namespace qfm
