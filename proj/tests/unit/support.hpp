#pragma once

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "qfm/qrpca.hpp"
#include "qfm/rng.hpp"

namespace qfm::test {

inline void expect_normalized(const QrpcaFit& f) {
  const NormalizationError e = normalization_error(f);
  EXPECT_LE(e.orthonormality, 1e-10) << "B'B - I";
  EXPECT_LE(e.identification, 1e-10) << "a'B";
  EXPECT_LE(e.offdiag, 1e-8) << "off-diagonal of F'M_T F/T";
  EXPECT_LE(e.diag, 1e-8) << "diagonal of F'M_T F/T vs eigenvalues";
  for (Eigen::Index k = 1; k < f.eigvals.size(); ++k) EXPECT_GE(f.eigvals(k - 1), f.eigvals(k));
  for (Eigen::Index k = 0; k < f.eigvals.size(); ++k) EXPECT_GE(f.eigvals(k), -1e-12);
}

inline Eigen::MatrixXd random_matrix(rng::Stream& rs, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd A(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) A(i, j) = rs.normal();
  return A;
}

inline Eigen::VectorXd random_vector(rng::Stream& rs, Eigen::Index n) { return random_matrix(rs, n, 1).col(0); }

inline Eigen::MatrixXd orthonormal_columns(rng::Stream& rs, Eigen::Index r, Eigen::Index c) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(rs, r, c));
  return qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
}

/// Y = a 1' + B F' with B'B = I, a'B = 0 and F'M_T F / T = diag(d), d distinct descending.
struct ExactLowRank {
  Eigen::VectorXd a;
  Eigen::MatrixXd B, F;
  Eigen::VectorXd d;
  Eigen::MatrixXd Y;
};

inline ExactLowRank exact_low_rank(int P, int T, int K, std::uint64_t seed) {
  rng::Stream rs(seed);
  ExactLowRank x;
  Eigen::MatrixXd Q = orthonormal_columns(rs, P, K + 1);
  x.B = Q.leftCols(K);
  x.a = Q.col(K) * (1.0 + rs.uniform());
  Eigen::MatrixXd G = random_matrix(rs, T, K);
  G.rowwise() -= G.colwise().mean();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  const Eigen::MatrixXd U = qr.householderQ() * Eigen::MatrixXd::Identity(T, K);
  x.d.resize(K);
  for (int k = 0; k < K; ++k) x.d(k) = 4.0 * (K - k) + rs.uniform();
  x.F = U * (x.d.array() * T).sqrt().matrix().asDiagonal();
  x.F.rowwise() += random_vector(rs, K).transpose();
  x.Y = x.a * Eigen::RowVectorXd::Ones(T) + x.B * x.F.transpose();
  return x;
}

inline StageOne stage_from(const Eigen::MatrixXd& Y, double tau = 0.5) {
  StageOne s;
  s.tau = tau;
  s.Ytilde = Y;
  s.per_period_converged.assign(static_cast<std::size_t>(Y.cols()), true);
  return s;
}

/// Diagonal +-1 matrix aligning the columns of est with ref.
inline Eigen::MatrixXd sign_match(const Eigen::MatrixXd& est, const Eigen::MatrixXd& ref) {
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(est.cols(), est.cols());
  for (Eigen::Index k = 0; k < est.cols(); ++k) S(k, k) = est.col(k).dot(ref.col(k)) >= 0 ? 1.0 : -1.0;
  return S;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  std::filesystem::path p = std::filesystem::temp_directory_path() / "qfm_tests" /
                            (std::string(info->test_suite_name()) + "_" + info->name() + "_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace qfm::test
