#pragma once

// Weighted bootstrap: one standard-exponential weight per unit, shared by all
// periods. Loadings are re-estimated against the real-data factors, so no
// eigenvector extraction happens inside a draw.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qfm/error.hpp"
#include "qfm/parallel.hpp"
#include "qfm/qrpca.hpp"
#include "qfm/rng.hpp"
#include "qfm/spectral.hpp"

namespace qfm {

/// One weight per unit index 0..n_units-1 (the panel's full unit universe).
inline Eigen::VectorXd draw_weights(rng::Stream& rs, int n_units) {
  require(n_units >= 1, ErrorCode::InvalidArgument, "no units to weight");
  Eigen::VectorXd w(n_units);
  for (int i = 0; i < n_units; ++i) w(i) = rs.exponential();
  return w;
}

/// The weights period t's regression actually sees, row by row.
inline Eigen::VectorXd section_weights(const StageDesign& d, const Eigen::VectorXd& unit_weights, int t) {
  const auto& u = d.units.at(t);
  Eigen::VectorXd w(static_cast<Eigen::Index>(u.size()));
  for (std::size_t i = 0; i < u.size(); ++i) w(static_cast<Eigen::Index>(i)) = unit_weights(u[i]);
  return w;
}

struct BootstrapDraw {
  Eigen::VectorXd a_star;
  Eigen::MatrixXd B_star;
  Eigen::MatrixXd F_star;
};

namespace detail {

inline void require_nonsingular(const Eigen::MatrixXd& G, const char* what) {
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(G).singularValues();
  require(sv.size() > 0 && sv(0) > 0.0 && sv(sv.size() - 1) > 1e-12 * sv(0), ErrorCode::SingularGram,
          std::string(what) + " is numerically singular");
}

}  // namespace detail

/// Bootstrap estimates from a reweighted stage one.
inline BootstrapDraw bootstrap_from_stage(const StageOne& star, const QrpcaFit& base) {
  require(star.Ytilde.rows() == base.a_hat.size() && star.Ytilde.cols() == base.F_hat.rows(),
          ErrorCode::DimensionMismatch, "bootstrap stage does not match the base fit");
  const Eigen::MatrixXd Fc = center_columns(base.F_hat);
  const Eigen::MatrixXd G = Fc.transpose() * Fc;
  detail::require_nonsingular(G, "F_hat' M_T F_hat");
  BootstrapDraw d;
  d.B_star = G.ldlt().solve((star.Ytilde * Fc).transpose()).transpose();
  const Eigen::MatrixXd BtB = d.B_star.transpose() * d.B_star;
  detail::require_nonsingular(BtB, "B*' B*");
  const auto BtB_ldlt = BtB.ldlt();
  const Eigen::VectorXd ybar = star.Ytilde.rowwise().mean();
  d.a_star = ybar - d.B_star * BtB_ldlt.solve(d.B_star.transpose() * ybar);
  d.F_star = star.Ytilde.transpose() * d.B_star * BtB_ldlt.solve(Eigen::MatrixXd::Identity(base.K, base.K));
  require(d.a_star.allFinite() && d.B_star.allFinite() && d.F_star.allFinite(), ErrorCode::NonFinite,
          "non-finite bootstrap estimate");
  return d;
}

inline BootstrapDraw bootstrap_draw(const StageDesign& design, double tau, const QrpcaFit& base,
                                    const Eigen::VectorXd& unit_weights, int threads = 1) {
  return bootstrap_from_stage(stage_one(design, tau, &unit_weights, threads, false), base);
}

inline BootstrapDraw bootstrap_draw(const Panel& panel, const Basis& basis, double tau, const QrpcaFit& base,
                                    const Eigen::VectorXd& unit_weights, int threads = 1) {
  return bootstrap_draw(make_stage_design(panel, basis), tau, base, unit_weights, threads);
}

/// Order statistic ceil(p * n) (1-based, clamped to [1, n]) of the values.
inline double empirical_quantile(std::vector<double> v, double p) {
  require(!v.empty(), ErrorCode::InvalidArgument, "quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = std::ceil(p * static_cast<double>(v.size()) - 1e-9);
  const std::size_t k = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(v.size())));
  return v[k - 1];
}

/// Runs n_draws draws; draw b uses the stream child_seed(seed, b).
inline std::vector<BootstrapDraw> bootstrap_draws(const StageDesign& design, double tau, const QrpcaFit& base,
                                                  int n_draws, std::uint64_t seed, int threads = 1) {
  std::vector<BootstrapDraw> draws(static_cast<std::size_t>(std::max(n_draws, 0)));
  parallel_for(draws.size(), threads, [&](std::size_t b) {
    rng::Stream rs(rng::child_seed(seed, b));
    const Eigen::VectorXd w = draw_weights(rs, design.n_units);
    draws[b] = bootstrap_draw(design, tau, base, w, 1);
  });
  return draws;
}

struct AlphaTest {
  double statistic = 0.0;  // a_hat' a_hat
  double critical_value = 0.0;
  double p_value = 1.0;
  bool reject = false;
  int n_draws = 0;
  double level = 0.05;
};

inline AlphaTest alpha_test_from_draws(const QrpcaFit& base, const std::vector<BootstrapDraw>& draws, double level) {
  require(level > 0.0 && level < 1.0, ErrorCode::InvalidArgument, "level must lie in (0,1)");
  require(draws.size() >= 19, ErrorCode::TooFewDraws, "at least 19 bootstrap draws required");
  AlphaTest t;
  t.level = level;
  t.n_draws = static_cast<int>(draws.size());
  t.statistic = base.a_hat.squaredNorm();
  std::vector<double> dist(draws.size());
  std::size_t exceed = 0;
  for (std::size_t b = 0; b < draws.size(); ++b) {
    dist[b] = (draws[b].a_star - base.a_hat).squaredNorm();
    if (dist[b] >= t.statistic) ++exceed;
  }
  t.critical_value = empirical_quantile(dist, 1.0 - level);
  t.p_value = (1.0 + static_cast<double>(exceed)) / (static_cast<double>(draws.size()) + 1.0);
  t.reject = t.statistic > t.critical_value;
  return t;
}

inline AlphaTest alpha_zero_test(const StageDesign& design, double tau, int K, int n_draws, double level,
                                 std::uint64_t seed, int threads = 1) {
  require(n_draws >= 19, ErrorCode::TooFewDraws, "at least 19 bootstrap draws required");
  require(level > 0.0 && level < 1.0, ErrorCode::InvalidArgument, "level must lie in (0,1)");
  const QrpcaFit base = fit(stage_one(design, tau, nullptr, threads), K);
  return alpha_test_from_draws(base, bootstrap_draws(design, tau, base, n_draws, seed, threads), level);
}

inline AlphaTest alpha_zero_test(const Panel& panel, const Basis& basis, double tau, int K, int n_draws, double level,
                                 std::uint64_t seed, int threads = 1) {
  require(n_draws >= 19, ErrorCode::TooFewDraws, "at least 19 bootstrap draws required");
  return alpha_zero_test(make_stage_design(panel, basis), tau, K, n_draws, level, seed, threads);
}

struct BootstrapBands {
  double level = 0.1;
  Eigen::VectorXd a_lo, a_hi;  // P
  Eigen::MatrixXd B_lo, B_hi;  // P x K
  Eigen::VectorXd row_statistic;  // ||B_hat_j||^2
  Eigen::VectorXd row_critical;   // (1 - level) quantile of ||B*_j - B_hat_j||^2
  std::vector<bool> row_reject;
};

/// Basic bootstrap intervals: quantiles of 2 x_hat - x* at level/2 and 1 - level/2.
inline BootstrapBands bootstrap_bands(const std::vector<BootstrapDraw>& draws, const QrpcaFit& base, double level) {
  require(level > 0.0 && level < 1.0, ErrorCode::InvalidArgument, "level must lie in (0,1)");
  require(draws.size() >= 19, ErrorCode::TooFewDraws, "at least 19 bootstrap draws required");
  const Eigen::Index P = base.a_hat.size(), K = base.K;
  BootstrapBands out;
  out.level = level;
  out.a_lo.resize(P);
  out.a_hi.resize(P);
  out.B_lo.resize(P, K);
  out.B_hi.resize(P, K);
  out.row_statistic.resize(P);
  out.row_critical.resize(P);
  out.row_reject.assign(P, false);
  std::vector<double> v(draws.size());
  auto band = [&](double hat, auto&& star, double& lo, double& hi) {
    for (std::size_t b = 0; b < draws.size(); ++b) v[b] = 2.0 * hat - star(draws[b]);
    lo = empirical_quantile(v, 0.5 * level);
    hi = empirical_quantile(v, 1.0 - 0.5 * level);
  };
  for (Eigen::Index j = 0; j < P; ++j) {
    band(base.a_hat(j), [&](const BootstrapDraw& d) { return d.a_star(j); }, out.a_lo(j), out.a_hi(j));
    for (Eigen::Index k = 0; k < K; ++k)
      band(base.B_hat(j, k), [&](const BootstrapDraw& d) { return d.B_star(j, k); }, out.B_lo(j, k), out.B_hi(j, k));
    for (std::size_t b = 0; b < draws.size(); ++b) v[b] = (draws[b].B_star.row(j) - base.B_hat.row(j)).squaredNorm();
    out.row_statistic(j) = base.B_hat.row(j).squaredNorm();
    out.row_critical(j) = empirical_quantile(v, 1.0 - level);
    out.row_reject[j] = out.row_statistic(j) > out.row_critical(j);
  }
  return out;
}

}  // namespace qfm
