#pragma once

// Two-step estimator: per-period quantile regressions of y on phi(z) stacked
// into Ytilde (P x T), then principal components of Ytilde M_T Ytilde' / T.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qfm/csv.hpp"
#include "qfm/error.hpp"
#include "qfm/panel.hpp"
#include "qfm/parallel.hpp"
#include "qfm/qreg.hpp"
#include "qfm/selectk.hpp"
#include "qfm/sieve.hpp"
#include "qfm/spectral.hpp"

namespace qfm {

/// Per-period design matrices, built once and reused by every quantile and
/// bootstrap draw.
struct StageDesign {
  int P = 0;
  int n_units = 0;
  std::vector<std::string> periods;
  std::vector<Eigen::MatrixXd> X;  // N_t x P
  std::vector<Eigen::VectorXd> y;
  std::vector<std::vector<int>> units;  // unit indices of the rows of X[t]

  int T() const { return static_cast<int>(X.size()); }
  int min_period_size() const {
    int n = T() ? static_cast<int>(X[0].rows()) : 0;
    for (const auto& x : X) n = std::min(n, static_cast<int>(x.rows()));
    return n;
  }
};

inline StageDesign make_stage_design(const Panel& panel, const Basis& basis) {
  require(basis.M() == panel.M(), ErrorCode::DimensionMismatch,
          "basis expects " + std::to_string(basis.M()) + " characteristics, panel has " + std::to_string(panel.M()));
  StageDesign d;
  d.P = basis.P();
  d.n_units = panel.n_units();
  d.periods = panel.periods();
  const int T = panel.T();
  d.X.resize(T);
  d.y.resize(T);
  d.units.resize(T);
  for (int t = 0; t < T; ++t) {
    const CrossSection& cs = panel.section(t);
    require(cs.size() >= d.P, ErrorCode::InsufficientObservations,
            "period '" + panel.periods()[t] + "' has N_t = " + std::to_string(cs.size()) + " < P = " +
                std::to_string(d.P));
    d.X[t] = basis.design(cs.Z);
    d.y[t] = cs.y;
    d.units[t] = cs.units;
  }
  return d;
}

struct StageOne {
  double tau = 0.5;
  Eigen::MatrixXd Ytilde;  // P x T
  std::vector<bool> per_period_converged;

  int converged_periods() const {
    return static_cast<int>(std::count(per_period_converged.begin(), per_period_converged.end(), true));
  }
};

/// unit_weights, when given, is indexed by unit (the whole panel universe) and
/// the same entries are used in every period.
inline StageOne stage_one(const StageDesign& d, double tau, const Eigen::VectorXd* unit_weights = nullptr,
                          int threads = 1, bool check_rank = true) {
  require(tau > 0.0 && tau < 1.0, ErrorCode::InvalidArgument, "tau must lie in (0,1)");
  if (unit_weights)
    require(unit_weights->size() == d.n_units, ErrorCode::DimensionMismatch, "one weight per unit required");
  const int T = d.T();
  StageOne s;
  s.tau = tau;
  s.Ytilde.resize(d.P, T);
  std::vector<char> conv(T, 0);
  qreg::QrOptions opt;
  opt.check_rank = check_rank;
  parallel_for(static_cast<std::size_t>(T), threads, [&](std::size_t t) {
    Eigen::VectorXd w;
    if (unit_weights) {
      const auto& u = d.units[t];
      w.resize(static_cast<Eigen::Index>(u.size()));
      for (std::size_t i = 0; i < u.size(); ++i) w(static_cast<Eigen::Index>(i)) = (*unit_weights)(u[i]);
    }
    const auto sol = qreg::solve_qr(d.X[t], d.y[t], tau, unit_weights ? &w : nullptr, opt);
    s.Ytilde.col(static_cast<Eigen::Index>(t)) = sol.coef;
    conv[t] = sol.converged ? 1 : 0;
  });
  s.per_period_converged.assign(conv.begin(), conv.end());
  return s;
}

inline StageOne stage_one(const Panel& panel, const Basis& basis, double tau, int threads = 1) {
  return stage_one(make_stage_design(panel, basis), tau, nullptr, threads);
}

struct QrpcaFit {
  double tau = 0.5;
  int K = 1;
  Eigen::VectorXd a_hat;    // P
  Eigen::MatrixXd B_hat;    // P x K
  Eigen::MatrixXd F_hat;    // T x K
  Eigen::VectorXd eigvals;  // min(P, T), descending
  int converged_periods = 0;
  std::optional<KSelection> selection;
};

namespace detail {

struct Spectrum {
  Eigen::VectorXd ybar;
  EigenPairs eig;  // eigenvalues below 1e-13 * trace are set to 0
};

inline Spectrum spectrum(const Eigen::MatrixXd& Y) {
  const Eigen::Index T = Y.cols();
  const Eigen::MatrixXd Yc = demean_time(Y);
  Eigen::MatrixXd S = (Yc * Yc.transpose()) / static_cast<double>(T);
  Spectrum sp;
  sp.eig = sym_eig(S);
  const double tol = 1e-13 * std::max(S.trace(), 0.0);
  for (Eigen::Index k = 0; k < sp.eig.values.size(); ++k)
    if (sp.eig.values(k) <= tol) sp.eig.values(k) = 0.0;
  sp.ybar = Y.rowwise().mean();
  return sp;
}

// Top-K eigenvectors. Columns that fall in the null space of S are chosen
// orthogonal to the time mean, so it stays in the intercept.
inline Eigen::MatrixXd leading_vectors(const Spectrum& sp, int K) {
  const Eigen::MatrixXd& V = sp.eig.vectors;
  const Eigen::Index P = V.rows();
  int r = 0;
  while (r < K && sp.eig.values(r) > 0.0) ++r;
  Eigen::MatrixXd B(P, K);
  B.leftCols(r) = V.leftCols(r);
  if (r == K) return B;

  const Eigen::Index n0 = P - r;
  const Eigen::MatrixXd Z = V.rightCols(n0);
  const Eigen::VectorXd u = Z.transpose() * sp.ybar;
  const double un = u.norm();
  Eigen::MatrixXd extra;
  if (un > 0.0 && K - r <= n0 - 1) {
    // Householder reflector whose first column is +-u/|u|.
    Eigen::VectorXd w = u / un;
    w(0) += w(0) >= 0.0 ? 1.0 : -1.0;
    const Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n0, n0) - (2.0 / w.squaredNorm()) * (w * w.transpose());
    extra = Z * H.middleCols(1, K - r);
  } else {
    extra = Z.leftCols(K - r);
  }
  fix_signs(extra);
  B.rightCols(K - r) = extra;
  return B;
}

inline QrpcaFit assemble(const StageOne& stage, const Spectrum& sp, int K) {
  const Eigen::Index P = stage.Ytilde.rows(), T = stage.Ytilde.cols();
  QrpcaFit f;
  f.tau = stage.tau;
  f.K = K;
  f.B_hat = leading_vectors(sp, K);
  f.a_hat = sp.ybar - f.B_hat * (f.B_hat.transpose() * sp.ybar);
  f.a_hat -= f.B_hat * (f.B_hat.transpose() * f.a_hat);
  f.F_hat = stage.Ytilde.transpose() * f.B_hat;
  f.eigvals = sp.eig.values.head(std::min(P, T));
  f.converged_periods = stage.converged_periods();
  return f;
}

inline void check_k(int K, Eigen::Index P, Eigen::Index T) {
  require(K >= 1 && K <= std::min<Eigen::Index>(P, T - 1), ErrorCode::KOutOfRange,
          "K = " + std::to_string(K) + " outside [1, min(P, T-1)] = [1, " +
              std::to_string(std::min<Eigen::Index>(P, T - 1)) + "]");
}

}  // namespace detail

inline QrpcaFit fit(const StageOne& stage, int K) {
  detail::check_k(K, stage.Ytilde.rows(), stage.Ytilde.cols());
  return detail::assemble(stage, detail::spectrum(stage.Ytilde), K);
}

/// Eigenvalues of Ytilde M_T Ytilde' / T, descending, min(P, T) of them.
inline Eigen::VectorXd stage_spectrum(const StageOne& stage) {
  const auto sp = detail::spectrum(stage.Ytilde);
  return sp.eig.values.head(std::min(stage.Ytilde.rows(), stage.Ytilde.cols()));
}

struct NormalizationError {
  double orthonormality = 0.0;  // max |B'B - I|
  double identification = 0.0;  // max |a'B|
  double offdiag = 0.0;         // max off-diagonal |F' M_T F / T|
  double diag = 0.0;            // max |diag(F' M_T F / T) - eigvals[0..K)|
};

inline NormalizationError normalization_error(const QrpcaFit& f) {
  NormalizationError e;
  const Eigen::Index K = f.B_hat.cols();
  e.orthonormality = (f.B_hat.transpose() * f.B_hat - Eigen::MatrixXd::Identity(K, K)).cwiseAbs().maxCoeff();
  e.identification = (f.a_hat.transpose() * f.B_hat).cwiseAbs().maxCoeff();
  const Eigen::MatrixXd Fc = center_columns(f.F_hat);
  const Eigen::MatrixXd G = Fc.transpose() * Fc / static_cast<double>(f.F_hat.rows());
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = 0; j < K; ++j)
      if (i != j) e.offdiag = std::max(e.offdiag, std::abs(G(i, j)));
  for (Eigen::Index k = 0; k < K; ++k) e.diag = std::max(e.diag, std::abs(G(k, k) - f.eigvals(k)));
  return e;
}

inline double predict_alpha(const QrpcaFit& f, const Basis& basis, const Eigen::Ref<const Eigen::VectorXd>& z) {
  require(basis.P() == f.a_hat.size(), ErrorCode::DimensionMismatch,
          "basis dimension " + std::to_string(basis.P()) + " != fit dimension " + std::to_string(f.a_hat.size()));
  return f.a_hat.dot(basis.eval(z));
}

inline Eigen::VectorXd predict_beta(const QrpcaFit& f, const Basis& basis, const Eigen::Ref<const Eigen::VectorXd>& z) {
  require(basis.P() == f.B_hat.rows(), ErrorCode::DimensionMismatch,
          "basis dimension " + std::to_string(basis.P()) + " != fit dimension " + std::to_string(f.B_hat.rows()));
  return f.B_hat.transpose() * basis.eval(z);
}

struct KRule {
  enum class Kind { Fixed, Ratio, Threshold };
  Kind kind = Kind::Fixed;
  int K = 1;              // Fixed
  int kmax = 0;           // 0: default tuning
  double lambda_n = 0.0;  // 0: default tuning

  static KRule fixed(int k) { return KRule{Kind::Fixed, k, 0, 0.0}; }
};

/// Fit one quantile with the given rule; the selection record is attached.
inline QrpcaFit fit_with_rule(const StageOne& stage, const KRule& rule, int min_period_size) {
  const Eigen::Index P = stage.Ytilde.rows(), T = stage.Ytilde.cols();
  const auto sp = detail::spectrum(stage.Ytilde);
  const Eigen::VectorXd ev = sp.eig.values.head(std::min(P, T));
  Tuning tun;
  const bool need_default = rule.kmax <= 0 || rule.lambda_n <= 0.0;
  if (need_default) tun = default_tuning(min_period_size, static_cast<int>(P), static_cast<int>(T));
  if (rule.kmax > 0) tun.kmax = rule.kmax;
  if (rule.lambda_n > 0.0) tun.lambda_n = rule.lambda_n;
  std::optional<KSelection> sel;
  int K = rule.K;
  if (rule.kind != KRule::Kind::Fixed || rule.kmax > 0 || rule.lambda_n > 0.0) {
    if (ev.size() >= tun.kmax + 1) sel = select_k(ev, tun.kmax, tun.lambda_n);
  }
  if (rule.kind == KRule::Kind::Ratio) {
    require(sel.has_value(), ErrorCode::TooFewEigenvalues, "not enough eigenvalues for Kmax = " + std::to_string(tun.kmax));
    K = sel->k_ratio;
  } else if (rule.kind == KRule::Kind::Threshold) {
    require(sel.has_value(), ErrorCode::TooFewEigenvalues, "not enough eigenvalues for Kmax = " + std::to_string(tun.kmax));
    K = sel->k_threshold;
    require(K >= 1, ErrorCode::DegenerateProblem, "no eigenvalue reaches the threshold " + csv::format_double(tun.lambda_n));
    K = std::min<int>(K, static_cast<int>(std::min(P, T - 1)));
  }
  detail::check_k(K, P, T);
  QrpcaFit f = detail::assemble(stage, sp, K);
  f.selection = sel;
  return f;
}

inline std::map<double, QrpcaFit> fit_quantile_path(const Panel& panel, const Basis& basis,
                                                    const std::vector<double>& taus, const KRule& rule,
                                                    int threads = 1) {
  require(!taus.empty(), ErrorCode::InvalidArgument, "at least one quantile index required");
  for (double tau : taus) require(tau > 0.0 && tau < 1.0, ErrorCode::InvalidArgument, "tau must lie in (0,1)");
  const StageDesign d = make_stage_design(panel, basis);
  std::vector<QrpcaFit> fits(taus.size());
  const int outer = taus.size() > 1 ? threads : 1;
  const int inner = taus.size() > 1 ? 1 : threads;
  parallel_for(taus.size(), outer, [&](std::size_t j) {
    fits[j] = fit_with_rule(stage_one(d, taus[j], nullptr, inner), rule, d.min_period_size());
  });
  std::map<double, QrpcaFit> out;
  for (std::size_t j = 0; j < taus.size(); ++j) out[taus[j]] = std::move(fits[j]);
  return out;
}

// ---- export ---------------------------------------------------------------

inline void write_matrix_csv(const std::string& path, const std::vector<std::string>& header,
                             const Eigen::Ref<const Eigen::MatrixXd>& A) {
  auto out = csv::open_for_write(path);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) out << (j ? "," : "") << csv::format_double(A(i, j));
    out << '\n';
  }
}

inline std::vector<std::string> numbered(const std::string& stem, Eigen::Index n) {
  std::vector<std::string> h;
  for (Eigen::Index k = 1; k <= n; ++k) h.push_back(stem + std::to_string(k));
  return h;
}

inline nlohmann::ordered_json fit_summary(const QrpcaFit& f) {
  nlohmann::ordered_json j;
  j["tau"] = f.tau;
  j["K"] = f.K;
  j["converged_periods"] = f.converged_periods;
  return j;
}

/// a_hat.csv, B_hat.csv, F_hat.csv, eigvals.csv and summary.json in dir.
inline void export_fit(const QrpcaFit& f, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_matrix_csv(dir + "/a_hat.csv", {"a_hat"}, f.a_hat);
  write_matrix_csv(dir + "/B_hat.csv", numbered("b", f.K), f.B_hat);
  write_matrix_csv(dir + "/F_hat.csv", numbered("f", f.K), f.F_hat);
  write_matrix_csv(dir + "/eigvals.csv", {"eigval"}, f.eigvals);
  auto out = csv::open_for_write(dir + "/summary.json");
  out << fit_summary(f).dump(2) << '\n';
}

/// Reads a single-column CSV with a header (e.g. eigvals.csv).
inline Eigen::VectorXd read_vector_csv(const std::string& path) {
  const csv::Table t = csv::read_table(path);
  Eigen::VectorXd v(static_cast<Eigen::Index>(t.rows.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto x = t.rows[r].empty() ? std::nullopt : csv::parse_double(t.rows[r][0]);
    require(x.has_value(), ErrorCode::NonNumericCell, path + ": row " + std::to_string(r + 2) + " is not numeric");
    v(static_cast<Eigen::Index>(r)) = *x;
  }
  return v;
}

}  // namespace qfm
