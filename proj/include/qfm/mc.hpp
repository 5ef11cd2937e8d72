#pragma once

// Simulation designs with known truth, and a seeded replication driver.
//
// Common pieces of every design: f_t = 0.3 f_{t-1} + eta_t (2 factors,
// f_0 ~ N(0, I/0.91)); z1 = sigma_t u1 with sigma_t ~ U(1,2); z2 an AR(0.3)
// with N(0,1) start; z3 ~ N(0,1); beta(z) = (z2 + 0.5 z2^2, 2 z3 + z3^2).
//
//   dgp1: y = z1 + 0.5 z1^2 + beta(z)'f + e,          e ~ t_nu
//   dgp2: y = z1 + 0.5 z1^2 + beta(z)'f + 3|g_t| e,   g_t ~ U(0,1),
//         e_it = rho e_i,t-1 + v_it + omega sum_{0<|j-i|<=L} v_jt
//         (M1: N(0,1) v; M2: t_3 v; M3: rho = omega = 0.2, L = 3, N(0,1) v;
//          neighbours wrap around the unit index)
//   dgp3: y = beta(z)'f + e, e AR(0.3) with N(0,1) innovations
//
// AR errors start at 0 and run 50 burn-in periods.
//
// Draw order from the generation stream: f_0, eta_1..eta_T, sigma_1..sigma_T,
// g_1..g_T (dgp2), z_{i0,2} for every unit; for dgp2/dgp3 the whole error
// matrix (burn-in first, one period at a time, all units per period); then per
// period and unit u_{it,1}, u_{it,2}, u_{it,3} and, for dgp1, the t_nu error.

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qfm/bootstrap.hpp"
#include "qfm/error.hpp"
#include "qfm/panel.hpp"
#include "qfm/parallel.hpp"
#include "qfm/qrpca.hpp"
#include "qfm/rng.hpp"
#include "qfm/selectk.hpp"
#include "qfm/sieve.hpp"
#include "qfm/spectral.hpp"

namespace qfm::mc {

enum class DgpKind { DGP1, DGP2, DGP3 };
enum class ErrorModel { M1, M2, M3 };

inline const char* to_string(DgpKind k) {
  switch (k) {
    case DgpKind::DGP1: return "dgp1";
    case DgpKind::DGP2: return "dgp2";
    case DgpKind::DGP3: return "dgp3";
  }
  return "?";
}

inline const char* to_string(ErrorModel m) {
  switch (m) {
    case ErrorModel::M1: return "M1";
    case ErrorModel::M2: return "M2";
    case ErrorModel::M3: return "M3";
  }
  return "?";
}

struct DgpSpec {
  DgpKind kind = DgpKind::DGP1;
  int nu = 1;                          // dgp1
  ErrorModel model = ErrorModel::M1;   // dgp2
  int N = 100;
  int T = 10;
  std::uint64_t seed = 0;
};

inline void validate(const DgpSpec& s) {
  require(s.N >= 1 && s.T >= 1, ErrorCode::InvalidArgument, "N and T must be positive");
  if (s.kind == DgpKind::DGP1) require(s.nu >= 1 && s.nu <= 3, ErrorCode::InvalidArgument, "nu must be 1, 2 or 3");
}

struct ErrorProcess {
  double rho = 0.0;
  double omega = 0.0;
  int L = 0;
  bool t3 = false;  // innovations t_3 instead of N(0,1)
};

inline ErrorProcess error_process(const DgpSpec& s) {
  if (s.kind == DgpKind::DGP3) return {0.3, 0.0, 0, false};
  switch (s.model) {
    case ErrorModel::M1: return {0.0, 0.0, 0, false};
    case ErrorModel::M2: return {0.0, 0.0, 0, true};
    case ErrorModel::M3: return {0.2, 0.2, 3, false};
  }
  return {};
}

inline constexpr int kBurnIn = 50;

/// tau-quantile of the stationary marginal of e (dgp2 / dgp3).
inline double error_quantile(const DgpSpec& s, double tau) {
  require(tau > 0.0 && tau < 1.0, ErrorCode::InvalidArgument, "tau must lie in (0,1)");
  const ErrorProcess ep = error_process(s);
  if (ep.t3) return boost::math::quantile(boost::math::students_t(3.0), tau);
  const double sd = std::sqrt((1.0 + 2.0 * ep.L * ep.omega * ep.omega) / (1.0 - ep.rho * ep.rho));
  return sd * boost::math::quantile(boost::math::normal(), tau);
}

/// Basis the design is exact in: dgp1 has no intercept (P = 6), the others do (P = 7).
inline BasisSpec basis_spec(const DgpSpec& s) { return BasisSpec::polynomial(2, s.kind != DgpKind::DGP1); }

struct SimTruth {
  DgpSpec spec;
  Eigen::MatrixXd F;      // T x 2
  Eigen::VectorXd abs_g;  // T, dgp2 only

  int K_true(double tau) const { return spec.kind == DgpKind::DGP2 && tau != 0.5 ? 3 : 2; }

  /// Intercept vector in basis coordinates; dgp1 only has one at tau = 0.5.
  std::optional<Eigen::VectorXd> a_true(double tau) const {
    switch (spec.kind) {
      case DgpKind::DGP1: {
        if (tau != 0.5) return std::nullopt;
        Eigen::VectorXd a = Eigen::VectorXd::Zero(6);
        a << 1.0, 0.5, 0, 0, 0, 0;
        return a;
      }
      case DgpKind::DGP2: {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(7);
        a(1) = 1.0;
        a(2) = 0.5;
        return a;
      }
      case DgpKind::DGP3: {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(7);
        a(0) = error_quantile(spec, tau);
        return a;
      }
    }
    return std::nullopt;
  }

  Eigen::MatrixXd B_true(double tau) const {
    const bool icpt = spec.kind != DgpKind::DGP1;
    const int off = icpt ? 1 : 0;
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(6 + off, K_true(tau));
    B(off + 2, 0) = 1.0;
    B(off + 3, 0) = 0.5;
    B(off + 4, 1) = 2.0;
    B(off + 5, 1) = 1.0;
    if (K_true(tau) == 3) B(0, 2) = 3.0 * error_quantile(spec, tau);
    return B;
  }

  Eigen::MatrixXd F_true(double tau) const {
    if (K_true(tau) == 2) return F;
    Eigen::MatrixXd G(F.rows(), 3);
    G.leftCols(2) = F;
    G.col(2) = abs_g;
    return G;
  }
};

namespace detail {

inline std::string unit_label(int i, int width) {
  std::string s = std::to_string(i);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

// N x (T) error matrix, generated period by period.
inline Eigen::MatrixXd gen_errors(rng::Stream& rs, int N, int T, const ErrorProcess& ep) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(N), v(N);
  Eigen::MatrixXd out(N, T);
  const int burn = ep.rho != 0.0 ? kBurnIn : 0;
  for (int s = -burn; s < T; ++s) {
    for (int i = 0; i < N; ++i) v(i) = ep.t3 ? rs.student_t(3.0) : rs.normal();
    Eigen::VectorXd next = ep.rho * e + v;
    if (ep.omega != 0.0) {
      for (int i = 0; i < N; ++i) {
        double acc = 0.0;
        for (int d = 1; d <= ep.L; ++d) acc += v(((i - d) % N + N) % N) + v((i + d) % N);
        next(i) += ep.omega * acc;
      }
    }
    e = next;
    if (s >= 0) out.col(s) = e;
  }
  return out;
}

}  // namespace detail

/// Stationary second moment check helper: the analytic variance of e.
inline double error_variance(const DgpSpec& s) {
  const ErrorProcess ep = error_process(s);
  const double v_var = ep.t3 ? 3.0 : 1.0;
  return v_var * (1.0 + 2.0 * ep.L * ep.omega * ep.omega) / (1.0 - ep.rho * ep.rho);
}

inline std::pair<Panel, SimTruth> generate(const DgpSpec& spec, rng::Stream& rs) {
  validate(spec);
  const int N = spec.N, T = spec.T;
  SimTruth truth;
  truth.spec = spec;

  truth.F.resize(T, 2);
  Eigen::Vector2d f;
  f(0) = rs.normal() / std::sqrt(0.91);
  f(1) = rs.normal() / std::sqrt(0.91);
  for (int t = 0; t < T; ++t) {
    const double e1 = rs.normal(), e2 = rs.normal();
    f = 0.3 * f + Eigen::Vector2d(e1, e2);
    truth.F.row(t) = f.transpose();
  }
  Eigen::VectorXd sigma(T);
  for (int t = 0; t < T; ++t) sigma(t) = rs.uniform(1.0, 2.0);
  if (spec.kind == DgpKind::DGP2) {
    truth.abs_g.resize(T);
    for (int t = 0; t < T; ++t) truth.abs_g(t) = rs.uniform();
  }
  Eigen::VectorXd z2(N);
  for (int i = 0; i < N; ++i) z2(i) = rs.normal();

  const ErrorProcess ep = error_process(spec);
  const int width = static_cast<int>(std::to_string(N).size());
  std::vector<std::string> units(N);
  for (int i = 0; i < N; ++i) units[i] = detail::unit_label(i + 1, width);

  std::vector<int> all(N);
  for (int i = 0; i < N; ++i) all[i] = i;
  std::vector<CrossSection> sections(T);

  const bool ar = spec.kind != DgpKind::DGP1;
  Eigen::MatrixXd E;
  if (ar) E = detail::gen_errors(rs, N, T, ep);

  for (int t = 0; t < T; ++t) {
    CrossSection& cs = sections[t];
    cs.period = std::to_string(t + 1);
    cs.units = all;
    cs.y.resize(N);
    cs.Z.resize(N, 3);
    for (int i = 0; i < N; ++i) {
      const double z1 = sigma(t) * rs.normal();
      z2(i) = 0.3 * z2(i) + rs.normal();
      const double z3 = rs.normal();
      const double b1 = z2(i) + 0.5 * z2(i) * z2(i);
      const double b2 = 2.0 * z3 + z3 * z3;
      const double common = b1 * truth.F(t, 0) + b2 * truth.F(t, 1);
      double y = 0.0;
      switch (spec.kind) {
        case DgpKind::DGP1: y = z1 + 0.5 * z1 * z1 + common + rs.student_t(spec.nu); break;
        case DgpKind::DGP2: y = z1 + 0.5 * z1 * z1 + common + 3.0 * truth.abs_g(t) * E(i, t); break;
        case DgpKind::DGP3: y = common + E(i, t); break;
      }
      cs.y(i) = y;
      cs.Z(i, 0) = z1;
      cs.Z(i, 1) = z2(i);
      cs.Z(i, 2) = z3;
    }
  }
  return {Panel::from_sections(std::move(units), std::move(sections), 3), std::move(truth)};
}

inline std::pair<Panel, SimTruth> gen_dgp1(const DgpSpec& spec, rng::Stream& rs) {
  require(spec.kind == DgpKind::DGP1, ErrorCode::InvalidArgument, "spec is not dgp1");
  return generate(spec, rs);
}
inline std::pair<Panel, SimTruth> gen_dgp2(const DgpSpec& spec, rng::Stream& rs) {
  require(spec.kind == DgpKind::DGP2, ErrorCode::InvalidArgument, "spec is not dgp2");
  return generate(spec, rs);
}
inline std::pair<Panel, SimTruth> gen_dgp3(const DgpSpec& spec, rng::Stream& rs) {
  require(spec.kind == DgpKind::DGP3, ErrorCode::InvalidArgument, "spec is not dgp3");
  return generate(spec, rs);
}

struct MseMetrics {
  std::optional<double> mse_a;
  double mse_B = 0.0;
  double mse_F = 0.0;
};

inline MseMetrics mse_metrics(const QrpcaFit& fit, const Eigen::MatrixXd& B, const Eigen::MatrixXd& F,
                              const std::optional<Eigen::VectorXd>& a) {
  require(fit.K == B.cols() && fit.K == F.cols(), ErrorCode::DimensionMismatch,
          "fit has K = " + std::to_string(fit.K) + ", truth has " + std::to_string(B.cols()));
  const Eigen::MatrixXd H = rotation_H(F, fit.F_hat);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(H.transpose());
  require(lu.isInvertible(), ErrorCode::SingularGram, "rotation matrix is singular");
  MseMetrics m;
  if (a) m.mse_a = (fit.a_hat - *a).squaredNorm();
  m.mse_B = (fit.B_hat - B * H).squaredNorm();
  // F (H')^{-1} = (H^{-1} F')'
  const Eigen::MatrixXd FH = lu.solve(Eigen::MatrixXd::Identity(fit.K, fit.K));
  m.mse_F = (fit.F_hat - F * FH).squaredNorm() / static_cast<double>(F.rows());
  return m;
}

inline MseMetrics mse_metrics(const QrpcaFit& fit, const SimTruth& truth, double tau) {
  return mse_metrics(fit, truth.B_true(tau), truth.F_true(tau), truth.a_true(tau));
}

struct EstimatorConfig {
  int kmax = 0;           // 0: default tuning
  double lambda_n = 0.0;  // 0: default tuning
  bool alpha_test = false;
  int n_draws = 199;
  double level = 0.05;
};

/// Outcome of one (replication, tau) cell.
struct CellResult {
  bool ok = false;
  std::string error;
  int K_true = 0;
  int k_ratio = 0;
  int k_threshold = 0;
  std::optional<double> mse_a;
  double mse_B = 0.0;
  double mse_F = 0.0;
  std::optional<bool> reject;
  std::optional<double> p_value;
  NormalizationError norm;
};

/// Runs every tau on one generated data set. seed is the replication seed.
inline std::vector<CellResult> run_one(const DgpSpec& dgp, const std::vector<double>& taus, const EstimatorConfig& cfg,
                                       std::uint64_t seed) {
  std::vector<CellResult> cells(taus.size());
  std::optional<std::pair<Panel, SimTruth>> data;
  std::string gen_error;
  try {
    rng::Stream rs(rng::child_seed(seed, 0));
    data.emplace(generate(dgp, rs));
  } catch (const std::exception& e) {
    gen_error = e.what();
  }
  if (!data) {
    for (auto& c : cells) c.error = gen_error;
    return cells;
  }
  const Panel& panel = data->first;
  const SimTruth& truth = data->second;
  const Basis basis(basis_spec(dgp), panel.M());
  std::optional<StageDesign> design;
  try {
    design.emplace(make_stage_design(panel, basis));
  } catch (const std::exception& e) {
    for (auto& c : cells) c.error = e.what();
    return cells;
  }
  for (std::size_t j = 0; j < taus.size(); ++j) {
    CellResult& c = cells[j];
    const double tau = taus[j];
    try {
      c.K_true = truth.K_true(tau);
      const StageOne stage = stage_one(*design, tau, nullptr, 1);
      KRule rule = KRule::fixed(c.K_true);
      rule.kmax = cfg.kmax;
      rule.lambda_n = cfg.lambda_n;
      if (rule.kmax <= 0 || rule.lambda_n <= 0.0) {
        const Tuning tun = default_tuning(design->min_period_size(), design->P, design->T());
        if (rule.kmax <= 0) rule.kmax = tun.kmax;
        if (rule.lambda_n <= 0.0) rule.lambda_n = tun.lambda_n;
      }
      const QrpcaFit f = fit_with_rule(stage, rule, design->min_period_size());
      c.k_ratio = f.selection->k_ratio;
      c.k_threshold = f.selection->k_threshold;
      c.norm = normalization_error(f);
      const MseMetrics m = mse_metrics(f, truth, tau);
      c.mse_a = m.mse_a;
      c.mse_B = m.mse_B;
      c.mse_F = m.mse_F;
      if (cfg.alpha_test) {
        const auto draws = bootstrap_draws(*design, tau, f, cfg.n_draws, rng::child_seed(seed, 1, j), 1);
        const AlphaTest at = alpha_test_from_draws(f, draws, cfg.level);
        c.reject = at.reject;
        c.p_value = at.p_value;
      }
      c.ok = true;
    } catch (const std::exception& e) {
      c.error = e.what();
    }
  }
  return cells;
}

struct TauSummary {
  double tau = 0.5;
  int K_true = 0;
  int n_ok = 0;
  int failures = 0;
  double correct_rate_Khat = 0.0, correct_rate_Khat_se = 0.0;
  double correct_rate_Ktilde = 0.0, correct_rate_Ktilde_se = 0.0;
  std::optional<double> mse_a, mse_a_se;
  double mse_B = 0.0, mse_B_se = 0.0;
  double mse_F = 0.0, mse_F_se = 0.0;
  std::optional<double> rejection_rate, rejection_rate_se;
  NormalizationError worst_norm;
};

struct SimReport {
  DgpSpec dgp;
  std::vector<double> taus;
  EstimatorConfig estimator;
  int n_reps = 0;
  std::uint64_t master_seed = 0;
  std::vector<TauSummary> summaries;
  std::vector<std::vector<CellResult>> cells;  // [rep][tau]
  std::optional<double> wall_time_seconds;

  nlohmann::ordered_json to_json() const;
  std::string per_rep_csv() const;
};

namespace detail {

inline double rate_se(double p, int n) { return n > 0 ? std::sqrt(p * (1.0 - p) / n) : 0.0; }

struct MeanSe {
  double sum = 0.0, sumsq = 0.0;
  int n = 0;
  void add(double x) {
    sum += x;
    sumsq += x * x;
    ++n;
  }
  double mean() const { return n ? sum / n : 0.0; }
  double se() const {
    if (n < 2) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(sumsq / n - m * m, 0.0) * n / (n - 1.0) / n);
  }
};

inline nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace detail

inline SimReport run_replications(const DgpSpec& dgp, const std::vector<double>& taus, const EstimatorConfig& cfg,
                                  int n_reps, std::uint64_t master_seed, int threads = 1, bool timing = false) {
  require(n_reps >= 1, ErrorCode::InvalidArgument, "n_reps must be >= 1");
  require(!taus.empty(), ErrorCode::InvalidArgument, "at least one quantile index required");
  for (double tau : taus) require(tau > 0.0 && tau < 1.0, ErrorCode::InvalidArgument, "tau must lie in (0,1)");
  validate(dgp);
  if (cfg.alpha_test) {
    require(cfg.n_draws >= 19, ErrorCode::TooFewDraws, "at least 19 bootstrap draws required");
    require(cfg.level > 0.0 && cfg.level < 1.0, ErrorCode::InvalidArgument, "level must lie in (0,1)");
  }
  const auto t0 = std::chrono::steady_clock::now();
  SimReport rep;
  rep.dgp = dgp;
  rep.dgp.seed = master_seed;
  rep.taus = taus;
  rep.estimator = cfg;
  rep.n_reps = n_reps;
  rep.master_seed = master_seed;
  rep.cells.resize(n_reps);
  parallel_for(static_cast<std::size_t>(n_reps), threads, [&](std::size_t r) {
    rep.cells[r] = run_one(dgp, taus, cfg, rng::child_seed(master_seed, r));
  });

  for (std::size_t j = 0; j < taus.size(); ++j) {
    TauSummary s;
    s.tau = taus[j];
    detail::MeanSe a, b, f;
    int khat = 0, ktil = 0, rej = 0, n_test = 0;
    for (int r = 0; r < n_reps; ++r) {
      const CellResult& c = rep.cells[r][j];
      if (!c.ok) {
        ++s.failures;
        continue;
      }
      ++s.n_ok;
      s.K_true = c.K_true;
      khat += c.k_ratio == c.K_true;
      ktil += c.k_threshold == c.K_true;
      if (c.mse_a) a.add(*c.mse_a);
      b.add(c.mse_B);
      f.add(c.mse_F);
      if (c.reject) {
        ++n_test;
        rej += *c.reject;
      }
      s.worst_norm.orthonormality = std::max(s.worst_norm.orthonormality, c.norm.orthonormality);
      s.worst_norm.identification = std::max(s.worst_norm.identification, c.norm.identification);
      s.worst_norm.offdiag = std::max(s.worst_norm.offdiag, c.norm.offdiag);
      s.worst_norm.diag = std::max(s.worst_norm.diag, c.norm.diag);
    }
    if (s.n_ok > 0) {
      s.correct_rate_Khat = static_cast<double>(khat) / s.n_ok;
      s.correct_rate_Ktilde = static_cast<double>(ktil) / s.n_ok;
      s.correct_rate_Khat_se = detail::rate_se(s.correct_rate_Khat, s.n_ok);
      s.correct_rate_Ktilde_se = detail::rate_se(s.correct_rate_Ktilde, s.n_ok);
      if (a.n) {
        s.mse_a = a.mean();
        s.mse_a_se = a.se();
      }
      s.mse_B = b.mean();
      s.mse_B_se = b.se();
      s.mse_F = f.mean();
      s.mse_F_se = f.se();
    }
    if (n_test > 0) {
      s.rejection_rate = static_cast<double>(rej) / n_test;
      s.rejection_rate_se = detail::rate_se(*s.rejection_rate, n_test);
    }
    rep.summaries.push_back(s);
  }
  if (timing) rep.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline nlohmann::ordered_json SimReport::to_json() const {
  using json = nlohmann::ordered_json;
  json j;
  j["generator"] = rng::kGeneratorName;
  json c;
  c["dgp"] = to_string(dgp.kind);
  if (dgp.kind == DgpKind::DGP1) c["nu"] = dgp.nu;
  if (dgp.kind == DgpKind::DGP2) c["error_model"] = to_string(dgp.model);
  c["n"] = dgp.N;
  c["t"] = dgp.T;
  c["taus"] = taus;
  c["reps"] = n_reps;
  c["seed"] = master_seed;
  c["kmax"] = estimator.kmax > 0 ? json(estimator.kmax) : json("default");
  c["lambda_n"] = estimator.lambda_n > 0.0 ? json(estimator.lambda_n) : json("default");
  if (estimator.alpha_test) {
    c["alpha_test"] = {{"draws", estimator.n_draws}, {"level", estimator.level}};
  }
  j["config"] = c;
  json results = json::array();
  for (const auto& s : summaries) {
    json r;
    r["tau"] = s.tau;
    r["K_true"] = s.K_true;
    r["n_ok"] = s.n_ok;
    r["failures"] = s.failures;
    r["correct_rate_Khat"] = s.correct_rate_Khat;
    r["correct_rate_Khat_se"] = s.correct_rate_Khat_se;
    r["correct_rate_Ktilde"] = s.correct_rate_Ktilde;
    r["correct_rate_Ktilde_se"] = s.correct_rate_Ktilde_se;
    r["mse_a"] = detail::opt_json(s.mse_a);
    r["mse_a_se"] = detail::opt_json(s.mse_a_se);
    r["mse_B"] = s.mse_B;
    r["mse_B_se"] = s.mse_B_se;
    r["mse_F"] = s.mse_F;
    r["mse_F_se"] = s.mse_F_se;
    if (estimator.alpha_test) {
      r["rejection_rate"] = detail::opt_json(s.rejection_rate);
      r["rejection_rate_se"] = detail::opt_json(s.rejection_rate_se);
    }
    r["max_normalization_error"] = {{"orthonormality", s.worst_norm.orthonormality},
                                    {"identification", s.worst_norm.identification},
                                    {"offdiag", s.worst_norm.offdiag},
                                    {"diag", s.worst_norm.diag}};
    results.push_back(r);
  }
  j["results"] = results;
  json failures = json::array();
  for (int r = 0; r < n_reps; ++r)
    for (std::size_t k = 0; k < taus.size(); ++k)
      if (!cells[r][k].ok) failures.push_back({{"rep", r}, {"tau", taus[k]}, {"error", cells[r][k].error}});
  j["failures"] = failures;
  if (wall_time_seconds) j["wall_time_seconds"] = *wall_time_seconds;
  return j;
}

inline std::string SimReport::per_rep_csv() const {
  std::ostringstream out;
  out << "rep,tau,ok,K_true,k_ratio,k_threshold,mse_a,mse_B,mse_F,reject,p_value\n";
  for (int r = 0; r < n_reps; ++r) {
    for (std::size_t k = 0; k < taus.size(); ++k) {
      const CellResult& c = cells[r][k];
      out << r << ',' << csv::format_double(taus[k]) << ',' << (c.ok ? 1 : 0) << ',' << c.K_true << ',' << c.k_ratio
          << ',' << c.k_threshold << ',' << (c.mse_a ? csv::format_double(*c.mse_a) : "") << ','
          << (c.ok ? csv::format_double(c.mse_B) : "") << ',' << (c.ok ? csv::format_double(c.mse_F) : "") << ','
          << (c.reject ? (*c.reject ? "1" : "0") : "") << ',' << (c.p_value ? csv::format_double(*c.p_value) : "")
          << '\n';
    }
  }
  return out.str();
}

}  // namespace qfm::mc
