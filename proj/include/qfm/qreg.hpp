#pragma once

// Weighted linear quantile regression by a primal-dual (Frisch-Newton) interior
// point method with Mehrotra predictor-corrector steps.
//
// With row weights w_i > 0 the weighted problem is the unweighted one on rows
// (w_i x_i, w_i y_i), since rho_tau(w u) = w rho_tau(u). The unweighted
// problem is solved through its bounded dual LP
//
//   min_a  c'a   s.t.  A a = b,  0 <= a <= 1,
//   A = X',  c = -y,  b = (1 - tau) X'1,
//
// whose multipliers for A a = b are -coef.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "qfm/error.hpp"
#include "qfm/spectral.hpp"

namespace qfm::qreg {

inline double check_loss(double tau, double u) { return (tau - (u <= 0.0 ? 1.0 : 0.0)) * u; }

struct QrProblem {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  double tau = 0.5;
  std::optional<Eigen::VectorXd> weights;
};

struct QrSolution {
  Eigen::VectorXd coef;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct QrOptions {
  double gap_tol = 1e-9;
  int max_iter = 100;
  bool check_rank = true;
  // Snap the interior solution to an interpolating vertex when that is no worse.
  bool refine_vertex = true;
};

/// sum_i w_i rho_tau(y_i - x_i'coef); weights may be null for all ones.
inline double objective(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                        double tau, const Eigen::VectorXd* weights, const Eigen::Ref<const Eigen::VectorXd>& coef) {
  const Eigen::VectorXd r = y - X * coef;
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double li = check_loss(tau, r(i));
    total += weights ? (*weights)(i) * li : li;
  }
  return total;
}

namespace detail {

inline double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
  return a;
}

// Picks p rows in order of increasing |residual| that are linearly independent
// (modified Gram-Schmidt), and returns the coefficient interpolating them.
inline std::optional<Eigen::VectorXd> vertex_through_smallest_residuals(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                                                        const Eigen::Ref<const Eigen::VectorXd>& y,
                                                                        const Eigen::VectorXd& r) {
  const Eigen::Index n = X.rows(), p = X.cols();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(r(a)) < std::abs(r(b));
  });
  Eigen::MatrixXd Q(p, p);
  std::vector<Eigen::Index> chosen;
  chosen.reserve(p);
  for (Eigen::Index k = 0; k < n && static_cast<Eigen::Index>(chosen.size()) < p; ++k) {
    Eigen::VectorXd v = X.row(order[k]).transpose();
    const double norm0 = v.norm();
    if (norm0 == 0.0) continue;
    for (std::size_t j = 0; j < chosen.size(); ++j) v -= Q.col(j).dot(v) * Q.col(j);
    const double norm = v.norm();
    if (norm <= 1e-8 * norm0) continue;
    Q.col(chosen.size()) = v / norm;
    chosen.push_back(order[k]);
  }
  if (static_cast<Eigen::Index>(chosen.size()) < p) return std::nullopt;
  Eigen::MatrixXd XS(p, p);
  Eigen::VectorXd yS(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    XS.row(j) = X.row(chosen[j]);
    yS(j) = y(chosen[j]);
  }
  Eigen::VectorXd coef = Eigen::FullPivLU<Eigen::MatrixXd>(XS).solve(yS);
  if (!coef.allFinite()) return std::nullopt;
  return coef;
}

}  // namespace detail

inline QrSolution solve_qr(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                           double tau, const Eigen::VectorXd* weights = nullptr, const QrOptions& opt = {}) {
  const Eigen::Index n = X.rows(), p = X.cols();
  require(tau > 0.0 && tau < 1.0, ErrorCode::InvalidArgument, "tau must lie in (0,1)");
  require(y.size() == n, ErrorCode::DimensionMismatch, "X and y row counts differ");
  require(p >= 1, ErrorCode::DegenerateProblem, "no regressors");
  require(n >= p, ErrorCode::DegenerateProblem,
          "n = " + std::to_string(n) + " observations for " + std::to_string(p) + " coefficients");
  require(X.allFinite() && y.allFinite(), ErrorCode::NonFiniteInput, "non-finite data in quantile regression");
  if (weights) {
    require(weights->size() == n, ErrorCode::DimensionMismatch, "weight vector length");
    for (Eigen::Index i = 0; i < n; ++i)
      require(std::isfinite((*weights)(i)) && (*weights)(i) > 0.0, ErrorCode::InvalidArgument,
              "weights must be positive and finite");
  }
  if (opt.check_rank) {
    const int rank = numerical_rank(X);
    require(rank == p, ErrorCode::RankDeficient,
            "design has numerical rank " + std::to_string(rank) + " < " + std::to_string(p));
  }

  Eigen::MatrixXd A;  // scaled design, n x p
  Eigen::VectorXd yy;
  if (weights) {
    A = weights->asDiagonal() * X;
    yy = weights->cwiseProduct(y);
  } else {
    A = X;
    yy = y;
  }

  auto scaled_objective = [&](const Eigen::VectorXd& coef) {
    const Eigen::VectorXd r = yy - A * coef;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += check_loss(tau, r(i));
    return total;
  };

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd c = -yy;
  const Eigen::VectorXd b = (1.0 - tau) * (A.transpose() * ones);

  // Feasible start: a = 1 - tau, slack s = tau, dual multipliers from least squares.
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 - tau);
  Eigen::VectorXd s = Eigen::VectorXd::Constant(n, tau);
  Eigen::VectorXd coef = (A.transpose() * A).ldlt().solve(A.transpose() * yy);
  Eigen::VectorXd dual = -coef;
  Eigen::VectorXd z(n), w(n);
  {
    const Eigen::VectorXd r = yy - A * coef;
    const double scale = r.cwiseAbs().mean() + 1e-10 * (1.0 + yy.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < n; ++i) {
      z(i) = std::max(-r(i), 0.0) + scale;
      w(i) = std::max(r(i), 0.0) + scale;
    }
  }

  QrSolution best;
  best.coef = coef;
  best.objective = scaled_objective(coef);

  Eigen::VectorXd theta(n), q(n), dx(n), ds(n), dz(n), dw(n), dy(p);
  Eigen::VectorXd rxz(n), rsw(n), dxa(n), dsa(n), dza(n), dwa(n);
  Eigen::MatrixXd M(p, p), G(n, p);
  Eigen::LLT<Eigen::MatrixXd> llt(p);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(p);
  bool use_ldlt = false;

  bool converged = false;
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    const double gap = x.dot(z) + s.dot(w);
    if (gap <= opt.gap_tol * (1.0 + std::abs(c.dot(x)))) {
      converged = true;
      break;
    }
    const double mu = gap / (2.0 * n);

    const Eigen::VectorXd rp = b - A.transpose() * x;
    const Eigen::VectorXd ru = ones - x - s;
    const Eigen::VectorXd rd = c - A * dual - z + w;

    theta = ((z.array() / x.array()) + (w.array() / s.array())).inverse().matrix();
    G = A.array().colwise() * theta.array().sqrt();
    M.setZero();
    M.selfadjointView<Eigen::Lower>().rankUpdate(G.transpose());
    M.triangularView<Eigen::StrictlyUpper>() = M.transpose();
    llt.compute(M);
    use_ldlt = llt.info() != Eigen::Success;
    if (use_ldlt) ldlt.compute(M);

    // Solves the reduced system for right-hand sides (rxz, rsw).
    auto newton = [&](const Eigen::VectorXd& rxz_, const Eigen::VectorXd& rsw_, Eigen::VectorXd& dx_,
                      Eigen::VectorXd& ds_, Eigen::VectorXd& dz_, Eigen::VectorXd& dw_) {
      q = rd.array() - rxz_.array() / x.array() + (rsw_.array() - w.array() * ru.array()) / s.array();
      const Eigen::VectorXd rhs = rp + A.transpose() * theta.cwiseProduct(q);
      dy = use_ldlt ? Eigen::VectorXd(ldlt.solve(rhs)) : Eigen::VectorXd(llt.solve(rhs));
      dx_ = theta.cwiseProduct(A * dy - q);
      ds_ = ru - dx_;
      dz_ = (rxz_.array() - z.array() * dx_.array()) / x.array();
      dw_ = (rsw_.array() - w.array() * ds_.array()) / s.array();
    };

    // predictor
    rxz = -x.cwiseProduct(z);
    rsw = -s.cwiseProduct(w);
    newton(rxz, rsw, dxa, dsa, dza, dwa);
    const Eigen::VectorXd dya = dy;
    const double ap = std::min(detail::max_step(x, dxa), detail::max_step(s, dsa));
    const double ad = std::min(detail::max_step(z, dza), detail::max_step(w, dwa));
    const double mu_aff = ((x + ap * dxa).dot(z + ad * dza) + (s + ap * dsa).dot(w + ad * dwa)) / (2.0 * n);
    const double sigma = std::pow(mu_aff / mu, 3);

    // corrector
    rxz = (sigma * mu - (x.array() * z.array()) - dxa.array() * dza.array()).matrix();
    rsw = (sigma * mu - (s.array() * w.array()) - dsa.array() * dwa.array()).matrix();
    newton(rxz, rsw, dx, ds, dz, dw);
    if (!dx.allFinite() || !dy.allFinite() || !dz.allFinite() || !dw.allFinite()) break;

    const double step = 0.99995;
    const double alpha_p = std::min(1.0, step * std::min(detail::max_step(x, dx), detail::max_step(s, ds)));
    const double alpha_d = std::min(1.0, step * std::min(detail::max_step(z, dz), detail::max_step(w, dw)));
    x += alpha_p * dx;
    s += alpha_p * ds;
    dual += alpha_d * dy;
    z += alpha_d * dz;
    w += alpha_d * dw;

    coef = -dual;
    const double obj = scaled_objective(coef);
    if (obj <= best.objective) {
      best.coef = coef;
      best.objective = obj;
    }
  }

  QrSolution sol;
  sol.iterations = it;
  sol.converged = converged;
  if (converged) {
    coef = -dual;
    sol.coef = coef;
    sol.objective = scaled_objective(coef);
    if (best.objective < sol.objective) {
      sol.coef = best.coef;
      sol.objective = best.objective;
    }
  } else {
    sol.coef = best.coef;
    sol.objective = best.objective;
  }

  if (opt.refine_vertex) {
    const Eigen::VectorXd r = yy - A * sol.coef;
    if (auto v = detail::vertex_through_smallest_residuals(A, yy, r)) {
      const double obj_v = scaled_objective(*v);
      if (obj_v <= sol.objective + 1e-12 * (1.0 + sol.objective)) {
        sol.coef = *v;
        sol.objective = obj_v;
      }
    }
  }
  return sol;
}

inline QrSolution solve_qr(const QrProblem& problem, const QrOptions& opt = {}) {
  return solve_qr(problem.X, problem.y, problem.tau, problem.weights ? &*problem.weights : nullptr, opt);
}

/// First-order optimality residual: the largest amount by which the
/// subgradient condition fails at coef, over coordinates. Residuals with
/// |r_i| <= zero_tol count as zero and contribute either subgradient extreme.
inline double subgradient_violation(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                                    double tau, const Eigen::VectorXd* weights,
                                    const Eigen::Ref<const Eigen::VectorXd>& coef, double zero_tol) {
  const Eigen::VectorXd r = y - X * coef;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    double g = 0.0, slack = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double wi = weights ? (*weights)(i) : 1.0;
      if (std::abs(r(i)) <= zero_tol) {
        slack += wi * std::abs(X(i, j)) * std::max(tau, 1.0 - tau);
      } else {
        g += wi * X(i, j) * (tau - (r(i) < 0.0 ? 1.0 : 0.0));
      }
    }
    worst = std::max(worst, std::abs(g) - slack);
  }
  return worst;
}

}  // namespace qfm::qreg
