#pragma once

// Brute-force quantile regression for tiny problems: an optimal basic
// solution of the LP interpolates P observations, so scanning every P-subset
// finds the global minimum.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "qfm/error.hpp"
#include "qfm/qreg.hpp"

namespace qfm::qreg {

struct OracleSolution : QrSolution {
  // Another subset reaches the same objective (within 1e-12 relative) at a
  // different coefficient vector.
  bool tie = false;
};

inline OracleSolution oracle_qr(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                                double tau, const Eigen::VectorXd* weights = nullptr) {
  const int n = static_cast<int>(X.rows()), p = static_cast<int>(X.cols());
  require(n <= 14 && p <= 3, ErrorCode::GuardExceeded,
          "oracle limited to n <= 14 and P <= 3 (got n = " + std::to_string(n) + ", P = " + std::to_string(p) + ")");
  require(tau > 0.0 && tau < 1.0, ErrorCode::InvalidArgument, "tau must lie in (0,1)");
  require(y.size() == n, ErrorCode::DimensionMismatch, "X and y row counts differ");
  require(p >= 1 && n >= p, ErrorCode::DegenerateProblem, "need n >= P >= 1");

  std::vector<Eigen::VectorXd> candidates;
  std::vector<double> objectives;
  std::vector<int> idx(p);
  for (int k = 0; k < p; ++k) idx[k] = k;
  Eigen::MatrixXd XS(p, p);
  Eigen::VectorXd yS(p);
  for (;;) {
    for (int k = 0; k < p; ++k) {
      XS.row(k) = X.row(idx[k]);
      yS(k) = y(idx[k]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(XS);
    lu.setThreshold(1e-12);
    if (lu.isInvertible()) {
      Eigen::VectorXd coef = lu.solve(yS);
      if (coef.allFinite()) {
        objectives.push_back(objective(X, y, tau, weights, coef));
        candidates.push_back(std::move(coef));
      }
    }
    // next subset in lexicographic order
    int k = p - 1;
    while (k >= 0 && idx[k] == n - p + k) --k;
    if (k < 0) break;
    ++idx[k];
    for (int j = k + 1; j < p; ++j) idx[j] = idx[j - 1] + 1;
  }
  require(!candidates.empty(), ErrorCode::NoNonsingularSubset, "every P-subset of rows is singular");

  std::size_t best = 0;
  for (std::size_t c = 1; c < candidates.size(); ++c)
    if (objectives[c] < objectives[best]) best = c;

  OracleSolution sol;
  sol.coef = candidates[best];
  sol.objective = objectives[best];
  sol.iterations = static_cast<int>(candidates.size());
  sol.converged = true;
  const double tol = 1e-12 * (1.0 + std::abs(sol.objective));
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (c == best || objectives[c] > sol.objective + tol) continue;
    if ((candidates[c] - sol.coef).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + sol.coef.cwiseAbs().maxCoeff())) {
      sol.tie = true;
      break;
    }
  }
  return sol;
}

inline OracleSolution oracle_qr(const QrProblem& problem) {
  return oracle_qr(problem.X, problem.y, problem.tau, problem.weights ? &*problem.weights : nullptr);
}

}  // namespace qfm::qreg
