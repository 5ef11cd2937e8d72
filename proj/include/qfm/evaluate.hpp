#pragma once

// Goodness-of-fit of extracted factors for a panel of portfolio returns:
// in-sample R^2 with and without the time-series intercept, and
// out-of-sample predictive R^2 with expanding-window risk premia. All
// denominators are raw sums of squared returns.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "qfm/csv.hpp"
#include "qfm/error.hpp"
#include "qfm/spectral.hpp"

namespace qfm {

struct ReturnPanel {
  Eigen::MatrixXd R;  // N x T
  std::vector<std::string> labels;
};

struct FactorSeries {
  Eigen::MatrixXd F;  // T x K
};

struct InSampleR2 {
  double total = 0.0;    // R^2
  double ts_avg = 0.0;   // R^2_{T,N}: average over portfolios of time-series R^2
  double cs_avg = 0.0;   // R^2_{N,T}: average over periods of cross-sectional R^2
  double f_total = 0.0;  // same three with the intercept left out of the fit
  double f_ts_avg = 0.0;
  double f_cs_avg = 0.0;
};

struct OutOfSampleR2 {
  double total = 0.0;   // R^2_O
  double ts_avg = 0.0;  // R^2_{T,N,O}
  double cs_avg = 0.0;  // R^2_{N,T,O}
};

namespace detail {

inline void check_inputs(const ReturnPanel& r, const FactorSeries& f) {
  require(r.R.size() > 0 && f.F.cols() >= 1, ErrorCode::InvalidArgument, "empty returns or factors");
  require(r.R.cols() == f.F.rows(), ErrorCode::DimensionMismatch,
          "returns have T = " + std::to_string(r.R.cols()) + ", factors have T = " + std::to_string(f.F.rows()));
  require(r.R.allFinite() && f.F.allFinite(), ErrorCode::NonFiniteInput, "non-finite returns or factors");
}

// 1 - SSE/SST overall, averaged by row (portfolio) and by column (period).
inline void r2_triplet(const Eigen::MatrixXd& R, const Eigen::MatrixXd& fitted, double& total, double& by_row,
                       double& by_col) {
  const Eigen::ArrayXXd e2 = (R - fitted).array().square();
  const Eigen::ArrayXXd r2 = R.array().square();
  require(r2.sum() > 0.0, ErrorCode::DegenerateProblem, "all returns are zero");
  total = 1.0 - e2.sum() / r2.sum();
  const Eigen::ArrayXd row_den = r2.rowwise().sum(), col_den = r2.colwise().sum().transpose();
  require((row_den > 0.0).all(), ErrorCode::DegenerateProblem, "a portfolio has all-zero returns");
  require((col_den > 0.0).all(), ErrorCode::DegenerateProblem, "a period has all-zero returns");
  by_row = 1.0 - (e2.rowwise().sum() / row_den).mean();
  by_col = 1.0 - (e2.colwise().sum().transpose() / col_den).mean();
}

inline Eigen::MatrixXd with_constant(const Eigen::Ref<const Eigen::MatrixXd>& F) {
  Eigen::MatrixXd D(F.rows(), F.cols() + 1);
  D.col(0).setOnes();
  D.rightCols(F.cols()) = F;
  return D;
}

// (K+1) x N coefficients of every portfolio on (1, f_t), rows 0..s-1.
inline Eigen::MatrixXd ts_coefficients(const Eigen::MatrixXd& D, const Eigen::MatrixXd& R) {
  const int rank = numerical_rank(D);
  require(rank == D.cols(), ErrorCode::RankDeficient,
          "factor design has rank " + std::to_string(rank) + " < " + std::to_string(D.cols()));
  return D.colPivHouseholderQr().solve(R.transpose());
}

}  // namespace detail

inline InSampleR2 r2_insample(const ReturnPanel& returns, const FactorSeries& factors) {
  detail::check_inputs(returns, factors);
  const Eigen::Index T = returns.R.cols(), K = factors.F.cols();
  require(T >= K + 2, ErrorCode::InsufficientHistory, "need T >= K + 2 periods");
  const Eigen::MatrixXd D = detail::with_constant(factors.F);
  const Eigen::MatrixXd C = detail::ts_coefficients(D, returns.R);  // (K+1) x N
  const Eigen::MatrixXd fitted = (D * C).transpose();
  const Eigen::MatrixXd fitted_f = (factors.F * C.bottomRows(K)).transpose();
  InSampleR2 out;
  detail::r2_triplet(returns.R, fitted, out.total, out.ts_avg, out.cs_avg);
  detail::r2_triplet(returns.R, fitted_f, out.f_total, out.f_ts_avg, out.f_cs_avg);
  return out;
}

/// Windows s = burn_in..T-1 (1-based: data through s predict period s+1).
inline OutOfSampleR2 r2_oos(const ReturnPanel& returns, const FactorSeries& factors, int burn_in = 240) {
  detail::check_inputs(returns, factors);
  require(burn_in >= 1, ErrorCode::InvalidArgument, "burn_in must be >= 1");
  const Eigen::Index N = returns.R.rows(), T = returns.R.cols(), K = factors.F.cols();
  require(T > burn_in + 1, ErrorCode::InsufficientHistory,
          "T = " + std::to_string(T) + " periods, need more than burn_in + 1 = " + std::to_string(burn_in + 1));
  const Eigen::MatrixXd D = detail::with_constant(factors.F);
  const Eigen::Index W = T - burn_in;
  Eigen::MatrixXd actual(N, W), pred(N, W);
  for (Eigen::Index w = 0; w < W; ++w) {
    const Eigen::Index s = burn_in + w;  // number of periods used
    const Eigen::MatrixXd C = detail::ts_coefficients(D.topRows(s), returns.R.leftCols(s));
    const Eigen::MatrixXd beta = C.bottomRows(K).transpose();  // N x K
    const Eigen::VectorXd rbar = returns.R.leftCols(s).rowwise().mean();
    const Eigen::VectorXd lambda = ols(beta, rbar, false);
    pred.col(w) = beta * lambda;
    actual.col(w) = returns.R.col(s);
  }
  OutOfSampleR2 out;
  detail::r2_triplet(actual, pred, out.total, out.ts_avg, out.cs_avg);
  return out;
}

/// T rows of numbers; a leading column headed time, period, date or t is
/// kept as labels and not read as data.
inline std::pair<Eigen::MatrixXd, std::vector<std::string>> read_time_table(const std::string& path,
                                                                            std::vector<std::string>* row_labels = nullptr) {
  const csv::Table t = csv::read_table(path);
  std::size_t first = 0;
  if (!t.header.empty()) {
    const std::string& h = t.header[0];
    if (h == "time" || h == "period" || h == "date" || h == "t") first = 1;
  }
  require(t.header.size() > first, ErrorCode::MissingColumn, path + ": no data columns");
  const std::size_t cols = t.header.size() - first;
  Eigen::MatrixXd A(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    require(t.rows[r].size() == t.header.size(), ErrorCode::DimensionMismatch,
            path + ": row " + std::to_string(r + 2) + " has " + std::to_string(t.rows[r].size()) + " fields");
    if (row_labels && first) row_labels->push_back(t.rows[r][0]);
    for (std::size_t c = 0; c < cols; ++c) {
      const auto v = csv::parse_double(t.rows[r][first + c]);
      require(v.has_value(), ErrorCode::NonNumericCell,
              path + ": row " + std::to_string(r + 2) + ", column '" + t.header[first + c] + "'");
      A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *v;
    }
  }
  return {A, std::vector<std::string>(t.header.begin() + static_cast<std::ptrdiff_t>(first), t.header.end())};
}

}  // namespace qfm
