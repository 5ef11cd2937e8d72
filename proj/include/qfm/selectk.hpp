#pragma once

// Number-of-factors selection from the spectrum of Ytilde M_T Ytilde' / T.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "qfm/error.hpp"

namespace qfm {

struct KSelection {
  int k_ratio = 1;
  int k_threshold = 0;
  std::vector<double> ratios;  // lambda_k / lambda_{k+1}, k = 1..Kmax; NaN where 0/0
  double threshold_used = 0.0;
  int kmax_used = 1;
};

/// argmax_{k <= Kmax} lambda_k / lambda_{k+1}. Ties go to the smallest k, a
/// zero denominator under a positive numerator is +inf, and 0/0 is skipped.
inline int k_by_ratio(const Eigen::Ref<const Eigen::VectorXd>& eigvals, int kmax, std::vector<double>* ratios = nullptr) {
  require(kmax >= 1, ErrorCode::InvalidArgument, "Kmax must be >= 1");
  require(eigvals.size() >= kmax + 1, ErrorCode::TooFewEigenvalues,
          "need Kmax + 1 = " + std::to_string(kmax + 1) + " eigenvalues, have " + std::to_string(eigvals.size()));
  if (ratios) ratios->clear();
  int best_k = 1;
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 1; k <= kmax; ++k) {
    const double num = std::max(eigvals(k - 1), 0.0);
    const double den = std::max(eigvals(k), 0.0);
    double r;
    if (den == 0.0) {
      r = num == 0.0 ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
    } else {
      r = num / den;
    }
    if (ratios) ratios->push_back(r);
    if (std::isnan(r)) continue;
    if (r > best) {
      best = r;
      best_k = k;
    }
  }
  return best_k;
}

/// #{k : lambda_k >= lambda_N}.
inline int k_by_threshold(const Eigen::Ref<const Eigen::VectorXd>& eigvals, double lambda_n) {
  int count = 0;
  for (Eigen::Index k = 0; k < eigvals.size(); ++k)
    if (eigvals(k) >= lambda_n) ++count;
  return count;
}

struct Tuning {
  int kmax = 1;
  double lambda_n = 0.0;
};

/// Kmax = floor(P/2) and lambda_N = 1/ln(N). When T is given, Kmax is also
/// capped at T - 2 (and kept >= 1).
inline Tuning default_tuning(double n, int p, int t = 0) {
  require(n >= 3.0, ErrorCode::InvalidArgument, "default tuning needs N >= 3");
  require(p >= 2, ErrorCode::InvalidArgument, "default tuning needs P >= 2");
  Tuning tun;
  tun.kmax = p / 2;
  if (t > 0) tun.kmax = std::min(tun.kmax, t - 2);
  tun.kmax = std::max(tun.kmax, 1);
  tun.lambda_n = 1.0 / std::log(n);
  return tun;
}

inline KSelection select_k(const Eigen::Ref<const Eigen::VectorXd>& eigvals, int kmax, double lambda_n) {
  KSelection sel;
  sel.kmax_used = kmax;
  sel.threshold_used = lambda_n;
  sel.k_ratio = k_by_ratio(eigvals, kmax, &sel.ratios);
  sel.k_threshold = k_by_threshold(eigvals, lambda_n);
  return sel;
}

}  // namespace qfm
