#pragma once

// Separable sieve bases: one univariate block per characteristic, stacked,
// optionally preceded by a global intercept.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qfm/error.hpp"
#include "qfm/panel.hpp"

namespace qfm {

enum class BasisFamily { Polynomial, LinearSpline, CubicSpline };

inline const char* to_string(BasisFamily f) {
  switch (f) {
    case BasisFamily::Polynomial: return "polynomial";
    case BasisFamily::LinearSpline: return "linear_spline";
    case BasisFamily::CubicSpline: return "cubic_spline";
  }
  return "?";
}

struct BlockSpec {
  BasisFamily family = BasisFamily::Polynomial;
  int degree = 2;                 // polynomial only
  std::vector<double> knots;      // splines: internal knots, strictly increasing
  int n_knots = 0;                // splines: equally spaced internal knots when `knots` is empty
  std::optional<std::pair<double, double>> boundary;  // splines: [lo, hi]
};

struct BasisSpec {
  std::vector<BlockSpec> blocks;  // one shared block, or one per characteristic
  bool include_intercept = false;

  static BasisSpec polynomial(int degree, bool intercept) {
    BasisSpec s;
    s.blocks.push_back(BlockSpec{BasisFamily::Polynomial, degree, {}, 0, std::nullopt});
    s.include_intercept = intercept;
    return s;
  }
};

namespace detail {

inline int spline_order(BasisFamily f) { return f == BasisFamily::LinearSpline ? 2 : 4; }

inline int internal_knot_count(const BlockSpec& b) {
  return b.knots.empty() ? b.n_knots : static_cast<int>(b.knots.size());
}

/// Number of columns a block contributes. A spline block drops its first
/// function when the constant is already spanned.
inline int block_dimension(const BlockSpec& b, bool drop_first) {
  if (b.family == BasisFamily::Polynomial) return b.degree;
  return internal_knot_count(b) + spline_order(b.family) - (drop_first ? 1 : 0);
}

/// Per block: whether its first spline function is dropped. Spline blocks sum
/// to one, so only the first of them is kept whole, and only without an intercept.
inline std::vector<bool> dropped_functions(const BasisSpec& spec, int M) {
  std::vector<bool> drop(M, false);
  bool constant_spanned = spec.include_intercept;
  for (int m = 0; m < M; ++m) {
    const BlockSpec& b = spec.blocks.size() == 1 ? spec.blocks[0] : spec.blocks[m];
    if (b.family == BasisFamily::Polynomial) continue;
    drop[m] = constant_spanned;
    constant_spanned = true;
  }
  return drop;
}

inline void validate_block(const BlockSpec& b) {
  if (b.family == BasisFamily::Polynomial) {
    require(b.degree >= 1, ErrorCode::InvalidArgument, "polynomial degree must be >= 1");
    return;
  }
  require(b.n_knots >= 0, ErrorCode::InvalidArgument, "n_knots must be >= 0");
  require(internal_knot_count(b) <= 60, ErrorCode::InvalidArgument, "at most 60 internal knots per block");
  for (std::size_t k = 1; k < b.knots.size(); ++k)
    require(b.knots[k] > b.knots[k - 1], ErrorCode::InvalidArgument, "spline knots must be strictly increasing");
  if (b.boundary) {
    const auto [lo, hi] = *b.boundary;
    require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, ErrorCode::InvalidArgument, "invalid spline boundary");
    for (double k : b.knots)
      require(k > lo && k < hi, ErrorCode::InvalidArgument, "spline knot outside the boundary interval");
  }
}

}  // namespace detail

inline int basis_dimension(const BasisSpec& spec, int M) {
  require(M >= 1, ErrorCode::InvalidArgument, "M must be >= 1");
  require(spec.blocks.size() == 1 || static_cast<int>(spec.blocks.size()) == M, ErrorCode::DimensionMismatch,
          "basis spec needs 1 or M blocks");
  int P = spec.include_intercept ? 1 : 0;
  const std::vector<bool> drop = detail::dropped_functions(spec, M);
  for (int m = 0; m < M; ++m) {
    const BlockSpec& b = spec.blocks.size() == 1 ? spec.blocks[0] : spec.blocks[m];
    detail::validate_block(b);
    P += detail::block_dimension(b, drop[m]);
  }
  return P;
}

class Basis {
 public:
  /// Every spline block must carry a boundary; see make_basis(spec, panel)
  /// for data-driven boundaries.
  Basis(const BasisSpec& spec, int M) : spec_(spec), M_(M) {
    P_ = basis_dimension(spec, M);
    drop_ = detail::dropped_functions(spec, M);
    blocks_.reserve(M);
    for (int m = 0; m < M; ++m) {
      BlockSpec b = spec.blocks.size() == 1 ? spec.blocks[0] : spec.blocks[m];
      if (b.family != BasisFamily::Polynomial) {
        require(b.boundary.has_value(), ErrorCode::InvalidArgument,
                "spline block " + std::to_string(m + 1) + " has no boundary");
        if (b.knots.empty() && b.n_knots > 0) {
          const auto [lo, hi] = *b.boundary;
          for (int k = 1; k <= b.n_knots; ++k) b.knots.push_back(lo + (hi - lo) * k / (b.n_knots + 1.0));
        }
        detail::validate_block(b);
        ResolvedSpline s;
        s.order = detail::spline_order(b.family);
        s.lo = b.boundary->first;
        s.hi = b.boundary->second;
        s.knots.assign(s.order, s.lo);
        s.knots.insert(s.knots.end(), b.knots.begin(), b.knots.end());
        s.knots.insert(s.knots.end(), s.order, s.hi);
        s.n_basis = static_cast<int>(b.knots.size()) + s.order;
        splines_.push_back(std::move(s));
      } else {
        splines_.emplace_back();
      }
      blocks_.push_back(std::move(b));
    }
  }

  int M() const { return M_; }
  int P() const { return P_; }
  bool include_intercept() const { return spec_.include_intercept; }
  const BasisSpec& spec() const { return spec_; }
  const BlockSpec& block(int m) const { return blocks_.at(m); }

  /// phi(z) written into out (length P).
  template <class Derived>
  void eval_into(const Eigen::Ref<const Eigen::VectorXd>& z, Eigen::MatrixBase<Derived>& out) const {
    require(z.size() == M_, ErrorCode::DimensionMismatch,
            "expected " + std::to_string(M_) + " characteristics, got " + std::to_string(z.size()));
    require(z.allFinite(), ErrorCode::NonFiniteInput, "characteristic vector contains non-finite values");
    int col = 0;
    if (spec_.include_intercept) out(col++) = 1.0;
    double buf[64];
    for (int m = 0; m < M_; ++m) {
      const BlockSpec& b = blocks_[m];
      const double x = z(m);
      if (b.family == BasisFamily::Polynomial) {
        double p = 1.0;
        for (int d = 0; d < b.degree; ++d) {
          p *= x;
          out(col++) = p;
        }
        continue;
      }
      const ResolvedSpline& s = splines_[m];
      std::fill(buf, buf + s.n_basis, 0.0);
      bspline_values(s, x, buf);
      for (int j = drop_[m] ? 1 : 0; j < s.n_basis; ++j) out(col++) = buf[j];
    }
  }

  Eigen::VectorXd eval(const Eigen::Ref<const Eigen::VectorXd>& z) const {
    Eigen::VectorXd out(P_);
    eval_into(z, out);
    return out;
  }

  /// Stacks phi(Z.row(i))' into an (rows x P) design matrix.
  Eigen::MatrixXd design(const Eigen::Ref<const Eigen::MatrixXd>& Z) const {
    Eigen::MatrixXd X(Z.rows(), P_);
    Eigen::VectorXd row(P_);
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      eval_into(Z.row(i).transpose(), row);
      X.row(i) = row.transpose();
    }
    return X;
  }

  /// All B-spline functions of block m at x, including the one dropped when
  /// an intercept is present.
  Eigen::VectorXd full_spline_block(int m, double x) const {
    const ResolvedSpline& s = splines_.at(m);
    require(s.n_basis > 0, ErrorCode::InvalidArgument, "block is not a spline");
    Eigen::VectorXd v = Eigen::VectorXd::Zero(s.n_basis);
    bspline_values(s, x, v.data());
    return v;
  }

 private:
  struct ResolvedSpline {
    int order = 0;
    int n_basis = 0;
    double lo = 0.0, hi = 0.0;
    std::vector<double> knots;  // clamped knot vector
  };

  // Cox-de Boor recursion on the clamped knot vector; x is clamped to [lo, hi].
  static void bspline_values(const ResolvedSpline& s, double x, double* out) {
    x = std::clamp(x, s.lo, s.hi);
    const int p = s.order - 1;
    const auto& U = s.knots;
    const int n = s.n_basis;
    int span = p;
    if (x >= s.hi) {
      span = n - 1;
    } else {
      while (span + 1 < n && U[span + 1] <= x) ++span;
    }
    double N[8], left[8], right[8];
    N[0] = 1.0;
    for (int j = 1; j <= p; ++j) {
      left[j] = x - U[span + 1 - j];
      right[j] = U[span + j] - x;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double temp = N[r] / (right[r + 1] + left[j - r]);
        N[r] = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      N[j] = saved;
    }
    for (int j = 0; j <= p; ++j) out[span - p + j] = N[j];
  }

  BasisSpec spec_;
  int M_ = 0;
  int P_ = 0;
  std::vector<BlockSpec> blocks_;
  std::vector<bool> drop_;
  std::vector<ResolvedSpline> splines_;
};

inline Eigen::VectorXd eval_basis(const Basis& basis, const Eigen::Ref<const Eigen::VectorXd>& z) {
  return basis.eval(z);
}

/// Fills any missing spline boundary with the pooled sample min/max of that
/// characteristic, then builds the basis.
inline Basis make_basis(BasisSpec spec, const Panel& panel) {
  const int M = panel.M();
  if (spec.blocks.size() == 1 && spec.blocks[0].family != BasisFamily::Polynomial && M > 1)
    spec.blocks.assign(M, spec.blocks[0]);
  for (int m = 0; m < static_cast<int>(spec.blocks.size()); ++m) {
    BlockSpec& b = spec.blocks[m];
    if (b.family == BasisFamily::Polynomial || b.boundary) continue;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& cs : panel.sections()) {
      lo = std::min(lo, cs.Z.col(m).minCoeff());
      hi = std::max(hi, cs.Z.col(m).maxCoeff());
    }
    require(lo < hi, ErrorCode::InvalidArgument,
            "characteristic " + std::to_string(m + 1) + " is constant; cannot place spline boundary");
    b.boundary = std::make_pair(lo, hi);
  }
  return Basis(spec, M);
}

}  // namespace qfm
