#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "qfm/error.hpp"
#include "qfm/mc.hpp"
#include "qfm/selectk.hpp"

using namespace qfm;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST(KByRatio, Examples) {
  std::vector<double> r;
  EXPECT_EQ(k_by_ratio(vec({10, 5, 0.1, 0.05}), 3, &r), 2);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_DOUBLE_EQ(r[0], 2.0);
  EXPECT_DOUBLE_EQ(r[1], 50.0);
  EXPECT_DOUBLE_EQ(r[2], 2.0);
  EXPECT_EQ(k_by_ratio(vec({9, 3, 1}), 2), 1);
  EXPECT_EQ(k_by_ratio(vec({4, 2, 0, 0}), 3, &r), 2);
  EXPECT_TRUE(std::isinf(r[1]));
  EXPECT_TRUE(std::isnan(r[2]));
}

TEST(KByRatio, TooFewEigenvalues) {
  try {
    k_by_ratio(vec({3, 2, 1}), 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewEigenvalues);
  }
}

TEST(KByRatio, ScaleEquivariant) {
  rng::Stream rs(3);
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::VectorXd ev(8);
    for (int k = 0; k < 8; ++k) ev(k) = rs.exponential();
    std::sort(ev.data(), ev.data() + 8, std::greater<>());
    const int k0 = k_by_ratio(ev, 5);
    for (double c : {1e-6, 0.37, 3.0, 1e8}) EXPECT_EQ(k_by_ratio((c * ev).eval(), 5), k0);
  }
}

TEST(KByThreshold, Examples) {
  EXPECT_EQ(k_by_threshold(vec({3, 1.5, 0.01}), 0.2), 2);
  EXPECT_EQ(k_by_threshold(vec({0.1, 0.05}), 0.2), 0);
  EXPECT_EQ(k_by_threshold(vec({1, 1, 1}), 1.0), 3);
}

TEST(KByThreshold, MonotoneInLambda) {
  const Eigen::VectorXd ev = vec({5, 2, 1, 0.5, 0.2, 0.1});
  int prev = 6;
  for (double lam = 0.01; lam < 10; lam *= 1.3) {
    const int k = k_by_threshold(ev, lam);
    EXPECT_LE(k, prev);
    prev = k;
  }
}

TEST(DefaultTuning, Examples) {
  EXPECT_EQ(default_tuning(100, 6).kmax, 3);
  EXPECT_EQ(default_tuning(100, 7).kmax, 3);
  EXPECT_NEAR(default_tuning(std::exp(2.0), 6).lambda_n, 0.5, 1e-15);
  EXPECT_EQ(default_tuning(100, 20, 5).kmax, 3);  // clamp to T - 2
  EXPECT_THROW(default_tuning(2, 6), Error);
  EXPECT_THROW(default_tuning(10, 1), Error);
}

TEST(SelectK, Dgp1TableOneSmallRun) {
  mc::DgpSpec spec;
  spec.kind = mc::DgpKind::DGP1;
  spec.nu = 1;
  spec.N = 200;
  spec.T = 10;
  const mc::SimReport rep = mc::run_replications(spec, {0.5}, {}, 40, 2024);
  ASSERT_EQ(rep.summaries.size(), 1u);
  EXPECT_GE(rep.summaries[0].correct_rate_Khat, 0.9);
  EXPECT_GE(rep.summaries[0].correct_rate_Ktilde, 0.9);
}
