#include <gtest/gtest.h>

#include <cmath>

#include "qfm/error.hpp"
#include "qfm/mc.hpp"
#include "support.hpp"

using namespace qfm;

namespace {

mc::DgpSpec spec_of(mc::DgpKind kind, int N, int T, mc::ErrorModel m = mc::ErrorModel::M1, int nu = 1) {
  mc::DgpSpec s;
  s.kind = kind;
  s.N = N;
  s.T = T;
  s.model = m;
  s.nu = nu;
  return s;
}

double sample_var(const Eigen::VectorXd& x) {
  const double m = x.mean();
  return (x.array() - m).square().sum() / static_cast<double>(x.size() - 1);
}

}  // namespace

TEST(GenDgp1, FactorStationaryVariance) {
  rng::Stream rs(31);
  const auto data = mc::gen_dgp1(spec_of(mc::DgpKind::DGP1, 1, 10000), rs);
  for (int k = 0; k < 2; ++k) {
    const double v = sample_var(data.second.F.col(k));
    EXPECT_GE(v, 1.02);
    EXPECT_LE(v, 1.18);
  }
}

TEST(GenDgp1, CauchyErrorsStayFinite) {
  rng::Stream rs(32);
  const auto data = mc::gen_dgp1(spec_of(mc::DgpKind::DGP1, 300, 40), rs);
  for (int t = 0; t < data.first.T(); ++t) EXPECT_TRUE(data.first.section(t).y.allFinite());
}

TEST(SimTruth, OrthogonalAndFullRankEverywhere) {
  const std::vector<mc::DgpSpec> specs = {
      spec_of(mc::DgpKind::DGP1, 20, 5, mc::ErrorModel::M1, 1), spec_of(mc::DgpKind::DGP1, 20, 5, mc::ErrorModel::M1, 3),
      spec_of(mc::DgpKind::DGP2, 20, 5, mc::ErrorModel::M1),    spec_of(mc::DgpKind::DGP2, 20, 5, mc::ErrorModel::M2),
      spec_of(mc::DgpKind::DGP2, 20, 5, mc::ErrorModel::M3),    spec_of(mc::DgpKind::DGP3, 20, 5)};
  for (const auto& s : specs) {
    rng::Stream rs(7);
    const auto data = mc::generate(s, rs);
    const mc::SimTruth& tr = data.second;
    for (double tau : {0.1, 0.25, 0.5, 0.51, 0.75, 0.9}) {
      const Eigen::MatrixXd B = tr.B_true(tau);
      const Eigen::MatrixXd F = tr.F_true(tau);
      EXPECT_EQ(B.cols(), tr.K_true(tau));
      EXPECT_EQ(F.cols(), tr.K_true(tau));
      EXPECT_EQ(F.rows(), s.T);
      EXPECT_EQ(Eigen::FullPivLU<Eigen::MatrixXd>(B).rank(), B.cols());
      if (const auto a = tr.a_true(tau)) {
        EXPECT_EQ(a->size(), B.rows());
        EXPECT_EQ((a->transpose() * B).cwiseAbs().maxCoeff(), 0.0);
      }
    }
  }
}

TEST(SimTruth, KTrueMap) {
  rng::Stream rs(1);
  const auto d1 = mc::generate(spec_of(mc::DgpKind::DGP1, 10, 4), rs).second;
  const auto d2 = mc::generate(spec_of(mc::DgpKind::DGP2, 10, 4), rs).second;
  const auto d3 = mc::generate(spec_of(mc::DgpKind::DGP3, 10, 4), rs).second;
  for (double tau : {0.1, 0.5, 0.9}) {
    EXPECT_EQ(d1.K_true(tau), 2);
    EXPECT_EQ(d3.K_true(tau), 2);
    EXPECT_EQ(d2.K_true(tau), tau == 0.5 ? 2 : 3);
  }
  EXPECT_FALSE(d1.a_true(0.25).has_value());
  EXPECT_EQ(d2.F_true(0.25).col(2), d2.abs_g);
  EXPECT_EQ(d3.a_true(0.5)->cwiseAbs().maxCoeff(), 0.0);
}

TEST(ErrorQuantile, ClosedForms) {
  const auto m1 = spec_of(mc::DgpKind::DGP2, 1, 1, mc::ErrorModel::M1);
  const auto m2 = spec_of(mc::DgpKind::DGP2, 1, 1, mc::ErrorModel::M2);
  const auto m3 = spec_of(mc::DgpKind::DGP2, 1, 1, mc::ErrorModel::M3);
  const auto d3 = spec_of(mc::DgpKind::DGP3, 1, 1);
  EXPECT_EQ(mc::error_quantile(m1, 0.5), 0.0);
  EXPECT_NEAR(mc::error_quantile(m1, 0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(mc::error_quantile(m2, 0.75), 0.7648923284229, 1e-9);
  EXPECT_NEAR(mc::error_quantile(m2, 0.25), -0.7648923284229, 1e-9);
  EXPECT_NEAR(mc::error_quantile(m3, 0.975), std::sqrt(1.24 / 0.96) * 1.959963984540054, 1e-12);
  EXPECT_NEAR(mc::error_quantile(d3, 0.975), std::sqrt(1.0 / 0.91) * 1.959963984540054, 1e-12);
  EXPECT_NEAR(mc::error_variance(m3), 1.24 / 0.96, 1e-15);
  EXPECT_NEAR(mc::error_variance(d3), 1.0 / 0.91, 1e-15);
}

TEST(GenErrors, M3MarginalSd) {
  rng::Stream rs(40);
  const auto ep = mc::error_process(spec_of(mc::DgpKind::DGP2, 1, 1, mc::ErrorModel::M3));
  const Eigen::MatrixXd E = mc::detail::gen_errors(rs, 1000, 100, ep);
  const Eigen::VectorXd v = E.reshaped();
  const double sd = std::sqrt(sample_var(v));
  EXPECT_GE(sd, 1.10);
  EXPECT_LE(sd, 1.17);
}

TEST(GenErrors, Dgp3StationaryVariance) {
  rng::Stream rs(41);
  const auto ep = mc::error_process(spec_of(mc::DgpKind::DGP3, 1, 1));
  const Eigen::MatrixXd E = mc::detail::gen_errors(rs, 1000, 100, ep);
  EXPECT_NEAR(sample_var(E.reshaped()), 1.0 / 0.91, 0.05 / 0.91);
}

TEST(Generate, SameSeedSamePanel) {
  for (auto kind : {mc::DgpKind::DGP1, mc::DgpKind::DGP2, mc::DgpKind::DGP3}) {
    auto s = spec_of(kind, 30, 6, mc::ErrorModel::M3);
    rng::Stream a(99), b(99), c(100);
    const auto pa = mc::generate(s, a), pb = mc::generate(s, b), pc = mc::generate(s, c);
    for (int t = 0; t < 6; ++t) {
      EXPECT_EQ(pa.first.section(t).y, pb.first.section(t).y);
      EXPECT_EQ(pa.first.section(t).Z, pb.first.section(t).Z);
      EXPECT_NE(pa.first.section(t).y, pc.first.section(t).y);
    }
    EXPECT_EQ(pa.second.F, pb.second.F);
  }
}

TEST(Generate, RejectsBadSpec) {
  rng::Stream rs(1);
  EXPECT_THROW(mc::generate(spec_of(mc::DgpKind::DGP1, 10, 5, mc::ErrorModel::M1, 4), rs), Error);
  EXPECT_THROW(mc::generate(spec_of(mc::DgpKind::DGP3, 0, 5), rs), Error);
  EXPECT_THROW(mc::gen_dgp2(spec_of(mc::DgpKind::DGP3, 10, 5), rs), Error);
}

TEST(MseMetrics, ExactTruthIsZero) {
  rng::Stream rs(3);
  const auto data = mc::generate(spec_of(mc::DgpKind::DGP2, 10, 12), rs);
  QrpcaFit f;
  f.tau = 0.25;
  f.K = 3;
  f.a_hat = *data.second.a_true(0.25);
  f.B_hat = data.second.B_true(0.25);
  f.F_hat = data.second.F_true(0.25);
  const mc::MseMetrics m = mc::mse_metrics(f, data.second, 0.25);
  EXPECT_LE(*m.mse_a, 1e-16);
  EXPECT_LE(m.mse_B, 1e-16);
  EXPECT_LE(m.mse_F, 1e-16);
}

TEST(MseMetrics, RotatedLoadingsGiveZeroMseB) {
  rng::Stream rs(4);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd B = test::random_matrix(rs, 7, 3), F = test::random_matrix(rs, 25, 3);
    QrpcaFit f;
    f.K = 3;
    f.a_hat = Eigen::VectorXd::Zero(7);
    f.F_hat = test::random_matrix(rs, 25, 3);
    const Eigen::MatrixXd H = rotation_H(F, f.F_hat);
    f.B_hat = B * H;
    EXPECT_LE(mc::mse_metrics(f, B, F, std::nullopt).mse_B, 1e-12);
  }
}

TEST(MseMetrics, KMismatch) {
  QrpcaFit f;
  f.K = 1;
  f.a_hat = Eigen::VectorXd::Zero(3);
  f.B_hat = Eigen::MatrixXd::Zero(3, 1);
  f.F_hat = Eigen::MatrixXd::Zero(5, 1);
  EXPECT_THROW(mc::mse_metrics(f, Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(5, 2), std::nullopt), Error);
}

TEST(RunReplications, SingleRepMatchesRunOne) {
  const auto s = spec_of(mc::DgpKind::DGP2, 60, 12);
  const std::vector<double> taus = {0.25, 0.5};
  const auto rep = mc::run_replications(s, taus, {}, 1, 77);
  const auto cells = mc::run_one(s, taus, {}, rng::child_seed(77, 0));
  ASSERT_EQ(rep.summaries.size(), 2u);
  for (std::size_t j = 0; j < taus.size(); ++j) {
    ASSERT_TRUE(cells[j].ok) << cells[j].error;
    const auto& sm = rep.summaries[j];
    EXPECT_EQ(sm.n_ok, 1);
    EXPECT_EQ(sm.correct_rate_Khat, cells[j].k_ratio == cells[j].K_true ? 1.0 : 0.0);
    EXPECT_EQ(sm.correct_rate_Ktilde, cells[j].k_threshold == cells[j].K_true ? 1.0 : 0.0);
    EXPECT_EQ(sm.mse_B, cells[j].mse_B);
    EXPECT_EQ(sm.mse_F, cells[j].mse_F);
    EXPECT_EQ(*sm.mse_a, *cells[j].mse_a);
    EXPECT_EQ(sm.correct_rate_Khat_se, 0.0);
  }
}

TEST(RunReplications, ThreadCountInvariant) {
  const auto s = spec_of(mc::DgpKind::DGP1, 60, 10);
  mc::EstimatorConfig cfg;
  const auto a = mc::run_replications(s, {0.5}, cfg, 12, 5, 1);
  const auto b = mc::run_replications(s, {0.5}, cfg, 12, 5, 8);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(a.per_rep_csv(), b.per_rep_csv());
}

TEST(RunReplications, FailuresRecordedNotDropped) {
  // dgp1 has P = 6 > N = 5
  const auto rep = mc::run_replications(spec_of(mc::DgpKind::DGP1, 5, 10), {0.5}, {}, 3, 1);
  EXPECT_EQ(rep.summaries[0].failures, 3);
  EXPECT_EQ(rep.summaries[0].n_ok, 0);
  const auto j = rep.to_json();
  ASSERT_EQ(j["failures"].size(), 3u);
  EXPECT_NE(j["failures"][0]["error"].get<std::string>().find("period"), std::string::npos);
}

TEST(RunReplications, RatesAndMsesInRange) {
  const auto rep = mc::run_replications(spec_of(mc::DgpKind::DGP3, 80, 20), {0.3, 0.5}, {}, 6, 9);
  for (const auto& s : rep.summaries) {
    EXPECT_GE(s.correct_rate_Khat, 0.0);
    EXPECT_LE(s.correct_rate_Khat, 1.0);
    EXPECT_GE(s.mse_B, 0.0);
    EXPECT_GE(s.mse_F, 0.0);
    EXPECT_GE(*s.mse_a, 0.0);
    EXPECT_LE(s.worst_norm.orthonormality, 1e-10);
    EXPECT_LE(s.worst_norm.identification, 1e-10);
    EXPECT_LE(s.worst_norm.offdiag, 1e-8);
  }
  EXPECT_THROW(mc::run_replications(spec_of(mc::DgpKind::DGP3, 80, 20), {0.5}, {}, 0, 9), Error);
}
