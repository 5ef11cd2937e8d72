// Acceptance run: one PASS/FAIL line per criterion, 1 through 10.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qfm/qfm.hpp"
#include "qfm/qreg_oracle.hpp"

using namespace qfm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream o;
  o.precision(prec);
  o << v;
  return o.str();
}

// Worst normalization error over every fit this binary produces.
NormalizationError g_worst;
long long g_fits = 0;

void track(const NormalizationError& e) {
  g_worst.orthonormality = std::max(g_worst.orthonormality, e.orthonormality);
  g_worst.identification = std::max(g_worst.identification, e.identification);
  g_worst.offdiag = std::max(g_worst.offdiag, e.offdiag);
  g_worst.diag = std::max(g_worst.diag, e.diag);
}

void track(const QrpcaFit& f) {
  track(normalization_error(f));
  ++g_fits;
}

void track(const mc::SimReport& rep) {
  for (const auto& s : rep.summaries) {
    track(s.worst_norm);
    g_fits += s.n_ok;
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

mc::DgpSpec dgp(mc::DgpKind kind, int N, int T, int nu = 1, mc::ErrorModel m = mc::ErrorModel::M1) {
  mc::DgpSpec s;
  s.kind = kind;
  s.N = N;
  s.T = T;
  s.nu = nu;
  s.model = m;
  return s;
}

Eigen::MatrixXd normals(rng::Stream& rs, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd A(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) A(i, j) = rs.normal();
  return A;
}

// ---- 1 --------------------------------------------------------------------

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const double taus[] = {0.1, 0.25, 0.5, 0.75, 0.9};
  rng::Stream rs(101);
  double worst = 0.0;
  int n = 0;
  for (int inst = 0; inst < 250; ++inst) {
    const int P = 1 + inst % 3;
    const int rows = P + 1 + static_cast<int>(rs.uniform() * (12 - P));
    const double tau = taus[inst % 5];
    Eigen::MatrixXd X = normals(rs, rows, P);
    if (inst % 2 == 0) X.col(0).setOnes();
    const Eigen::VectorXd y = normals(rs, rows, 1).col(0) * 2.0;
    const auto o = qreg::oracle_qr(X, y, tau);
    const auto s = qreg::solve_qr(X, y, tau);
    const double direct = qreg::objective(X, y, tau, nullptr, s.coef);
    worst = std::max(worst, std::abs(direct - o.objective) / o.objective);
    ++n;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-7 && secs < 10.0,
          std::to_string(n) + " instances, max relative objective gap " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s"};
}

// ---- 2-5 ------------------------------------------------------------------

// Rates over all replications; failed replications count as misses.
double rate_all(const mc::TauSummary& s, double rate, int reps) { return rate * s.n_ok / reps; }

Outcome criterion2(int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto big = mc::run_replications(dgp(mc::DgpKind::DGP1, 200, 10), {0.5}, {}, 200, 2002, threads);
  const auto small = mc::run_replications(dgp(mc::DgpKind::DGP1, 50, 10), {0.5}, {}, 200, 2003, threads);
  track(big);
  track(small);
  const auto& b = big.summaries[0];
  const auto& s = small.summaries[0];
  const double bh = rate_all(b, b.correct_rate_Khat, 200), bt = rate_all(b, b.correct_rate_Ktilde, 200);
  const double sh = rate_all(s, s.correct_rate_Khat, 200), st = rate_all(s, s.correct_rate_Ktilde, 200);
  const double secs = seconds_since(t0);
  const bool ok = bh >= 0.97 && bt >= 0.97 && sh >= 0.85 && st >= 0.85 && secs < 300.0;
  return {ok, "(200,10) Khat " + fmt(bh) + " Ktilde " + fmt(bt) + "; (50,10) Khat " + fmt(sh) + " Ktilde " + fmt(st) +
                  "; failures " + std::to_string(b.failures + s.failures) + "; " + fmt(secs, 3) + " s"};
}

Outcome criterion3(int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = mc::run_replications(dgp(mc::DgpKind::DGP1, 500, 10, 3), {0.5}, {}, 200, 3003, threads);
  track(rep);
  const auto& s = rep.summaries[0];
  const double a = s.mse_a.value_or(-1.0);
  const double secs = seconds_since(t0);
  const bool ok = s.failures == 0 && a >= 0.0005 && a <= 0.0030 && s.mse_B >= 0.0006 && s.mse_B <= 0.0035 &&
                  s.mse_F >= 0.003 && s.mse_F <= 0.013 && secs < 600.0;
  return {ok, "mse_a " + fmt(a) + " mse_B " + fmt(s.mse_B) + " mse_F " + fmt(s.mse_F) + "; failures " +
                  std::to_string(s.failures) + "; " + fmt(secs, 3) + " s"};
}

Outcome criterion4(int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep =
      mc::run_replications(dgp(mc::DgpKind::DGP2, 200, 50, 1, mc::ErrorModel::M1), {0.25}, {}, 200, 4004, threads);
  track(rep);
  const auto& s = rep.summaries[0];
  const double kh = rate_all(s, s.correct_rate_Khat, 200);
  const double secs = seconds_since(t0);
  const bool ok = s.failures == 0 && kh >= 0.95 && s.mse_B <= 0.16 && secs < 1200.0;
  return {ok, "Khat " + fmt(kh) + " mse_B " + fmt(s.mse_B) + "; failures " + std::to_string(s.failures) + "; " +
                  fmt(secs, 3) + " s"};
}

Outcome criterion5(int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  mc::EstimatorConfig cfg;
  cfg.alpha_test = true;
  cfg.n_draws = 199;
  cfg.level = 0.05;
  const auto rep = mc::run_replications(dgp(mc::DgpKind::DGP3, 100, 50), {0.5, 0.51}, cfg, 100, 5005, threads);
  track(rep);
  const double size = rep.summaries[0].rejection_rate.value_or(-1.0);
  const double power = rep.summaries[1].rejection_rate.value_or(-1.0);
  const int fails = rep.summaries[0].failures + rep.summaries[1].failures;
  const double secs = seconds_since(t0);
  const bool ok = fails == 0 && size >= 0.005 && size <= 0.09 && power >= 0.90 && secs < 2700.0;
  return {ok, "rejection at 0.5 " + fmt(size) + " (need [0.005,0.09]), at 0.51 " + fmt(power) +
                  " (need >= 0.90); failures " + std::to_string(fails) + "; " + fmt(secs, 3) + " s"};
}

// ---- 6 --------------------------------------------------------------------

// Fits beyond the simulation runs: every quantile of a heteroskedastic
// design, an unbalanced panel and the fixture, under all K rules.
void extra_fits(int threads) {
  const std::vector<double> taus = {0.05, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9, 0.95};
  for (auto m : {mc::ErrorModel::M1, mc::ErrorModel::M2, mc::ErrorModel::M3}) {
    rng::Stream rs(600 + static_cast<int>(m));
    const auto data = mc::generate(dgp(mc::DgpKind::DGP2, 150, 30, 1, m), rs);
    const Basis basis(mc::basis_spec(data.second.spec), 3);
    for (const auto& [tau, f] : fit_quantile_path(data.first, basis, taus, KRule::fixed(3), threads)) track(f);
    KRule ratio;
    ratio.kind = KRule::Kind::Ratio;
    for (const auto& [tau, f] : fit_quantile_path(data.first, basis, taus, ratio, threads)) track(f);
  }
  {
    rng::Stream rs(610);
    const auto data = mc::generate(dgp(mc::DgpKind::DGP3, 120, 25), rs);
    std::vector<Panel::Record> recs;
    for (int t = 0; t < data.first.T(); ++t) {
      const CrossSection& cs = data.first.section(t);
      for (Eigen::Index i = 0; i < cs.size(); ++i) {
        if (rs.uniform() < 0.2) continue;
        recs.push_back({data.first.units()[cs.units[i]], cs.period, cs.y(i),
                        {cs.Z(i, 0), cs.Z(i, 1), cs.Z(i, 2)}});
      }
    }
    const Panel unbalanced = Panel::from_records(recs, 3);
    const Basis basis(mc::basis_spec(data.second.spec), 3);
    for (const auto& [tau, f] : fit_quantile_path(unbalanced, basis, taus, KRule::fixed(2), threads)) track(f);
  }
  {
    const Panel p = load_panel(std::string(QFM_TEST_DATA) + "/synthetic_panel.csv", {});
    BasisSpec cubic;
    cubic.blocks.push_back(BlockSpec{BasisFamily::CubicSpline, 0, {}, 1, std::nullopt});
    cubic.include_intercept = true;
    for (const BasisSpec& spec : {BasisSpec::polynomial(2, true), cubic}) {
      const Basis basis = make_basis(spec, p);
      for (int K = 1; K <= 3; ++K)
        for (const auto& [tau, f] : fit_quantile_path(p, basis, {0.25, 0.5, 0.75}, KRule::fixed(K), threads)) track(f);
    }
  }
}

Outcome criterion6(int threads) {
  extra_fits(threads);
  const bool ok = g_worst.orthonormality <= 1e-10 && g_worst.identification <= 1e-10 && g_worst.offdiag <= 1e-8;
  return {ok, std::to_string(g_fits) + " fits; max |B'B - I| " + fmt(g_worst.orthonormality, 3) + ", max |a'B| " +
                  fmt(g_worst.identification, 3) + ", max off-diagonal " + fmt(g_worst.offdiag, 3)};
}

// ---- 7 --------------------------------------------------------------------

Outcome criterion7() {
  rng::Stream rs(707);
  double worst = 0.0;
  int n = 0;
  for (int inst = 0; inst < 30; ++inst) {
    const int K = 1 + inst % 3;
    const int P = K + 2 + inst % 6;
    const int T = P + 3 + 5 * (inst % 4);
    // orthonormal loadings plus an orthogonal intercept direction
    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(normals(rs, P, K + 1)).householderQ() *
                              Eigen::MatrixXd::Identity(P, K + 1);
    const Eigen::MatrixXd B = Q.leftCols(K);
    const Eigen::VectorXd a = Q.col(K) * (0.5 + rs.uniform());
    // factors with distinct sample variances
    Eigen::MatrixXd G = normals(rs, T, K);
    G.rowwise() -= G.colwise().mean();
    const Eigen::MatrixXd U = Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ() * Eigen::MatrixXd::Identity(T, K);
    Eigen::VectorXd d(K);
    for (int k = 0; k < K; ++k) d(k) = 3.0 * (K - k) + rs.uniform();
    Eigen::MatrixXd F = U * (d.array() * T).sqrt().matrix().asDiagonal();
    F.rowwise() += normals(rs, 1, K).row(0);
    StageOne stage;
    stage.Ytilde = a * Eigen::RowVectorXd::Ones(T) + B * F.transpose();
    stage.per_period_converged.assign(static_cast<std::size_t>(T), true);
    const QrpcaFit f = fit(stage, K);
    track(f);
    const mc::MseMetrics m = mc::mse_metrics(f, B, F, a);
    worst = std::max({worst, *m.mse_a, m.mse_B, m.mse_F});
    ++n;
  }
  return {worst <= 1e-9, std::to_string(n) + " exact low-rank instances, max rotation-adjusted mse " + fmt(worst, 3)};
}

// ---- 8 --------------------------------------------------------------------

Outcome criterion8(int threads) {
  double worst = 0.0;
  long long during = 0, fit_calls = 0;
  for (auto kind : {mc::DgpKind::DGP1, mc::DgpKind::DGP2, mc::DgpKind::DGP3}) {
    rng::Stream rs(800 + static_cast<int>(kind));
    const auto data = mc::generate(dgp(kind, 120, 20, 3), rs);
    const StageDesign d = make_stage_design(data.first, Basis(mc::basis_spec(data.second.spec), 3));
    for (double tau : {0.25, 0.5, 0.75}) {
      const long long before_fit = sym_eig_call_count();
      const QrpcaFit base = fit(stage_one(d, tau, nullptr, threads), 2);
      fit_calls += sym_eig_call_count() - before_fit;
      track(base);
      const long long before = sym_eig_call_count();
      const BootstrapDraw one = bootstrap_draw(d, tau, base, Eigen::VectorXd::Ones(d.n_units), threads);
      const auto draws = bootstrap_draws(d, tau, base, 25, 88, threads);
      during += sym_eig_call_count() - before;
      worst = std::max({worst, (one.a_star - base.a_hat).cwiseAbs().maxCoeff(),
                        (one.B_star - base.B_hat).cwiseAbs().maxCoeff(), (one.F_star - base.F_hat).cwiseAbs().maxCoeff()});
    }
  }
  // the bootstrap header never names the eigensolver
  std::ifstream src(std::string(QFM_INCLUDE_DIR) + "/qfm/bootstrap.hpp");
  std::stringstream text;
  text << src.rdbuf();
  const bool clean_source = !text.str().empty() && text.str().find("sym_eig") == std::string::npos &&
                            text.str().find("spectrum(") == std::string::npos;
  const bool ok = worst <= 1e-9 && during == 0 && fit_calls > 0 && clean_source;
  return {ok, "unit-weight max deviation " + fmt(worst, 3) + "; eigensolver calls on the bootstrap path " +
                  std::to_string(during) + " (base fits: " + std::to_string(fit_calls) + "); bootstrap source " +
                  (clean_source ? "has no eigensolver reference" : "references the eigensolver")};
}

// ---- 9 --------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Every regular file under dir, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

int shell(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

Outcome criterion9() {
  const fs::path root = fs::temp_directory_path() / "qfm_acceptance_9";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string bin = QFM_CLI_PATH;
  const std::string panel = std::string(QFM_TEST_DATA) + "/synthetic_panel.csv";

  // inputs for evaluate
  rng::Stream rs(909);
  const int T = 80, N = 10;
  const Eigen::MatrixXd F = normals(rs, T, 2), beta = normals(rs, N, 2), E = normals(rs, N, T);
  std::ostringstream r, f;
  r.precision(17);
  f.precision(17);
  r << "date";
  for (int i = 0; i < N; ++i) r << ",p" << i;
  r << '\n';
  f << "date,f1,f2\n";
  for (int t = 0; t < T; ++t) {
    r << t;
    for (int i = 0; i < N; ++i) r << ',' << beta.row(i).dot(F.row(t)) + 0.3 * E(i, t);
    r << '\n';
    f << t << ',' << F(t, 0) << ',' << F(t, 1) << '\n';
  }
  write_text(root / "returns.csv", r.str());
  write_text(root / "factors.csv", f.str());
  write_text(root / "sim.json",
             R"({"dgp": "dgp2", "error_model": "M3", "n": 100, "t": 20, "taus": [0.25, 0.5], "reps": 6, "seed": 11})");

  struct Cmd {
    std::string name, args;
  };
  const std::vector<Cmd> cmds = {
      {"estimate", "estimate --panel " + panel + " --taus 0.25,0.5,0.75 --k-rule ratio --out OUT/fit"},
      {"select-k", "select-k --panel " + panel + " --tau 0.5 --out OUT/selk.json"},
      {"test-alpha", "test-alpha --panel " + panel + " --k 2 --draws 59 --seed 7 --out OUT/alpha.json"},
      {"simulate", "simulate --config " + (root / "sim.json").string() +
                       " --alpha-test --draws 29 --out OUT/sim.json --per-rep-csv OUT/reps.csv"},
      {"evaluate", "evaluate --returns " + (root / "returns.csv").string() + " --factors " +
                       (root / "factors.csv").string() + " --burn-in 40 --out OUT/eval.json"}};

  std::vector<std::string> bad;
  int runs = 0;
  for (const Cmd& c : cmds) {
    std::map<std::string, std::string> first;
    bool have_first = false;
    for (const char* tag : {"t1a", "t1b", "t8"}) {
      const fs::path out = root / c.name / tag;
      fs::create_directories(out);
      std::string args = c.args;
      for (std::size_t pos; (pos = args.find("OUT")) != std::string::npos;) args.replace(pos, 3, out.string());
      const std::string threads = std::string(tag) == "t8" ? "8" : "1";
      const int rc = shell(bin + " " + args + " --threads " + threads + " > " + (out / "stdout.txt").string() +
                           " 2> " + (root / "stderr.txt").string());
      ++runs;
      if (rc != 0) {
        bad.push_back(c.name + " exit " + std::to_string(rc) + ": " + slurp(root / "stderr.txt"));
        break;
      }
      auto snap = snapshot(out);
      if (!have_first) {
        first = std::move(snap);
        have_first = true;
      } else if (snap != first) {
        bad.push_back(c.name + " differs at " + tag);
      }
    }
  }
  std::string detail = std::to_string(cmds.size()) + " commands x 3 runs (threads 1, 1, 8)";
  if (bad.empty()) return {true, detail + ": all outputs byte-identical"};
  for (const auto& b : bad) detail += "; " + b;
  return {false, detail};
}

// ---- 10 -------------------------------------------------------------------

Outcome criterion10() {
  rng::Stream rs(1010);
  double worst_one = 0.0;
  for (int inst = 0; inst < 5; ++inst) {
    const int N = 20 + 5 * inst, K = 1 + inst % 3, burn = 240, T = 300;
    Eigen::MatrixXd F = normals(rs, T, K);
    const Eigen::RowVectorXd lam = F.topRows(burn).colwise().mean();
    for (int t = burn; t < T; ++t) F.row(t) = lam;
    const Eigen::MatrixXd beta = normals(rs, N, K);
    const ReturnPanel R{beta * F.transpose(), {}};
    const InSampleR2 in = r2_insample(R, {F});
    const OutOfSampleR2 oos = r2_oos(R, {F}, burn);
    for (double v : {in.total, in.ts_avg, in.cs_avg, in.f_total, in.f_ts_avg, in.f_cs_avg, oos.total, oos.ts_avg,
                     oos.cs_avg})
      worst_one = std::max(worst_one, std::abs(v - 1.0));
  }
  double worst_rot = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const int N = 10 + inst, T = 60 + 3 * inst, K = 1 + inst % 4;
    const Eigen::MatrixXd F = normals(rs, T, K), beta = normals(rs, N, K);
    const Eigen::MatrixXd Rm = beta * F.transpose() + normals(rs, N, T) + Eigen::MatrixXd::Constant(N, T, 0.2);
    Eigen::MatrixXd A = normals(rs, K, K);
    A.diagonal().array() += 2.0;
    const InSampleR2 a = r2_insample({Rm, {}}, {F}), b = r2_insample({Rm, {}}, {F * A});
    worst_rot = std::max({worst_rot, std::abs(a.total - b.total), std::abs(a.ts_avg - b.ts_avg),
                          std::abs(a.cs_avg - b.cs_avg), std::abs(a.f_total - b.f_total),
                          std::abs(a.f_ts_avg - b.f_ts_avg), std::abs(a.f_cs_avg - b.f_cs_avg)});
  }
  return {worst_one <= 1e-12 && worst_rot <= 1e-10,
          "zero-noise max |R2 - 1| " + fmt(worst_one, 3) + "; rotation max change " + fmt(worst_rot, 3)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> want;
  for (int i = 1; i < argc; ++i) want.insert(std::atoi(argv[i]));
  if (want.empty())
    for (int i = 1; i <= 10; ++i) want.insert(i);
  const int threads = default_threads();

  std::map<int, Outcome> results;
  const auto run = [&](int id, const auto& body) {
    if (!want.count(id)) return;
    std::cerr << "running criterion " << id << " ..." << std::endl;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      results[id] = body();
    } catch (const std::exception& e) {
      results[id] = {false, std::string("exception: ") + e.what()};
    }
    std::cerr << "  done in " << fmt(seconds_since(t0), 3) << " s" << std::endl;
  };
  run(1, [] { return criterion1(); });
  run(2, [&] { return criterion2(threads); });
  run(3, [&] { return criterion3(threads); });
  run(4, [&] { return criterion4(threads); });
  run(5, [&] { return criterion5(threads); });
  run(7, [] { return criterion7(); });
  run(8, [&] { return criterion8(threads); });
  run(9, [] { return criterion9(); });
  run(10, [] { return criterion10(); });
  run(6, [&] { return criterion6(threads); });

  int failed = 0;
  for (const auto& [id, o] : results) {
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << '\n';
    failed += !o.pass;
  }
  std::cout << (failed ? std::to_string(failed) + " criterion(s) failed" : std::string("all criteria passed")) << '\n';
  return failed ? 1 : 0;
}
