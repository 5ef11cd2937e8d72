#pragma once

// Command-line front end: estimate, select-k, test-alpha, simulate, evaluate.
// A JSON config (--config) supplies defaults and flags override it.
// Exit status: 0 ok, 1 usage, 2 data, 3 numerical.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qfm/bootstrap.hpp"
#include "qfm/config.hpp"
#include "qfm/csv.hpp"
#include "qfm/error.hpp"
#include "qfm/evaluate.hpp"
#include "qfm/mc.hpp"
#include "qfm/panel.hpp"
#include "qfm/parallel.hpp"
#include "qfm/qrpca.hpp"
#include "qfm/selectk.hpp"
#include "qfm/sieve.hpp"

namespace qfm::cli {

using ojson = nlohmann::ordered_json;

namespace detail {

// Values given on the command line; only those actually passed override the config.
struct Flags {
  std::string config;
  std::string panel, unit_col, time_col, y_col;
  std::vector<std::string> z_cols;
  std::string family;
  int degree = 2;
  int n_knots = 0;
  bool intercept = false, no_intercept = false;
  std::vector<int> rank_transform;
  bool rank_all = false;
  std::vector<double> taus;
  double tau = 0.5;
  int k = 0;
  std::string k_rule;
  int kmax = 0;
  double lambda_n = 0.0;
  std::string eigvals;
  double n = 0.0;
  int p = 0, t = 0;
  int draws = 0;
  double level = 0.05;
  std::string dgp, error_model;
  int nu = 1;
  int reps = 0;
  bool alpha_test = false;
  std::string per_rep_csv;
  bool timing = false;
  std::string returns, factors;
  int burn_in = 240;
  std::string out;
  int threads = 0;
  std::uint64_t seed = 0;
};

inline bool given(CLI::App* app, const std::string& name) {
  const CLI::Option* opt = app->get_option_no_throw(name);
  return opt != nullptr && opt->count() > 0;
}

inline config::RunConfig merge(CLI::App* sub, const std::string& command, const Flags& f) {
  config::RunConfig c;
  if (!f.config.empty()) c = config::parse(config::load_file(f.config), command);
  if (given(sub, "--panel")) c.panel = f.panel;
  if (given(sub, "--unit-col")) c.schema.unit = f.unit_col;
  if (given(sub, "--time-col")) c.schema.time = f.time_col;
  if (given(sub, "--y-col")) c.schema.y = f.y_col;
  if (given(sub, "--z-cols")) c.schema.z = f.z_cols;
  if (given(sub, "--family") || given(sub, "--degree") || given(sub, "--knots") || given(sub, "--intercept") ||
      given(sub, "--no-intercept")) {
    BasisSpec b = c.basis.value_or(BasisSpec::polynomial(2, true));
    if (b.blocks.empty()) b.blocks.emplace_back();
    for (auto& blk : b.blocks) {
      if (given(sub, "--family")) blk.family = config::parse_family(f.family);
      if (given(sub, "--degree")) blk.degree = f.degree;
      if (given(sub, "--knots")) {
        blk.n_knots = f.n_knots;
        blk.knots.clear();
      }
    }
    if (given(sub, "--intercept")) b.include_intercept = true;
    if (given(sub, "--no-intercept")) b.include_intercept = false;
    c.basis = b;
  }
  if (given(sub, "--rank-transform")) c.rank_transform = f.rank_transform;
  if (given(sub, "--rank-all")) c.rank_all = true;
  if (given(sub, "--taus")) c.taus = f.taus;
  if (given(sub, "--tau")) c.tau = f.tau;
  if (given(sub, "--k")) c.k = f.k;
  if (given(sub, "--k-rule")) c.k_rule = f.k_rule;
  if (given(sub, "--kmax")) c.kmax = f.kmax;
  if (given(sub, "--lambda")) c.lambda_n = f.lambda_n;
  if (given(sub, "--eigvals")) c.eigvals = f.eigvals;
  if (given(sub, "--n")) c.n = f.n;
  if (given(sub, "--p")) c.p = f.p;
  if (given(sub, "--t")) c.t = f.t;
  if (given(sub, "--draws")) c.draws = f.draws;
  if (given(sub, "--level")) c.level = f.level;
  if (given(sub, "--dgp")) c.dgp = f.dgp;
  if (given(sub, "--nu")) c.nu = f.nu;
  if (given(sub, "--model")) c.error_model = f.error_model;
  if (given(sub, "--reps")) c.reps = f.reps;
  if (given(sub, "--alpha-test")) c.alpha_test = true;
  if (given(sub, "--per-rep-csv")) c.per_rep_csv = f.per_rep_csv;
  if (given(sub, "--timing")) c.timing = true;
  if (given(sub, "--returns")) c.returns = f.returns;
  if (given(sub, "--factors")) c.factors = f.factors;
  if (given(sub, "--burn-in")) c.burn_in = f.burn_in;
  if (given(sub, "--out")) c.out = f.out;
  if (given(sub, "--threads")) c.threads = f.threads;
  if (given(sub, "--seed")) c.seed = f.seed;
  return c;
}

inline int threads_of(const config::RunConfig& c) {
  if (c.threads) {
    require(*c.threads >= 1, ErrorCode::InvalidArgument, "--threads must be >= 1");
    return *c.threads;
  }
  return default_threads();
}

struct Data {
  Panel panel;
  Basis basis{BasisSpec::polynomial(2, true), 1};
};

// Loads the panel, applies rank transforms and builds the basis. Spline blocks
// without a boundary get [-0.5, 0.5] on rank-transformed columns and the
// sample range elsewhere.
inline Data load_data(const config::RunConfig& c) {
  require(!c.panel.empty(), ErrorCode::InvalidArgument, "no panel given (--panel or config key 'panel')");
  Data d;
  d.panel = load_panel(c.panel, c.schema);
  const int M = d.panel.M();
  std::vector<int> ranked;
  if (c.rank_all) {
    for (int m = 0; m < M; ++m) ranked.push_back(m);
  } else {
    for (int col : c.rank_transform) {
      require(col >= 1 && col <= M, ErrorCode::InvalidArgument,
              "rank_transform column " + std::to_string(col) + " outside 1.." + std::to_string(M));
      ranked.push_back(col - 1);
    }
  }
  if (!ranked.empty()) d.panel = rank_transform(d.panel, ranked);
  BasisSpec spec = c.basis.value_or(BasisSpec::polynomial(2, true));
  require(spec.blocks.size() == 1 || static_cast<int>(spec.blocks.size()) == M, ErrorCode::InvalidArgument,
          "basis.blocks must have 1 or " + std::to_string(M) + " entries");
  if (spec.blocks.size() == 1 && spec.blocks[0].family != BasisFamily::Polynomial && M > 1)
    spec.blocks.assign(M, spec.blocks[0]);
  for (int m : ranked) {
    BlockSpec& b = spec.blocks.size() == 1 ? spec.blocks[0] : spec.blocks[m];
    if (b.family != BasisFamily::Polynomial && !b.boundary) b.boundary = std::make_pair(-0.5, 0.5);
  }
  d.basis = make_basis(spec, d.panel);
  return d;
}

inline void emit(const ojson& j, const config::RunConfig& c, std::ostream& out) {
  const std::string text = j.dump(2) + "\n";
  out << text;
  if (!c.out.empty()) {
    auto f = csv::open_for_write(c.out);
    f << text;
  }
}

inline std::string tau_dir_name(double tau) { return "tau_" + csv::format_double(tau); }

inline int cmd_estimate(const config::RunConfig& c, std::ostream& out) {
  require(!c.out.empty(), ErrorCode::InvalidArgument, "estimate needs an output directory (--out)");
  const Data d = load_data(c);
  std::vector<double> taus = c.taus.empty() ? std::vector<double>{0.5} : c.taus;
  KRule rule;
  if (c.k_rule == "fixed") {
    require(c.k.has_value(), ErrorCode::InvalidArgument, "fixed K rule needs --k");
    rule = KRule::fixed(*c.k);
  } else if (c.k_rule == "ratio") {
    rule.kind = KRule::Kind::Ratio;
  } else if (c.k_rule == "threshold") {
    rule.kind = KRule::Kind::Threshold;
  } else {
    fail(ErrorCode::InvalidArgument, "unknown k_rule '" + c.k_rule + "' (fixed, ratio, threshold)");
  }
  rule.kmax = c.kmax;
  rule.lambda_n = c.lambda_n;
  const auto fits = fit_quantile_path(d.panel, d.basis, taus, rule, threads_of(c));
  ojson summary = ojson::array();
  for (const auto& [tau, f] : fits) {
    export_fit(f, c.out + "/" + tau_dir_name(tau));
    ojson s = fit_summary(f);
    s["dir"] = tau_dir_name(tau);
    if (f.selection) {
      s["k_ratio"] = f.selection->k_ratio;
      s["k_threshold"] = f.selection->k_threshold;
    }
    summary.push_back(s);
  }
  ojson j;
  j["P"] = d.basis.P();
  j["T"] = d.panel.T();
  j["N_units"] = d.panel.n_units();
  j["fits"] = summary;
  const std::string text = j.dump(2) + "\n";
  {
    auto f = csv::open_for_write(c.out + "/summary.json");
    f << text;
  }
  out << text;
  return 0;
}

inline ojson selection_json(const KSelection& s, const Eigen::VectorXd& ev) {
  ojson j;
  j["k_ratio"] = s.k_ratio;
  j["k_threshold"] = s.k_threshold;
  ojson r = ojson::array();
  for (double x : s.ratios) r.push_back(std::isfinite(x) ? ojson(x) : ojson(nullptr));
  j["ratios"] = r;
  j["eigvals"] = std::vector<double>(ev.data(), ev.data() + ev.size());
  j["kmax"] = s.kmax_used;
  j["lambda_n"] = s.threshold_used;
  return j;
}

inline int cmd_select_k(const config::RunConfig& c, std::ostream& out) {
  Eigen::VectorXd ev;
  Tuning tun;
  if (!c.eigvals.empty()) {
    ev = read_vector_csv(c.eigvals);
    if (c.kmax <= 0 || c.lambda_n <= 0.0) {
      require(c.n.has_value() && c.p.has_value(), ErrorCode::InvalidArgument,
              "default tuning from a stored spectrum needs --n and --p (or give --kmax and --lambda)");
      tun = default_tuning(*c.n, *c.p, c.t.value_or(static_cast<int>(ev.size())));
    }
  } else {
    const Data d = load_data(c);
    const StageDesign design = make_stage_design(d.panel, d.basis);
    ev = stage_spectrum(stage_one(design, c.tau.value_or(0.5), nullptr, threads_of(c)));
    tun = default_tuning(design.min_period_size(), design.P, design.T());
  }
  if (c.kmax > 0) tun.kmax = c.kmax;
  if (c.lambda_n > 0.0) tun.lambda_n = c.lambda_n;
  emit(selection_json(select_k(ev, tun.kmax, tun.lambda_n), ev), c, out);
  return 0;
}

inline int cmd_test_alpha(const config::RunConfig& c, std::ostream& out) {
  const int draws = c.draws.value_or(499);
  require(draws >= 19, ErrorCode::TooFewDraws, "--draws must be at least 19");
  require(c.level > 0.0 && c.level < 1.0, ErrorCode::InvalidArgument, "--level must lie in (0,1)");
  require(c.k.has_value(), ErrorCode::InvalidArgument, "test-alpha needs --k");
  const Data d = load_data(c);
  const double tau = c.tau.value_or(0.5);
  const AlphaTest t = alpha_zero_test(d.panel, d.basis, tau, *c.k, draws, c.level, c.seed, threads_of(c));
  ojson j;
  j["tau"] = tau;
  j["K"] = *c.k;
  j["statistic"] = t.statistic;
  j["critical_value"] = t.critical_value;
  j["p_value"] = t.p_value;
  j["reject"] = t.reject;
  j["n_draws"] = t.n_draws;
  j["level"] = t.level;
  j["seed"] = c.seed;
  emit(j, c, out);
  return 0;
}

inline int cmd_simulate(const config::RunConfig& c, std::ostream& out) {
  mc::DgpSpec spec;
  if (c.dgp == "dgp1") {
    spec.kind = mc::DgpKind::DGP1;
  } else if (c.dgp == "dgp2") {
    spec.kind = mc::DgpKind::DGP2;
  } else if (c.dgp == "dgp3") {
    spec.kind = mc::DgpKind::DGP3;
  } else {
    fail(ErrorCode::InvalidArgument, "--dgp must be dgp1, dgp2 or dgp3");
  }
  spec.nu = c.nu;
  if (c.error_model == "M1") {
    spec.model = mc::ErrorModel::M1;
  } else if (c.error_model == "M2") {
    spec.model = mc::ErrorModel::M2;
  } else if (c.error_model == "M3") {
    spec.model = mc::ErrorModel::M3;
  } else {
    fail(ErrorCode::InvalidArgument, "--model must be M1, M2 or M3");
  }
  require(c.n.has_value() && c.t.has_value(), ErrorCode::InvalidArgument, "simulate needs --n and --t");
  require(*c.n >= 1 && std::floor(*c.n) == *c.n, ErrorCode::InvalidArgument, "--n must be a positive integer");
  spec.N = static_cast<int>(*c.n);
  spec.T = *c.t;
  require(c.reps.has_value(), ErrorCode::InvalidArgument, "simulate needs --reps");
  mc::EstimatorConfig est;
  est.kmax = c.kmax;
  est.lambda_n = c.lambda_n;
  est.alpha_test = c.alpha_test;
  est.n_draws = c.draws.value_or(199);
  est.level = c.level;
  const std::vector<double> taus = c.taus.empty() ? std::vector<double>{0.5} : c.taus;
  const mc::SimReport rep = mc::run_replications(spec, taus, est, *c.reps, c.seed, threads_of(c), c.timing);
  emit(rep.to_json(), c, out);
  if (!c.per_rep_csv.empty()) {
    auto f = csv::open_for_write(c.per_rep_csv);
    f << rep.per_rep_csv();
  }
  return 0;
}

inline int cmd_evaluate(const config::RunConfig& c, std::ostream& out) {
  require(!c.returns.empty() && !c.factors.empty(), ErrorCode::InvalidArgument, "evaluate needs --returns and --factors");
  auto [Rt, labels] = read_time_table(c.returns);
  auto [F, fnames] = read_time_table(c.factors);
  ReturnPanel rp{Rt.transpose(), labels};
  FactorSeries fs{F};
  const InSampleR2 in = r2_insample(rp, fs);
  const OutOfSampleR2 oos = r2_oos(rp, fs, c.burn_in);
  ojson j;
  j["N"] = rp.R.rows();
  j["T"] = rp.R.cols();
  j["K"] = F.cols();
  j["burn_in"] = c.burn_in;
  j["r2"] = in.total;
  j["r2_TN"] = in.ts_avg;
  j["r2_NT"] = in.cs_avg;
  j["r2_f"] = in.f_total;
  j["r2_f_TN"] = in.f_ts_avg;
  j["r2_f_NT"] = in.f_cs_avg;
  j["r2_O"] = oos.total;
  j["r2_TNO"] = oos.ts_avg;
  j["r2_NTO"] = oos.cs_avg;
  emit(j, c, out);
  return 0;
}

inline void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON config file; flags override its values");
  sub->add_option("--threads", f.threads, "worker threads (default: hardware concurrency)");
  sub->add_option("--seed", f.seed, "master seed (default 0)");
  sub->add_option("--out", f.out, "output path");
}

inline void add_data(CLI::App* sub, Flags& f) {
  sub->add_option("--panel", f.panel, "long-format panel CSV");
  sub->add_option("--unit-col", f.unit_col, "unit column name (default: first column)");
  sub->add_option("--time-col", f.time_col, "time column name (default: second column)");
  sub->add_option("--y-col", f.y_col, "outcome column name (default: third column)");
  sub->add_option("--z-cols", f.z_cols, "characteristic columns (default: all remaining)")->delimiter(',');
  sub->add_option("--family", f.family, "basis family: polynomial, linear_spline, cubic_spline");
  sub->add_option("--degree", f.degree, "polynomial degree");
  sub->add_option("--knots", f.n_knots, "number of equally spaced internal spline knots");
  sub->add_flag("--intercept", f.intercept, "include a global intercept in the basis");
  sub->add_flag("--no-intercept", f.no_intercept, "no global intercept");
  sub->add_option("--rank-transform", f.rank_transform, "1-based characteristic columns to rank within period")
      ->delimiter(',');
  sub->add_flag("--rank-all", f.rank_all, "rank-transform every characteristic");
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Quantile factor model estimation (QR-PCA) and simulation"};
  app.require_subcommand(1);
  detail::Flags f;

  auto* est = app.add_subcommand("estimate", "fit the model at one or more quantiles and export the estimates");
  detail::add_common(est, f);
  detail::add_data(est, f);
  est->add_option("--taus", f.taus, "quantile indices, comma separated (default 0.5)")->delimiter(',');
  est->add_option("--k", f.k, "number of factors for the fixed rule");
  est->add_option("--k-rule", f.k_rule, "fixed, ratio or threshold (default fixed)");
  est->add_option("--kmax", f.kmax, "largest K considered by the ratio rule (default floor(P/2), at most T-2)");
  est->add_option("--lambda", f.lambda_n, "eigenvalue threshold (default 1/ln(min_t N_t))");

  auto* sel = app.add_subcommand("select-k", "estimate the number of factors");
  detail::add_common(sel, f);
  detail::add_data(sel, f);
  sel->add_option("--tau", f.tau, "quantile index (default 0.5)");
  sel->add_option("--eigvals", f.eigvals, "read the spectrum from an exported eigvals.csv instead of a panel");
  sel->add_option("--n", f.n, "N for the default threshold 1/ln(N) when using --eigvals");
  sel->add_option("--p", f.p, "P for the default Kmax when using --eigvals");
  sel->add_option("--t", f.t, "T for the Kmax cap when using --eigvals");
  sel->add_option("--kmax", f.kmax, "largest K considered by the ratio rule");
  sel->add_option("--lambda", f.lambda_n, "eigenvalue threshold");

  auto* ta = app.add_subcommand("test-alpha", "bootstrap test of a zero intercept function");
  detail::add_common(ta, f);
  detail::add_data(ta, f);
  ta->add_option("--tau", f.tau, "quantile index (default 0.5)");
  ta->add_option("--k", f.k, "number of factors");
  ta->add_option("--draws", f.draws, "bootstrap draws, at least 19 (default 499)");
  ta->add_option("--level", f.level, "significance level (default 0.05)");

  auto* sim = app.add_subcommand("simulate", "Monte Carlo replications of a simulation design");
  detail::add_common(sim, f);
  sim->add_option("--dgp", f.dgp, "dgp1, dgp2 or dgp3");
  sim->add_option("--nu", f.nu, "dgp1 error degrees of freedom: 1, 2 or 3");
  sim->add_option("--model", f.error_model, "dgp2 error model: M1, M2 or M3");
  sim->add_option("--n", f.n, "cross-section size N");
  sim->add_option("--t", f.t, "number of periods T");
  sim->add_option("--taus", f.taus, "quantile indices, comma separated (default 0.5)")->delimiter(',');
  sim->add_option("--reps", f.reps, "number of replications");
  sim->add_option("--kmax", f.kmax, "override Kmax");
  sim->add_option("--lambda", f.lambda_n, "override the eigenvalue threshold");
  sim->add_flag("--alpha-test", f.alpha_test, "run the bootstrap zero-intercept test in every replication");
  sim->add_option("--draws", f.draws, "bootstrap draws for --alpha-test (default 199)");
  sim->add_option("--level", f.level, "test level (default 0.05)");
  sim->add_option("--per-rep-csv", f.per_rep_csv, "also write per-replication metrics to this CSV");
  sim->add_flag("--timing", f.timing, "include wall time in the report");

  auto* ev = app.add_subcommand("evaluate", "in-sample and out-of-sample R^2 of factors for portfolio returns");
  detail::add_common(ev, f);
  ev->add_option("--returns", f.returns, "CSV, one row per period, one column per portfolio");
  ev->add_option("--factors", f.factors, "CSV, one row per period, one column per factor");
  ev->add_option("--burn-in", f.burn_in, "first estimation window length (default 240)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  try {
    const config::RunConfig c = detail::merge(sub, command, f);
    if (command == "estimate") return detail::cmd_estimate(c, out);
    if (command == "select-k") return detail::cmd_select_k(c, out);
    if (command == "test-alpha") return detail::cmd_test_alpha(c, out);
    if (command == "simulate") return detail::cmd_simulate(c, out);
    return detail::cmd_evaluate(c, out);
  } catch (const Error& e) {
    err << "qfm " << command << ": " << e.what() << '\n';
    return static_cast<int>(error_class(e.code()));
  } catch (const std::filesystem::filesystem_error& e) {
    err << "qfm " << command << ": " << e.what() << '\n';
    return static_cast<int>(ErrorClass::Data);
  } catch (const std::exception& e) {
    err << "qfm " << command << ": " << e.what() << '\n';
    return static_cast<int>(ErrorClass::Numerical);
  }
}

}  // namespace qfm::cli
