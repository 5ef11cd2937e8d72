#pragma once

// JSON run configuration. Every object is checked against the keys its
// command accepts; anything else is a usage error.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "qfm/error.hpp"
#include "qfm/panel.hpp"
#include "qfm/sieve.hpp"

namespace qfm::config {

using json = nlohmann::json;

inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  require(obj.is_object(), ErrorCode::InvalidArgument, where + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    require(allowed.count(it.key()) > 0, ErrorCode::InvalidArgument, "unknown key '" + it.key() + "' in " + where);
}

template <class T>
T get(const json& obj, const std::string& key, const std::string& where) {
  try {
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      require(obj.at(key).is_number_integer(), ErrorCode::InvalidArgument,
              "'" + key + "' in " + where + " must be an integer");
    }
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::InvalidArgument, "bad value for '" + key + "' in " + where);
  }
}

inline json load_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::InvalidArgument, "cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, "config '" + path + "' is not valid JSON: " + e.what());
  }
}

inline BasisFamily parse_family(const std::string& s) {
  if (s == "polynomial") return BasisFamily::Polynomial;
  if (s == "linear_spline") return BasisFamily::LinearSpline;
  if (s == "cubic_spline") return BasisFamily::CubicSpline;
  fail(ErrorCode::InvalidArgument, "unknown basis family '" + s + "'");
}

inline BlockSpec parse_block(const json& j, const std::string& where, BlockSpec b = {}) {
  if (j.contains("family")) b.family = parse_family(get<std::string>(j, "family", where));
  if (j.contains("degree")) b.degree = get<int>(j, "degree", where);
  if (j.contains("knots")) b.knots = get<std::vector<double>>(j, "knots", where);
  if (j.contains("n_knots")) b.n_knots = get<int>(j, "n_knots", where);
  if (j.contains("boundary")) {
    const auto v = get<std::vector<double>>(j, "boundary", where);
    require(v.size() == 2, ErrorCode::InvalidArgument, "boundary in " + where + " needs two numbers");
    b.boundary = std::make_pair(v[0], v[1]);
  }
  return b;
}

/// {"family", "degree", "knots", "n_knots", "boundary", "intercept", "blocks": [...]}
inline BasisSpec parse_basis(const json& j) {
  check_keys(j, {"family", "degree", "knots", "n_knots", "boundary", "intercept", "blocks"}, "basis");
  BasisSpec spec;
  const BlockSpec shared = parse_block(j, "basis");
  spec.include_intercept = j.contains("intercept") ? get<bool>(j, "intercept", "basis") : true;
  if (j.contains("blocks")) {
    const json& blocks = j.at("blocks");
    require(blocks.is_array() && !blocks.empty(), ErrorCode::InvalidArgument, "basis.blocks must be a non-empty array");
    for (std::size_t m = 0; m < blocks.size(); ++m) {
      const std::string where = "basis.blocks[" + std::to_string(m) + "]";
      check_keys(blocks[m], {"family", "degree", "knots", "n_knots", "boundary"}, where);
      spec.blocks.push_back(parse_block(blocks[m], where, shared));
    }
  } else {
    spec.blocks.push_back(shared);
  }
  return spec;
}

inline PanelSchema parse_schema(const json& j) {
  check_keys(j, {"unit", "time", "y", "z"}, "schema");
  PanelSchema s;
  if (j.contains("unit")) s.unit = get<std::string>(j, "unit", "schema");
  if (j.contains("time")) s.time = get<std::string>(j, "time", "schema");
  if (j.contains("y")) s.y = get<std::string>(j, "y", "schema");
  if (j.contains("z")) s.z = get<std::vector<std::string>>(j, "z", "schema");
  return s;
}

/// Union of every command's settings; each command reads what it needs.
struct RunConfig {
  // data
  std::string panel;
  PanelSchema schema;
  std::optional<BasisSpec> basis;
  std::vector<int> rank_transform;  // 1-based columns
  bool rank_all = false;
  // estimation
  std::vector<double> taus;
  std::optional<double> tau;
  std::optional<int> k;
  std::string k_rule = "fixed";
  int kmax = 0;
  double lambda_n = 0.0;
  // select-k from a stored spectrum
  std::string eigvals;
  std::optional<double> n;
  std::optional<int> p;
  std::optional<int> t;
  // bootstrap
  std::optional<int> draws;
  double level = 0.05;
  // simulation
  std::string dgp;
  int nu = 1;
  std::string error_model = "M1";
  std::optional<int> reps;
  bool alpha_test = false;
  std::string per_rep_csv;
  bool timing = false;
  // evaluation
  std::string returns;
  std::string factors;
  int burn_in = 240;
  // common
  std::string out;
  std::optional<int> threads;
  std::uint64_t seed = 0;
};

inline const std::set<std::string>& allowed_keys(const std::string& command) {
  static const std::set<std::string> estimate{"panel", "schema", "basis", "rank_transform", "taus", "k", "k_rule",
                                              "kmax", "lambda_n", "out", "threads", "seed"};
  static const std::set<std::string> select_k{"panel", "schema", "basis", "rank_transform", "tau", "eigvals", "n",
                                              "p", "t", "kmax", "lambda_n", "out", "threads", "seed"};
  static const std::set<std::string> test_alpha{"panel", "schema", "basis", "rank_transform", "tau", "k", "draws",
                                                "level", "out", "threads", "seed"};
  static const std::set<std::string> simulate{"dgp", "nu", "error_model", "n", "t", "taus", "reps", "kmax",
                                              "lambda_n", "alpha_test", "draws", "level", "out", "per_rep_csv",
                                              "timing", "threads", "seed"};
  static const std::set<std::string> evaluate{"returns", "factors", "burn_in", "out", "threads", "seed"};
  if (command == "estimate") return estimate;
  if (command == "select-k") return select_k;
  if (command == "test-alpha") return test_alpha;
  if (command == "simulate") return simulate;
  if (command == "evaluate") return evaluate;
  fail(ErrorCode::InvalidArgument, "unknown command '" + command + "'");
}

inline RunConfig parse(const json& j, const std::string& command) {
  const std::string where = "config";
  check_keys(j, allowed_keys(command), where);
  RunConfig c;
  if (j.contains("panel")) c.panel = get<std::string>(j, "panel", where);
  if (j.contains("schema")) c.schema = parse_schema(j.at("schema"));
  if (j.contains("basis")) c.basis = parse_basis(j.at("basis"));
  if (j.contains("rank_transform")) {
    const json& rt = j.at("rank_transform");
    if (rt.is_boolean()) {
      c.rank_all = rt.get<bool>();
    } else {
      c.rank_transform = get<std::vector<int>>(j, "rank_transform", where);
    }
  }
  if (j.contains("taus")) c.taus = get<std::vector<double>>(j, "taus", where);
  if (j.contains("tau")) c.tau = get<double>(j, "tau", where);
  if (j.contains("k")) c.k = get<int>(j, "k", where);
  if (j.contains("k_rule")) c.k_rule = get<std::string>(j, "k_rule", where);
  if (j.contains("kmax")) c.kmax = get<int>(j, "kmax", where);
  if (j.contains("lambda_n")) c.lambda_n = get<double>(j, "lambda_n", where);
  if (j.contains("eigvals")) c.eigvals = get<std::string>(j, "eigvals", where);
  if (j.contains("n")) c.n = get<double>(j, "n", where);
  if (j.contains("p")) c.p = get<int>(j, "p", where);
  if (j.contains("t")) c.t = get<int>(j, "t", where);
  if (j.contains("draws")) c.draws = get<int>(j, "draws", where);
  if (j.contains("level")) c.level = get<double>(j, "level", where);
  if (j.contains("dgp")) c.dgp = get<std::string>(j, "dgp", where);
  if (j.contains("nu")) c.nu = get<int>(j, "nu", where);
  if (j.contains("error_model")) c.error_model = get<std::string>(j, "error_model", where);
  if (j.contains("reps")) c.reps = get<int>(j, "reps", where);
  if (j.contains("alpha_test")) c.alpha_test = get<bool>(j, "alpha_test", where);
  if (j.contains("per_rep_csv")) c.per_rep_csv = get<std::string>(j, "per_rep_csv", where);
  if (j.contains("timing")) c.timing = get<bool>(j, "timing", where);
  if (j.contains("returns")) c.returns = get<std::string>(j, "returns", where);
  if (j.contains("factors")) c.factors = get<std::string>(j, "factors", where);
  if (j.contains("burn_in")) c.burn_in = get<int>(j, "burn_in", where);
  if (j.contains("out")) c.out = get<std::string>(j, "out", where);
  if (j.contains("threads")) c.threads = get<int>(j, "threads", where);
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed", where);
  return c;
}

}  // namespace qfm::config
