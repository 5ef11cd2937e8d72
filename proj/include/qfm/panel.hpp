#pragma once

// Long-format (unit, time, y, z_1..z_M) panels, possibly unbalanced.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qfm/csv.hpp"
#include "qfm/error.hpp"

namespace qfm {

/// One period's observations. Rows are ordered by unit index.
struct CrossSection {
  std::string period;
  std::vector<int> units;  // indices into Panel::units()
  Eigen::VectorXd y;
  Eigen::MatrixXd Z;       // size() x M

  int size() const { return static_cast<int>(y.size()); }
};

/// Column names used when reading a panel. An empty name selects the
/// positional default: unit = column 0, time = column 1, y = column 2 and
/// z = every remaining column.
struct PanelSchema {
  std::string unit;
  std::string time;
  std::string y;
  std::vector<std::string> z;
};

namespace detail {

// Time labels sort numerically when every label is a number, lexicographically otherwise.
inline std::vector<std::string> sorted_labels(std::vector<std::string> labels) {
  const bool numeric = std::all_of(labels.begin(), labels.end(),
                                   [](const std::string& s) { return csv::parse_double(s).has_value(); });
  if (numeric) {
    std::stable_sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
      const double x = *csv::parse_double(a), y = *csv::parse_double(b);
      return x < y || (x == y && a < b);
    });
  } else {
    std::sort(labels.begin(), labels.end());
  }
  return labels;
}

}  // namespace detail

class Panel {
 public:
  struct Record {
    std::string unit;
    std::string period;
    double y = 0.0;
    std::vector<double> z;
  };

  Panel() = default;

  /// Builds a panel from individual observations. Duplicate (unit, period)
  /// pairs, wrong-length or non-finite z, and non-finite y are errors.
  static Panel from_records(const std::vector<Record>& records, int M, std::vector<std::string> z_names = {}) {
    require(M >= 1, ErrorCode::InvalidArgument, "panel needs at least one characteristic");
    Panel p;
    p.M_ = M;
    p.z_names_ = default_names(std::move(z_names), M);

    std::vector<std::string> units, periods;
    {
      std::unordered_map<std::string, int> seen_u, seen_t;
      for (const auto& r : records) {
        if (seen_u.emplace(r.unit, 0).second) units.push_back(r.unit);
        if (seen_t.emplace(r.period, 0).second) periods.push_back(r.period);
      }
    }
    std::sort(units.begin(), units.end());
    p.units_ = std::move(units);
    p.periods_ = detail::sorted_labels(std::move(periods));

    std::unordered_map<std::string, int> unit_index, period_index;
    for (int i = 0; i < static_cast<int>(p.units_.size()); ++i) unit_index[p.units_[i]] = i;
    for (int t = 0; t < static_cast<int>(p.periods_.size()); ++t) period_index[p.periods_[t]] = t;

    // (unit index, record index) per period
    std::vector<std::vector<std::pair<int, std::size_t>>> rows(p.periods_.size());
    for (std::size_t k = 0; k < records.size(); ++k) {
      const auto& r = records[k];
      require(static_cast<int>(r.z.size()) == M, ErrorCode::DimensionMismatch,
              "record for unit '" + r.unit + "' has " + std::to_string(r.z.size()) + " characteristics, expected " +
                  std::to_string(M));
      require(std::isfinite(r.y) && std::all_of(r.z.begin(), r.z.end(), [](double v) { return std::isfinite(v); }),
              ErrorCode::NonFiniteInput, "non-finite value for unit '" + r.unit + "' period '" + r.period + "'");
      rows[period_index[r.period]].emplace_back(unit_index[r.unit], k);
    }

    p.sections_.resize(p.periods_.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
      auto& rt = rows[t];
      std::sort(rt.begin(), rt.end());
      for (std::size_t k = 1; k < rt.size(); ++k) {
        if (rt[k].first == rt[k - 1].first)
          fail(ErrorCode::DuplicateObservation,
               "unit '" + p.units_[rt[k].first] + "' period '" + p.periods_[t] + "'");
      }
      CrossSection& cs = p.sections_[t];
      cs.period = p.periods_[t];
      const int n = static_cast<int>(rt.size());
      cs.units.resize(n);
      cs.y.resize(n);
      cs.Z.resize(n, M);
      for (int i = 0; i < n; ++i) {
        const auto& r = records[rt[i].second];
        cs.units[i] = rt[i].first;
        cs.y(i) = r.y;
        for (int m = 0; m < M; ++m) cs.Z(i, m) = r.z[m];
      }
    }
    return p;
  }

  /// Builds a panel from ready-made cross sections. Unit labels must already be
  /// sorted and each section's unit indices strictly increasing.
  static Panel from_sections(std::vector<std::string> units, std::vector<CrossSection> sections, int M,
                             std::vector<std::string> z_names = {}) {
    require(M >= 1, ErrorCode::InvalidArgument, "panel needs at least one characteristic");
    require(std::is_sorted(units.begin(), units.end()), ErrorCode::InvalidArgument, "unit labels must be sorted");
    Panel p;
    p.M_ = M;
    p.z_names_ = default_names(std::move(z_names), M);
    p.units_ = std::move(units);
    const int n_units = static_cast<int>(p.units_.size());
    for (const auto& cs : sections) {
      require(cs.size() >= 1, ErrorCode::EmptyPeriod, "period '" + cs.period + "' has no observations");
      require(cs.Z.rows() == cs.size() && cs.Z.cols() == M && static_cast<int>(cs.units.size()) == cs.size(),
              ErrorCode::DimensionMismatch, "period '" + cs.period + "' has inconsistent shapes");
      for (int i = 0; i < cs.size(); ++i) {
        require(cs.units[i] >= 0 && cs.units[i] < n_units, ErrorCode::InvalidArgument, "unit index out of range");
        if (i > 0 && cs.units[i] <= cs.units[i - 1])
          fail(ErrorCode::DuplicateObservation, "unit '" + p.units_[cs.units[i]] + "' period '" + cs.period + "'");
      }
      require(cs.y.allFinite() && cs.Z.allFinite(), ErrorCode::NonFiniteInput,
              "non-finite value in period '" + cs.period + "'");
      p.periods_.push_back(cs.period);
    }
    p.sections_ = std::move(sections);
    return p;
  }

  const std::vector<std::string>& units() const { return units_; }
  const std::vector<std::string>& periods() const { return periods_; }
  const std::vector<std::string>& characteristic_names() const { return z_names_; }
  const std::vector<CrossSection>& sections() const { return sections_; }
  const CrossSection& section(int t) const { return sections_.at(t); }

  int M() const { return M_; }
  int T() const { return static_cast<int>(periods_.size()); }
  int n_units() const { return static_cast<int>(units_.size()); }

  std::size_t n_obs() const {
    std::size_t n = 0;
    for (const auto& cs : sections_) n += cs.size();
    return n;
  }

  int min_period_size() const {
    int n = sections_.empty() ? 0 : sections_.front().size();
    for (const auto& cs : sections_) n = std::min(n, cs.size());
    return n;
  }

  std::optional<int> period_index(const std::string& label) const {
    for (int t = 0; t < T(); ++t)
      if (periods_[t] == label) return t;
    return std::nullopt;
  }

 private:
  static std::vector<std::string> default_names(std::vector<std::string> names, int M) {
    if (names.empty())
      for (int m = 0; m < M; ++m) names.push_back("z" + std::to_string(m + 1));
    require(static_cast<int>(names.size()) == M, ErrorCode::DimensionMismatch, "characteristic name count");
    return names;
  }

  int M_ = 0;
  std::vector<std::string> units_;
  std::vector<std::string> periods_;
  std::vector<std::string> z_names_;
  std::vector<CrossSection> sections_;
};

inline Panel load_panel(std::istream& in, const PanelSchema& schema = {}) {
  const csv::Table table = csv::read_table(in);
  const auto& header = table.header;

  auto find = [&](const std::string& name, int fallback) -> int {
    if (name.empty()) {
      require(fallback < static_cast<int>(header.size()), ErrorCode::MissingColumn,
              "header has only " + std::to_string(header.size()) + " columns");
      return fallback;
    }
    for (int c = 0; c < static_cast<int>(header.size()); ++c)
      if (header[c] == name) return c;
    fail(ErrorCode::MissingColumn, "column '" + name + "' not found in header");
  };

  const int cu = find(schema.unit, 0);
  const int ct = find(schema.time, 1);
  const int cy = find(schema.y, 2);
  std::vector<int> cz;
  std::vector<std::string> z_names;
  if (schema.z.empty()) {
    for (int c = 0; c < static_cast<int>(header.size()); ++c) {
      if (c == cu || c == ct || c == cy) continue;
      cz.push_back(c);
      z_names.push_back(header[c]);
    }
  } else {
    for (const auto& name : schema.z) {
      cz.push_back(find(name, -1));
      z_names.push_back(name);
    }
  }
  require(!cz.empty(), ErrorCode::MissingColumn, "no characteristic columns");

  const int M = static_cast<int>(cz.size());
  std::vector<Panel::Record> records;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = "row " + std::to_string(r + 1);
    require(row.size() == header.size(), ErrorCode::NonNumericCell,
            where + ": expected " + std::to_string(header.size()) + " fields, got " + std::to_string(row.size()));
    Panel::Record rec;
    rec.unit = row[cu];
    rec.period = row[ct];
    auto parse = [&](int c) {
      auto v = csv::parse_double(row[c]);
      if (!v) fail(ErrorCode::NonNumericCell, where + ", column '" + header[c] + "': '" + row[c] + "'");
      return *v;
    };
    rec.y = parse(cy);
    rec.z.resize(M);
    for (int m = 0; m < M; ++m) rec.z[m] = parse(cz[m]);
    records.push_back(std::move(rec));
  }
  return Panel::from_records(records, M, std::move(z_names));
}

inline Panel load_panel(const std::string& path, const PanelSchema& schema = {}) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open '" + path + "'");
  return load_panel(in, schema);
}

/// Writes unit,time,y,z... with shortest round-trip number formatting.
inline void save_panel(const Panel& panel, std::ostream& out) {
  out << "unit,time,y";
  for (const auto& name : panel.characteristic_names()) out << ',' << name;
  out << '\n';
  for (const auto& cs : panel.sections()) {
    for (int i = 0; i < cs.size(); ++i) {
      out << panel.units()[cs.units[i]] << ',' << cs.period << ',' << csv::format_double(cs.y(i));
      for (int m = 0; m < panel.M(); ++m) out << ',' << csv::format_double(cs.Z(i, m));
      out << '\n';
    }
  }
}

inline void save_panel(const Panel& panel, const std::string& path) {
  auto out = csv::open_for_write(path);
  save_panel(panel, out);
}

inline CrossSection slice_period(const Panel& panel, const std::string& period) {
  const auto t = panel.period_index(period);
  if (!t) fail(ErrorCode::UnknownPeriod, "period '" + period + "'");
  return panel.section(*t);
}

/// Average ranks (1-based) of v, ties sharing the mean of their positions.
inline std::vector<double> average_ranks(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const int n = static_cast<int>(v.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return v(a) < v(b); });
  std::vector<double> rank(n);
  for (int i = 0; i < n;) {
    int j = i;
    while (j + 1 < n && v(order[j + 1]) == v(order[i])) ++j;
    const double r = 0.5 * (i + j) + 1.0;
    for (int k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

/// Within each period, maps selected characteristics to (rank-1)/(n-1) - 0.5
/// using average ranks; a single-observation period maps to 0. Evaluated as
/// (2*rank - n - 1) / (2*(n-1)) so mirrored ranks give exactly negated values.
inline Panel rank_transform(const Panel& panel, const std::vector<int>& columns) {
  for (int c : columns)
    require(c >= 0 && c < panel.M(), ErrorCode::InvalidArgument, "rank column " + std::to_string(c) + " out of range");
  std::vector<CrossSection> sections = panel.sections();
  for (auto& cs : sections) {
    const int n = cs.size();
    require(n >= 1, ErrorCode::EmptyPeriod, "period '" + cs.period + "' has no observations");
    for (int c : columns) {
      if (n == 1) {
        cs.Z(0, c) = 0.0;
        continue;
      }
      const auto rank = average_ranks(cs.Z.col(c));
      for (int i = 0; i < n; ++i) cs.Z(i, c) = (2.0 * rank[i] - n - 1.0) / (2.0 * (n - 1.0));
    }
  }
  return Panel::from_sections(panel.units(), std::move(sections), panel.M(), panel.characteristic_names());
}

}  // namespace qfm
