/**
 * Copyright 2026 The cdimpute Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef CDIMPUTE_DATA_HPP
#define CDIMPUTE_DATA_HPP

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cdimpute/core.hpp"

namespace cdimpute {

enum class Domain { Source, Target };
enum class Split { Train, Val, Test };

inline const char* to_string(Domain d) { return d == Domain::Source ? "source" : "target"; }

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

struct FeatureNorm {
  double mean = 0.0;
  double scale = 1.0;
};

using NormRecord = std::vector<FeatureNorm>;

/**
 * A K x L slice of a multivariate series.
 *
 * Positions partition into three disjoint sets: conditional observations
 * (observed and not artificially masked), artificial targets (observed but
 * hidden from the model, ground truth kept in `values`), and original-missing
 * positions (`values` holds the sentinel 0 until interpolation fills it).
 */
struct TimeWindow {
  Matrix values;
  Mask obs_mask;
  Mask artificial_mask;
  Mask target_mask;  // artificial | original-missing
  Domain domain = Domain::Target;
  std::string window_id;
  std::int64_t start_row = 0;
  NormRecord norm;

  Eigen::Index features() const { return values.rows(); }
  Eigen::Index length() const { return values.cols(); }

  Mask cond_mask() const {
    return (obs_mask.array() * (1 - artificial_mask.array())).matrix();
  }
  Mask missing_mask() const { return (1 - obs_mask.array()).matrix(); }

  /// X^co: observed, non-target values with the sentinel elsewhere.
  Matrix conditional_values() const { return values.cwiseProduct(to_real(cond_mask())); }

  static TimeWindow observed(Matrix values, Mask obs, Domain d, std::string id) {
    TimeWindow w;
    const auto k = values.rows(), l = values.cols();
    w.values = std::move(values);
    w.obs_mask = std::move(obs);
    w.artificial_mask = Mask::Zero(k, l);
    w.target_mask = w.missing_mask();
    w.domain = d;
    w.window_id = std::move(id);
    for (Eigen::Index i = 0; i < w.values.size(); ++i)
      if (!w.obs_mask.data()[i]) w.values.data()[i] = 0.0;
    return w;
  }
};

struct DomainDataset {
  std::vector<TimeWindow> windows;
  Split split = Split::Train;
  Domain domain = Domain::Target;
  std::vector<std::string> feature_names;
  double sample_period_s = 0.0;
  std::int64_t row_begin = 0;  // half-open row range this split was cut from
  std::int64_t row_end = 0;

  Eigen::Index features() const { return windows.empty() ? 0 : windows.front().features(); }
  Eigen::Index length() const { return windows.empty() ? 0 : windows.front().length(); }
};

struct SplitDatasets {
  DomainDataset train, val, test;
  NormRecord norm;
};

// ---------------------------------------------------------------------------
// CSV ingestion

/// Raw table: one row per timestamp. `observed(t, k) == 0` at empty cells.
struct SeriesTable {
  std::vector<std::string> timestamps;
  std::vector<std::string> feature_names;
  Matrix values;
  Mask observed;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      cells.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

inline std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

}  // namespace detail

/**
 * Read a CSV whose first column is the timestamp. `schema` selects feature
 * columns by name, in order; an empty schema takes every non-timestamp column.
 */
inline SeriesTable read_csv_table(const std::string& path, const std::vector<std::string>& schema = {}) {
  std::ifstream in(path);
  if (!in) fail<Error>("cannot open '", path, "'");
  std::string line;
  if (!std::getline(in, line)) fail<SchemaError>(path, ": empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  if (header.size() < 2) fail<SchemaError>(path, ": header needs a timestamp column and at least one feature");

  std::vector<std::size_t> cols;
  SeriesTable table;
  if (schema.empty()) {
    for (std::size_t c = 1; c < header.size(); ++c) {
      cols.push_back(c);
      table.feature_names.push_back(header[c]);
    }
  } else {
    for (const auto& name : schema) {
      auto it = std::find(header.begin() + 1, header.end(), name);
      if (it == header.end()) fail<SchemaError>(path, ": column '", name, "' not in header");
      cols.push_back(static_cast<std::size_t>(it - header.begin()));
      table.feature_names.push_back(name);
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<std::vector<std::uint8_t>> obs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      fail<SchemaError>(path, ": row ", lineno, " has ", cells.size(), " columns, header has ",
                        header.size());
    }
    table.timestamps.push_back(detail::trim(cells[0]));
    std::vector<double> r(cols.size(), 0.0);
    std::vector<std::uint8_t> o(cols.size(), 0);
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const std::string cell = detail::trim(cells[cols[j]]);
      if (cell.empty()) continue;
      double v = 0.0;
      const char* first = cell.data();
      const char* last = first + cell.size();
      if (*first == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        fail<ParseError>(path, ": row ", lineno, ", column '", header[cols[j]], "': cannot parse '",
                         cell, "' as a number");
      }
      r[j] = v;
      o[j] = 1;
    }
    rows.push_back(std::move(r));
    obs.push_back(std::move(o));
  }

  const auto t = static_cast<Eigen::Index>(rows.size());
  const auto k = static_cast<Eigen::Index>(cols.size());
  table.values.resize(t, k);
  table.observed.resize(t, k);
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = 0; j < k; ++j) {
      table.values(i, j) = rows[i][j];
      table.observed(i, j) = obs[i][j];
    }
  return table;
}

struct WindowingOptions {
  Eigen::Index length = 36;
  Eigen::Index stride = 0;  // 0 means stride = length
  Split split = Split::Train;
  Domain domain = Domain::Target;
};

/// Cut rows [row_begin, row_end) of a table into K x L windows.
inline DomainDataset cut_windows(const SeriesTable& table, std::int64_t row_begin, std::int64_t row_end,
                                 const WindowingOptions& opt) {
  if (opt.length <= 0) fail<ConfigError>("window length must be positive");
  // Val/Test windows never overlap.
  const Eigen::Index stride =
      opt.split == Split::Train ? (opt.stride > 0 ? opt.stride : opt.length) : opt.length;
  DomainDataset ds;
  ds.split = opt.split;
  ds.domain = opt.domain;
  ds.feature_names = table.feature_names;
  ds.row_begin = row_begin;
  ds.row_end = row_end;
  for (std::int64_t s = row_begin; s + opt.length <= row_end; s += stride) {
    Matrix v = table.values.middleRows(s, opt.length).transpose();
    Mask o = table.observed.middleRows(s, opt.length).transpose();
    auto w = TimeWindow::observed(std::move(v), std::move(o), opt.domain,
                                  detail::concat(to_string(opt.domain), "/", to_string(opt.split), "/", s));
    w.start_row = s;
    ds.windows.push_back(std::move(w));
  }
  return ds;
}

inline DomainDataset load_csv(const std::string& path, const std::vector<std::string>& schema,
                              const WindowingOptions& opt) {
  auto table = read_csv_table(path, schema);
  return cut_windows(table, 0, static_cast<std::int64_t>(table.timestamps.size()), opt);
}

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

/// Chronological train/val/test split by row fractions, then windowing.
inline SplitDatasets split_table(const SeriesTable& table, Eigen::Index length, Eigen::Index train_stride,
                                 Domain domain, SplitFractions f = {}) {
  if (f.train <= 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
    fail<ConfigError>("split fractions must be nonnegative and sum to 1");
  const auto n = static_cast<std::int64_t>(table.timestamps.size());
  const auto a = static_cast<std::int64_t>(std::floor(f.train * static_cast<double>(n)));
  const auto b = static_cast<std::int64_t>(std::floor((f.train + f.val) * static_cast<double>(n)));
  SplitDatasets out;
  out.train = cut_windows(table, 0, a, {length, train_stride, Split::Train, domain});
  out.val = cut_windows(table, a, b, {length, length, Split::Val, domain});
  out.test = cut_windows(table, b, n, {length, length, Split::Test, domain});
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

/**
 * Per-feature mean and population standard deviation over the observed
 * entries of the training windows. Rows shared by overlapping windows are
 * counted once.
 */
inline NormRecord fit_normalization(const DomainDataset& train) {
  if (train.windows.empty()) fail<ConfigError>("cannot fit normalization on an empty training split");
  const auto k = train.features();
  std::vector<double> sum(k, 0.0), sumsq(k, 0.0);
  std::vector<std::size_t> count(k, 0);
  std::int64_t lo = train.windows.front().start_row, hi = lo;
  for (const auto& w : train.windows) {
    lo = std::min(lo, w.start_row);
    hi = std::max(hi, w.start_row + w.length());
  }
  std::vector<bool> seen(static_cast<std::size_t>(hi - lo), false);
  // Pass 1: mean.
  std::vector<std::pair<std::int64_t, std::pair<const TimeWindow*, Eigen::Index>>> uniq;
  for (const auto& w : train.windows)
    for (Eigen::Index l = 0; l < w.length(); ++l) {
      const auto r = static_cast<std::size_t>(w.start_row + l - lo);
      if (seen[r]) continue;
      seen[r] = true;
      uniq.push_back({w.start_row + l, {&w, l}});
    }
  for (const auto& [row, ref] : uniq) {
    const auto& [w, l] = ref;
    for (Eigen::Index f = 0; f < k; ++f)
      if (w->obs_mask(f, l)) {
        sum[f] += w->values(f, l);
        ++count[f];
      }
  }
  NormRecord rec(k);
  for (Eigen::Index f = 0; f < k; ++f) {
    if (count[f] == 0) {
      const std::string name =
          f < static_cast<Eigen::Index>(train.feature_names.size()) ? train.feature_names[f] : std::to_string(f);
      fail<ConfigError>("feature '", name, "' has no observed training entries");
    }
    rec[f].mean = sum[f] / static_cast<double>(count[f]);
  }
  // Pass 2: centered second moment.
  for (const auto& [row, ref] : uniq) {
    const auto& [w, l] = ref;
    for (Eigen::Index f = 0; f < k; ++f)
      if (w->obs_mask(f, l)) {
        const double d = w->values(f, l) - rec[f].mean;
        sumsq[f] += d * d;
      }
  }
  for (Eigen::Index f = 0; f < k; ++f) {
    const double sd = std::sqrt(sumsq[f] / static_cast<double>(count[f]));
    rec[f].scale = sd > 0.0 ? sd : 1.0;
  }
  return rec;
}

inline void apply_normalization(DomainDataset& ds, const NormRecord& rec) {
  for (auto& w : ds.windows) {
    if (static_cast<Eigen::Index>(rec.size()) != w.features()) fail<ShapeError>("norm record size mismatch");
    for (Eigen::Index f = 0; f < w.features(); ++f)
      for (Eigen::Index l = 0; l < w.length(); ++l)
        w.values(f, l) = w.obs_mask(f, l) ? (w.values(f, l) - rec[f].mean) / rec[f].scale : 0.0;
    w.norm = rec;
  }
}

/// Fit on train only, then transform every split.
inline void normalize(SplitDatasets& d) {
  d.norm = fit_normalization(d.train);
  apply_normalization(d.train, d.norm);
  apply_normalization(d.val, d.norm);
  apply_normalization(d.test, d.norm);
}

inline Matrix denormalize(const Matrix& values, const NormRecord& rec) {
  Matrix out = values;
  for (Eigen::Index f = 0; f < out.rows(); ++f)
    out.row(f) = out.row(f).array() * rec[f].scale + rec[f].mean;
  return out;
}

// ---------------------------------------------------------------------------
// Masking

enum class TrainStrategy { Point, Block };
enum class TestPattern { Point, Block };

struct MaskingConfig {
  TrainStrategy train_strategy = TrainStrategy::Point;
  double point_ratio_min = 0.0;
  double point_ratio_max = 1.0;
  double block_extra_point_ratio = 0.05;
  TestPattern test_pattern = TestPattern::Point;
  double test_point_rate = 0.10;
  double test_block_point_rate = 0.05;
  double test_block_prob = 0.0015;
  int test_block_len_min = 1;
  int test_block_len_max = 4;
  std::uint64_t seed = 0;

  void validate(Eigen::Index length) const {
    auto prob = [](double p, const char* name) {
      if (!(p >= 0.0 && p <= 1.0)) fail<ConfigError>("masking.", name, " must be in [0,1], got ", p);
    };
    prob(point_ratio_min, "point_ratio_min");
    prob(point_ratio_max, "point_ratio_max");
    prob(block_extra_point_ratio, "block_extra_point_ratio");
    prob(test_point_rate, "test_point_rate");
    prob(test_block_point_rate, "test_block_point_rate");
    prob(test_block_prob, "test_block_prob");
    if (point_ratio_min > point_ratio_max) fail<ConfigError>("masking: point ratio range is empty");
    if (test_block_len_min < 1 || test_block_len_min > test_block_len_max)
      fail<ConfigError>("masking: block length range is empty");
    if (length > 0 && test_block_len_max > length)
      fail<ConfigError>("masking: block length ", test_block_len_max, " exceeds window length ", length);
  }
};

/// Result of a masking draw; `std::nullopt` from the masking functions
/// signals a window with nothing observed, which callers skip.
struct MaskOutcome {
  TimeWindow window;
  double point_ratio = 0.0;        // train point strategy
  Eigen::Index block_start = -1;   // train block strategy
  Eigen::Index block_length = 0;
  std::size_t block_starts = 0;    // test block pattern
};

namespace detail {

inline std::vector<Eigen::Index> positions_where(const Mask& m, const Mask* exclude = nullptr) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (m.data()[i] && !(exclude && exclude->data()[i])) idx.push_back(i);
  return idx;
}

/// Mark exactly `n` of `candidates` (uniformly, without replacement).
inline void mark_random(std::vector<Eigen::Index> candidates, std::size_t n, Mask& out, Rng& rng) {
  n = std::min(n, candidates.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
    out.data()[candidates[i]] = 1;
  }
}

inline MaskOutcome finish(const TimeWindow& in, Mask artificial) {
  MaskOutcome o{in};
  o.window.artificial_mask = (artificial.array() * in.obs_mask.array()).matrix();
  o.window.target_mask = (o.window.artificial_mask.array() + in.missing_mask().array()).matrix();
  return o;
}

}  // namespace detail

/// Self-supervised target selection for a training window.
inline std::optional<MaskOutcome> apply_train_masking(const TimeWindow& w, const MaskingConfig& cfg, Rng& rng) {
  const auto observed = detail::positions_where(w.obs_mask);
  if (observed.empty()) return std::nullopt;
  const auto k = w.features(), l = w.length();
  Mask art = Mask::Zero(k, l);
  if (cfg.train_strategy == TrainStrategy::Point) {
    std::uniform_real_distribution<double> ur(cfg.point_ratio_min, cfg.point_ratio_max);
    const double r = cfg.point_ratio_min == cfg.point_ratio_max ? cfg.point_ratio_min : ur(rng);
    detail::mark_random(observed, round_count(r * static_cast<double>(observed.size())), art, rng);
    auto o = detail::finish(w, std::move(art));
    o.point_ratio = r;
    return o;
  }
  // Block: a contiguous interval of length in [ceil(L/2), L] across every feature.
  const Eigen::Index min_len = (l + 1) / 2;
  std::uniform_int_distribution<Eigen::Index> len_dist(min_len, l);
  const Eigen::Index len = len_dist(rng);
  std::uniform_int_distribution<Eigen::Index> start_dist(0, l - len);
  const Eigen::Index start = start_dist(rng);
  art.middleCols(start, len).setOnes();
  Mask block = (art.array() * w.obs_mask.array()).matrix();
  const auto rest = detail::positions_where(w.obs_mask, &block);
  detail::mark_random(rest, round_count(cfg.block_extra_point_ratio * static_cast<double>(observed.size())), art,
                      rng);
  auto o = detail::finish(w, std::move(art));
  o.block_start = start;
  o.block_length = len;
  return o;
}

/**
 * Evaluation-time missingness. Only observed positions are ever selected, so
 * every evaluation target has ground truth.
 */
inline std::optional<MaskOutcome> apply_test_pattern(const TimeWindow& w, const MaskingConfig& cfg, Rng& rng) {
  const auto observed = detail::positions_where(w.obs_mask);
  if (observed.empty()) return std::nullopt;
  const auto k = w.features(), l = w.length();
  Mask art = Mask::Zero(k, l);
  if (cfg.test_pattern == TestPattern::Point) {
    detail::mark_random(observed, round_count(cfg.test_point_rate * static_cast<double>(observed.size())), art, rng);
    return detail::finish(w, std::move(art));
  }
  detail::mark_random(observed, round_count(cfg.test_block_point_rate * static_cast<double>(observed.size())), art,
                      rng);
  std::bernoulli_distribution starts(cfg.test_block_prob);
  std::uniform_int_distribution<int> len_dist(cfg.test_block_len_min, cfg.test_block_len_max);
  std::size_t n_starts = 0;
  for (Eigen::Index f = 0; f < k; ++f)
    for (Eigen::Index t = 0; t < l; ++t) {
      if (!starts(rng)) continue;
      ++n_starts;
      const Eigen::Index len = len_dist(rng);
      for (Eigen::Index j = t; j < std::min(l, t + len); ++j) art(f, j) = 1;
    }
  auto o = detail::finish(w, std::move(art));
  o.block_starts = n_starts;
  return o;
}

/// Stream for masking `window_id` in `epoch`; purpose separates train/test draws.
inline Rng masking_stream(std::uint64_t seed, std::string_view purpose, std::string_view window_id,
                          std::uint64_t epoch) {
  return make_stream(seed, {hash_tag(purpose), hash_tag(window_id), epoch});
}

}  // namespace cdimpute

#endif  // CDIMPUTE_DATA_HPP
