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
#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "cdimpute/data.hpp"

namespace fs = std::filesystem;
using namespace cdimpute;

namespace {

fs::path write_tmp(const std::string& name, const std::string& body) {
  const auto p = fs::temp_directory_path() / ("cdimpute_test_" + name);
  std::ofstream(p) << body;
  return p;
}

SeriesTable make_table(Eigen::Index rows, Eigen::Index k, std::uint64_t seed, double missing = 0.0) {
  Rng rng(seed);
  std::normal_distribution<double> n(3.0, 2.0);
  std::bernoulli_distribution drop(missing);
  SeriesTable t;
  t.values.resize(rows, k);
  t.observed.resize(rows, k);
  for (Eigen::Index f = 0; f < k; ++f) t.feature_names.push_back("f" + std::to_string(f));
  for (Eigen::Index r = 0; r < rows; ++r) {
    t.timestamps.push_back(std::to_string(r));
    for (Eigen::Index f = 0; f < k; ++f) {
      t.observed(r, f) = drop(rng) ? 0 : 1;
      t.values(r, f) = t.observed(r, f) ? n(rng) : 0.0;
    }
  }
  return t;
}

TimeWindow random_window(Eigen::Index k, Eigen::Index l, double missing, std::uint64_t seed) {
  auto t = make_table(l, k, seed, missing);
  return cut_windows(t, 0, l, {l, l, Split::Train, Domain::Target}).windows.at(0);
}

}  // namespace

TEST(Csv, ReadsHeaderBomAndEmptyCells) {
  const auto p = write_tmp("ok.csv", "\xEF\xBB\xBFtime,a,b\n0,1.5,\n1, 2 ,+3e0\n\n2,,4\n");
  const auto t = read_csv_table(p.string());
  ASSERT_EQ(t.feature_names, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(t.values.rows(), 3);
  EXPECT_EQ(t.observed(0, 1), 0);
  EXPECT_EQ(t.observed(2, 0), 0);
  EXPECT_DOUBLE_EQ(t.values(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(t.values(1, 1), 3.0);
  EXPECT_EQ(t.timestamps[2], "2");
}

TEST(Csv, SchemaSelectsAndOrdersColumns) {
  const auto p = write_tmp("schema.csv", "time,a,b,c\n0,1,2,3\n");
  const auto t = read_csv_table(p.string(), {"c", "a"});
  EXPECT_DOUBLE_EQ(t.values(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(t.values(0, 1), 1.0);
  EXPECT_THROW(read_csv_table(p.string(), {"zz"}), SchemaError);
}

TEST(Csv, ColumnCountMismatchNamesRow) {
  const auto p = write_tmp("bad_cols.csv", "time,a,b\n0,1,2\n1,1\n");
  try {
    read_csv_table(p.string());
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
  }
}

TEST(Csv, UnparseableCellNamesRowAndColumn) {
  const auto p = write_tmp("bad_num.csv", "time,a,b\n0,1,2\n1,1,x7\n");
  try {
    read_csv_table(p.string());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'b'"), std::string::npos) << msg;
  }
}

TEST(Windowing, FortyEightRowsGiveThreeWindowsOfSixteen) {
  const auto t = make_table(48, 2, 1);
  const auto ds = cut_windows(t, 0, 48, {16, 0, Split::Train, Domain::Target});
  ASSERT_EQ(ds.windows.size(), 3u);
  EXPECT_EQ(ds.windows[2].start_row, 32);
  EXPECT_EQ(ds.windows[0].features(), 2);
  EXPECT_EQ(ds.windows[0].length(), 16);
}

TEST(Windowing, SingleFullWindow) {
  const auto t = make_table(36, 27, 2);
  const auto ds = cut_windows(t, 0, 36, {36, 0, Split::Test, Domain::Target});
  ASSERT_EQ(ds.windows.size(), 1u);
  EXPECT_EQ(ds.windows[0].features(), 27);
  EXPECT_EQ(ds.windows[0].length(), 36);
}

TEST(Windowing, EvaluationSplitsNeverOverlap) {
  const auto t = make_table(64, 2, 3);
  EXPECT_EQ(cut_windows(t, 0, 64, {16, 4, Split::Train, Domain::Target}).windows.size(), 13u);
  EXPECT_EQ(cut_windows(t, 0, 64, {16, 4, Split::Val, Domain::Target}).windows.size(), 4u);
}

TEST(Windowing, MissingCellsHoldZeroSentinel) {
  const auto t = make_table(32, 3, 4, 0.3);
  const auto w = cut_windows(t, 0, 32, {32, 0, Split::Train, Domain::Target}).windows[0];
  for (Eigen::Index i = 0; i < w.values.size(); ++i)
    if (!w.obs_mask.data()[i]) EXPECT_EQ(w.values.data()[i], 0.0);
  EXPECT_EQ(count_set(w.target_mask), count_set(w.missing_mask()));
}

TEST(Split, ChronologicalFractions) {
  const auto t = make_table(100, 2, 5);
  const auto s = split_table(t, 10, 0, Domain::Source);
  EXPECT_EQ(s.train.row_end, 70);
  EXPECT_EQ(s.val.row_begin, 70);
  EXPECT_EQ(s.val.row_end, 80);
  EXPECT_EQ(s.test.row_end, 100);
  EXPECT_EQ(s.train.windows.size(), 7u);
  EXPECT_EQ(s.test.windows.size(), 2u);
  EXPECT_THROW(split_table(t, 10, 0, Domain::Source, {0.5, 0.5, 0.5}), ConfigError);
}

TEST(Normalization, IgnoresValidationAndTestValues) {
  auto t = make_table(200, 3, 6, 0.1);
  auto clean = split_table(t, 10, 5, Domain::Target);
  const auto stats = fit_normalization(clean.train);
  // Poison everything outside the training rows with huge sentinels.
  for (Eigen::Index r = clean.train.row_end; r < t.values.rows(); ++r) t.values.row(r).setConstant(1e300);
  auto poisoned = split_table(t, 10, 5, Domain::Target);
  const auto stats2 = fit_normalization(poisoned.train);
  for (std::size_t f = 0; f < stats.size(); ++f) {
    EXPECT_EQ(stats[f].mean, stats2[f].mean);
    EXPECT_EQ(stats[f].scale, stats2[f].scale);
  }
}

TEST(Normalization, OverlappingRowsCountOnce) {
  const auto t = make_table(60, 2, 7, 0.2);
  const auto s = split_table(t, 10, 3, Domain::Target);
  const auto rec = fit_normalization(s.train);
  for (Eigen::Index f = 0; f < 2; ++f) {
    double sum = 0, sq = 0;
    int n = 0;
    // Rows covered by the overlapping train windows.
    const auto last = s.train.windows.back().start_row + 10;
    for (Eigen::Index r = 0; r < last; ++r)
      if (t.observed(r, f)) {
        sum += t.values(r, f);
        ++n;
      }
    const double mean = sum / n;
    for (Eigen::Index r = 0; r < last; ++r)
      if (t.observed(r, f)) sq += (t.values(r, f) - mean) * (t.values(r, f) - mean);
    EXPECT_NEAR(rec[f].mean, mean, 1e-12);
    EXPECT_NEAR(rec[f].scale, std::sqrt(sq / n), 1e-12);
  }
}

TEST(Normalization, ZeroVarianceUsesUnitScale) {
  auto t = make_table(20, 2, 8);
  t.values.col(1).setConstant(4.0);
  auto s = split_table(t, 5, 0, Domain::Target);
  normalize(s);
  EXPECT_EQ(s.norm[1].scale, 1.0);
  EXPECT_EQ(s.norm[1].mean, 4.0);
  EXPECT_EQ(s.train.windows[0].values(1, 0), 0.0);
  EXPECT_NEAR(denormalize(s.train.windows[0].values, s.norm)(1, 3), 4.0, 0.0);
}

TEST(Normalization, FeatureWithoutObservationsIsAnError) {
  auto t = make_table(20, 2, 9);
  t.observed.col(0).setZero();
  auto s = split_table(t, 5, 0, Domain::Target);
  try {
    fit_normalization(s.train);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'f0'"), std::string::npos);
  }
}

TEST(Rounding, HalfToEven) {
  EXPECT_EQ(round_count(2.5), 2u);
  EXPECT_EQ(round_count(3.5), 4u);
  EXPECT_EQ(round_count(0.5), 0u);
  EXPECT_EQ(round_count(2.4999), 2u);
}

TEST(Masking, PointStrategyCardinalityIsExact) {
  MaskingConfig cfg;
  for (std::uint64_t s = 0; s < 300; ++s) {
    const auto w = random_window(5, 24, 0.3, 100 + s);
    Rng rng = masking_stream(s, "train", w.window_id, s);
    const auto o = apply_train_masking(w, cfg, rng);
    ASSERT_TRUE(o);
    const auto n_obs = count_set(w.obs_mask);
    EXPECT_EQ(count_set(o->window.artificial_mask), round_count(o->point_ratio * static_cast<double>(n_obs)));
    // Targets partition into artificial (observed) and original-missing.
    for (Eigen::Index i = 0; i < w.values.size(); ++i) {
      if (o->window.artificial_mask.data()[i]) EXPECT_TRUE(w.obs_mask.data()[i]);
      EXPECT_EQ(o->window.target_mask.data()[i],
                o->window.artificial_mask.data()[i] | static_cast<std::uint8_t>(!w.obs_mask.data()[i]));
    }
  }
}

TEST(Masking, FixedRatioRoundsHalfToEven) {
  MaskingConfig cfg;
  cfg.point_ratio_min = cfg.point_ratio_max = 0.5;
  auto w = random_window(1, 5, 0.0, 1);
  Rng rng(3);
  EXPECT_EQ(count_set(apply_train_masking(w, cfg, rng)->window.artificial_mask), 2u);  // 2.5 -> 2
}

TEST(Masking, BlockLengthsStayInRange) {
  MaskingConfig cfg;
  cfg.train_strategy = TrainStrategy::Block;
  for (Eigen::Index l : {7, 8, 32}) {
    const auto w = random_window(3, l, 0.0, 11);
    for (std::uint64_t s = 0; s < 2000; ++s) {
      Rng rng = masking_stream(s, "train", w.window_id, 0);
      const auto o = apply_train_masking(w, cfg, rng);
      ASSERT_TRUE(o);
      EXPECT_GE(o->block_length, (l + 1) / 2);
      EXPECT_LE(o->block_length, l);
      EXPECT_LE(o->block_start + o->block_length, l);
      for (Eigen::Index f = 0; f < 3; ++f)
        for (Eigen::Index t = o->block_start; t < o->block_start + o->block_length; ++t)
          EXPECT_TRUE(o->window.artificial_mask(f, t));
    }
  }
}

TEST(Masking, TestPointPatternIsTenPercentOfObserved) {
  MaskingConfig cfg;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto w = random_window(4, 30, 0.25, 500 + s);
    Rng rng = masking_stream(s, "test", w.window_id, 0);
    const auto o = apply_test_pattern(w, cfg, rng);
    ASSERT_TRUE(o);
    EXPECT_EQ(count_set(o->window.artificial_mask), round_count(0.10 * static_cast<double>(count_set(w.obs_mask))));
  }
}

TEST(Masking, BlockStartFrequencyMatchesProbability) {
  MaskingConfig cfg;
  cfg.test_pattern = TestPattern::Block;
  const auto w = random_window(20, 16, 0.0, 3);
  std::size_t starts = 0, cells = 0;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    Rng rng = masking_stream(s, "test", w.window_id, 0);
    starts += apply_test_pattern(w, cfg, rng)->block_starts;
    cells += 20 * 16;
  }
  const double p = static_cast<double>(starts) / static_cast<double>(cells);
  EXPECT_NEAR(p, 0.0015, 0.0003);
}

TEST(Masking, EmptyWindowIsSkipped) {
  auto w = random_window(2, 6, 0.0, 1);
  w.obs_mask.setZero();
  Rng rng(1);
  EXPECT_FALSE(apply_train_masking(w, MaskingConfig{}, rng));
  EXPECT_FALSE(apply_test_pattern(w, MaskingConfig{}, rng));
}

TEST(Masking, StreamsAreDeterministicAndSeparated) {
  const auto w = random_window(4, 16, 0.1, 9);
  MaskingConfig cfg;
  auto draw = [&](std::uint64_t seed, std::uint64_t epoch) {
    Rng rng = masking_stream(seed, "train", w.window_id, epoch);
    return apply_train_masking(w, cfg, rng)->window.artificial_mask;
  };
  EXPECT_EQ(draw(1, 0), draw(1, 0));
  EXPECT_NE(draw(1, 0), draw(1, 1));
}

TEST(Masking, ConfigValidation) {
  MaskingConfig cfg;
  cfg.point_ratio_min = 0.8;
  cfg.point_ratio_max = 0.2;
  EXPECT_THROW(cfg.validate(16), ConfigError);
  MaskingConfig c2;
  c2.test_block_len_max = 40;
  EXPECT_THROW(c2.validate(16), ConfigError);
}
