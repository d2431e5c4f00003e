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
#include <limits>

#include <gtest/gtest.h>

#include "cdimpute/cdca.hpp"

using namespace cdimpute;

TEST(Discrepancy, HandMeanOverMaskedPositions) {
  Matrix a(1, 4), b(1, 4);
  a << 0.1, 0.4, -0.1, 9.0;
  b << 0.0, 0.0, 0.0, 0.0;
  Mask m(1, 4);
  m << 1, 1, 1, 0;
  EXPECT_NEAR(discrepancy(a, b, m).delta, 0.2, 1e-15);
  EXPECT_EQ(discrepancy(a, a, m).delta, 0.0);
  EXPECT_NEAR(discrepancy(a, (a.array() + 0.7).matrix(), m).delta, 0.7, 1e-15);
  EXPECT_EQ(discrepancy(a, b, m).delta, discrepancy(b, a, m).delta);
  EXPECT_TRUE(discrepancy(a, b, Mask::Zero(1, 4)).skipped());
  EXPECT_THROW(discrepancy(a, Matrix::Zero(2, 2), m), ShapeError);
}

TEST(Discrepancy, BatchPoolsPositions) {
  std::vector<Matrix> a{Matrix::Constant(1, 2, 1.0), Matrix::Constant(1, 1, 4.0)};
  std::vector<Matrix> b{Matrix::Zero(1, 2), Matrix::Zero(1, 1)};
  std::vector<Mask> m{Mask::Ones(1, 2), Mask::Ones(1, 1)};
  EXPECT_NEAR(discrepancy(a, b, m).delta, 2.0, 1e-15);  // (1 + 1 + 4) / 3
}

TEST(AlignmentLoss, ThreeRegions) {
  const AlignmentConfig c{0.05, 0.5, 1.0, false};
  EXPECT_EQ(alignment_loss(c.tau_l / 2, c), 0.0);
  EXPECT_NEAR(alignment_loss(c.tau_l + 0.3 * c.tau_h, c), 0.3 * c.tau_h, 1e-15);
  EXPECT_EQ(alignment_loss(c.tau_l + 2 * c.tau_h, c), c.tau_h);
}

TEST(AlignmentLoss, ContinuousAndMonotone) {
  const AlignmentConfig c{0.1, 0.3, 1.0, false};
  double prev = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const double d = i * 0.001;
    const double v = alignment_loss(d, c);
    EXPECT_GE(v, prev);
    prev = v;
  }
  const double below = std::nextafter(c.tau_l, 0.0);
  EXPECT_NEAR(alignment_loss(below, c), alignment_loss(c.tau_l, c), 1e-12);
  const double knee = c.tau_l + c.tau_h;
  EXPECT_NEAR(alignment_loss(std::nextafter(knee, 0.0), c), alignment_loss(std::nextafter(knee, 1.0), c), 1e-12);
  EXPECT_EQ(alignment_loss_slope(0.05, c), 0.0);
  EXPECT_EQ(alignment_loss_slope(0.2, c), 1.0);
  EXPECT_EQ(alignment_loss_slope(0.5, c), 0.0);
}

TEST(AlignmentConfig, Validation) {
  EXPECT_THROW((AlignmentConfig{0.5, 0.4, 1.0, false}.validate()), ConfigError);
  EXPECT_THROW((AlignmentConfig{0.1, 0.4, -1.0, false}.validate()), ConfigError);
  EXPECT_NO_THROW((AlignmentConfig{}.validate()));
}

TEST(TotalLoss, SumsAndGuards) {
  AlignmentConfig c;
  EXPECT_DOUBLE_EQ(total_loss(1.0, 2.0, 0.5, c), 3.5);
  c.mu_align = 0.0;
  EXPECT_DOUBLE_EQ(total_loss(1.0, 2.0, 0.5, c), 3.0);
  c.mu_align = 2.0;
  EXPECT_LE(total_loss(1.0, 2.0, alignment_loss(100.0, c), c), 1.0 + 2.0 + 2.0 * c.tau_h);
  try {
    total_loss(1.0, std::numeric_limits<double>::quiet_NaN(), 0.0, c);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("target"), std::string::npos);
  }
}

namespace {

double batch_align(const std::vector<Matrix>& a, const std::vector<Matrix>& b, const std::vector<Mask>& m,
                   const AlignmentConfig& c) {
  return alignment_term(a, b, m, c).loss;
}

}  // namespace

TEST(AlignmentTerm, GradientMatchesFiniteDifferencesInLinearRegion) {
  for (bool per_sample : {false, true}) {
    const AlignmentConfig c{0.05, 5.0, 1.0, per_sample};
    Rng rng(3);
    std::vector<Matrix> a{standard_normal(2, 3, rng), standard_normal(2, 3, rng)};
    std::vector<Matrix> b{standard_normal(2, 3, rng), standard_normal(2, 3, rng)};
    std::vector<Mask> m{Mask::Ones(2, 3), Mask::Ones(2, 3)};
    m[1](0, 0) = 0;
    const auto term = alignment_term(a, b, m, c);
    ASSERT_GT(term.loss, 0.0);
    for (std::size_t w = 0; w < 2; ++w)
      for (Eigen::Index i = 0; i < a[w].size(); ++i) {
        auto up = a, dn = a;
        up[w].data()[i] += 1e-6;
        dn[w].data()[i] -= 1e-6;
        const double num = (batch_align(up, b, m, c) - batch_align(dn, b, m, c)) / 2e-6;
        EXPECT_NEAR(term.grad[w].data()[i], num, 1e-8);
      }
  }
}

TEST(AlignmentTerm, FlatRegionsGiveZeroGradient) {
  Rng rng(4);
  std::vector<Matrix> a{standard_normal(2, 3, rng)};
  std::vector<Mask> m{Mask::Ones(2, 3)};
  const std::vector<Matrix> near{(a[0].array() + 0.01).matrix()};
  const auto small = alignment_term(a, near, m, {0.05, 0.5, 1.0, false});
  EXPECT_EQ(small.loss, 0.0);
  EXPECT_TRUE(small.grad[0].isZero(0.0));
  const std::vector<Matrix> far{(a[0].array() + 10.0).matrix()};
  const auto capped = alignment_term(a, far, m, {0.05, 0.5, 1.0, false});
  EXPECT_EQ(capped.loss, 0.5);
  EXPECT_TRUE(capped.grad[0].isZero(0.0));
}
