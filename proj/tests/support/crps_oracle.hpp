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
#ifndef CDIMPUTE_TESTS_CRPS_ORACLE_HPP
#define CDIMPUTE_TESTS_CRPS_ORACLE_HPP

#include <cmath>
#include <random>
#include <vector>

#include "cdimpute/metrics.hpp"

namespace cdimpute::testing {

/// E|X - y| - 0.5 E|X - X'| by brute-force pairwise sums.
inline double crps_pairwise(const std::vector<double>& x, double y) {
  const auto n = static_cast<double>(x.size());
  double a = 0.0, b = 0.0;
  for (double xi : x) a += std::abs(xi - y);
  for (double xi : x)
    for (double xj : x) b += std::abs(xi - xj);
  return a / n - 0.5 * b / (n * n);
}

struct CrpsOracleResult {
  double sum_quantile = 0.0;
  double sum_pairwise = 0.0;
  double aggregate_rel_error = 0.0;  // |sum_q - sum_p| / sum_p
  double max_toy_rel_error = 0.0;
  int toys_over_5pct = 0;
};

/**
 * Random toys: each draws a location and scale, S samples from a normal
 * and the truth from the same distribution. The two CRPS estimates are
 * compared per toy and summed over toys, the way the dataset-level metric
 * aggregates positions.
 */
inline CrpsOracleResult crps_oracle_comparison(int toys, int samples, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> loc(-10.0, 10.0), scale(0.2, 5.0);
  CrpsOracleResult r;
  for (int t = 0; t < toys; ++t) {
    std::normal_distribution<double> d(loc(rng), scale(rng));
    std::vector<double> x(static_cast<std::size_t>(samples));
    for (auto& v : x) v = d(rng);
    const double y = d(rng);
    const double q = crps_point(x, y), p = crps_pairwise(x, y);
    r.sum_quantile += q;
    r.sum_pairwise += p;
    const double rel = std::abs(q - p) / p;
    r.max_toy_rel_error = std::max(r.max_toy_rel_error, rel);
    if (rel > 0.05) ++r.toys_over_5pct;
  }
  r.aggregate_rel_error = std::abs(r.sum_quantile - r.sum_pairwise) / r.sum_pairwise;
  return r;
}

}  // namespace cdimpute::testing

#endif  // CDIMPUTE_TESTS_CRPS_ORACLE_HPP
