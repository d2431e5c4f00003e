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
#ifndef CDIMPUTE_METRICS_HPP
#define CDIMPUTE_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdimpute/core.hpp"
#include "cdimpute/diffusion.hpp"

namespace cdimpute {

/// Quantile levels 0.05, 0.10, ..., 0.95.
inline std::vector<double> crps_quantile_levels() {
  std::vector<double> q;
  for (int i = 1; i <= 19; ++i) q.push_back(0.05 * i);
  return q;
}

/// 2 * |(y - f) * (1{y <= f} - q)|
inline double quantile_loss(double truth, double forecast, double q) {
  return 2.0 * std::abs((truth - forecast) * ((truth <= forecast ? 1.0 : 0.0) - q));
}

/// Quantile-loss CRPS of one point, averaged over the 19 levels (unnormalized).
inline double crps_point(std::vector<double> samples, double truth) {
  std::sort(samples.begin(), samples.end());
  double acc = 0.0;
  const auto levels = crps_quantile_levels();
  for (double q : levels) acc += quantile_loss(truth, quantile_sorted(samples, q), q);
  return acc / static_cast<double>(levels.size());
}

/**
 * Accumulates evaluation points. MAE/RMSE use the point estimate; CRPS sums
 * quantile losses and is normalized by the sum of |truth| at the end.
 */
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(Eigen::Index features = 0)
      : abs_per_feature_(static_cast<std::size_t>(features), 0.0),
        n_per_feature_(static_cast<std::size_t>(features), 0) {}

  void add(Eigen::Index feature, double truth, double point, const std::vector<double>& samples) {
    const double e = point - truth;
    abs_ += std::abs(e);
    sq_ += e * e;
    crps_sum_ += crps_point(samples, truth);
    abs_truth_ += std::abs(truth);
    ++n_;
    if (feature >= 0 && static_cast<std::size_t>(feature) < abs_per_feature_.size()) {
      abs_per_feature_[static_cast<std::size_t>(feature)] += std::abs(e);
      ++n_per_feature_[static_cast<std::size_t>(feature)];
    }
  }

  std::size_t count() const { return n_; }
  double mae() const { return n_ ? abs_ / static_cast<double>(n_) : 0.0; }
  double rmse() const { return n_ ? std::sqrt(sq_ / static_cast<double>(n_)) : 0.0; }
  /// Mean per-point quantile CRPS, before dataset-level normalization.
  double crps_unnormalized() const { return n_ ? crps_sum_ / static_cast<double>(n_) : 0.0; }
  /// Sum of per-point quantile CRPS divided by the sum of |truth|.
  double crps() const { return abs_truth_ > 0.0 ? crps_sum_ / abs_truth_ : 0.0; }

  std::vector<double> mae_per_feature() const {
    std::vector<double> out(abs_per_feature_.size(), 0.0);
    for (std::size_t f = 0; f < out.size(); ++f)
      out[f] = n_per_feature_[f] ? abs_per_feature_[f] / static_cast<double>(n_per_feature_[f]) : 0.0;
    return out;
  }
  const std::vector<std::size_t>& count_per_feature() const { return n_per_feature_; }

 private:
  double abs_ = 0.0, sq_ = 0.0, crps_sum_ = 0.0, abs_truth_ = 0.0;
  std::size_t n_ = 0;
  std::vector<double> abs_per_feature_;
  std::vector<std::size_t> n_per_feature_;
};

struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  double crps = 0.0;
  std::size_t n_eval_points = 0;
  std::vector<double> mae_per_feature;
  std::vector<std::size_t> n_per_feature;
  double runtime_s = 0.0;
};

inline MetricsReport make_report(const MetricsAccumulator& acc, double runtime_s = 0.0) {
  if (acc.count() == 0) fail<Error>("evaluate: no evaluation targets");
  MetricsReport r;
  r.mae = acc.mae();
  r.rmse = acc.rmse();
  r.crps = acc.crps();
  r.n_eval_points = acc.count();
  r.mae_per_feature = acc.mae_per_feature();
  r.n_per_feature = acc.count_per_feature();
  r.runtime_s = runtime_s;
  return r;
}

}  // namespace cdimpute

#endif  // CDIMPUTE_METRICS_HPP
