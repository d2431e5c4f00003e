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
#ifndef CDIMPUTE_DIFFUSION_HPP
#define CDIMPUTE_DIFFUSION_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdimpute/core.hpp"
#include "cdimpute/data.hpp"

namespace cdimpute {

/**
 * Variance schedule for T steps. Steps are 1-based; alpha_bar(0) = 1, which
 * makes sigma(1) = 0 and the last reverse step deterministic.
 */
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  explicit NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.size() < 2) fail<ConfigError>("noise schedule needs at least 2 steps");
    alpha_bars_.resize(betas_.size() + 1);
    sigmas_.resize(betas_.size() + 1);
    alpha_bars_[0] = 1.0;
    sigmas_[0] = 0.0;
    for (std::size_t t = 1; t <= betas_.size(); ++t) {
      const double b = betas_[t - 1];
      if (!(b > 0.0 && b < 1.0)) fail<ConfigError>("beta_", t, " = ", b, " outside (0,1)");
      alpha_bars_[t] = alpha_bars_[t - 1] * (1.0 - b);
      sigmas_[t] = std::sqrt((1.0 - alpha_bars_[t - 1]) / (1.0 - alpha_bars_[t]) * b);
    }
  }

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_[index(t) - 1]; }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const {
    if (t == 0) return 1.0;
    return alpha_bars_[index(t)];
  }
  double sigma(int t) const { return sigmas_[index(t)]; }
  const std::vector<double>& betas() const { return betas_; }

  void check_step(int t) const { (void)index(t); }

 private:
  std::size_t index(int t) const {
    if (t < 1 || t > steps()) fail<ConfigError>("diffusion step ", t, " outside [1, ", steps(), "]");
    return static_cast<std::size_t>(t);
  }

  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
  std::vector<double> sigmas_;
};

/// beta_t = (sqrt(beta1) + (t-1)/(T-1) * (sqrt(betaT) - sqrt(beta1)))^2.
inline NoiseSchedule quadratic_schedule(int steps, double beta1, double beta_t) {
  if (steps < 2) fail<ConfigError>("quadratic_schedule: T must be >= 2, got ", steps);
  if (!(beta1 > 0.0 && beta1 < beta_t && beta_t < 1.0))
    fail<ConfigError>("quadratic_schedule: need 0 < beta1 < betaT < 1, got ", beta1, ", ", beta_t);
  std::vector<double> b(static_cast<std::size_t>(steps));
  const double s1 = std::sqrt(beta1), st = std::sqrt(beta_t);
  for (int t = 1; t <= steps; ++t) {
    const double s = s1 + (static_cast<double>(t - 1) / static_cast<double>(steps - 1)) * (st - s1);
    b[static_cast<std::size_t>(t - 1)] = s * s;
  }
  // Pin the endpoints: the interpolated square root does not round-trip exactly.
  b.front() = beta1;
  b.back() = beta_t;
  return NoiseSchedule(std::move(b));
}

/// Closed-form corruption: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
inline Matrix forward_sample(const Matrix& x0, int t, const Matrix& eps, const NoiseSchedule& s) {
  require_same_shape(x0, eps, "forward_sample");
  const double ab = s.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

/// One transition of q(x_t | x_{t-1}).
inline Matrix forward_step(const Matrix& x_prev, int t, const Matrix& eps, const NoiseSchedule& s) {
  require_same_shape(x_prev, eps, "forward_step");
  const double b = s.beta(t);
  return std::sqrt(1.0 - b) * x_prev + std::sqrt(b) * eps;
}

/// mu + sigma_t z with mu = (x_t - beta_t / sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t).
inline Matrix reverse_step(const Matrix& x_t, const Matrix& eps_hat, int t, const NoiseSchedule& s, const Matrix& z) {
  require_same_shape(x_t, eps_hat, "reverse_step");
  const double coeff = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
  Matrix mu = (x_t - coeff * eps_hat) / std::sqrt(s.alpha(t));
  if (t > 1) {
    require_same_shape(x_t, z, "reverse_step noise");
    mu += s.sigma(t) * z;
  }
  return mu;
}

struct MaskedLoss {
  double value = 0.0;
  double sum = 0.0;
  std::size_t count = 0;
  bool skipped() const { return count == 0; }
};

/// Mean squared error over masked positions; empty mask yields 0 and a skip.
inline MaskedLoss denoising_loss(const Matrix& eps, const Matrix& eps_hat, const Mask& loss_mask) {
  require_same_shape(eps, eps_hat, "denoising_loss");
  require_same_shape(eps, loss_mask, "denoising_loss mask");
  MaskedLoss l;
  for (Eigen::Index i = 0; i < eps.size(); ++i) {
    if (!loss_mask.data()[i]) continue;
    const double d = eps.data()[i] - eps_hat.data()[i];
    l.sum += d * d;
    ++l.count;
  }
  l.value = l.count ? l.sum / static_cast<double>(l.count) : 0.0;
  return l;
}

// ---------------------------------------------------------------------------
// Sampling

/// Element of `sorted` at quantile q with linear interpolation between order
/// statistics.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) fail<ConfigError>("quantile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return sorted[lo] + w * (sorted[hi] - sorted[lo]);
}

struct ImputationResult {
  std::string window_id;
  std::vector<Matrix> samples;  // normalized units; conditional positions hold X^co
  Matrix median;
  Mask target_mask;
  bool empty_targets() const { return count_set(target_mask) == 0; }

  /// Per-position quantile across samples.
  Matrix quantile(double q) const {
    if (samples.empty()) fail<ConfigError>("quantile: no samples");
    Matrix out(samples.front().rows(), samples.front().cols());
    std::vector<double> v(samples.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      for (std::size_t s = 0; s < samples.size(); ++s) v[s] = samples[s].data()[i];
      std::sort(v.begin(), v.end());
      out.data()[i] = quantile_sorted(v, q);
    }
    return out;
  }
};

/**
 * Reverse diffusion for one window. `eps_fn(x_noisy_targets, t)` returns the
 * predicted noise; it sees the noisy sample only at target positions (zero
 * elsewhere) and is responsible for conditioning on the window's X^co.
 */
template <typename EpsFn>
ImputationResult impute_with(const TimeWindow& w, EpsFn&& eps_fn, const NoiseSchedule& sched, int n_samples,
                             Rng& rng) {
  if (n_samples < 1) fail<ConfigError>("impute: n_samples must be >= 1");
  ImputationResult res;
  res.window_id = w.window_id;
  res.target_mask = w.target_mask;
  const Matrix target = to_real(w.target_mask);
  const Matrix cond_values = w.conditional_values();
  const auto k = w.features(), l = w.length();
  for (int s = 0; s < n_samples; ++s) {
    Matrix x = standard_normal(k, l, rng).cwiseProduct(target);
    for (int t = sched.steps(); t >= 1; --t) {
      const Matrix eps_hat = eps_fn(static_cast<const Matrix&>(x), t);
      const Matrix z = t > 1 ? standard_normal(k, l, rng) : Matrix::Zero(k, l);
      x = reverse_step(x, eps_hat, t, sched, z).cwiseProduct(target);
    }
    res.samples.push_back(cond_values + x);
  }
  res.median = res.quantile(0.5);
  return res;
}

}  // namespace cdimpute

#endif  // CDIMPUTE_DIFFUSION_HPP
