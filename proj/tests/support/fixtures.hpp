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
// Helpers shared by the unit and acceptance suites.
#ifndef CDIMPUTE_TESTS_FIXTURES_HPP
#define CDIMPUTE_TESTS_FIXTURES_HPP

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "cdimpute/config.hpp"
#include "cdimpute/denoiser.hpp"
#include "cdimpute/diffusion.hpp"

namespace cdimpute::testing {

/// A random denoiser input on a K x L window with a mixed target mask.
struct ToyBatch {
  Matrix x_cond, x_noisy, eps;
  Mask cond, target;
  int t = 3;
};

inline ToyBatch make_toy_batch(Eigen::Index k, Eigen::Index l, std::uint64_t seed) {
  Rng rng(seed);
  ToyBatch b;
  b.target = Mask::Zero(k, l);
  for (Eigen::Index i = 0; i < b.target.size(); ++i) b.target.data()[i] = (i % 2 == 0) ? 1 : 0;
  b.cond = (1 - b.target.array()).matrix();
  b.x_cond = standard_normal(k, l, rng).cwiseProduct(to_real(b.cond));
  b.x_noisy = standard_normal(k, l, rng).cwiseProduct(to_real(b.target));
  b.eps = standard_normal(k, l, rng);
  return b;
}

/// Give every parameter (zero-initialized ones included) a random value.
inline void randomize(Denoiser& model, std::uint64_t seed, double stddev = 0.5) {
  Rng rng(seed);
  model.visit([&](nn::Param& p) { nn::fill_normal(p.value, stddev, rng); });
}

inline double toy_loss(const Denoiser& model, Domain d, const ToyBatch& b) {
  const Matrix e = model.forward(d, {b.x_cond, b.x_noisy, b.cond, b.t});
  return denoising_loss(b.eps, e, b.target).value;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/**
 * Central differences against the analytic gradient of the masked denoising
 * loss for every element of every parameter the branch uses. Relative error
 * is |a - n| / max(|a|, |n|, floor). The floor sits above the round-off of
 * a central difference on an O(1) loss (about 1e-11 at h = 1e-5), so
 * near-zero entries do not report noise as error.
 */
inline GradCheckResult gradient_check(Denoiser& model, Domain d, const ToyBatch& b, double h = 1e-5,
                                      double floor = 1e-6) {
  model.zero_grad();
  Denoiser::Cache cache;
  const Matrix e = model.forward(d, {b.x_cond, b.x_noisy, b.cond, b.t}, &cache);
  const auto n = static_cast<double>(count_set(b.target));
  model.backward(d, cache, (2.0 / n) * (e - b.eps).cwiseProduct(to_real(b.target)));

  GradCheckResult r;
  auto check = [&](nn::Param& p) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double old = p.value.data()[i];
      p.value.data()[i] = old + h;
      const double up = toy_loss(model, d, b);
      p.value.data()[i] = old - h;
      const double dn = toy_loss(model, d, b);
      p.value.data()[i] = old;
      const double num = (up - dn) / (2.0 * h);
      const double ana = p.grad.data()[i];
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), floor});
      ++r.checked;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        std::ostringstream os;
        os << p.name << '[' << i << "] analytic " << std::scientific << ana << " numeric " << num;
        r.worst = os.str();
      }
    }
  };
  model.shared().visit(check);
  model.branch(d).visit(check);
  return r;
}

/// The tiny instance used for gradient checks: K=2, L=3, C=4, one layer, one head.
inline DenoiserSpec tiny_spec() {
  DenoiserSpec s;
  s.features = 2;
  s.channels = 4;
  s.layers = 1;
  s.heads = 1;
  return s;
}

/// A synthetic run small enough to train in well under a second.
inline RunConfig tiny_run_config() {
  RunConfig c;
  c.data.synth.features = 3;
  c.data.synth.length = 8;
  c.data.synth.n_windows = 40;
  c.data.synth.n_source_windows = 30;
  c.data.synth.target_missing_rate = 0.2;
  c.fmixup.alpha = 0.1;
  c.schedule.steps = 10;
  c.model.channels = 8;
  c.model.layers = 1;
  c.model.heads = 2;
  c.model.time_emb_dim = 16;
  c.model.feat_emb_dim = 4;
  c.model.diffusion_emb_dim = 16;
  c.train.batch_size = 8;
  c.train.epochs = 4;
  c.train.n_samples = 3;
  return c;
}

}  // namespace cdimpute::testing

#endif  // CDIMPUTE_TESTS_FIXTURES_HPP
