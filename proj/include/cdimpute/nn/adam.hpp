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
#ifndef CDIMPUTE_NN_ADAM_HPP
#define CDIMPUTE_NN_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "cdimpute/nn/layers.hpp"

namespace cdimpute::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments live in each Param.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  const AdamConfig& config() const { return cfg_; }

  void step(const std::vector<Param*>& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Param* p : params) {
      p->m = cfg_.beta1 * p->m + (1.0 - cfg_.beta1) * p->grad;
      p->v = cfg_.beta2 * p->v + (1.0 - cfg_.beta2) * p->grad.cwiseAbs2();
      p->value.array() -= cfg_.lr * (p->m.array() / c1) / ((p->v.array() / c2).sqrt() + cfg_.eps);
    }
  }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

}  // namespace cdimpute::nn

#endif  // CDIMPUTE_NN_ADAM_HPP
