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
#ifndef CDIMPUTE_CDCA_HPP
#define CDIMPUTE_CDCA_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "cdimpute/core.hpp"

namespace cdimpute {

/// Thresholds for the cross-domain consistency penalty.
struct AlignmentConfig {
  double tau_l = 0.05;
  double tau_h = 0.5;
  double mu_align = 1.0;
  bool per_sample = false;  // threshold each window's discrepancy instead of the batch mean

  void validate() const {
    if (!(tau_l >= 0.0)) fail<ConfigError>("cdca.tau_l must be >= 0");
    if (!(tau_h > 0.0)) fail<ConfigError>("cdca.tau_h must be > 0");
    if (!(tau_l < tau_h)) fail<ConfigError>("cdca.tau_l must be < cdca.tau_h");
    if (!(mu_align >= 0.0)) fail<ConfigError>("cdca.mu_align must be >= 0");
  }
};

struct Discrepancy {
  double delta = 0.0;
  double sum = 0.0;
  std::size_t count = 0;
  bool skipped() const { return count == 0; }
};

/**
 * Mean absolute difference between the target branch's predictions and the
 * source branch's predictions on the same target inputs, over all masked
 * positions of the batch.
 */
inline Discrepancy discrepancy(std::span<const Matrix> eps_tgt, std::span<const Matrix> eps_src_on_tgt,
                               std::span<const Mask> masks) {
  if (eps_tgt.size() != eps_src_on_tgt.size() || eps_tgt.size() != masks.size())
    fail<ShapeError>("discrepancy: batch sizes differ");
  Discrepancy d;
  for (std::size_t b = 0; b < eps_tgt.size(); ++b) {
    require_same_shape(eps_tgt[b], eps_src_on_tgt[b], "discrepancy");
    require_same_shape(eps_tgt[b], masks[b], "discrepancy mask");
    for (Eigen::Index i = 0; i < eps_tgt[b].size(); ++i) {
      if (!masks[b].data()[i]) continue;
      d.sum += std::abs(eps_tgt[b].data()[i] - eps_src_on_tgt[b].data()[i]);
      ++d.count;
    }
  }
  d.delta = d.count ? d.sum / static_cast<double>(d.count) : 0.0;
  return d;
}

inline Discrepancy discrepancy(const Matrix& eps_tgt, const Matrix& eps_src_on_tgt, const Mask& mask) {
  return discrepancy(std::span<const Matrix>(&eps_tgt, 1), std::span<const Matrix>(&eps_src_on_tgt, 1),
                     std::span<const Mask>(&mask, 1));
}

/// 0 below tau_l, otherwise min(delta - tau_l, tau_h).
inline double alignment_loss(double delta, const AlignmentConfig& cfg) {
  if (delta < cfg.tau_l) return 0.0;
  return std::min(delta - cfg.tau_l, cfg.tau_h);
}

/// d(alignment_loss)/d(delta); 1 on [tau_l, tau_l + tau_h), 0 elsewhere.
inline double alignment_loss_slope(double delta, const AlignmentConfig& cfg) {
  return (delta >= cfg.tau_l && delta - cfg.tau_l < cfg.tau_h) ? 1.0 : 0.0;
}

struct AlignmentTerm {
  double delta = 0.0;
  double loss = 0.0;
  std::vector<Matrix> grad;  // d(loss)/d(eps_tgt) per window; the source side is held fixed
};

/**
 * Alignment loss of a batch and its gradient with respect to the target
 * branch's predictions. With `per_sample` each window's discrepancy is
 * thresholded on its own and the results are averaged over windows.
 */
inline AlignmentTerm alignment_term(std::span<const Matrix> eps_tgt, std::span<const Matrix> eps_src_on_tgt,
                                    std::span<const Mask> masks, const AlignmentConfig& cfg) {
  AlignmentTerm out;
  const auto d = discrepancy(eps_tgt, eps_src_on_tgt, masks);
  out.delta = d.delta;
  std::vector<double> scale(eps_tgt.size(), 0.0);
  if (!cfg.per_sample) {
    out.loss = alignment_loss(d.delta, cfg);
    const double g = d.count ? alignment_loss_slope(d.delta, cfg) / static_cast<double>(d.count) : 0.0;
    std::fill(scale.begin(), scale.end(), g);
  } else {
    std::vector<Discrepancy> per(eps_tgt.size());
    std::size_t used = 0;
    for (std::size_t i = 0; i < per.size(); ++i) {
      per[i] = discrepancy(eps_tgt[i], eps_src_on_tgt[i], masks[i]);
      if (!per[i].skipped()) ++used;
    }
    for (std::size_t i = 0; i < per.size(); ++i) {
      if (per[i].skipped()) continue;
      out.loss += alignment_loss(per[i].delta, cfg) / static_cast<double>(used);
      scale[i] = alignment_loss_slope(per[i].delta, cfg) / (static_cast<double>(used) * static_cast<double>(per[i].count));
    }
  }
  out.grad.resize(eps_tgt.size());
  for (std::size_t i = 0; i < eps_tgt.size(); ++i) {
    Matrix g = Matrix::Zero(eps_tgt[i].rows(), eps_tgt[i].cols());
    if (scale[i] != 0.0)
      for (Eigen::Index j = 0; j < g.size(); ++j) {
        if (!masks[i].data()[j]) continue;
        const double diff = eps_tgt[i].data()[j] - eps_src_on_tgt[i].data()[j];
        g.data()[j] = scale[i] * static_cast<double>((diff > 0) - (diff < 0));
      }
    out.grad[i] = std::move(g);
  }
  return out;
}

/// L_src + L_tgt + mu_align * L_align.
inline double total_loss(double l_src, double l_tgt, double l_align, const AlignmentConfig& cfg) {
  if (!std::isfinite(l_src)) fail<DivergenceError>("total_loss: source denoising loss is ", l_src);
  if (!std::isfinite(l_tgt)) fail<DivergenceError>("total_loss: target denoising loss is ", l_tgt);
  if (!std::isfinite(l_align)) fail<DivergenceError>("total_loss: alignment loss is ", l_align);
  return l_src + l_tgt + cfg.mu_align * l_align;
}

}  // namespace cdimpute

#endif  // CDIMPUTE_CDCA_HPP
