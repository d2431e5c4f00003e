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
#ifndef CDIMPUTE_DENOISER_HPP
#define CDIMPUTE_DENOISER_HPP

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cdimpute/core.hpp"
#include "cdimpute/data.hpp"
#include "cdimpute/nn/layers.hpp"

namespace cdimpute {

struct DenoiserSpec {
  Eigen::Index features = 0;  // K; sizes the learnable feature embedding
  int channels = 64;
  int layers = 4;
  int heads = 8;
  int time_emb_dim = 128;
  int feat_emb_dim = 16;
  int diffusion_emb_dim = 128;
  bool step_embedding_every_layer = true;

  int side_dim() const { return time_emb_dim + feat_emb_dim; }

  void validate() const {
    if (features <= 0) fail<ConfigError>("denoiser: feature count must be positive");
    if (channels <= 0 || layers <= 0 || heads <= 0 || time_emb_dim <= 0 || feat_emb_dim <= 0 ||
        diffusion_emb_dim <= 0)
      fail<ConfigError>("denoiser: all sizes must be positive");
    if (channels % heads != 0)
      fail<ConfigError>("denoiser: channels (", channels, ") not divisible by heads (", heads, ")");
    if (time_emb_dim % 2 != 0 || diffusion_emb_dim % 2 != 0)
      fail<ConfigError>("denoiser: sinusoidal embedding sizes must be even");
  }
};

/// Sine-cosine encoding; entries (2i, 2i+1) are (sin, cos) of pos / 10000^(2i/dim).
inline RowVector sinusoidal_encoding(double pos, int dim) {
  RowVector e(dim);
  for (int i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / static_cast<double>(dim));
    e(2 * i) = std::sin(pos * freq);
    e(2 * i + 1) = std::cos(pos * freq);
  }
  return e;
}

namespace detail {

/// Reorder rows from time-major-within-feature (k*L + l) to
/// feature-major-within-time (l*K + k).
inline Matrix to_feature_major(const Matrix& x, Eigen::Index k, Eigen::Index l) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index f = 0; f < k; ++f)
    for (Eigen::Index t = 0; t < l; ++t) out.row(t * k + f) = x.row(f * l + t);
  return out;
}

inline Matrix from_feature_major(const Matrix& x, Eigen::Index k, Eigen::Index l) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index f = 0; f < k; ++f)
    for (Eigen::Index t = 0; t < l; ++t) out.row(f * l + t) = x.row(t * k + f);
  return out;
}

}  // namespace detail

/// Parameters used by both domains: the input 1x1 convolution and the
/// learnable feature embedding of the shared side information.
struct SharedParams {
  nn::Linear input;
  nn::Param feature_embedding;

  template <typename F>
  void visit(F&& f) {
    input.visit(f);
    f(feature_embedding);
  }
  template <typename F>
  void visit(F&& f) const {
    input.visit(f);
    f(feature_embedding);
  }
};

struct ResidualLayer {
  nn::Linear step_proj;  // diffusion-step embedding -> C
  nn::LayerNorm ln_tem;
  nn::MultiHeadAttention attn_tem;
  nn::LayerNorm ln_fea;
  nn::MultiHeadAttention attn_fea;
  nn::Linear mid;      // C -> 2C
  nn::Linear side_sh;  // shared side information -> 2C
  nn::Linear side_sp;  // conditional mask -> 2C
  nn::Linear out;      // C -> 2C (residual | skip)

  template <typename F>
  void visit(F&& f) {
    step_proj.visit(f);
    ln_tem.visit(f);
    attn_tem.visit(f);
    ln_fea.visit(f);
    attn_fea.visit(f);
    mid.visit(f);
    side_sh.visit(f);
    side_sp.visit(f);
    out.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<ResidualLayer*>(this)->visit([&](const nn::Param& p) { f(p); });
  }
};

/// Domain-specific stack: attention, gated residual layers, output head.
struct Branch {
  std::vector<ResidualLayer> layers;
  nn::Linear skip_proj;  // C -> C, ReLU
  nn::Linear out_proj;   // C -> 1, zero-initialized

  template <typename F>
  void visit(F&& f) {
    for (auto& l : layers) l.visit(f);
    skip_proj.visit(f);
    out_proj.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<Branch*>(this)->visit([&](const nn::Param& p) { f(p); });
  }
};

struct ParamCounts {
  std::size_t shared = 0;
  std::size_t per_branch = 0;
  std::size_t per_branch_residual = 0;  // residual layers only
  std::size_t total = 0;
};

/**
 * Noise-prediction network with a shared input embedding and shared side
 * information, and one attention/residual branch per domain.
 *
 * Hidden activations are (K*L) x C with row k*L + l for feature k, time l.
 */
class Denoiser {
 public:
  struct Input {
    const Matrix& x_cond;   // K x L, X^co with sentinel at non-conditional positions
    const Matrix& x_noisy;  // K x L, noisy targets, zero at conditional positions
    const Mask& cond_mask;  // K x L
    int t;
  };

  struct LayerCache {
    Matrix x;  // layer input
    Matrix y;  // after step embedding
    nn::LayerNorm::Cache ln_tem;
    nn::MultiHeadAttention::Cache attn_tem;
    nn::LayerNorm::Cache ln_fea;
    nn::MultiHeadAttention::Cache attn_fea;
    Matrix y2;    // after both attentions, position-major
    Matrix gate_tanh, gate_sig;
    Matrix g;
  };

  struct Cache {
    Eigen::Index k = 0, l = 0;
    Matrix xin;   // N x 2
    Matrix side;  // N x side_dim
    Matrix sp;    // N x 1
    RowVector step;
    std::vector<LayerCache> layers;
    Matrix skip;  // scaled skip sum
    Matrix u;     // pre-ReLU
    Matrix r;     // post-ReLU
  };

  Denoiser() = default;

  Denoiser(const DenoiserSpec& spec, std::uint64_t seed) : spec_(spec) {
    spec_.validate();
    const auto c = spec_.channels;
    shared_.input = nn::Linear("shared.input", 2, c);
    shared_.feature_embedding = nn::Param("shared.feature_embedding", spec_.features, spec_.feat_emb_dim);
    Rng rng(derive_seed(seed, {hash_tag("denoiser.init")}));
    shared_.input.init(rng);
    nn::fill_normal(shared_.feature_embedding.value, 1.0, rng);
    src_ = make_branch("source", rng);
    tgt_ = make_branch("target", rng);
  }

  const DenoiserSpec& spec() const { return spec_; }
  SharedParams& shared() { return shared_; }
  const SharedParams& shared() const { return shared_; }
  Branch& branch(Domain d) { return d == Domain::Source ? src_ : tgt_; }
  const Branch& branch(Domain d) const { return d == Domain::Source ? src_ : tgt_; }

  std::int64_t trained_steps() const { return trained_steps_; }
  void set_trained_steps(std::int64_t n) { trained_steps_ = n; }

  /// H^in: shared 1x1 convolution of (X^co || X~^t), N x C.
  Matrix shared_input_embed(const Matrix& x_cond, const Matrix& x_noisy) const {
    require_same_shape(x_cond, x_noisy, "shared_input_embed");
    return shared_.input.forward(stack_inputs(x_cond, x_noisy));
  }

  /// D^sh: time encoding of each timestamp (expanded over features) next to
  /// the feature embedding (expanded over time), N x (time_emb + feat_emb).
  Matrix side_info_shared(Eigen::Index l, Eigen::Index k, std::span<const double> timestamps = {}) const {
    if (k != spec_.features) fail<ShapeError>("side info: window has ", k, " features, model has ", spec_.features);
    if (!timestamps.empty() && static_cast<Eigen::Index>(timestamps.size()) != l)
      fail<ShapeError>("side info: ", timestamps.size(), " timestamps for length ", l);
    const int te = spec_.time_emb_dim;
    Matrix d(k * l, spec_.side_dim());
    for (Eigen::Index t = 0; t < l; ++t) {
      const RowVector enc =
          sinusoidal_encoding(timestamps.empty() ? static_cast<double>(t) : timestamps[static_cast<std::size_t>(t)], te);
      for (Eigen::Index f = 0; f < k; ++f) {
        d.row(f * l + t).head(te) = enc;
        d.row(f * l + t).tail(spec_.feat_emb_dim) = shared_.feature_embedding.value.row(f);
      }
    }
    return d;
  }

  /// Predicted noise, K x L. Pass a cache to enable backward().
  Matrix forward(Domain domain, const Input& in, Cache* cache = nullptr) const {
    require_same_shape(in.x_cond, in.x_noisy, "denoiser input");
    require_same_shape(in.x_cond, in.cond_mask, "denoiser mask");
    const Branch& br = branch(domain);
    const auto k = in.x_cond.rows(), l = in.x_cond.cols(), n = k * l;
    const int c = spec_.channels;
    Cache local;
    Cache& cc = cache ? *cache : local;
    const bool keep = cache != nullptr;
    cc.k = k;
    cc.l = l;
    cc.xin = stack_inputs(in.x_cond, in.x_noisy);
    cc.side = side_info_shared(l, k);
    cc.sp = to_real(in.cond_mask).reshaped<Eigen::RowMajor>(n, 1);
    cc.step = sinusoidal_encoding(static_cast<double>(in.t), spec_.diffusion_emb_dim);
    cc.layers.assign(keep ? br.layers.size() : 0, {});

    Matrix h = shared_.input.forward(cc.xin);
    Matrix skip = Matrix::Zero(n, c);
    for (std::size_t i = 0; i < br.layers.size(); ++i) {
      const auto& layer = br.layers[i];
      LayerCache lc_local;
      LayerCache& lc = keep ? cc.layers[i] : lc_local;
      Matrix y = h;
      if (inject_step(i)) y.rowwise() += layer.step_proj.forward(cc.step).row(0);
      Matrix y1 = y + layer.attn_tem.forward(layer.ln_tem.forward(y, keep ? &lc.ln_tem : nullptr), l,
                                             keep ? &lc.attn_tem : nullptr);
      Matrix y1p = detail::to_feature_major(y1, k, l);
      Matrix y2p = y1p + layer.attn_fea.forward(layer.ln_fea.forward(y1p, keep ? &lc.ln_fea : nullptr), k,
                                                keep ? &lc.attn_fea : nullptr);
      Matrix y2 = detail::from_feature_major(y2p, k, l);
      Matrix z = layer.mid.forward(y2) + layer.side_sh.forward(cc.side) + layer.side_sp.forward(cc.sp);
      Matrix a = z.leftCols(c).array().tanh();
      Matrix b = z.rightCols(c).unaryExpr([](double v) { return nn::sigmoid(v); });
      Matrix g = a.cwiseProduct(b);
      Matrix o = layer.out.forward(g);
      skip += o.rightCols(c);
      Matrix next = (h + o.leftCols(c)) * kInvSqrt2;
      if (keep) {
        lc.x = std::move(h);
        lc.y = std::move(y);
        lc.y2 = std::move(y2);
        lc.gate_tanh = std::move(a);
        lc.gate_sig = std::move(b);
        lc.g = std::move(g);
      }
      h = std::move(next);
    }
    skip /= std::sqrt(static_cast<double>(br.layers.size()));
    Matrix u = br.skip_proj.forward(skip);
    Matrix r = u.cwiseMax(0.0);
    Matrix e = br.out_proj.forward(r);
    if (keep) {
      cc.skip = std::move(skip);
      cc.u = std::move(u);
      cc.r = std::move(r);
    }
    return e.reshaped<Eigen::RowMajor>(k, l);
  }

  /// Accumulate parameter gradients for d(loss)/d(eps_hat). Touches only the
  /// shared parameters and the given domain's branch.
  void backward(Domain domain, const Cache& cc, const Matrix& d_eps_hat) {
    Branch& br = branch(domain);
    const auto k = cc.k, l = cc.l, n = k * l;
    const int c = spec_.channels;
    if (d_eps_hat.rows() != k || d_eps_hat.cols() != l) fail<ShapeError>("denoiser backward: gradient shape");
    if (cc.layers.size() != br.layers.size()) fail<Error>("denoiser backward: cache was built without gradients");
    Matrix de = d_eps_hat.reshaped<Eigen::RowMajor>(n, 1);
    Matrix dr = br.out_proj.backward(cc.r, de);
    Matrix du = dr.cwiseProduct((cc.u.array() > 0.0).cast<double>().matrix());
    Matrix dskip = br.skip_proj.backward(cc.skip, du) / std::sqrt(static_cast<double>(br.layers.size()));

    Matrix dh = Matrix::Zero(n, c);
    Matrix d_side = Matrix::Zero(n, spec_.side_dim());
    for (std::size_t ii = br.layers.size(); ii-- > 0;) {
      auto& layer = br.layers[ii];
      const auto& lc = cc.layers[ii];
      Matrix d_o(n, 2 * c);
      d_o.leftCols(c) = dh * kInvSqrt2;
      d_o.rightCols(c) = dskip;
      Matrix dx = dh * kInvSqrt2;
      Matrix dg = layer.out.backward(lc.g, d_o);
      Matrix dz(n, 2 * c);
      dz.leftCols(c) = dg.cwiseProduct(lc.gate_sig).cwiseProduct(
          (1.0 - lc.gate_tanh.array().square()).matrix());
      dz.rightCols(c) = dg.cwiseProduct(lc.gate_tanh)
                            .cwiseProduct((lc.gate_sig.array() * (1.0 - lc.gate_sig.array())).matrix());
      Matrix dy2 = layer.mid.backward(lc.y2, dz);
      d_side += layer.side_sh.backward(cc.side, dz);
      layer.side_sp.backward(cc.sp, dz);

      Matrix dy2p = detail::to_feature_major(dy2, k, l);
      Matrix dy1p = dy2p + layer.ln_fea.backward(lc.ln_fea, layer.attn_fea.backward(lc.attn_fea, dy2p, k));
      Matrix dy1 = detail::from_feature_major(dy1p, k, l);
      Matrix dy = dy1 + layer.ln_tem.backward(lc.ln_tem, layer.attn_tem.backward(lc.attn_tem, dy1, l));
      dx += dy;
      if (inject_step(ii)) layer.step_proj.backward(cc.step, dy.colwise().sum());
      dh = std::move(dx);
    }
    shared_.input.backward(cc.xin, dh);
    const int te = spec_.time_emb_dim;
    for (Eigen::Index f = 0; f < k; ++f)
      shared_.feature_embedding.grad.row(f) += d_side.block(f * l, te, l, spec_.feat_emb_dim).colwise().sum();
  }

  ParamCounts count_parameters() const {
    ParamCounts pc;
    shared_.visit([&](const nn::Param& p) { pc.shared += static_cast<std::size_t>(p.size()); });
    tgt_.visit([&](const nn::Param& p) { pc.per_branch += static_cast<std::size_t>(p.size()); });
    for (const auto& layer : tgt_.layers)
      layer.visit([&](const nn::Param& p) { pc.per_branch_residual += static_cast<std::size_t>(p.size()); });
    std::size_t src = 0;
    src_.visit([&](const nn::Param& p) { src += static_cast<std::size_t>(p.size()); });
    pc.total = pc.shared + pc.per_branch + src;
    return pc;
  }

  /// Visit every parameter: shared first, then source, then target branch.
  template <typename F>
  void visit(F&& f) {
    shared_.visit(f);
    src_.visit(f);
    tgt_.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    shared_.visit(f);
    src_.visit(f);
    tgt_.visit(f);
  }

  std::vector<nn::Param*> parameters() {
    std::vector<nn::Param*> ps;
    visit([&](nn::Param& p) { ps.push_back(&p); });
    return ps;
  }

  void zero_grad() {
    visit([](nn::Param& p) { p.zero_grad(); });
  }

 private:
  static constexpr double kInvSqrt2 = 0.70710678118654752440;

  bool inject_step(std::size_t layer) const { return spec_.step_embedding_every_layer || layer == 0; }

  static Matrix stack_inputs(const Matrix& x_cond, const Matrix& x_noisy) {
    const auto n = x_cond.size();
    Matrix xin(n, 2);
    xin.col(0) = x_cond.reshaped<Eigen::RowMajor>(n, 1);
    xin.col(1) = x_noisy.reshaped<Eigen::RowMajor>(n, 1);
    return xin;
  }

  Branch make_branch(const std::string& name, Rng& rng) const {
    const int c = spec_.channels;
    Branch b;
    for (int i = 0; i < spec_.layers; ++i) {
      const std::string p = name + ".layer" + std::to_string(i);
      ResidualLayer l;
      l.step_proj = nn::Linear(p + ".step_proj", spec_.diffusion_emb_dim, c);
      l.ln_tem = nn::LayerNorm(p + ".ln_tem", c);
      l.attn_tem = nn::MultiHeadAttention(p + ".attn_tem", c, spec_.heads);
      l.ln_fea = nn::LayerNorm(p + ".ln_fea", c);
      l.attn_fea = nn::MultiHeadAttention(p + ".attn_fea", c, spec_.heads);
      l.mid = nn::Linear(p + ".mid", c, 2 * c);
      l.side_sh = nn::Linear(p + ".side_sh", spec_.side_dim(), 2 * c);
      l.side_sp = nn::Linear(p + ".side_sp", 1, 2 * c);
      l.out = nn::Linear(p + ".out", c, 2 * c);
      l.step_proj.init(rng);
      l.attn_tem.init(rng);
      l.attn_fea.init(rng);
      l.mid.init(rng);
      l.side_sh.init(rng);
      l.side_sp.init(rng);
      l.out.init(rng);
      b.layers.push_back(std::move(l));
    }
    b.skip_proj = nn::Linear(name + ".skip_proj", c, c);
    b.out_proj = nn::Linear(name + ".out_proj", c, 1);
    b.skip_proj.init(rng);
    // out_proj stays zero so the initial prediction is 0.
    return b;
  }

  DenoiserSpec spec_;
  SharedParams shared_;
  Branch src_;
  Branch tgt_;
  std::int64_t trained_steps_ = 0;
};

}  // namespace cdimpute

#endif  // CDIMPUTE_DENOISER_HPP
