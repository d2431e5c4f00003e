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
#ifndef CDIMPUTE_NN_LAYERS_HPP
#define CDIMPUTE_NN_LAYERS_HPP

#include <cmath>
#include <string>
#include <vector>

#include "cdimpute/core.hpp"

// Minimal layers with explicit backward passes. Activations are N x C
// matrices (one row per position). Each backward accumulates into the
// parameter gradients and returns the gradient w.r.t. the layer input.

namespace cdimpute::nn {

/// A learnable tensor with its gradient and Adam moments.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m;
  Matrix v;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)),
        value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)),
        m(Matrix::Zero(rows, cols)),
        v(Matrix::Zero(rows, cols)) {}

  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }
};

inline void fill_normal(Matrix& m, double stddev, Rng& rng) {
  std::normal_distribution<double> d(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
}

/// y = x W^T + b; a 1x1 convolution over channels.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out)
      : weight(name + ".weight", out, in), bias(name + ".bias", 1, out) {}

  /// Variance-preserving: W ~ N(0, gain^2 / fan_in), b = 0.
  void init(Rng& rng, double gain = 1.0) {
    fill_normal(weight.value, gain / std::sqrt(static_cast<double>(weight.value.cols())), rng);
    bias.value.setZero();
  }

  Eigen::Index in_features() const { return weight.value.cols(); }
  Eigen::Index out_features() const { return weight.value.rows(); }

  Matrix forward(const Matrix& x) const {
    Matrix y(x.rows(), out_features());
    y.noalias() = x * weight.value.transpose();
    y.rowwise() += bias.value.row(0);
    return y;
  }

  Matrix backward(const Matrix& x, const Matrix& dy) {
    weight.grad.noalias() += dy.transpose() * x;
    bias.grad.row(0) += dy.colwise().sum();
    Matrix dx(dy.rows(), in_features());
    dx.noalias() = dy * weight.value;
    return dx;
  }

  template <typename F>
  void visit(F&& f) {
    f(weight);
    f(bias);
  }
  template <typename F>
  void visit(F&& f) const {
    f(weight);
    f(bias);
  }

  Param weight;
  Param bias;
};

class LayerNorm {
 public:
  struct Cache {
    Matrix xhat;
    Eigen::VectorXd inv_std;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, Eigen::Index channels)
      : gamma(name + ".gamma", 1, channels), beta(name + ".beta", 1, channels) {
    gamma.value.setOnes();
  }

  Matrix forward(const Matrix& x, Cache* cache) const {
    const auto c = static_cast<double>(x.cols());
    Eigen::VectorXd mean = x.rowwise().sum() / c;
    Matrix xc = x.colwise() - mean;
    Eigen::VectorXd inv_std = ((xc.array().square().rowwise().sum() / c) + kEps).rsqrt().matrix();
    Matrix xhat = xc.array().colwise() * inv_std.array();
    Matrix y = xhat.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv_std);
    }
    return y;
  }

  Matrix backward(const Cache& cache, const Matrix& dy) {
    gamma.grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    beta.grad.row(0) += dy.colwise().sum();
    const auto c = static_cast<double>(dy.cols());
    Matrix dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    Eigen::VectorXd s1 = dxhat.rowwise().sum();
    Eigen::VectorXd s2 = (dxhat.array() * cache.xhat.array()).rowwise().sum();
    Matrix dx = (c * dxhat.array() - (cache.xhat.array().colwise() * s2.array())).colwise() - s1.array();
    dx = dx.array().colwise() * (cache.inv_std.array() / c);
    return dx;
  }

  template <typename F>
  void visit(F&& f) {
    f(gamma);
    f(beta);
  }
  template <typename F>
  void visit(F&& f) const {
    f(gamma);
    f(beta);
  }

  Param gamma;
  Param beta;

 private:
  static constexpr double kEps = 1e-5;
};

/**
 * Multi-head self-attention over independent contiguous blocks of rows:
 * rows [b*n, (b+1)*n) form one sequence of n tokens. Tokens never attend
 * across blocks.
 */
class MultiHeadAttention {
 public:
  struct Cache {
    Matrix x;
    Matrix qkv;
    Matrix o;
    std::vector<Matrix> probs;  // block-major, then head
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, Eigen::Index channels, int heads)
      : qkv(name + ".in_proj", channels, 3 * channels), out(name + ".out_proj", channels, channels), heads_(heads) {
    if (heads <= 0 || channels % heads != 0)
      fail<ConfigError>(name, ": channels (", channels, ") must be divisible by heads (", heads, ")");
  }

  void init(Rng& rng) {
    qkv.init(rng);
    out.init(rng);
  }

  int heads() const { return heads_; }

  Matrix forward(const Matrix& x, Eigen::Index block_len, Cache* cache) const {
    const auto c = x.cols();
    const auto d = c / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    if (block_len <= 0 || x.rows() % block_len != 0) fail<ShapeError>("attention: rows not divisible by block length");
    const auto blocks = x.rows() / block_len;
    Matrix proj = qkv.forward(x);
    Matrix o(x.rows(), c);
    if (cache) cache->probs.clear();
    Matrix s(block_len, block_len);
    for (Eigen::Index b = 0; b < blocks; ++b) {
      const auto r0 = b * block_len;
      for (int h = 0; h < heads_; ++h) {
        const auto q = proj.block(r0, h * d, block_len, d);
        const auto k = proj.block(r0, c + h * d, block_len, d);
        const auto v = proj.block(r0, 2 * c + h * d, block_len, d);
        s.noalias() = scale * (q * k.transpose());
        softmax_rows(s);
        o.block(r0, h * d, block_len, d).noalias() = s * v;
        if (cache) cache->probs.push_back(s);
      }
    }
    Matrix y = out.forward(o);
    if (cache) {
      cache->x = x;
      cache->qkv = std::move(proj);
      cache->o = std::move(o);
    }
    return y;
  }

  Matrix backward(const Cache& cache, const Matrix& dy, Eigen::Index block_len) {
    const auto c = cache.x.cols();
    const auto d = c / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    const auto blocks = cache.x.rows() / block_len;
    Matrix d_o = out.backward(cache.o, dy);
    Matrix d_qkv = Matrix::Zero(cache.qkv.rows(), cache.qkv.cols());
    Matrix dp(block_len, block_len), ds(block_len, block_len);
    std::size_t idx = 0;
    for (Eigen::Index b = 0; b < blocks; ++b) {
      const auto r0 = b * block_len;
      for (int h = 0; h < heads_; ++h, ++idx) {
        const Matrix& p = cache.probs[idx];
        const auto q = cache.qkv.block(r0, h * d, block_len, d);
        const auto k = cache.qkv.block(r0, c + h * d, block_len, d);
        const auto v = cache.qkv.block(r0, 2 * c + h * d, block_len, d);
        const auto doh = d_o.block(r0, h * d, block_len, d);
        dp.noalias() = doh * v.transpose();
        d_qkv.block(r0, 2 * c + h * d, block_len, d).noalias() = p.transpose() * doh;
        const Eigen::VectorXd inner = (dp.array() * p.array()).rowwise().sum();
        ds = p.array() * (dp.array().colwise() - inner.array());
        d_qkv.block(r0, h * d, block_len, d).noalias() = scale * (ds * k);
        d_qkv.block(r0, c + h * d, block_len, d).noalias() = scale * (ds.transpose() * q);
      }
    }
    return qkv.backward(cache.x, d_qkv);
  }

  template <typename F>
  void visit(F&& f) {
    qkv.visit(f);
    out.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    qkv.visit(f);
    out.visit(f);
  }

  Linear qkv;
  Linear out;

 private:
  static void softmax_rows(Matrix& s) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      auto row = s.row(i);
      row.array() -= row.maxCoeff();
      row = row.array().exp().matrix();
      row /= row.sum();
    }
  }

  int heads_ = 1;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace cdimpute::nn

#endif  // CDIMPUTE_NN_LAYERS_HPP
