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

#include <gtest/gtest.h>

#include "cdimpute/denoiser.hpp"
#include "cdimpute/nn/adam.hpp"
#include "support/fixtures.hpp"

using namespace cdimpute;
using namespace cdimpute::testing;

TEST(Sinusoid, PairsLieOnTheUnitCircle) {
  for (double pos : {0.0, 1.0, 17.0, 49.0}) {
    const RowVector e = sinusoidal_encoding(pos, 128);
    for (int i = 0; i < 64; ++i) EXPECT_NEAR(e(2 * i) * e(2 * i) + e(2 * i + 1) * e(2 * i + 1), 1.0, 1e-12);
  }
  EXPECT_EQ(sinusoidal_encoding(0.0, 4)(0), 0.0);
  EXPECT_EQ(sinusoidal_encoding(0.0, 4)(1), 1.0);
}

TEST(Layers, ZeroInputGivesBiasEverywhere) {
  Rng rng(1);
  nn::Linear lin("l", 2, 5);
  lin.init(rng);
  nn::fill_normal(lin.bias.value, 1.0, rng);
  const Matrix y = lin.forward(Matrix::Zero(12, 2));
  for (Eigen::Index r = 0; r < 12; ++r) EXPECT_TRUE(y.row(r) == lin.bias.value.row(0));

  DenoiserSpec s = tiny_spec();
  s.features = 3;
  Denoiser model(s, 4);
  randomize(model, 2);
  const Matrix h = model.shared_input_embed(Matrix::Zero(3, 4), Matrix::Zero(3, 4));
  for (Eigen::Index r = 0; r < h.rows(); ++r) EXPECT_TRUE(h.row(r) == model.shared().input.bias.value.row(0));
}

TEST(SideInfo, FeatureEmbeddingRowsFollowFeatures) {
  DenoiserSpec s = tiny_spec();
  s.features = 3;
  Denoiser a(s, 9);
  Denoiser b = a;
  // Permute the embedding rows (0,1,2) -> (2,0,1).
  const Matrix emb = a.shared().feature_embedding.value;
  b.shared().feature_embedding.value.row(0) = emb.row(2);
  b.shared().feature_embedding.value.row(1) = emb.row(0);
  b.shared().feature_embedding.value.row(2) = emb.row(1);
  const Eigen::Index l = 4;
  const Matrix da = a.side_info_shared(l, 3), db = b.side_info_shared(l, 3);
  const int perm[3] = {2, 0, 1};
  for (Eigen::Index f = 0; f < 3; ++f)
    for (Eigen::Index t = 0; t < l; ++t) EXPECT_TRUE(db.row(f * l + t) == da.row(perm[f] * l + t));
  // The time part is the same for every feature.
  EXPECT_TRUE(da.row(0).head(128) == da.row(2 * l).head(128));
  EXPECT_THROW(a.side_info_shared(l, 2), ShapeError);
}

TEST(Denoiser, OutputHeadStartsAtZero) {
  DenoiserSpec s = tiny_spec();
  Denoiser model(s, 3);
  const auto b = make_toy_batch(2, 3, 1);
  EXPECT_TRUE(model.forward(Domain::Target, {b.x_cond, b.x_noisy, b.cond, b.t}).isZero(0.0));
}

TEST(Denoiser, ParameterCountsScaleWithLayers) {
  DenoiserSpec s;
  s.features = 5;
  s.layers = 2;
  const auto c2 = Denoiser(s, 0).count_parameters();
  s.layers = 4;
  const auto c4 = Denoiser(s, 0).count_parameters();
  EXPECT_EQ(c4.per_branch_residual, 2 * c2.per_branch_residual);
  EXPECT_EQ(c4.shared, c2.shared);
  EXPECT_EQ(c4.total, c4.shared + 2 * c4.per_branch);
  // Shared: input conv (2C + C) plus a K x 16 embedding.
  EXPECT_EQ(c2.shared, static_cast<std::size_t>(3 * 64 + 5 * 16));
}

TEST(Denoiser, GradientsMatchFiniteDifferences) {
  for (Domain d : {Domain::Target, Domain::Source}) {
    Denoiser model(tiny_spec(), 5);
    randomize(model, 6);
    const auto b = make_toy_batch(2, 3, 7);
    const auto r = gradient_check(model, d, b);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
    EXPECT_GT(r.checked, 1000u);
  }
}

TEST(Denoiser, GradientsMatchWithFirstLayerStepOnly) {
  DenoiserSpec s = tiny_spec();
  s.layers = 2;
  s.heads = 2;
  s.step_embedding_every_layer = false;
  Denoiser model(s, 8);
  randomize(model, 9, 0.4);
  const auto b = make_toy_batch(2, 3, 10);
  const auto r = gradient_check(model, Domain::Target, b);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Denoiser, BackwardTouchesOnlyItsBranch) {
  Denoiser model(tiny_spec(), 11);
  randomize(model, 12);
  const auto b = make_toy_batch(2, 3, 13);
  model.zero_grad();
  Denoiser::Cache cache;
  const Matrix e = model.forward(Domain::Target, {b.x_cond, b.x_noisy, b.cond, b.t}, &cache);
  model.backward(Domain::Target, cache, e - b.eps);
  model.branch(Domain::Source).visit([](const nn::Param& p) { EXPECT_TRUE(p.grad.isZero(0.0)) << p.name; });
  double shared = 0.0;
  model.shared().visit([&](const nn::Param& p) { shared += p.grad.cwiseAbs().sum(); });
  EXPECT_GT(shared, 0.0);
}

TEST(Denoiser, OptimizerStepLeavesOtherBranchBitIdentical) {
  for (Domain d : {Domain::Target, Domain::Source}) {
    const Domain other = d == Domain::Target ? Domain::Source : Domain::Target;
    Denoiser model(tiny_spec(), 14);
    randomize(model, 15);
    // Keep the output ReLU alive so every shared weight gets a gradient.
    for (Domain b : {Domain::Target, Domain::Source}) model.branch(b).skip_proj.bias.value.setConstant(1.0);
    const Denoiser before = model;
    const auto b = make_toy_batch(2, 3, 16);
    model.zero_grad();
    Denoiser::Cache cache;
    const Matrix e = model.forward(d, {b.x_cond, b.x_noisy, b.cond, b.t}, &cache);
    model.backward(d, cache, (e - b.eps).cwiseProduct(to_real(b.target)));
    nn::Adam adam;
    adam.step(model.parameters());
    std::vector<const nn::Param*> now, then;
    model.branch(other).visit([&](const nn::Param& p) { now.push_back(&p); });
    before.branch(other).visit([&](const nn::Param& p) { then.push_back(&p); });
    for (std::size_t i = 0; i < now.size(); ++i) EXPECT_TRUE(now[i]->value == then[i]->value) << now[i]->name;
    EXPECT_FALSE(model.shared().input.weight.value == before.shared().input.weight.value);
  }
}

TEST(Denoiser, OutputsStayFiniteOverManyRandomInputs) {
  DenoiserSpec s = tiny_spec();
  s.features = 3;
  s.channels = 8;
  s.heads = 2;
  s.layers = 2;
  Denoiser model(s, 17);
  randomize(model, 18, 0.3);
  Rng rng(19);
  std::uniform_int_distribution<int> tdist(1, 50);
  for (int trial = 0; trial < 1000; ++trial) {
    const Matrix xc = 3.0 * standard_normal(3, 6, rng), xn = 3.0 * standard_normal(3, 6, rng);
    Mask m(3, 6);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (rng() & 1u) ? 1 : 0;
    const Matrix e = model.forward(trial % 2 ? Domain::Source : Domain::Target, {xc, xn, m, tdist(rng)});
    ASSERT_TRUE(e.allFinite()) << "trial " << trial;
  }
}

TEST(Denoiser, RejectsBadSpecs) {
  DenoiserSpec s;
  s.features = 2;
  s.heads = 5;
  EXPECT_THROW(Denoiser(s, 0), ConfigError);
  s.heads = 8;
  s.features = 0;
  EXPECT_THROW(Denoiser(s, 0), ConfigError);
}
