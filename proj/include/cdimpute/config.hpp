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
#ifndef CDIMPUTE_CONFIG_HPP
#define CDIMPUTE_CONFIG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdimpute/cdca.hpp"
#include "cdimpute/data.hpp"
#include "cdimpute/denoiser.hpp"
#include "cdimpute/fmixup.hpp"

namespace cdimpute {

using json = nlohmann::json;

/// How original-missing positions of X~0 are filled before diffusion.
enum class FillMode { FMixup, Zero, Linear };

struct SyntheticSpec {
  Eigen::Index features = 5;
  Eigen::Index length = 32;
  int n_windows = 400;         // target domain
  int n_source_windows = 400;
  std::vector<int> shared_freqs{1, 2};  // cycles per window
  double domain_shift = 1.0;
  double target_missing_rate = 0.4;
  double source_missing_rate = 0.0;
  double noise = 0.1;
};

struct DataConfig {
  bool synthetic = true;
  std::string source_csv;
  std::string target_csv;
  std::vector<std::string> schema;  // empty: every non-timestamp column
  Eigen::Index window_length = 36;
  Eigen::Index train_stride = 0;    // 0: stride = window_length
  SplitFractions fractions;
  std::uint64_t synthetic_seed = 7;
  SyntheticSpec synth;
};

struct FMixupConfig {
  FillMode fill = FillMode::FMixup;
  FftMode fft_mode = FftMode::Joint2D;
  double alpha = 0.003;
  double lambda_min = 0.0;
  double lambda_max = 1.0;
  std::string spectral_report;  // optional CSV path, written during the first epoch
};

struct ScheduleConfig {
  int steps = 50;
  double beta1 = 1e-4;
  double beta_t = 0.5;
};

struct OptimConfig {
  double lr = 1e-3;
  double milestone1 = 0.75;
  double milestone2 = 0.90;
  double lr1 = 1e-4;
  double lr2 = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  int batch_size = 16;
  int epochs = 200;
  int n_samples = 100;
  std::uint64_t seed = 0;
  int stop_after_epoch = -1;  // simulate an interruption after this many epochs
};

struct RunConfig {
  DataConfig data;
  MaskingConfig masking;
  FMixupConfig fmixup;
  ScheduleConfig schedule;
  DenoiserSpec model;
  AlignmentConfig cdca;
  bool cdca_enabled = true;
  OptimConfig optim;
  TrainConfig train;

  void validate() const {
    masking.validate(data.synthetic ? data.synth.length : data.window_length);
    cdca.validate();
    if (!(fmixup.alpha > 0.0 && fmixup.alpha < 1.0)) fail<ConfigError>("fmixup.alpha must be in (0,1)");
    if (!(0.0 <= fmixup.lambda_min && fmixup.lambda_min <= fmixup.lambda_max && fmixup.lambda_max <= 1.0))
      fail<ConfigError>("fmixup lambda range must satisfy 0 <= min <= max <= 1");
    if (!(0.0 < optim.milestone1 && optim.milestone1 < optim.milestone2 && optim.milestone2 < 1.0))
      fail<ConfigError>("optim milestones must satisfy 0 < m1 < m2 < 1");
    if (train.batch_size < 1 || train.epochs < 1 || train.n_samples < 1)
      fail<ConfigError>("train.batch_size, train.epochs, train.n_samples must be >= 1");
    if (!data.synthetic) {
      for (const auto* p : {&data.source_csv, &data.target_csv})
        if (p->empty() || !std::filesystem::exists(*p)) fail<ConfigError>("data file '", *p, "' does not exist");
    }
    (void)quadratic_schedule_check();
  }

  /// Learning rate for a 0-based epoch index.
  double learning_rate(int epoch) const {
    const int e1 = static_cast<int>(std::ceil(optim.milestone1 * train.epochs));
    const int e2 = static_cast<int>(std::ceil(optim.milestone2 * train.epochs));
    if (epoch < e1) return optim.lr;
    if (epoch < e2) return optim.lr1;
    return optim.lr2;
  }

 private:
  bool quadratic_schedule_check() const {
    if (schedule.steps < 2 || !(schedule.beta1 > 0 && schedule.beta1 < schedule.beta_t && schedule.beta_t < 1))
      fail<ConfigError>("schedule: need steps >= 2 and 0 < beta1 < betaT < 1");
    return true;
  }
};

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

template <typename E>
struct EnumNames;

template <>
struct EnumNames<FillMode> {
  static constexpr std::pair<FillMode, const char*> map[] = {
      {FillMode::FMixup, "fmixup"}, {FillMode::Zero, "zero"}, {FillMode::Linear, "linear"}};
};
template <>
struct EnumNames<FftMode> {
  static constexpr std::pair<FftMode, const char*> map[] = {{FftMode::Joint2D, "joint2d"},
                                                            {FftMode::PerFeature1D, "per_feature_1d"}};
};
template <>
struct EnumNames<TrainStrategy> {
  static constexpr std::pair<TrainStrategy, const char*> map[] = {{TrainStrategy::Point, "point"},
                                                                  {TrainStrategy::Block, "block"}};
};
template <>
struct EnumNames<TestPattern> {
  static constexpr std::pair<TestPattern, const char*> map[] = {{TestPattern::Point, "point"},
                                                                {TestPattern::Block, "block"}};
};

template <typename E>
std::string enum_name(E e) {
  for (const auto& [v, n] : EnumNames<E>::map)
    if (v == e) return n;
  return "?";
}

template <typename E>
E enum_value(const std::string& s, const char* key) {
  for (const auto& [v, n] : EnumNames<E>::map)
    if (s == n) return v;
  fail<ConfigError>("config key '", key, "': unknown value '", s, "'");
}

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail<ConfigError>("config key '", key, "': ", e.what());
  }
}

template <typename E>
void get_enum(const json& j, const char* key, E& out) {
  if (j.contains(key)) out = enum_value<E>(j.at(key).get<std::string>(), key);
}

}  // namespace detail

inline json to_json(const RunConfig& c) {
  using detail::enum_name;
  json j;
  j["data"] = {{"synthetic", c.data.synthetic},
               {"source_csv", c.data.source_csv},
               {"target_csv", c.data.target_csv},
               {"schema", c.data.schema},
               {"window_length", c.data.window_length},
               {"train_stride", c.data.train_stride},
               {"train_fraction", c.data.fractions.train},
               {"val_fraction", c.data.fractions.val},
               {"test_fraction", c.data.fractions.test},
               {"synthetic_seed", c.data.synthetic_seed},
               {"synth",
                {{"features", c.data.synth.features},
                 {"length", c.data.synth.length},
                 {"n_windows", c.data.synth.n_windows},
                 {"n_source_windows", c.data.synth.n_source_windows},
                 {"shared_freqs", c.data.synth.shared_freqs},
                 {"domain_shift", c.data.synth.domain_shift},
                 {"target_missing_rate", c.data.synth.target_missing_rate},
                 {"source_missing_rate", c.data.synth.source_missing_rate},
                 {"noise", c.data.synth.noise}}}};
  j["masking"] = {{"train_strategy", enum_name(c.masking.train_strategy)},
                  {"point_ratio_min", c.masking.point_ratio_min},
                  {"point_ratio_max", c.masking.point_ratio_max},
                  {"block_extra_point_ratio", c.masking.block_extra_point_ratio},
                  {"test_pattern", enum_name(c.masking.test_pattern)},
                  {"test_point_rate", c.masking.test_point_rate},
                  {"test_block_point_rate", c.masking.test_block_point_rate},
                  {"test_block_prob", c.masking.test_block_prob},
                  {"test_block_len_min", c.masking.test_block_len_min},
                  {"test_block_len_max", c.masking.test_block_len_max},
                  {"seed", c.masking.seed}};
  j["fmixup"] = {{"fill", enum_name(c.fmixup.fill)},
                 {"fft_mode", enum_name(c.fmixup.fft_mode)},
                 {"alpha", c.fmixup.alpha},
                 {"lambda_min", c.fmixup.lambda_min},
                 {"lambda_max", c.fmixup.lambda_max},
                 {"spectral_report", c.fmixup.spectral_report}};
  j["schedule"] = {{"steps", c.schedule.steps}, {"beta1", c.schedule.beta1}, {"beta_t", c.schedule.beta_t}};
  j["model"] = {{"channels", c.model.channels},
                {"layers", c.model.layers},
                {"heads", c.model.heads},
                {"time_emb_dim", c.model.time_emb_dim},
                {"feat_emb_dim", c.model.feat_emb_dim},
                {"diffusion_emb_dim", c.model.diffusion_emb_dim},
                {"step_embedding_every_layer", c.model.step_embedding_every_layer}};
  j["cdca"] = {{"enabled", c.cdca_enabled},
               {"tau_l", c.cdca.tau_l},
               {"tau_h", c.cdca.tau_h},
               {"mu_align", c.cdca.mu_align},
               {"per_sample", c.cdca.per_sample}};
  j["optim"] = {{"lr", c.optim.lr},       {"milestone1", c.optim.milestone1}, {"milestone2", c.optim.milestone2},
                {"lr1", c.optim.lr1},     {"lr2", c.optim.lr2},               {"beta1", c.optim.beta1},
                {"beta2", c.optim.beta2}, {"eps", c.optim.eps}};
  j["train"] = {{"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"n_samples", c.train.n_samples},
                {"seed", c.train.seed},
                {"stop_after_epoch", c.train.stop_after_epoch}};
  return j;
}

/**
 * Build a config from JSON. Missing keys keep their defaults, except the
 * three alignment weights, which must always be given explicitly.
 */
inline RunConfig from_json(const json& j) {
  using detail::get;
  using detail::get_enum;
  RunConfig c;
  if (!j.is_object()) fail<ConfigError>("config root must be an object");
  const json empty = json::object();
  auto sec = [&](const char* name) -> const json& { return j.contains(name) ? j.at(name) : empty; };

  const auto& d = sec("data");
  get(d, "synthetic", c.data.synthetic);
  get(d, "source_csv", c.data.source_csv);
  get(d, "target_csv", c.data.target_csv);
  get(d, "schema", c.data.schema);
  get(d, "window_length", c.data.window_length);
  get(d, "train_stride", c.data.train_stride);
  get(d, "train_fraction", c.data.fractions.train);
  get(d, "val_fraction", c.data.fractions.val);
  get(d, "test_fraction", c.data.fractions.test);
  get(d, "synthetic_seed", c.data.synthetic_seed);
  if (d.contains("synth")) {
    const auto& s = d.at("synth");
    get(s, "features", c.data.synth.features);
    get(s, "length", c.data.synth.length);
    get(s, "n_windows", c.data.synth.n_windows);
    get(s, "n_source_windows", c.data.synth.n_source_windows);
    get(s, "shared_freqs", c.data.synth.shared_freqs);
    get(s, "domain_shift", c.data.synth.domain_shift);
    get(s, "target_missing_rate", c.data.synth.target_missing_rate);
    get(s, "source_missing_rate", c.data.synth.source_missing_rate);
    get(s, "noise", c.data.synth.noise);
  }
  const auto& m = sec("masking");
  get_enum(m, "train_strategy", c.masking.train_strategy);
  get(m, "point_ratio_min", c.masking.point_ratio_min);
  get(m, "point_ratio_max", c.masking.point_ratio_max);
  get(m, "block_extra_point_ratio", c.masking.block_extra_point_ratio);
  get_enum(m, "test_pattern", c.masking.test_pattern);
  get(m, "test_point_rate", c.masking.test_point_rate);
  get(m, "test_block_point_rate", c.masking.test_block_point_rate);
  get(m, "test_block_prob", c.masking.test_block_prob);
  get(m, "test_block_len_min", c.masking.test_block_len_min);
  get(m, "test_block_len_max", c.masking.test_block_len_max);
  get(m, "seed", c.masking.seed);
  const auto& f = sec("fmixup");
  get_enum(f, "fill", c.fmixup.fill);
  get_enum(f, "fft_mode", c.fmixup.fft_mode);
  get(f, "alpha", c.fmixup.alpha);
  get(f, "lambda_min", c.fmixup.lambda_min);
  get(f, "lambda_max", c.fmixup.lambda_max);
  get(f, "spectral_report", c.fmixup.spectral_report);
  const auto& s = sec("schedule");
  get(s, "steps", c.schedule.steps);
  get(s, "beta1", c.schedule.beta1);
  get(s, "beta_t", c.schedule.beta_t);
  const auto& md = sec("model");
  get(md, "channels", c.model.channels);
  get(md, "layers", c.model.layers);
  get(md, "heads", c.model.heads);
  get(md, "time_emb_dim", c.model.time_emb_dim);
  get(md, "feat_emb_dim", c.model.feat_emb_dim);
  get(md, "diffusion_emb_dim", c.model.diffusion_emb_dim);
  get(md, "step_embedding_every_layer", c.model.step_embedding_every_layer);
  const auto& a = sec("cdca");
  for (const char* key : {"tau_l", "tau_h", "mu_align"})
    if (!a.contains(key)) fail<ConfigError>("config key 'cdca.", key, "' is required");
  get(a, "enabled", c.cdca_enabled);
  get(a, "tau_l", c.cdca.tau_l);
  get(a, "tau_h", c.cdca.tau_h);
  get(a, "mu_align", c.cdca.mu_align);
  get(a, "per_sample", c.cdca.per_sample);
  const auto& o = sec("optim");
  get(o, "lr", c.optim.lr);
  get(o, "milestone1", c.optim.milestone1);
  get(o, "milestone2", c.optim.milestone2);
  get(o, "lr1", c.optim.lr1);
  get(o, "lr2", c.optim.lr2);
  get(o, "beta1", c.optim.beta1);
  get(o, "beta2", c.optim.beta2);
  get(o, "eps", c.optim.eps);
  const auto& t = sec("train");
  get(t, "batch_size", c.train.batch_size);
  get(t, "epochs", c.train.epochs);
  get(t, "n_samples", c.train.n_samples);
  get(t, "seed", c.train.seed);
  get(t, "stop_after_epoch", c.train.stop_after_epoch);
  return c;
}

/// Dotted key paths ("train.epochs") of every leaf in `j`.
inline std::vector<std::string> flat_keys(const json& j, const std::string& prefix = "") {
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string k = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      auto sub = flat_keys(*it, k);
      keys.insert(keys.end(), sub.begin(), sub.end());
    } else {
      keys.push_back(k);
    }
  }
  return keys;
}

inline json::json_pointer key_pointer(const std::string& dotted) {
  std::string p = "/" + dotted;
  for (auto& ch : p)
    if (ch == '.') ch = '/';
  return json::json_pointer(p);
}

/**
 * Set `dotted` to `text`. The text is parsed as JSON when possible so numbers
 * and booleans keep their type; otherwise it is stored as a string. Keys must
 * already exist in the default configuration.
 */
inline void apply_override(json& j, const std::string& dotted, const std::string& text) {
  static const auto known = flat_keys(to_json(RunConfig{}));
  if (std::find(known.begin(), known.end(), dotted) == known.end())
    fail<ConfigError>("unknown config key '", dotted, "'");
  json v;
  try {
    v = json::parse(text);
  } catch (const json::exception&) {
    v = text;
  }
  j[key_pointer(dotted)] = v;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail<ConfigError>("cannot open config '", path, "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail<ParseError>(path, ": ", e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail<Error>("cannot write '", path.string(), "'");
  out << j.dump(2) << '\n';
}

}  // namespace cdimpute

#endif  // CDIMPUTE_CONFIG_HPP
