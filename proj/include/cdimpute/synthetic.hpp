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
#ifndef CDIMPUTE_SYNTHETIC_HPP
#define CDIMPUTE_SYNTHETIC_HPP

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>

#include "cdimpute/config.hpp"
#include "cdimpute/data.hpp"

namespace cdimpute {

/// Two related tables plus the values before holes were punched.
struct SyntheticPair {
  SeriesTable source, target;
  Matrix source_truth, target_truth;  // rows x features
};

/**
 * Two domains driven by one latent trend: a sum of low-frequency sinusoids
 * with a random phase per window, loaded onto each feature with a positive
 * weight. The target domain shifts the phase, rescales the amplitude and adds
 * more noise, all in proportion to `domain_shift`. Consecutive windows of
 * `length` rows are independent draws.
 */
inline SyntheticPair generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.features < 1 || spec.length < 2 || spec.n_windows < 1 || spec.n_source_windows < 1)
    fail<ConfigError>("synth: features >= 1, length >= 2 and window counts >= 1 required");
  if (spec.shared_freqs.empty()) fail<ConfigError>("synth: need at least one shared frequency");
  for (double r : {spec.target_missing_rate, spec.source_missing_rate})
    if (!(r >= 0.0 && r < 1.0)) fail<ConfigError>("synth: missing rates must be in [0,1)");

  constexpr double two_pi = 2.0 * std::numbers::pi;
  Rng shared = make_stream(seed, {hash_tag("synth.shared")});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto k = spec.features;
  const auto nf = spec.shared_freqs.size();
  std::vector<double> level(static_cast<std::size_t>(k)), loading(static_cast<std::size_t>(k));
  std::vector<double> freq_amp(nf), freq_phase(nf);
  for (Eigen::Index f = 0; f < k; ++f) {
    level[static_cast<std::size_t>(f)] = 4.0 * unit(shared) - 2.0;
    loading[static_cast<std::size_t>(f)] = 0.5 + unit(shared);
  }
  for (std::size_t j = 0; j < nf; ++j) {
    freq_amp[j] = (0.7 + 0.6 * unit(shared)) / static_cast<double>(j + 1);
    freq_phase[j] = two_pi * unit(shared);
  }

  auto make = [&](Domain d, int n_windows, double missing, Matrix& truth) {
    const bool tgt = d == Domain::Target;
    const double phase_shift = tgt ? 0.6 * spec.domain_shift : 0.0;
    const double amp_scale = tgt ? 1.0 + 0.5 * spec.domain_shift : 1.0;
    const double noise = spec.noise * (tgt ? 1.0 + spec.domain_shift : 1.0);
    Rng rng = make_stream(seed, {hash_tag("synth.domain"), static_cast<std::uint64_t>(d)});
    Rng holes = make_stream(seed, {hash_tag("synth.holes"), static_cast<std::uint64_t>(d)});
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::bernoulli_distribution drop(missing);
    const auto rows = static_cast<Eigen::Index>(n_windows) * spec.length;
    SeriesTable t;
    t.values.resize(rows, k);
    t.observed.resize(rows, k);
    truth.resize(rows, k);
    for (Eigen::Index f = 0; f < k; ++f) t.feature_names.push_back(detail::concat("f", f));
    for (int w = 0; w < n_windows; ++w) {
      const double theta = two_pi * unit(rng);
      for (Eigen::Index l = 0; l < spec.length; ++l) {
        double trend = 0.0;
        for (std::size_t j = 0; j < nf; ++j) {
          const double cyc = static_cast<double>(spec.shared_freqs[j]) * static_cast<double>(l) /
                             static_cast<double>(spec.length);
          trend += freq_amp[j] * std::sin(two_pi * cyc + theta + freq_phase[j] + phase_shift);
        }
        const Eigen::Index r = static_cast<Eigen::Index>(w) * spec.length + l;
        for (Eigen::Index f = 0; f < k; ++f) {
          const auto fi = static_cast<std::size_t>(f);
          truth(r, f) = level[fi] + amp_scale * loading[fi] * trend + noise * gauss(rng);
        }
      }
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      t.timestamps.push_back(std::to_string(r));
      for (Eigen::Index f = 0; f < k; ++f) {
        const bool obs = !drop(holes);
        t.observed(r, f) = obs ? 1 : 0;
        t.values(r, f) = obs ? truth(r, f) : 0.0;
      }
    }
    return t;
  };

  SyntheticPair out;
  out.source = make(Domain::Source, spec.n_source_windows, spec.source_missing_rate, out.source_truth);
  out.target = make(Domain::Target, spec.n_windows, spec.target_missing_rate, out.target_truth);
  return out;
}

/// CSV with a timestamp column; missing cells are left empty.
inline void write_csv_table(const std::string& path, const SeriesTable& t) {
  std::ofstream out(path);
  if (!out) fail<Error>("cannot write '", path, "'");
  out << "timestamp";
  for (const auto& n : t.feature_names) out << ',' << n;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
    out << t.timestamps[static_cast<std::size_t>(r)];
    for (Eigen::Index f = 0; f < t.values.cols(); ++f) {
      out << ',';
      if (t.observed(r, f)) out << t.values(r, f);
    }
    out << '\n';
  }
}

}  // namespace cdimpute

#endif  // CDIMPUTE_SYNTHETIC_HPP
