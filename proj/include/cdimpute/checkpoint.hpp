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
#ifndef CDIMPUTE_CHECKPOINT_HPP
#define CDIMPUTE_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "cdimpute/config.hpp"
#include "cdimpute/denoiser.hpp"

namespace cdimpute {

// Layout: 8-byte magic, u32 version, u64 header length, JSON header, u64
// parameter count, then per parameter: u32 name length, name, u64 rows,
// u64 cols, and rows*cols doubles each for value, first and second moment.
inline constexpr char kCheckpointMagic[8] = {'C', 'D', 'I', 'M', 'P', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume training or run inference.
struct TrainingState {
  json config;          // resolved RunConfig
  int next_epoch = 0;   // first epoch still to run
  std::int64_t global_step = 0;
  std::int64_t adam_steps = 0;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  NormRecord source_norm, target_norm;
  std::vector<std::string> feature_names;
};

namespace detail {

inline json norm_to_json(const NormRecord& r) {
  json a = json::array();
  for (const auto& f : r) a.push_back({f.mean, f.scale});
  return a;
}

inline NormRecord norm_from_json(const json& a) {
  NormRecord r;
  for (const auto& e : a) r.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
  return r;
}

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) fail<ParseError>(path, ": truncated checkpoint");
  return v;
}

inline void put_matrix(std::ostream& os, const Matrix& m) {
  os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

inline void take_matrix(std::istream& is, Matrix& m, const std::string& path) {
  if (!is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double))))
    fail<ParseError>(path, ": truncated checkpoint");
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Denoiser& model, const TrainingState& st) {
  json h;
  h["config"] = st.config;
  h["features"] = model.spec().features;
  h["next_epoch"] = st.next_epoch;
  h["global_step"] = st.global_step;
  h["adam_steps"] = st.adam_steps;
  h["best_val"] = std::isfinite(st.best_val) ? json(st.best_val) : json(nullptr);
  h["best_epoch"] = st.best_epoch;
  h["trained_steps"] = model.trained_steps();
  h["source_norm"] = detail::norm_to_json(st.source_norm);
  h["target_norm"] = detail::norm_to_json(st.target_norm);
  h["feature_names"] = st.feature_names;
  const std::string header = h.dump();

  // Write to a sibling file and rename so a crash never leaves a torn checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) fail<Error>("cannot write checkpoint '", tmp.string(), "'");
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put(os, kCheckpointVersion);
    detail::put(os, static_cast<std::uint64_t>(header.size()));
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    std::uint64_t n = 0;
    model.visit([&](const nn::Param&) { ++n; });
    detail::put(os, n);
    model.visit([&](const nn::Param& p) {
      detail::put(os, static_cast<std::uint32_t>(p.name.size()));
      os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      detail::put(os, static_cast<std::uint64_t>(p.value.rows()));
      detail::put(os, static_cast<std::uint64_t>(p.value.cols()));
      detail::put_matrix(os, p.value);
      detail::put_matrix(os, p.m);
      detail::put_matrix(os, p.v);
    });
    if (!os) fail<Error>("failed writing checkpoint '", tmp.string(), "'");
  }
  std::filesystem::rename(tmp, path);
}

struct LoadedCheckpoint {
  Denoiser model;
  TrainingState state;
  RunConfig config;
};

/// Rebuild the model from the stored config, then restore every parameter.
/// Names and shapes must match exactly.
inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string ps = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) fail<Error>("cannot open checkpoint '", ps, "'");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    fail<ParseError>(ps, ": not a checkpoint file");
  const auto version = detail::take<std::uint32_t>(is, ps);
  if (version != kCheckpointVersion)
    fail<ParseError>(ps, ": checkpoint version ", version, ", expected ", kCheckpointVersion);
  const auto hlen = detail::take<std::uint64_t>(is, ps);
  if (hlen > (1ULL << 30)) fail<ParseError>(ps, ": implausible header length");
  std::string header(hlen, '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(hlen))) fail<ParseError>(ps, ": truncated checkpoint");
  json h;
  try {
    h = json::parse(header);
  } catch (const json::exception& e) {
    fail<ParseError>(ps, ": bad checkpoint header: ", e.what());
  }

  LoadedCheckpoint out;
  out.state.config = h.at("config");
  out.config = from_json(out.state.config);
  out.state.next_epoch = h.at("next_epoch").get<int>();
  out.state.global_step = h.at("global_step").get<std::int64_t>();
  out.state.adam_steps = h.at("adam_steps").get<std::int64_t>();
  out.state.best_val =
      h.at("best_val").is_null() ? std::numeric_limits<double>::infinity() : h.at("best_val").get<double>();
  out.state.best_epoch = h.at("best_epoch").get<int>();
  out.state.source_norm = detail::norm_from_json(h.at("source_norm"));
  out.state.target_norm = detail::norm_from_json(h.at("target_norm"));
  out.state.feature_names = h.at("feature_names").get<std::vector<std::string>>();

  DenoiserSpec spec = out.config.model;
  spec.features = h.at("features").get<Eigen::Index>();
  out.model = Denoiser(spec, 0);
  out.model.set_trained_steps(h.at("trained_steps").get<std::int64_t>());

  const auto n = detail::take<std::uint64_t>(is, ps);
  std::uint64_t expected = 0;
  out.model.visit([&](nn::Param&) { ++expected; });
  if (n != expected) fail<ParseError>(ps, ": ", n, " parameters stored, model has ", expected);
  out.model.visit([&](nn::Param& p) {
    const auto len = detail::take<std::uint32_t>(is, ps);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) fail<ParseError>(ps, ": truncated checkpoint");
    const auto rows = detail::take<std::uint64_t>(is, ps);
    const auto cols = detail::take<std::uint64_t>(is, ps);
    if (name != p.name || static_cast<Eigen::Index>(rows) != p.value.rows() ||
        static_cast<Eigen::Index>(cols) != p.value.cols())
      fail<ParseError>(ps, ": parameter '", name, "' (", rows, "x", cols, ") does not match '", p.name, "' (",
                       p.value.rows(), "x", p.value.cols(), ")");
    detail::take_matrix(is, p.value, ps);
    detail::take_matrix(is, p.m, ps);
    detail::take_matrix(is, p.v, ps);
  });
  return out;
}

}  // namespace cdimpute

#endif  // CDIMPUTE_CHECKPOINT_HPP
