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
#ifndef CDIMPUTE_CORE_HPP
#define CDIMPUTE_CORE_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace cdimpute {

/// Dense row-major matrix; K x L windows, N x C hidden activations.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;
/// Binary matrix, 1 = set.
using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (CSV cell, config value).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Structural mismatch: column counts, tensor shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// CSV header or row does not match the expected column layout.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or activation during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  return os.str();
}

}  // namespace detail

template <typename E = Error, typename... Args>
[[noreturn]] void fail(Args&&... args) {
  throw E(detail::concat(std::forward<Args>(args)...));
}

inline void require_same_shape(const auto& a, const auto& b, std::string_view what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail<ShapeError>(what, ": shape mismatch (", a.rows(), "x", a.cols(), " vs ", b.rows(), "x",
                     b.cols(), ")");
  }
}

inline Matrix to_real(const Mask& m) { return m.cast<double>(); }

inline std::size_t count_set(const Mask& m) {
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < m.size(); ++i) n += m.data()[i] != 0;
  return n;
}

/// Round half to even; used wherever a fractional count becomes an integer.
inline std::size_t round_count(double x) {
  return static_cast<std::size_t>(std::nearbyint(x));
}

// ---------------------------------------------------------------------------
// Seeded random streams. Every stream is derived from a base seed plus a
// tuple of tags (window hash, epoch, purpose), so results never depend on
// the order in which streams are consumed.

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(base);
  for (auto t : tags) h = splitmix64(h ^ splitmix64(t + 0x632BE59BD9B4E019ULL));
  return h;
}

/// FNV-1a; stable across platforms, used to turn window ids and purpose
/// labels into stream tags.
constexpr std::uint64_t hash_tag(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline Rng make_stream(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  return Rng(derive_seed(base, tags));
}

inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
  return m;
}

}  // namespace cdimpute

#endif  // CDIMPUTE_CORE_HPP
