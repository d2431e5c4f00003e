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
#ifndef CDIMPUTE_FMIXUP_HPP
#define CDIMPUTE_FMIXUP_HPP

#include <complex>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <tuple>

#include <fftw3.h>

#include "cdimpute/core.hpp"
#include "cdimpute/data.hpp"

namespace cdimpute {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Joint2D transforms over (feature, time); PerFeature1D transforms each
/// feature row along time only.
enum class FftMode { Joint2D, PerFeature1D };

namespace detail {

// FFTW planning is not thread-safe, and plans own their buffers here, so a
// single lock guards both planning and execution.
class FftwPlans {
 public:
  static FftwPlans& instance() {
    static FftwPlans p;
    return p;
  }

  ComplexMatrix run(const ComplexMatrix& in, int sign, FftMode mode) {
    std::lock_guard<std::mutex> lock(mu_);
    auto& e = entry(static_cast<int>(in.rows()), static_cast<int>(in.cols()), sign, mode);
    std::copy(in.data(), in.data() + in.size(), reinterpret_cast<Complex*>(e.in));
    fftw_execute(e.plan);
    ComplexMatrix out(in.rows(), in.cols());
    std::copy(reinterpret_cast<Complex*>(e.out), reinterpret_cast<Complex*>(e.out) + in.size(), out.data());
    return out;
  }

  FftwPlans(const FftwPlans&) = delete;
  FftwPlans& operator=(const FftwPlans&) = delete;

 private:
  struct Entry {
    fftw_plan plan = nullptr;
    fftw_complex* in = nullptr;
    fftw_complex* out = nullptr;
  };

  FftwPlans() = default;
  ~FftwPlans() {
    for (auto& [key, e] : plans_) {
      fftw_destroy_plan(e.plan);
      fftw_free(e.in);
      fftw_free(e.out);
    }
  }

  Entry& entry(int rows, int cols, int sign, FftMode mode) {
    auto key = std::make_tuple(rows, cols, sign, static_cast<int>(mode));
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    Entry e;
    const auto n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    e.in = fftw_alloc_complex(n);
    e.out = fftw_alloc_complex(n);
    if (mode == FftMode::Joint2D) {
      e.plan = fftw_plan_dft_2d(rows, cols, e.in, e.out, sign, FFTW_ESTIMATE);
    } else {
      int len = cols;
      e.plan = fftw_plan_many_dft(1, &len, rows, e.in, nullptr, 1, cols, e.out, nullptr, 1, cols, sign,
                                  FFTW_ESTIMATE);
    }
    if (!e.plan) fail<Error>("FFTW could not plan a ", rows, "x", cols, " transform");
    return plans_.emplace(key, e).first->second;
  }

  std::mutex mu_;
  std::map<std::tuple<int, int, int, int>, Entry> plans_;
};

/// Move the zero frequency to the center (index n/2 on each shifted axis).
template <typename M>
M center(const M& x, bool shift_rows) {
  const auto r = x.rows(), c = x.cols();
  M out(r, c);
  const auto hr = shift_rows ? r / 2 : 0, hc = c / 2;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) out((i + hr) % r, (j + hc) % c) = x(i, j);
  return out;
}

template <typename M>
M uncenter(const M& x, bool shift_rows) {
  const auto r = x.rows(), c = x.cols();
  M out(r, c);
  const auto hr = shift_rows ? r / 2 : 0, hc = c / 2;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) out(i, j) = x((i + hr) % r, (j + hc) % c);
  return out;
}

}  // namespace detail

/// Forward DFT, unnormalized, natural (uncentered) layout.
inline ComplexMatrix fft(const Matrix& x, FftMode mode = FftMode::Joint2D) {
  return detail::FftwPlans::instance().run(x.cast<Complex>(), FFTW_FORWARD, mode);
}

/// Inverse DFT including the 1/N factor.
inline ComplexMatrix ifft(const ComplexMatrix& spec, FftMode mode = FftMode::Joint2D) {
  ComplexMatrix out = detail::FftwPlans::instance().run(spec, FFTW_BACKWARD, mode);
  const double n = mode == FftMode::Joint2D ? static_cast<double>(spec.size()) : static_cast<double>(spec.cols());
  return out / n;
}

/// Amplitude and phase in centered-frequency layout.
struct SpectralPair {
  Matrix amplitude;
  Matrix phase;  // in (-pi, pi]
  FftMode mode = FftMode::Joint2D;
};

inline SpectralPair decompose(const Matrix& x, FftMode mode = FftMode::Joint2D) {
  if (!x.allFinite()) fail<ConfigError>("decompose: input contains non-finite values");
  const ComplexMatrix spec = detail::center(fft(x, mode), mode == FftMode::Joint2D);
  SpectralPair sp;
  sp.mode = mode;
  sp.amplitude = spec.cwiseAbs();
  sp.phase = spec.unaryExpr([](const Complex& z) { return std::arg(z); });
  return sp;
}

struct Reconstruction {
  Matrix real;
  double imag_energy = 0.0;  // sum of squared imaginary parts before the real cast
};

inline Reconstruction reconstruct_full(const Matrix& amplitude, const Matrix& phase,
                                       FftMode mode = FftMode::Joint2D) {
  require_same_shape(amplitude, phase, "reconstruct");
  ComplexMatrix spec(amplitude.rows(), amplitude.cols());
  for (Eigen::Index i = 0; i < spec.size(); ++i) spec.data()[i] = std::polar(amplitude.data()[i], phase.data()[i]);
  const ComplexMatrix x = ifft(detail::uncenter(spec, mode == FftMode::Joint2D), mode);
  Reconstruction r;
  r.real = x.real();
  r.imag_energy = x.imag().squaredNorm();
  return r;
}

inline Matrix reconstruct(const Matrix& amplitude, const Matrix& phase, FftMode mode = FftMode::Joint2D) {
  return reconstruct_full(amplitude, phase, mode).real;
}

inline Matrix reconstruct(const SpectralPair& sp) { return reconstruct(sp.amplitude, sp.phase, sp.mode); }

/**
 * Low-frequency selector in centered coordinates: 1 where |u| <= floor(alpha*K)
 * and |v| <= floor(alpha*L). In PerFeature1D mode every feature row is
 * selected and only the temporal half-width applies.
 */
struct LowFreqMask {
  Mask mask;
  double alpha = 0.0;
  Eigen::Index half_rows = 0;
  Eigen::Index half_cols = 0;
};

inline LowFreqMask low_freq_mask(Eigen::Index k, Eigen::Index l, double alpha, FftMode mode = FftMode::Joint2D) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail<ConfigError>("low_freq_mask: alpha must be in (0,1), got ", alpha);
  if (k <= 0 || l <= 0) fail<ConfigError>("low_freq_mask: empty shape");
  LowFreqMask m;
  m.alpha = alpha;
  m.half_rows = static_cast<Eigen::Index>(std::floor(alpha * static_cast<double>(k)));
  m.half_cols = static_cast<Eigen::Index>(std::floor(alpha * static_cast<double>(l)));
  m.mask = Mask::Zero(k, l);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index u = i - k / 2;
    if (mode == FftMode::Joint2D && std::abs(u) > m.half_rows) continue;
    for (Eigen::Index j = 0; j < l; ++j)
      if (std::abs(j - l / 2) <= m.half_cols) m.mask(i, j) = 1;
  }
  return m;
}

/// a_tgt * (1 - m) + (lambda * a_tgt + (1 - lambda) * a_src) * m, elementwise.
inline Matrix mix_amplitude(const Matrix& a_src, const Matrix& a_tgt, const LowFreqMask& m, double lambda) {
  require_same_shape(a_src, a_tgt, "mix_amplitude");
  require_same_shape(a_tgt, m.mask, "mix_amplitude mask");
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail<ConfigError>("mix_amplitude: lambda must be in [0,1], got ", lambda);
  Matrix out(a_tgt.rows(), a_tgt.cols());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double mi = m.mask.data()[i];
    const double t = a_tgt.data()[i];
    out.data()[i] = t * (1.0 - mi) + (lambda * t + (1.0 - lambda) * a_src.data()[i]) * mi;
  }
  return out;
}

struct FMixupTrace {
  Matrix amplitude_before;  // target amplitude
  Matrix amplitude_after;   // blended amplitude
  Matrix phase;             // phase fed to the inverse transform
  Matrix mixed_series;      // full reconstruction, before masking into the window
  double imag_energy = 0.0;
};

/**
 * Fill the target window's original-missing positions with the series
 * rebuilt from the blended amplitude and the target's own phase. Observed
 * and artificial-target values are left untouched.
 */
inline TimeWindow interpolate_window(const TimeWindow& tgt, const TimeWindow& src_partner, double alpha, double lambda,
                                     FftMode mode = FftMode::Joint2D, FMixupTrace* trace = nullptr) {
  require_same_shape(tgt.values, src_partner.values, "interpolate_window");
  const auto sp_src = decompose(src_partner.conditional_values(), mode);
  const auto sp_tgt = decompose(tgt.conditional_values(), mode);
  const auto m = low_freq_mask(tgt.features(), tgt.length(), alpha, mode);
  Matrix mixed_amp = mix_amplitude(sp_src.amplitude, sp_tgt.amplitude, m, lambda);
  auto rec = reconstruct_full(mixed_amp, sp_tgt.phase, mode);
  TimeWindow out = tgt;
  for (Eigen::Index i = 0; i < out.values.size(); ++i)
    if (!out.obs_mask.data()[i]) out.values.data()[i] = rec.real.data()[i];
  if (trace) {
    trace->amplitude_before = sp_tgt.amplitude;
    trace->amplitude_after = std::move(mixed_amp);
    trace->phase = sp_tgt.phase;
    trace->mixed_series = std::move(rec.real);
    trace->imag_energy = rec.imag_energy;
  }
  return out;
}

/**
 * Time-domain linear interpolation of original-missing positions from the
 * conditional observations of the same feature; edges take the nearest
 * conditional value, a feature with none stays at the sentinel.
 */
inline TimeWindow linear_interpolate_window(const TimeWindow& w) {
  TimeWindow out = w;
  const Mask cond = w.cond_mask();
  for (Eigen::Index f = 0; f < w.features(); ++f) {
    std::vector<Eigen::Index> knots;
    for (Eigen::Index t = 0; t < w.length(); ++t)
      if (cond(f, t)) knots.push_back(t);
    if (knots.empty()) continue;
    std::size_t next = 0;
    for (Eigen::Index t = 0; t < w.length(); ++t) {
      while (next < knots.size() && knots[next] < t) ++next;
      if (w.obs_mask(f, t)) continue;
      double v;
      if (next == 0) {
        v = w.values(f, knots.front());
      } else if (next == knots.size()) {
        v = w.values(f, knots.back());
      } else {
        const auto a = knots[next - 1], b = knots[next];
        const double s = static_cast<double>(t - a) / static_cast<double>(b - a);
        v = (1.0 - s) * w.values(f, a) + s * w.values(f, b);
      }
      out.values(f, t) = v;
    }
  }
  return out;
}

/// Zero fill: missing positions keep the sentinel.
inline TimeWindow zero_fill_window(const TimeWindow& w) {
  TimeWindow out = w;
  for (Eigen::Index i = 0; i < out.values.size(); ++i)
    if (!out.obs_mask.data()[i]) out.values.data()[i] = 0.0;
  return out;
}

/// Per-bin CSV dump of one blend, for inspection.
inline void write_spectral_report(std::ostream& os, const std::string& window_id, const FMixupTrace& t,
                                  const LowFreqMask& m, bool header) {
  if (header) os << "window_id,row,col,freq_u,freq_v,in_mask,amplitude_before,amplitude_after,imag_residual\n";
  const auto k = t.amplitude_before.rows(), l = t.amplitude_before.cols();
  os.precision(17);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < l; ++j)
      os << window_id << ',' << i << ',' << j << ',' << (i - k / 2) << ',' << (j - l / 2) << ','
         << int(m.mask(i, j)) << ',' << t.amplitude_before(i, j) << ',' << t.amplitude_after(i, j) << ','
         << t.imag_energy << '\n';
}

}  // namespace cdimpute

#endif  // CDIMPUTE_FMIXUP_HPP
