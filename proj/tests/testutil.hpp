// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tdsep/audio.hpp"
#include "tdsep/roomsim.hpp"
#include "tdsep/stft.hpp"
#include "tdsep/synth.hpp"

namespace tdsep::testutil {

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() /
                        "tdsep_test_XXXXXX").string();
    char* made = mkdtemp(tmpl.data());
    if (made == nullptr) throw std::runtime_error("mkdtemp failed");
    path = made;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

inline std::vector<double> random_signal(uint64_t seed, int64_t n,
                                         double amplitude = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-amplitude, amplitude);
  std::vector<double> x(n);
  for (double& v : x) v = dist(rng);
  return x;
}

inline MultichannelAudio mono(const std::vector<double>& x, double rate) {
  MultichannelAudio a(1, static_cast<int64_t>(x.size()), rate);
  std::copy(x.begin(), x.end(), a.channel(0));
  return a;
}

// Direct evaluation of the analysis transform, one windowed DFT sum per
// frame/bin. Quadratic; only for small oracle comparisons.
inline ComplexSpectrogram naive_stft(const std::vector<double>& x,
                                     const AnalysisSpec& spec) {
  const int frames = spec.num_frames(static_cast<int64_t>(x.size()));
  const int bins = spec.num_bins();
  const std::vector<double> w = make_window(spec.window, spec.window_length);
  ComplexSpectrogram out(std::max(frames, 0), bins);
  for (int f = 0; f < frames; ++f) {
    for (int k = 0; k < bins; ++k) {
      std::complex<double> acc(0.0, 0.0);
      for (int m = 0; m < spec.window_length; ++m) {
        const double v = x[static_cast<size_t>(f) * spec.hop + m] * w[m];
        const double phase = -2.0 * M_PI * m * k / spec.fft_size;
        acc += v * std::complex<double>(std::cos(phase), std::sin(phase));
      }
      out.re[out.idx(f, k)] = acc.real();
      out.im[out.idx(f, k)] = acc.imag();
    }
  }
  return out;
}

// Reverse-cumulative (Schroeder) energy decay of an impulse response,
// returning the time in seconds at which the fitted decay line crosses
// -60 dB. The slope is fitted on the -5..-25 dB span, the standard
// practice for finite impulse responses that never physically reach -60.
inline double schroeder_t60(const double* h, int64_t n, double sample_rate) {
  std::vector<double> tail_energy(n);
  double acc = 0.0;
  for (int64_t t = n - 1; t >= 0; --t) {
    acc += h[t] * h[t];
    tail_energy[t] = acc;
  }
  if (acc <= 0.0) return 0.0;
  std::vector<double> db(n);
  for (int64_t t = 0; t < n; ++t) {
    db[t] = 10.0 * std::log10(std::max(tail_energy[t] / acc, 1e-30));
  }
  // Least-squares line through the samples between -5 and -25 dB.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int64_t count = 0;
  for (int64_t t = 0; t < n; ++t) {
    if (db[t] <= -5.0 && db[t] >= -25.0) {
      const double ts = static_cast<double>(t) / sample_rate;
      sx += ts;
      sy += db[t];
      sxx += ts * ts;
      sxy += ts * db[t];
      ++count;
    }
  }
  if (count < 2) return 0.0;
  const double denom = count * sxx - sx * sx;
  if (std::abs(denom) < 1e-30) return 0.0;
  const double slope = (count * sxy - sx * sy) / denom;  // dB per second
  if (slope >= 0.0) return 0.0;
  return -60.0 / slope;
}

// Convenience: a small reverberant two-speaker scene with synthetic
// sources, reused by several suites.
struct RenderedScene {
  SceneSpec spec;
  SpatializeResult audio;
};

inline RenderedScene render_test_scene(uint64_t seed, double seconds,
                                       double sample_rate,
                                       double t60_lo = 0.1,
                                       double t60_hi = 0.3) {
  SceneRanges ranges;
  ranges.t60 = {t60_lo, t60_hi};
  RenderedScene scene;
  scene.spec = sample_scene(seed, ranges);
  const int64_t n = static_cast<int64_t>(std::llround(seconds * sample_rate));
  std::vector<MultichannelAudio> sources;
  for (size_t s = 0; s < scene.spec.room.source_positions.size(); ++s) {
    sources.push_back(mono(
        make_synthetic_voice(detail::mix_seed(seed, 1000 + s), n, sample_rate),
        sample_rate));
  }
  scene.audio = spatialize_mix(scene.spec, sources);
  return scene;
}

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double max_abs_diff(const std::vector<double>& a,
                           const std::vector<double>& b) {
  double m = 0.0;
  const size_t n = std::min(a.size(), b.size());
  for (size_t i = 0; i < n; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace tdsep::testutil
