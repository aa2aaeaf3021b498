// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tdsep/errors.hpp"

namespace tdsep {

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

std::vector<double> make_synthetic_voice(uint64_t seed, int64_t num_samples,
                                         double sample_rate) {
  if (num_samples < 1 || sample_rate <= 0.0) {
    throw ConfigError("synthetic voice: bad length or rate");
  }
  std::mt19937_64 rng(seed);

  // Per-voice character.
  const double f0_base = uniform(rng, 95.0, 230.0);
  const double f0_span = uniform(rng, 0.12, 0.30);  // relative drift depth
  const double drift_hz = uniform(rng, 0.4, 1.3);   // slow contour
  const double vibrato_hz = uniform(rng, 4.5, 6.5);
  const double vibrato_depth = uniform(rng, 0.005, 0.02);
  const double formant1 = uniform(rng, 320.0, 850.0);
  const double formant2 = uniform(rng, 950.0, 2300.0);
  const double bw1 = uniform(rng, 120.0, 260.0);
  const double bw2 = uniform(rng, 220.0, 420.0);
  const double drift_phase = uniform(rng, 0.0, 2.0 * kPi);
  const double vib_phase = uniform(rng, 0.0, 2.0 * kPi);

  const double f_max = std::min(3400.0, 0.45 * sample_rate);
  const int max_harmonics =
      std::max(1, static_cast<int>(f_max / (f0_base * (1.0 - f0_span))));

  // Harmonic weights from the two spectral emphases (fixed per voice).
  std::vector<double> weight(static_cast<size_t>(max_harmonics) + 1, 0.0);
  for (int h = 1; h <= max_harmonics; ++h) {
    const double f = h * f0_base;
    const double g1 = std::exp(-0.5 * std::pow((f - formant1) / bw1, 2.0));
    const double g2 = std::exp(-0.5 * std::pow((f - formant2) / bw2, 2.0));
    weight[h] = (0.25 + g1 + 0.7 * g2) / h;
  }

  // Syllabic envelope: alternating voiced bursts and short gaps.
  std::vector<double> envelope(static_cast<size_t>(num_samples), 0.0);
  int64_t t = 0;
  while (t < num_samples) {
    const int64_t voiced =
        static_cast<int64_t>(uniform(rng, 0.12, 0.35) * sample_rate);
    const int64_t gap =
        static_cast<int64_t>(uniform(rng, 0.03, 0.12) * sample_rate);
    const int64_t end = std::min(num_samples, t + voiced);
    const double peak = uniform(rng, 0.6, 1.0);
    for (int64_t i = t; i < end; ++i) {
      const double u =
          static_cast<double>(i - t) / static_cast<double>(std::max<int64_t>(
                                           1, voiced - 1));
      envelope[i] = peak * 0.5 * (1.0 - std::cos(2.0 * kPi * u));
    }
    t = end + gap;
  }
  // Guarantee nonzero energy even for very short buffers.
  if (*std::max_element(envelope.begin(), envelope.end()) <= 0.0) {
    for (int64_t i = 0; i < num_samples; ++i) {
      envelope[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * (i + 0.5) / num_samples));
    }
  }

  std::vector<double> out(static_cast<size_t>(num_samples), 0.0);
  std::vector<double> phase(static_cast<size_t>(max_harmonics) + 1);
  for (int h = 1; h <= max_harmonics; ++h) phase[h] = uniform(rng, 0.0, 2.0 * kPi);

  const double two_pi_over_fs = 2.0 * kPi / sample_rate;
  for (int64_t i = 0; i < num_samples; ++i) {
    const double time = static_cast<double>(i) / sample_rate;
    const double contour =
        std::sin(2.0 * kPi * drift_hz * time + drift_phase) * f0_span +
        std::sin(2.0 * kPi * vibrato_hz * time + vib_phase) * vibrato_depth;
    const double f0 = f0_base * (1.0 + contour);
    double s = 0.0;
    for (int h = 1; h <= max_harmonics; ++h) {
      if (h * f0 >= 0.48 * sample_rate) break;
      phase[h] += two_pi_over_fs * h * f0;
      s += weight[h] * std::sin(phase[h]);
    }
    const double hiss = (2.0 * uniform01(rng) - 1.0) * 0.02;
    out[i] = envelope[i] * (s + hiss);
  }

  // Normalize to a fixed RMS so mixing SNRs are meaningful.
  double energy = 0.0;
  for (double v : out) energy += v * v;
  const double rms = std::sqrt(energy / static_cast<double>(num_samples));
  const double gain = rms > 0.0 ? 0.1 / rms : 1.0;
  for (double& v : out) v = std::clamp(v * gain, -0.99, 0.99);
  return out;
}

}  // namespace tdsep
