// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <vector>

#include "tdsep/audio.hpp"

namespace tdsep {

struct AnalysisSpec {
  int window_length = 0;
  int hop = 0;
  int fft_size = 0;
  WindowType window = WindowType::kHann;

  void validate() const;  // throws ConfigError
  int num_bins() const { return fft_size / 2 + 1; }
  int num_frames(int64_t num_samples) const;
};

// Forward transform of one channel. Frame f covers samples
// [f*hop, f*hop + window_length); signals shorter than one window produce
// zero frames. One-sided bins 0..fft_size/2.
ComplexSpectrogram stft(const double* signal, int64_t num_samples,
                        const AnalysisSpec& spec);
ComplexSpectrogram stft(const MultichannelAudio& audio, int channel,
                        const AnalysisSpec& spec);

// Weighted overlap-add inverse with the analysis window reused for
// synthesis. Requires the window/hop pair to cover the interior (checked;
// throws ConfigError otherwise). Output has (num_frames-1)*hop +
// window_length samples; interior samples reconstruct exactly, edges are
// normalized by the partial window sum where it is non-negligible.
std::vector<double> istft(const ComplexSpectrogram& spec,
                          const AnalysisSpec& analysis);

// 10*log10(|Y|^2), floored at floor_db (power floor, default -120 dB).
FeatureMap log_power_spectrum(const ComplexSpectrogram& spec, int hop,
                              double floor_db = -120.0);

// Linear interpolation along the frame axis onto target_frames equally
// spaced points with both endpoints preserved. target == source copies
// values exactly.
FeatureMap upsample_frames(const FeatureMap& features, int target_frames);

namespace detail {

// In-place complex FFT / inverse FFT. Radix-2 when n is a power of two,
// direct transform otherwise. Inverse includes the 1/n factor.
void fft(std::vector<double>& re, std::vector<double>& im, bool inverse);

}  // namespace detail

}  // namespace tdsep
