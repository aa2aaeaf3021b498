// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tdsep/errors.hpp"

namespace tdsep {

// Channel-major multichannel buffer: samples[c * num_samples + t].
struct MultichannelAudio {
  int num_channels = 0;
  int64_t num_samples = 0;
  double sample_rate = 0.0;
  std::vector<double> samples;

  MultichannelAudio() = default;
  MultichannelAudio(int channels, int64_t length, double rate)
      : num_channels(channels),
        num_samples(length),
        sample_rate(rate),
        samples(static_cast<size_t>(channels) * static_cast<size_t>(length),
                0.0) {}

  double* channel(int c) {
    return samples.data() + static_cast<size_t>(c) * num_samples;
  }
  const double* channel(int c) const {
    return samples.data() + static_cast<size_t>(c) * num_samples;
  }
  double& at(int c, int64_t t) {
    return samples[static_cast<size_t>(c) * num_samples + t];
  }
  double at(int c, int64_t t) const {
    return samples[static_cast<size_t>(c) * num_samples + t];
  }
};

// One-sided complex spectrogram, frame-major: re[f * num_bins + k].
struct ComplexSpectrogram {
  int num_frames = 0;
  int num_bins = 0;
  std::vector<double> re;
  std::vector<double> im;

  ComplexSpectrogram() = default;
  ComplexSpectrogram(int frames, int bins)
      : num_frames(frames),
        num_bins(bins),
        re(static_cast<size_t>(frames) * bins, 0.0),
        im(static_cast<size_t>(frames) * bins, 0.0) {}

  size_t idx(int f, int k) const { return static_cast<size_t>(f) * num_bins + k; }
};

// Frame-major feature matrix: values[f * dim + d]. frame_hop is in samples
// and may be fractional after frame-rate conversion.
struct FeatureMap {
  int num_frames = 0;
  int dim = 0;
  double frame_hop = 0.0;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(int frames, int d, double hop)
      : num_frames(frames),
        dim(d),
        frame_hop(hop),
        values(static_cast<size_t>(frames) * d, 0.0) {}

  size_t idx(int f, int d) const { return static_cast<size_t>(f) * dim + d; }
};

enum class WindowType { kHann, kRectangular };

WindowType window_type_from_string(const std::string& name);
std::string to_string(WindowType type);

// Periodic window of the given length (suitable for overlap-add analysis).
std::vector<double> make_window(WindowType type, int length);

}  // namespace tdsep
