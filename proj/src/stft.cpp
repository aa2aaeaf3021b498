// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/stft.hpp"

#include <algorithm>
#include <cmath>

namespace tdsep {
namespace detail {

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_radix2(std::vector<double>& re, std::vector<double>& im,
                bool inverse) {
  const int n = static_cast<int>(re.size());
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / len;
    const double wr = std::cos(ang);
    const double wi = std::sin(ang);
    for (int i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (int k = 0; k < len / 2; ++k) {
        const int a = i + k;
        const int b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
  if (inverse) {
    for (int i = 0; i < n; ++i) {
      re[i] /= n;
      im[i] /= n;
    }
  }
}

void dft_direct(std::vector<double>& re, std::vector<double>& im,
                bool inverse) {
  const int n = static_cast<int>(re.size());
  std::vector<double> out_re(n, 0.0), out_im(n, 0.0);
  const double sign = inverse ? 2.0 : -2.0;
  for (int k = 0; k < n; ++k) {
    double acc_re = 0.0, acc_im = 0.0;
    for (int t = 0; t < n; ++t) {
      const double ang = sign * M_PI * static_cast<double>(k) * t / n;
      const double cr = std::cos(ang);
      const double ci = std::sin(ang);
      acc_re += re[t] * cr - im[t] * ci;
      acc_im += re[t] * ci + im[t] * cr;
    }
    out_re[k] = acc_re;
    out_im[k] = acc_im;
  }
  if (inverse) {
    for (int k = 0; k < n; ++k) {
      out_re[k] /= n;
      out_im[k] /= n;
    }
  }
  re.swap(out_re);
  im.swap(out_im);
}

}  // namespace

void fft(std::vector<double>& re, std::vector<double>& im, bool inverse) {
  if (re.size() != im.size()) throw DataError("fft: mismatched buffers");
  if (re.empty()) return;
  if (is_pow2(static_cast<int>(re.size()))) {
    fft_radix2(re, im, inverse);
  } else {
    dft_direct(re, im, inverse);
  }
}

}  // namespace detail

void AnalysisSpec::validate() const {
  if (window_length <= 0) throw ConfigError("window_length must be positive");
  if (hop <= 0) throw ConfigError("hop must be positive");
  if (fft_size < window_length) {
    throw ConfigError("fft_size must be >= window_length");
  }
}

int AnalysisSpec::num_frames(int64_t num_samples) const {
  if (num_samples < window_length) return 0;
  return static_cast<int>((num_samples - window_length) / hop) + 1;
}

ComplexSpectrogram stft(const double* signal, int64_t num_samples,
                        const AnalysisSpec& spec) {
  spec.validate();
  const int frames = spec.num_frames(num_samples);
  const int bins = spec.num_bins();
  ComplexSpectrogram out(frames, bins);
  const std::vector<double> window = make_window(spec.window, spec.window_length);
  std::vector<double> re(spec.fft_size), im(spec.fft_size);
  for (int f = 0; f < frames; ++f) {
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    const double* frame = signal + static_cast<int64_t>(f) * spec.hop;
    for (int n = 0; n < spec.window_length; ++n) {
      re[n] = frame[n] * window[n];
    }
    detail::fft(re, im, /*inverse=*/false);
    for (int k = 0; k < bins; ++k) {
      out.re[out.idx(f, k)] = re[k];
      out.im[out.idx(f, k)] = im[k];
    }
  }
  return out;
}

ComplexSpectrogram stft(const MultichannelAudio& audio, int channel,
                        const AnalysisSpec& spec) {
  if (channel < 0 || channel >= audio.num_channels) {
    throw DataError("stft: channel out of range");
  }
  return stft(audio.channel(channel), audio.num_samples, spec);
}

std::vector<double> istft(const ComplexSpectrogram& spec,
                          const AnalysisSpec& analysis) {
  analysis.validate();
  if (spec.num_bins != analysis.num_bins()) {
    throw DataError("istft: bin count does not match analysis spec");
  }
  const int T = analysis.window_length;
  const int hop = analysis.hop;
  const int fft_size = analysis.fft_size;
  const std::vector<double> window = make_window(analysis.window, T);

  // The squared window must overlap-add to a nearly constant interior;
  // otherwise some samples are unrecoverable (e.g. hann with hop == length).
  double interior_min = 0.0;
  {
    double wmax = 0.0, wmin = 0.0;
    const int probe_frames = 8;
    std::vector<double> den(static_cast<size_t>(probe_frames - 1) * hop + T, 0.0);
    for (int f = 0; f < probe_frames; ++f) {
      for (int n = 0; n < T; ++n) {
        den[static_cast<size_t>(f) * hop + n] += window[n] * window[n];
      }
    }
    wmin = wmax = den[T];
    for (int64_t t = T; t + T <= static_cast<int64_t>(den.size()); ++t) {
      wmin = std::min(wmin, den[t]);
      wmax = std::max(wmax, den[t]);
    }
    if (!(wmin >= 1e-3 * wmax) || wmax <= 0.0) {
      throw ConfigError("istft: window/hop pair does not cover the signal");
    }
    interior_min = wmin;
  }

  if (spec.num_frames == 0) return {};
  const int64_t out_len = static_cast<int64_t>(spec.num_frames - 1) * hop + T;
  std::vector<double> out(out_len, 0.0);
  std::vector<double> den(out_len, 0.0);
  std::vector<double> re(fft_size), im(fft_size);
  for (int f = 0; f < spec.num_frames; ++f) {
    for (int k = 0; k < spec.num_bins; ++k) {
      re[k] = spec.re[spec.idx(f, k)];
      im[k] = spec.im[spec.idx(f, k)];
    }
    for (int k = spec.num_bins; k < fft_size; ++k) {
      re[k] = spec.re[spec.idx(f, fft_size - k)];
      im[k] = -spec.im[spec.idx(f, fft_size - k)];
    }
    detail::fft(re, im, /*inverse=*/true);
    double* frame_out = out.data() + static_cast<int64_t>(f) * hop;
    double* frame_den = den.data() + static_cast<int64_t>(f) * hop;
    for (int n = 0; n < T; ++n) {
      frame_out[n] += re[n] * window[n];
      frame_den[n] += window[n] * window[n];
    }
  }
  // Edge samples are covered by fewer frames than the interior. Dividing
  // by their raw (near-zero) coverage would amplify any spectral edit
  // unboundedly, so the normalizer never drops below the interior coverage
  // minimum: interior samples divide exactly, edges attenuate smoothly.
  for (int64_t t = 0; t < out_len; ++t) {
    out[t] = den[t] > 0.0 ? out[t] / std::max(den[t], interior_min) : 0.0;
  }
  return out;
}

FeatureMap log_power_spectrum(const ComplexSpectrogram& spec, int hop,
                              double floor_db) {
  FeatureMap out(spec.num_frames, spec.num_bins, static_cast<double>(hop));
  const double floor_power = std::pow(10.0, floor_db / 10.0);
  for (size_t i = 0; i < spec.re.size(); ++i) {
    const double p = spec.re[i] * spec.re[i] + spec.im[i] * spec.im[i];
    out.values[i] = 10.0 * std::log10(std::max(p, floor_power));
  }
  return out;
}

FeatureMap upsample_frames(const FeatureMap& features, int target_frames) {
  if (target_frames <= 0) throw DataError("upsample_frames: bad target");
  if (features.num_frames <= 0) {
    throw DataError("upsample_frames: empty input");
  }
  if (target_frames < features.num_frames) {
    throw DataError("upsample_frames: target smaller than source");
  }
  const int src = features.num_frames;
  if (target_frames == src) return features;
  const double hop =
      target_frames > 1
          ? features.frame_hop * static_cast<double>(src - 1) / (target_frames - 1)
          : features.frame_hop;
  FeatureMap out(target_frames, features.dim, hop);
  for (int j = 0; j < target_frames; ++j) {
    const double pos =
        target_frames > 1
            ? static_cast<double>(j) * (src - 1) / (target_frames - 1)
            : 0.0;
    const int i0 = std::min(static_cast<int>(pos), src - 1);
    const int i1 = std::min(i0 + 1, src - 1);
    const double frac = pos - i0;
    for (int d = 0; d < features.dim; ++d) {
      out.values[out.idx(j, d)] =
          (1.0 - frac) * features.values[features.idx(i0, d)] +
          frac * features.values[features.idx(i1, d)];
    }
  }
  return out;
}

}  // namespace tdsep
