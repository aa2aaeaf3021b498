// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tdsep/audio.hpp"
#include "tdsep/stft.hpp"

namespace tdsep {

enum class KernelMode { kFixed, kUnconstrained, kWindowConstrained };

KernelMode kernel_mode_from_string(const std::string& name);
std::string to_string(KernelMode mode);

// Bank of analysis kernels: k_re[k * kernel_length + n] = w[n] cos(2*pi*n*k/L),
// k_im likewise with sin, at initialization. In window-constrained mode that
// structure is an invariant and `window` holds the learnable taps.
struct KernelBank {
  int num_bins = 0;
  int kernel_length = 0;
  int stride = 0;
  KernelMode mode = KernelMode::kFixed;
  std::vector<double> k_re;   // [num_bins x kernel_length]
  std::vector<double> k_im;   // [num_bins x kernel_length]
  std::vector<double> window; // [kernel_length], window-constrained mode only

  size_t idx(int k, int n) const {
    return static_cast<size_t>(k) * kernel_length + n;
  }
  // Re-derives k_re/k_im from `window`. Deterministic, so repeated calls are
  // bit-identical; used after every window update.
  void rebuild_from_window();
};

// 1-based microphone pair, matching array channel numbering.
struct MicPair {
  int first = 0;
  int second = 0;
};

std::vector<MicPair> parse_mic_pairs(const std::string& text);
std::string format_mic_pairs(const std::vector<MicPair>& pairs);

struct KernelGradient {
  std::vector<double> g_re;     // unconstrained: [num_bins x kernel_length]
  std::vector<double> g_im;     // unconstrained: [num_bins x kernel_length]
  std::vector<double> g_window; // window-constrained: [kernel_length]
};

KernelBank make_stft_kernels(int kernel_length, int stride,
                             WindowType window_type, KernelMode mode);

// Frame-wise correlation with the bank: re[f][k] = sum_n x[f*stride+n] *
// k_re[k][n]. With STFT-initialized kernels, (re, -im) is the
// modulation-free short-time transform, so magnitudes match stft().
std::pair<FeatureMap, FeatureMap> conv_analysis(const double* signal,
                                                int64_t num_samples,
                                                const KernelBank& bank);
std::pair<FeatureMap, FeatureMap> conv_analysis(const MultichannelAudio& audio,
                                                int channel,
                                                const KernelBank& bank);

// Wraps into (-pi, pi].
double wrap_angle(double radians);

// Per pair u and bin k: wrap(angle(Y_u1) - angle(Y_u2)).
// dim = num_pairs * num_bins, pairs concatenated in input order.
FeatureMap ipd_from_spectra(const std::vector<ComplexSpectrogram>& specs,
                            const std::vector<MicPair>& pairs, double hop);

// Same layout, computed from the kernel bank. Frames with re = im = 0 take
// phase 0.
FeatureMap ipd_from_kernels(const MultichannelAudio& audio,
                            const KernelBank& bank,
                            const std::vector<MicPair>& pairs);

// Elementwise cosine; with include_sin, sines of every column are
// concatenated after all cosine columns.
FeatureMap cos_sin_features(const FeatureMap& ipd, bool include_sin);

// Analytic gradient of cos_sin_features(ipd_from_kernels(...)) w.r.t. the
// bank's learnable parameters. upstream_grad must match the forward output
// shape: dim = num_pairs*num_bins (cos only) or 2*num_pairs*num_bins.
KernelGradient kernel_backward(const MultichannelAudio& audio,
                               const KernelBank& bank,
                               const std::vector<MicPair>& pairs,
                               const FeatureMap& upstream_grad);

// One CSV per call: metadata header lines (epoch, mode, stride), then one
// row per bin with k_re followed by k_im taps, then the window row if the
// bank has one.
void export_kernels_csv(const std::string& path, const KernelBank& bank,
                        int epoch);

}  // namespace tdsep
