// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/kernelfeat.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tdsep {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// phase of the analytic pair (re, im) produced by conv_analysis. The bank's
// +sin kernels correlate to the conjugate spectrum, so the spectrogram-
// compatible angle is atan2(-im, re); degenerate frames take 0.
double conv_phase(double re, double im) {
  if (re == 0.0 && im == 0.0) return 0.0;
  return std::atan2(-im, re);
}

int frames_for(int64_t num_samples, const KernelBank& bank) {
  if (num_samples < bank.kernel_length) {
    throw DataError("conv_analysis: signal shorter than kernel");
  }
  return static_cast<int>((num_samples - bank.kernel_length) / bank.stride) + 1;
}

// Gathers frames into a [frames x kernel_length] matrix.
RowMat frame_matrix(const double* signal, int frames, const KernelBank& bank) {
  RowMat x(frames, bank.kernel_length);
  for (int f = 0; f < frames; ++f) {
    const double* src = signal + static_cast<int64_t>(f) * bank.stride;
    for (int n = 0; n < bank.kernel_length; ++n) x(f, n) = src[n];
  }
  return x;
}

}  // namespace

KernelMode kernel_mode_from_string(const std::string& name) {
  if (name == "fixed") return KernelMode::kFixed;
  if (name == "unconstrained") return KernelMode::kUnconstrained;
  if (name == "window_constrained") return KernelMode::kWindowConstrained;
  throw ConfigError("unknown kernel mode: " + name);
}

std::string to_string(KernelMode mode) {
  switch (mode) {
    case KernelMode::kFixed:
      return "fixed";
    case KernelMode::kUnconstrained:
      return "unconstrained";
    case KernelMode::kWindowConstrained:
      return "window_constrained";
  }
  return "?";
}

void KernelBank::rebuild_from_window() {
  if (mode != KernelMode::kWindowConstrained) {
    throw ConfigError("rebuild_from_window requires a window-constrained bank");
  }
  if (static_cast<int>(window.size()) != kernel_length) {
    throw DataError("window length does not match kernel length");
  }
  k_re.assign(static_cast<size_t>(num_bins) * kernel_length, 0.0);
  k_im.assign(static_cast<size_t>(num_bins) * kernel_length, 0.0);
  for (int k = 0; k < num_bins; ++k) {
    for (int n = 0; n < kernel_length; ++n) {
      const double ang = 2.0 * M_PI * static_cast<double>(n) * k / kernel_length;
      k_re[idx(k, n)] = window[n] * std::cos(ang);
      k_im[idx(k, n)] = window[n] * std::sin(ang);
    }
  }
}

std::vector<MicPair> parse_mic_pairs(const std::string& text) {
  std::vector<MicPair> pairs;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw ConfigError("empty mic-pair entry in: " + text);
    const size_t dash = item.find('-');
    if (dash == std::string::npos) {
      throw ConfigError("bad mic pair (want A-B): " + item);
    }
    MicPair p;
    try {
      p.first = std::stoi(item.substr(0, dash));
      p.second = std::stoi(item.substr(dash + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad mic pair (want A-B): " + item);
    }
    if (p.first == p.second || p.first < 1 || p.second < 1) {
      throw ConfigError("bad mic pair indices: " + item);
    }
    pairs.push_back(p);
  }
  if (pairs.empty()) throw ConfigError("no mic pairs given");
  return pairs;
}

std::string format_mic_pairs(const std::vector<MicPair>& pairs) {
  std::string out;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(pairs[i].first) + "-" + std::to_string(pairs[i].second);
  }
  return out;
}

KernelBank make_stft_kernels(int kernel_length, int stride,
                             WindowType window_type, KernelMode mode) {
  if (kernel_length <= 0 || kernel_length % 2 != 0) {
    throw ConfigError("kernel_length must be even and positive");
  }
  if (stride < 1) throw ConfigError("stride must be >= 1");
  KernelBank bank;
  bank.kernel_length = kernel_length;
  bank.stride = stride;
  bank.num_bins = kernel_length / 2 + 1;
  bank.mode = mode;
  bank.window = make_window(window_type, kernel_length);
  bank.k_re.resize(static_cast<size_t>(bank.num_bins) * kernel_length);
  bank.k_im.resize(static_cast<size_t>(bank.num_bins) * kernel_length);
  for (int k = 0; k < bank.num_bins; ++k) {
    for (int n = 0; n < kernel_length; ++n) {
      const double ang = 2.0 * M_PI * static_cast<double>(n) * k / kernel_length;
      bank.k_re[bank.idx(k, n)] = bank.window[n] * std::cos(ang);
      bank.k_im[bank.idx(k, n)] = bank.window[n] * std::sin(ang);
    }
  }
  if (mode != KernelMode::kWindowConstrained) bank.window.clear();
  return bank;
}

std::pair<FeatureMap, FeatureMap> conv_analysis(const double* signal,
                                                int64_t num_samples,
                                                const KernelBank& bank) {
  const int frames = frames_for(num_samples, bank);
  FeatureMap re(frames, bank.num_bins, static_cast<double>(bank.stride));
  FeatureMap im(frames, bank.num_bins, static_cast<double>(bank.stride));
  const RowMat x = frame_matrix(signal, frames, bank);
  ConstMap kre(bank.k_re.data(), bank.num_bins, bank.kernel_length);
  ConstMap kim(bank.k_im.data(), bank.num_bins, bank.kernel_length);
  MutMap(re.values.data(), frames, bank.num_bins).noalias() =
      x * kre.transpose();
  MutMap(im.values.data(), frames, bank.num_bins).noalias() =
      x * kim.transpose();
  return {std::move(re), std::move(im)};
}

std::pair<FeatureMap, FeatureMap> conv_analysis(const MultichannelAudio& audio,
                                                int channel,
                                                const KernelBank& bank) {
  if (channel < 0 || channel >= audio.num_channels) {
    throw DataError("conv_analysis: channel out of range");
  }
  return conv_analysis(audio.channel(channel), audio.num_samples, bank);
}

double wrap_angle(double radians) {
  double w = std::remainder(radians, 2.0 * M_PI);
  if (w <= -M_PI) w += 2.0 * M_PI;
  return w;
}

FeatureMap ipd_from_spectra(const std::vector<ComplexSpectrogram>& specs,
                            const std::vector<MicPair>& pairs, double hop) {
  if (specs.empty()) throw DataError("ipd_from_spectra: no spectra");
  const int frames = specs[0].num_frames;
  const int bins = specs[0].num_bins;
  for (const auto& s : specs) {
    if (s.num_frames != frames || s.num_bins != bins) {
      throw DataError("ipd_from_spectra: mismatched spectrogram shapes");
    }
  }
  const int num_pairs = static_cast<int>(pairs.size());
  FeatureMap out(frames, num_pairs * bins, hop);
  for (int p = 0; p < num_pairs; ++p) {
    const int a = pairs[p].first - 1;
    const int b = pairs[p].second - 1;
    if (a < 0 || b < 0 || a >= static_cast<int>(specs.size()) ||
        b >= static_cast<int>(specs.size())) {
      throw DataError("ipd_from_spectra: pair index out of range");
    }
    const ComplexSpectrogram& sa = specs[a];
    const ComplexSpectrogram& sb = specs[b];
    for (int f = 0; f < frames; ++f) {
      for (int k = 0; k < bins; ++k) {
        const double pa = std::atan2(sa.im[sa.idx(f, k)], sa.re[sa.idx(f, k)]);
        const double pb = std::atan2(sb.im[sb.idx(f, k)], sb.re[sb.idx(f, k)]);
        out.values[out.idx(f, p * bins + k)] = wrap_angle(pa - pb);
      }
    }
  }
  return out;
}

FeatureMap ipd_from_kernels(const MultichannelAudio& audio,
                            const KernelBank& bank,
                            const std::vector<MicPair>& pairs) {
  std::vector<int> needed(audio.num_channels, 0);
  for (const MicPair& p : pairs) {
    if (p.first < 1 || p.second < 1 || p.first > audio.num_channels ||
        p.second > audio.num_channels) {
      throw DataError("ipd_from_kernels: pair index out of range");
    }
    needed[p.first - 1] = needed[p.second - 1] = 1;
  }
  std::vector<FeatureMap> phase(audio.num_channels);
  int frames = 0;
  for (int c = 0; c < audio.num_channels; ++c) {
    if (!needed[c]) continue;
    auto [re, im] = conv_analysis(audio, c, bank);
    frames = re.num_frames;
    FeatureMap ph(re.num_frames, re.dim, re.frame_hop);
    for (size_t i = 0; i < ph.values.size(); ++i) {
      ph.values[i] = conv_phase(re.values[i], im.values[i]);
    }
    phase[c] = std::move(ph);
  }
  const int bins = bank.num_bins;
  const int num_pairs = static_cast<int>(pairs.size());
  FeatureMap out(frames, num_pairs * bins, static_cast<double>(bank.stride));
  for (int p = 0; p < num_pairs; ++p) {
    const FeatureMap& pa = phase[pairs[p].first - 1];
    const FeatureMap& pb = phase[pairs[p].second - 1];
    for (int f = 0; f < frames; ++f) {
      for (int k = 0; k < bins; ++k) {
        out.values[out.idx(f, p * bins + k)] =
            wrap_angle(pa.values[pa.idx(f, k)] - pb.values[pb.idx(f, k)]);
      }
    }
  }
  return out;
}

FeatureMap cos_sin_features(const FeatureMap& ipd, bool include_sin) {
  FeatureMap out(ipd.num_frames, include_sin ? 2 * ipd.dim : ipd.dim,
                 ipd.frame_hop);
  for (int f = 0; f < ipd.num_frames; ++f) {
    for (int d = 0; d < ipd.dim; ++d) {
      const double v = ipd.values[ipd.idx(f, d)];
      out.values[out.idx(f, d)] = std::cos(v);
      if (include_sin) out.values[out.idx(f, ipd.dim + d)] = std::sin(v);
    }
  }
  return out;
}

KernelGradient kernel_backward(const MultichannelAudio& audio,
                               const KernelBank& bank,
                               const std::vector<MicPair>& pairs,
                               const FeatureMap& upstream_grad) {
  if (bank.mode == KernelMode::kFixed) {
    throw ConfigError("kernel_backward: bank is not trainable");
  }
  const int bins = bank.num_bins;
  const int num_pairs = static_cast<int>(pairs.size());
  const bool has_sin = upstream_grad.dim == 2 * num_pairs * bins;
  if (!has_sin && upstream_grad.dim != num_pairs * bins) {
    throw DataError("kernel_backward: upstream gradient dim mismatch");
  }

  // Forward recomputation: conv outputs and phases per needed channel.
  std::vector<int> needed(audio.num_channels, 0);
  for (const MicPair& p : pairs) {
    if (p.first < 1 || p.second < 1 || p.first > audio.num_channels ||
        p.second > audio.num_channels) {
      throw DataError("kernel_backward: pair index out of range");
    }
    needed[p.first - 1] = needed[p.second - 1] = 1;
  }
  std::vector<FeatureMap> re(audio.num_channels), im(audio.num_channels);
  int frames = 0;
  for (int c = 0; c < audio.num_channels; ++c) {
    if (!needed[c]) continue;
    auto ri = conv_analysis(audio, c, bank);
    frames = ri.first.num_frames;
    re[c] = std::move(ri.first);
    im[c] = std::move(ri.second);
  }
  if (upstream_grad.num_frames != frames) {
    throw DataError("kernel_backward: upstream gradient frame mismatch");
  }

  // d(loss)/d(phase) accumulated per channel.
  std::vector<std::vector<double>> dphase(audio.num_channels);
  for (int c = 0; c < audio.num_channels; ++c) {
    if (needed[c]) dphase[c].assign(static_cast<size_t>(frames) * bins, 0.0);
  }
  for (int p = 0; p < num_pairs; ++p) {
    const int a = pairs[p].first - 1;
    const int b = pairs[p].second - 1;
    for (int f = 0; f < frames; ++f) {
      for (int k = 0; k < bins; ++k) {
        const size_t ci = static_cast<size_t>(f) * bins + k;
        const double pa = conv_phase(re[a].values[ci], im[a].values[ci]);
        const double pb = conv_phase(re[b].values[ci], im[b].values[ci]);
        const double ipd = wrap_angle(pa - pb);
        const double gc =
            upstream_grad.values[upstream_grad.idx(f, p * bins + k)];
        double d = -gc * std::sin(ipd);
        if (has_sin) {
          const double gs = upstream_grad.values[upstream_grad.idx(
              f, (num_pairs + p) * bins + k)];
          d += gs * std::cos(ipd);
        }
        dphase[a][ci] += d;
        dphase[b][ci] -= d;
      }
    }
  }

  // Quotient rule through phase(re, im) = atan2(-im, re):
  //   d(phase)/d(re) = im / (re^2 + im^2)
  //   d(phase)/d(im) = -re / (re^2 + im^2)
  // then correlation with the input frames gives the kernel gradient.
  std::vector<double> g_re(static_cast<size_t>(bins) * bank.kernel_length, 0.0);
  std::vector<double> g_im(g_re.size(), 0.0);
  MutMap gre(g_re.data(), bins, bank.kernel_length);
  MutMap gim(g_im.data(), bins, bank.kernel_length);
  std::vector<double> dre(static_cast<size_t>(frames) * bins);
  std::vector<double> dim(dre.size());
  for (int c = 0; c < audio.num_channels; ++c) {
    if (!needed[c]) continue;
    for (size_t i = 0; i < dre.size(); ++i) {
      const double r = re[c].values[i];
      const double m = im[c].values[i];
      const double m2 = r * r + m * m;
      if (m2 == 0.0 || dphase[c][i] == 0.0) {
        dre[i] = 0.0;
        dim[i] = 0.0;
      } else {
        dre[i] = dphase[c][i] * (m / m2);
        dim[i] = dphase[c][i] * (-r / m2);
      }
    }
    const RowMat x = frame_matrix(audio.channel(c), frames, bank);
    gre.noalias() += ConstMap(dre.data(), frames, bins).transpose() * x;
    gim.noalias() += ConstMap(dim.data(), frames, bins).transpose() * x;
  }

  KernelGradient grad;
  if (bank.mode == KernelMode::kUnconstrained) {
    grad.g_re = std::move(g_re);
    grad.g_im = std::move(g_im);
  } else {
    grad.g_window.assign(bank.kernel_length, 0.0);
    for (int k = 0; k < bins; ++k) {
      for (int n = 0; n < bank.kernel_length; ++n) {
        const double ang =
            2.0 * M_PI * static_cast<double>(n) * k / bank.kernel_length;
        grad.g_window[n] += g_re[bank.idx(k, n)] * std::cos(ang) +
                            g_im[bank.idx(k, n)] * std::sin(ang);
      }
    }
  }
  return grad;
}

void export_kernels_csv(const std::string& path, const KernelBank& bank,
                        int epoch) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot create kernel csv: " + path);
  out << "# epoch," << epoch << "\n";
  out << "# mode," << to_string(bank.mode) << "\n";
  out << "# stride," << bank.stride << "\n";
  auto row = [&out, &bank](const char* name, int k, const double* taps) {
    out << name << "," << k;
    char buf[32];
    for (int n = 0; n < bank.kernel_length; ++n) {
      std::snprintf(buf, sizeof(buf), ",%.17g", taps[n]);
      out << buf;
    }
    out << "\n";
  };
  for (int k = 0; k < bank.num_bins; ++k) {
    row("re", k, bank.k_re.data() + bank.idx(k, 0));
  }
  for (int k = 0; k < bank.num_bins; ++k) {
    row("im", k, bank.k_im.data() + bank.idx(k, 0));
  }
  if (!bank.window.empty()) {
    row("window", 0, bank.window.data());
  }
  if (!out) throw DataError("failed writing kernel csv: " + path);
}

}  // namespace tdsep
