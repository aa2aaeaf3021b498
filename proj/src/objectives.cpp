// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tdsep {

namespace {

constexpr double kClampDb = 60.0;

struct Projection {
  double target_energy = 0.0;
  double noise_energy = 0.0;
};

Projection project(const double* est, const double* ref, int64_t len) {
  if (len < 2) throw DataError("si_snr: need length >= 2");
  double est_mean = 0.0, ref_mean = 0.0;
  for (int64_t t = 0; t < len; ++t) {
    est_mean += est[t];
    ref_mean += ref[t];
  }
  est_mean /= static_cast<double>(len);
  ref_mean /= static_cast<double>(len);
  double dot = 0.0, ref_energy = 0.0, est_energy = 0.0;
  for (int64_t t = 0; t < len; ++t) {
    const double e = est[t] - est_mean;
    const double r = ref[t] - ref_mean;
    dot += e * r;
    ref_energy += r * r;
    est_energy += e * e;
  }
  if (ref_energy <= 0.0) {
    throw DataError("si_snr: reference has zero energy");
  }
  const double alpha = dot / ref_energy;
  Projection p;
  p.target_energy = alpha * alpha * ref_energy;
  // ||e||^2 = ||est||^2 - alpha^2 ||ref||^2, exact because e is orthogonal
  // to ref; computed directly to avoid cancellation for near-perfect fits.
  double noise = 0.0;
  for (int64_t t = 0; t < len; ++t) {
    const double e = (est[t] - est_mean) - alpha * (ref[t] - ref_mean);
    noise += e * e;
  }
  p.noise_energy = noise;
  return p;
}

}  // namespace

double si_snr(const double* est, const double* ref, int64_t len) {
  const Projection p = project(est, ref, len);
  if (p.target_energy <= 0.0) return -kClampDb;
  if (p.noise_energy <= 0.0) return kClampDb;
  const double db = 10.0 * std::log10(p.target_energy / p.noise_energy);
  return std::clamp(db, -kClampDb, kClampDb);
}

double si_snr(const std::vector<double>& est, const std::vector<double>& ref) {
  if (est.size() != ref.size()) throw DataError("si_snr: length mismatch");
  return si_snr(est.data(), ref.data(), static_cast<int64_t>(est.size()));
}

double si_snr_improvement(const double* est, const double* ref,
                          const double* mixture_ch1, int64_t len) {
  return si_snr(est, ref, len) - si_snr(mixture_ch1, ref, len);
}

PermutationResult pit_wrap(
    const std::function<double(int est_index, int ref_index)>& score,
    int num_speakers, PitMode mode) {
  if (num_speakers < 1) throw ConfigError("pit_wrap: need >= 1 speaker");
  if (num_speakers > 6) {
    throw ConfigError("pit_wrap: more than 6 speakers (factorial blowup)");
  }
  // Pairwise scores memoized; the factorial scan then costs nothing extra.
  std::vector<double> pair_score(
      static_cast<size_t>(num_speakers) * num_speakers);
  for (int e = 0; e < num_speakers; ++e) {
    for (int r = 0; r < num_speakers; ++r) {
      pair_score[static_cast<size_t>(e) * num_speakers + r] = score(e, r);
    }
  }
  std::vector<int> perm(num_speakers);
  std::iota(perm.begin(), perm.end(), 0);
  PermutationResult best;
  bool first = true;
  do {
    double total = 0.0;
    for (int r = 0; r < num_speakers; ++r) {
      total += pair_score[static_cast<size_t>(perm[r]) * num_speakers + r];
    }
    const double aggregate = total / num_speakers;
    const bool better = mode == PitMode::kMaximize ? aggregate > best.aggregate
                                                   : aggregate < best.aggregate;
    if (first || better) {
      first = false;
      best.aggregate = aggregate;
      best.best_permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  best.per_pair_scores.resize(num_speakers);
  for (int r = 0; r < num_speakers; ++r) {
    best.per_pair_scores[r] =
        pair_score[static_cast<size_t>(best.best_permutation[r]) *
                       num_speakers +
                   r];
  }
  return best;
}

PermutationResult pit_si_snr(const std::vector<std::vector<double>>& ests,
                             const std::vector<std::vector<double>>& refs) {
  if (ests.size() != refs.size() || ests.empty()) {
    throw DataError("pit_si_snr: speaker count mismatch");
  }
  const size_t len = refs[0].size();
  for (const auto& v : ests) {
    if (v.size() != len) throw DataError("pit_si_snr: length mismatch");
  }
  for (const auto& v : refs) {
    if (v.size() != len) throw DataError("pit_si_snr: length mismatch");
  }
  return pit_wrap(
      [&](int e, int r) { return si_snr(ests[e], refs[r]); },
      static_cast<int>(ests.size()), PitMode::kMaximize);
}

double psa_loss(const std::vector<FeatureMap>& est_masks,
                const ComplexSpectrogram& mixture_spec,
                const std::vector<ComplexSpectrogram>& source_specs) {
  if (est_masks.size() != source_specs.size() || est_masks.empty()) {
    throw DataError("psa_loss: speaker count mismatch");
  }
  const int frames = mixture_spec.num_frames;
  const int bins = mixture_spec.num_bins;
  double loss = 0.0;
  for (size_t c = 0; c < est_masks.size(); ++c) {
    const FeatureMap& mask = est_masks[c];
    const ComplexSpectrogram& src = source_specs[c];
    if (mask.num_frames != frames || mask.dim != bins ||
        src.num_frames != frames || src.num_bins != bins) {
      throw DataError("psa_loss: shape mismatch");
    }
    for (int f = 0; f < frames; ++f) {
      for (int k = 0; k < bins; ++k) {
        const size_t i = mixture_spec.idx(f, k);
        const double ymag = std::hypot(mixture_spec.re[i], mixture_spec.im[i]);
        const double xmag = std::hypot(src.re[i], src.im[i]);
        // |X| cos(angY - angX) = Re(Y conj(X)) / |Y|, stable at |X| -> 0.
        double target = 0.0;
        if (ymag > 0.0) {
          const double re_cross = mixture_spec.re[i] * src.re[i] +
                                  mixture_spec.im[i] * src.im[i];
          target = re_cross / ymag;
        } else {
          target = xmag;
        }
        target = std::clamp(target, 0.0, ymag);
        const double diff = mask.values[mask.idx(f, k)] * ymag - target;
        loss += diff * diff;
      }
    }
  }
  return loss;
}

OracleKind oracle_kind_from_string(const std::string& name) {
  if (name == "ibm") return OracleKind::kIbm;
  if (name == "irm") return OracleKind::kIrm;
  if (name == "ipsm") return OracleKind::kIpsm;
  throw ConfigError("unknown oracle mask kind: " + name);
}

std::string to_string(OracleKind kind) {
  switch (kind) {
    case OracleKind::kIbm:
      return "ibm";
    case OracleKind::kIrm:
      return "irm";
    case OracleKind::kIpsm:
      return "ipsm";
  }
  return "?";
}

std::vector<FeatureMap> oracle_masks(
    const std::vector<ComplexSpectrogram>& source_specs,
    const ComplexSpectrogram& mixture_spec, OracleKind kind) {
  const int num_sources = static_cast<int>(source_specs.size());
  if (num_sources < 2) throw DataError("oracle_masks: need >= 2 sources");
  const int frames = mixture_spec.num_frames;
  const int bins = mixture_spec.num_bins;
  for (const auto& s : source_specs) {
    if (s.num_frames != frames || s.num_bins != bins) {
      throw DataError("oracle_masks: mismatched spectrogram shapes");
    }
  }
  std::vector<FeatureMap> masks(
      num_sources, FeatureMap(frames, bins, 0.0));
  for (int f = 0; f < frames; ++f) {
    for (int k = 0; k < bins; ++k) {
      const size_t i = mixture_spec.idx(f, k);
      switch (kind) {
        case OracleKind::kIbm: {
          int winner = 0;
          double best = -1.0;
          for (int c = 0; c < num_sources; ++c) {
            const double mag =
                std::hypot(source_specs[c].re[i], source_specs[c].im[i]);
            if (mag > best) {
              best = mag;
              winner = c;
            }
          }
          masks[winner].values[i] = 1.0;
          break;
        }
        case OracleKind::kIrm: {
          double total = 0.0;
          for (int c = 0; c < num_sources; ++c) {
            total += std::hypot(source_specs[c].re[i], source_specs[c].im[i]);
          }
          for (int c = 0; c < num_sources; ++c) {
            masks[c].values[i] =
                total > 0.0
                    ? std::hypot(source_specs[c].re[i], source_specs[c].im[i]) /
                          total
                    : 1.0 / num_sources;
          }
          break;
        }
        case OracleKind::kIpsm: {
          const double ymag =
              std::hypot(mixture_spec.re[i], mixture_spec.im[i]);
          for (int c = 0; c < num_sources; ++c) {
            double value = 0.0;
            if (ymag > 0.0) {
              const double re_cross =
                  mixture_spec.re[i] * source_specs[c].re[i] +
                  mixture_spec.im[i] * source_specs[c].im[i];
              value = re_cross / (ymag * ymag);
            }
            masks[c].values[i] = std::clamp(value, 0.0, 1.5);
          }
          break;
        }
      }
    }
  }
  return masks;
}

AnalysisSpec default_oracle_analysis() {
  AnalysisSpec spec;
  spec.window_length = 512;
  spec.hop = 256;
  spec.fft_size = 512;
  spec.window = WindowType::kHann;
  return spec;
}

OracleSeparation oracle_separate(const MultichannelAudio& mixture,
                                 const std::vector<MultichannelAudio>& references,
                                 OracleKind kind,
                                 const AnalysisSpec& analysis) {
  if (references.size() < 2) {
    throw DataError("oracle_separate: need >= 2 references");
  }
  const ComplexSpectrogram ymix = stft(mixture, 0, analysis);
  std::vector<ComplexSpectrogram> source_specs;
  source_specs.reserve(references.size());
  for (const auto& ref : references) {
    if (ref.num_samples != mixture.num_samples) {
      throw DataError("oracle_separate: reference length mismatch");
    }
    source_specs.push_back(stft(ref, 0, analysis));
  }
  const std::vector<FeatureMap> masks =
      oracle_masks(source_specs, ymix, kind);

  OracleSeparation result;
  const int64_t out_len = mixture.num_samples;
  for (size_t c = 0; c < references.size(); ++c) {
    ComplexSpectrogram masked(ymix.num_frames, ymix.num_bins);
    for (size_t i = 0; i < masked.re.size(); ++i) {
      masked.re[i] = masks[c].values[i] * ymix.re[i];
      masked.im[i] = masks[c].values[i] * ymix.im[i];
    }
    std::vector<double> wave = istft(masked, analysis);
    wave.resize(out_len, 0.0);
    result.estimates.push_back(std::move(wave));
  }

  std::vector<std::vector<double>> refs_ch1;
  for (const auto& ref : references) {
    refs_ch1.emplace_back(ref.channel(0), ref.channel(0) + out_len);
  }
  const PermutationResult perm = pit_si_snr(result.estimates, refs_ch1);
  result.permutation = perm.best_permutation;
  result.si_snr_per_source = perm.per_pair_scores;
  for (size_t r = 0; r < refs_ch1.size(); ++r) {
    const double mix_score =
        si_snr(mixture.channel(0), refs_ch1[r].data(), out_len);
    result.si_snri_per_source.push_back(perm.per_pair_scores[r] - mix_score);
  }
  return result;
}

}  // namespace tdsep
