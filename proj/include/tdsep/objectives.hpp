// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tdsep/audio.hpp"
#include "tdsep/stft.hpp"

namespace tdsep {

// Scale-invariant SNR in dB, clamped to [-60, 60]. Both signals are
// zero-meaned; s_target is the projection of est onto ref. Zero-energy
// ref throws; zero-energy est returns the clamp floor.
double si_snr(const double* est, const double* ref, int64_t len);
double si_snr(const std::vector<double>& est, const std::vector<double>& ref);

double si_snr_improvement(const double* est, const double* ref,
                          const double* mixture_ch1, int64_t len);

struct PermutationResult {
  std::vector<int> best_permutation;  // est index assigned to each ref slot
  std::vector<double> per_pair_scores;
  double aggregate = 0.0;
};

enum class PitMode { kMaximize, kMinimize };

// Exhaustive permutation search over C <= 6 speakers; mean pairwise score
// is the objective, ties broken by lexicographically smallest permutation.
PermutationResult pit_wrap(
    const std::function<double(int est_index, int ref_index)>& score,
    int num_speakers, PitMode mode);

// Convenience over waveforms sharing one length.
PermutationResult pit_si_snr(const std::vector<std::vector<double>>& ests,
                             const std::vector<std::vector<double>>& refs);

// Phase-sensitive spectrogram approximation: sum_c || m_c .* |Y| -
// trunc(|X_c| cos(ang Y - ang X_c)) ||_F^2 with the target truncated into
// [0, |Y|] per bin.
double psa_loss(const std::vector<FeatureMap>& est_masks,
                const ComplexSpectrogram& mixture_spec,
                const std::vector<ComplexSpectrogram>& source_specs);

enum class OracleKind { kIbm, kIrm, kIpsm };

OracleKind oracle_kind_from_string(const std::string& name);
std::string to_string(OracleKind kind);

// Per-source masks on the common analysis grid.
// IBM: largest-magnitude source takes 1 (ties to the lowest index).
// IRM: |X_c| / sum |X_c'|, 0/0 -> 1/C.
// IPSM: |X_c| cos(ang Y - ang X_c) / |Y| truncated to [0, 1.5], 0/0 -> 0.
std::vector<FeatureMap> oracle_masks(
    const std::vector<ComplexSpectrogram>& source_specs,
    const ComplexSpectrogram& mixture_spec, OracleKind kind);

struct OracleSeparation {
  std::vector<std::vector<double>> estimates;  // per source, time domain
  std::vector<double> si_snr_per_source;
  std::vector<double> si_snri_per_source;
  std::vector<int> permutation;
};

// Masks channel-1 mixture spectra, reconstructs with the mixture phase,
// and scores against channel-1 references with permutation alignment.
OracleSeparation oracle_separate(const MultichannelAudio& mixture,
                                 const std::vector<MultichannelAudio>& references,
                                 OracleKind kind,
                                 const AnalysisSpec& analysis);

// Default oracle analysis: 512-point FFT, 256 hop, hann.
AnalysisSpec default_oracle_analysis();

}  // namespace tdsep
