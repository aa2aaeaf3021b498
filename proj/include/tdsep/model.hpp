// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tdsep/audio.hpp"
#include "tdsep/kernelfeat.hpp"
#include "tdsep/params.hpp"
#include "tdsep/stft.hpp"
#include "tdsep/tape.hpp"

namespace tdsep {

enum class ModelKind { kTasnet, kFreqTcn, kCascadeRefine };
enum class Normalization { kBatchNorm, kGlobalLayerNorm };
enum class FusionStrategy { kNone, kEarly, kMiddle, kLate };
enum class Frontend {
  kSingle,
  kParallel,
  kKernelIpdFixed,
  kKernelIpdUnconstrained,
  kKernelIpdWindow
};
// kTrain: batch statistics, running buffers updated. kEval: running
// statistics. kFrozen: batch statistics without buffer updates, for
// repeatable re-evaluation (finite-difference probing).
enum class ForwardMode { kTrain, kEval, kFrozen };

ModelKind model_kind_from_string(const std::string& name);
Normalization normalization_from_string(const std::string& name);
FusionStrategy fusion_from_string(const std::string& name);
Frontend frontend_from_string(const std::string& name);
std::string to_string(ModelKind kind);
std::string to_string(Normalization norm);
std::string to_string(FusionStrategy fusion);
std::string to_string(Frontend frontend);

// Spectral feature selection for the spatial/frequency paths.
struct FeatureSet {
  bool lps = false;
  bool cos_ipd = false;
  bool sin_ipd = false;

  bool empty() const { return !lps && !cos_ipd && !sin_ipd; }
};

struct ModelConfig {
  ModelKind kind = ModelKind::kTasnet;
  int num_basis = 64;         // N: encoder basis count
  int encoder_kernel = 40;    // L: encoder kernel length, samples
  int encoder_stride = 20;
  int tcn_repeats = 2;        // R
  int blocks_per_repeat = 4;  // X
  int bottleneck_dim = 32;    // B
  int conv_channels = 64;     // H
  int conv_kernel = 3;        // P, odd
  int num_speakers = 2;       // C
  Normalization normalization = Normalization::kBatchNorm;
  FusionStrategy fusion = FusionStrategy::kNone;
  Frontend frontend = Frontend::kSingle;
  FeatureSet feature_set;
  int num_channels = 6;  // mixture channels the frontend may consume
  std::string mic_pairs = "1-4,2-5,3-6,1-2,3-4,5-6";
  int spatial_dim = 32;   // E width after the spatial conv1x1
  int kernel_length = 64;  // learnable-kernel frontend
  int kernel_stride = 32;
  int stft_window = 256;  // spectral route (spatial features / freq model)
  int stft_hop = 128;
  double sample_rate = 8000.0;

  void validate() const;
  int num_bins() const { return stft_window / 2 + 1; }
  int kernel_bins() const { return kernel_length / 2 + 1; }
  bool kernel_frontend() const {
    return frontend == Frontend::kKernelIpdFixed ||
           frontend == Frontend::kKernelIpdUnconstrained ||
           frontend == Frontend::kKernelIpdWindow;
  }
  // Width of the spectral feature vector feeding the spatial encoder (or
  // the frequency-domain separator), per feature_set.
  int spectral_feature_dim() const;
  AnalysisSpec spectral_analysis() const;
  KernelMode kernel_mode() const;
};

// Analysis-frame receptive field of the stacked dilated blocks.
int receptive_field_frames(int repeats, int blocks_per_repeat,
                           int conv_kernel);

// Deterministic initialization: every tensor is drawn from an RNG seeded by
// (seed, name), so models sharing a parameter name share its initial value.
ParameterStore build_params(const ModelConfig& config, uint64_t seed);

// The frontend's current analysis kernels: the fixed short-time bank, the
// learned k_re/k_im, or the bank rebuilt from the learned window. Used for
// per-epoch kernel exports and feature dumps.
KernelBank kernel_bank_from_store(const ModelConfig& config,
                                  const ParameterStore& store);

struct SeparationResult {
  std::vector<int> wave_nodes;  // C nodes, each [batch, 1, S']
  std::vector<int> mask_nodes;  // C nodes, each [batch, N, frames]
  int frames = 0;
  std::map<std::string, int> param_nodes;  // parameter name -> tape leaf
};

// Time-domain separator forward pass over a batch of equal-length
// multichannel mixtures.
SeparationResult tasnet_forward(Tape& tape, const ModelConfig& config,
                                ParameterStore& store,
                                const std::vector<MultichannelAudio>& batch,
                                ForwardMode mode);

// Stage-2 refinement forward: C pre-separated waveforms per batch item are
// encoded with a shared encoder, concatenated along the feature dimension,
// and re-masked. waves: [batch][speaker][sample], equal lengths.
SeparationResult refine_forward(
    Tape& tape, const ModelConfig& config, ParameterStore& store,
    const std::vector<std::vector<std::vector<double>>>& waves,
    ForwardMode mode);

struct FreqMaskResult {
  std::vector<int> mask_nodes;  // C nodes, each [1, bins, frames]
  int frames = 0;
  int bins = 0;
  std::map<std::string, int> param_nodes;  // parameter name -> tape leaf
};

// Frequency-domain separator: spectral features of the mixture are run
// through the dilated stack (one extra repeat deepens the receptive field
// in place of a recurrent tail) to per-speaker time-frequency masks.
FreqMaskResult freq_tcn_forward(Tape& tape, const ModelConfig& config,
                                ParameterStore& store,
                                const MultichannelAudio& mixture,
                                ForwardMode mode);

// Inference: separate a mixture into C waveforms (no gradient bookkeeping
// kept by the caller). Output length is within one encoder stride of the
// mixture length.
std::vector<std::vector<double>> separate(const ModelConfig& config,
                                          ParameterStore& store,
                                          const MultichannelAudio& mixture);

// Frequency-domain inference: masks applied to the channel-1 magnitude
// with the mixture phase, inverted to C waveforms.
std::vector<std::vector<double>> freq_separate(const ModelConfig& config,
                                               ParameterStore& store,
                                               const MultichannelAudio& mixture);

// Two-stage pipeline: frequency-domain masks -> inverse transform -> C
// pre-separated waveforms -> time-domain refinement. stage1_masks, if
// non-null, overrides the learned stage-1 masks ([speaker][frame-major
// frames x bins], matching the frequency model's analysis grid).
std::vector<std::vector<double>> cascaded_separate(
    const ModelConfig& freq_config, ParameterStore& freq_store,
    const ModelConfig& time_config, ParameterStore& time_store,
    const MultichannelAudio& mixture,
    const std::vector<std::vector<double>>* stage1_masks = nullptr);

// Maximum relative error between tape gradients and central finite
// differences over `num_probes` randomly chosen parameter entries of a
// model built from `config` with `seed`. weight_scale scales all conv
// weights after initialization (saturation stress).
double grad_check(const ModelConfig& config, uint64_t seed, double epsilon,
                  int num_probes, double weight_scale = 1.0);

}  // namespace tdsep
