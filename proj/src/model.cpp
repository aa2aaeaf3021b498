// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "tdsep/objectives.hpp"
#include "tdsep/roomsim.hpp"

namespace tdsep {

namespace {

uint64_t fnv1a(const std::string& text) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int pow2i(int e) { return 1 << e; }

// Column-concatenates feature maps sharing a frame count.
FeatureMap concat_features(const std::vector<FeatureMap>& parts) {
  int frames = parts.at(0).num_frames;
  int dim = 0;
  for (const FeatureMap& p : parts) {
    if (p.num_frames != frames) {
      throw DataError("feature concat: frame count mismatch");
    }
    dim += p.dim;
  }
  FeatureMap out(frames, dim, parts[0].frame_hop);
  for (int f = 0; f < frames; ++f) {
    int off = 0;
    for (const FeatureMap& p : parts) {
      for (int d = 0; d < p.dim; ++d) {
        out.values[out.idx(f, off + d)] = p.values[p.idx(f, d)];
      }
      off += p.dim;
    }
  }
  return out;
}

FeatureMap sine_features(const FeatureMap& ipd) {
  FeatureMap out(ipd.num_frames, ipd.dim, ipd.frame_hop);
  for (size_t i = 0; i < ipd.values.size(); ++i) {
    out.values[i] = std::sin(ipd.values[i]);
  }
  return out;
}

int max_pair_index(const std::vector<MicPair>& pairs) {
  int m = 0;
  for (const MicPair& p : pairs) m = std::max({m, p.first, p.second});
  return m;
}

// Spectral features of one mixture on the analysis grid, per feature_set.
// Column order: LPS, cosine IPD, sine IPD.
FeatureMap spectral_features(const ModelConfig& cfg,
                             const MultichannelAudio& audio) {
  const AnalysisSpec analysis = cfg.spectral_analysis();
  const std::vector<MicPair> pairs = parse_mic_pairs(cfg.mic_pairs);
  const bool need_ipd = cfg.feature_set.cos_ipd || cfg.feature_set.sin_ipd;
  const int needed = need_ipd ? max_pair_index(pairs) : 1;
  if (audio.num_channels < needed) {
    throw DataError("spectral features: mixture has fewer channels than "
                    "the configured microphone pairs require");
  }
  std::vector<ComplexSpectrogram> specs;
  specs.reserve(needed);
  for (int c = 0; c < needed; ++c) {
    specs.push_back(stft(audio, c, analysis));
  }
  if (specs[0].num_frames < 1) {
    throw DataError("spectral features: mixture shorter than one window");
  }
  std::vector<FeatureMap> parts;
  if (cfg.feature_set.lps) {
    parts.push_back(log_power_spectrum(specs[0], analysis.hop));
  }
  if (need_ipd) {
    const FeatureMap ipd =
        ipd_from_spectra(specs, pairs, static_cast<double>(analysis.hop));
    if (cfg.feature_set.cos_ipd) {
      parts.push_back(cos_sin_features(ipd, false));
    }
    if (cfg.feature_set.sin_ipd) {
      parts.push_back(sine_features(ipd));
    }
  }
  return concat_features(parts);
}

// Forward-pass context: parameter leaves are created once per tape and
// shared between all uses so gradients accumulate per named tensor.
struct GraphCtx {
  Tape& tape;
  const ModelConfig& cfg;
  ParameterStore& store;
  ForwardMode mode;
  std::map<std::string, int> param_nodes;

  int param(const std::string& name) {
    auto it = param_nodes.find(name);
    if (it != param_nodes.end()) return it->second;
    const int id = tape.leaf(store.param(name), true);
    param_nodes.emplace(name, id);
    return id;
  }

  int conv1x1(int x, const std::string& weight_name, int bias = -1) {
    return tape.conv1d(x, param(weight_name), bias, 1, 1, 1, 0);
  }
};

int apply_norm(GraphCtx& g, const std::string& prefix, int x) {
  const int gamma = g.param(prefix + ".gamma");
  const int beta = g.param(prefix + ".beta");
  if (g.cfg.normalization == Normalization::kGlobalLayerNorm) {
    return g.tape.global_layer_norm(x, gamma, beta, 1e-5);
  }
  Tensor* mean = nullptr;
  Tensor* var = nullptr;
  if (g.mode != ForwardMode::kFrozen) {
    mean = &g.store.buffer(prefix + ".mean");
    var = &g.store.buffer(prefix + ".var");
  }
  const bool training = g.mode != ForwardMode::kEval;
  return g.tape.batch_norm(x, gamma, beta, mean, var, training, 0.1, 1e-5);
}

int tcn_block(GraphCtx& g, const std::string& prefix, int x, int dilation) {
  Tape& t = g.tape;
  int h = g.conv1x1(x, prefix + ".in.w");
  h = t.prelu(h, g.param(prefix + ".in.alpha"));
  h = apply_norm(g, prefix + ".norm1", h);
  const int pad = (g.cfg.conv_kernel - 1) * dilation / 2;
  h = t.conv1d(h, g.param(prefix + ".dw.w"), -1, 1, dilation,
               g.cfg.conv_channels, pad);
  h = t.prelu(h, g.param(prefix + ".dw.alpha"));
  h = apply_norm(g, prefix + ".norm2", h);
  h = g.conv1x1(h, prefix + ".out.w");
  return t.add(x, h);
}

int block_chain(GraphCtx& g, const std::string& name_prefix, int x,
                int repeat_begin, int repeat_end) {
  for (int r = repeat_begin; r < repeat_end; ++r) {
    for (int b = 0; b < g.cfg.blocks_per_repeat; ++b) {
      const std::string prefix =
          name_prefix + std::to_string(r) + "." + std::to_string(b);
      x = tcn_block(g, prefix, x, pow2i(b));
    }
  }
  return x;
}

struct TrunkOut {
  int main = -1;
  int late_spatial = -1;  // late fusion only
};

// Dilated stack with the configured fusion wiring. w_in: bottleneck input
// ([batch, N-ish, F]); e_node: spatial embedding or -1.
TrunkOut separator_trunk(GraphCtx& g, int w_in, int e_node, int repeats) {
  Tape& t = g.tape;
  const FusionStrategy fusion =
      e_node >= 0 ? g.cfg.fusion : FusionStrategy::kNone;
  int y = g.conv1x1(w_in, "bottleneck.w");
  if (fusion == FusionStrategy::kEarly) {
    y = t.add(y, g.conv1x1(e_node, "fuse.early.w_spatial"));
  }
  TrunkOut out;
  if (fusion == FusionStrategy::kMiddle) {
    const int half = repeats / 2;
    y = block_chain(g, "block", y, 0, half);
    int e = g.conv1x1(e_node, "fuse.branch.in.w");
    e = block_chain(g, "fuse.branch.block", e, 0, half);
    y = g.conv1x1(t.concat_channels({y, e}), "fuse.merge.w");
    y = block_chain(g, "block", y, half, repeats);
  } else if (fusion == FusionStrategy::kLate) {
    y = block_chain(g, "block", y, 0, repeats);
    int e = g.conv1x1(e_node, "fuse.branch.in.w");
    e = block_chain(g, "fuse.branch.block", e, 0, repeats);
    out.late_spatial = e;
  } else {
    y = block_chain(g, "block", y, 0, repeats);
  }
  out.main = y;
  return out;
}

int mask_logits(GraphCtx& g, const TrunkOut& trunk) {
  int logits = g.conv1x1(trunk.main, "mask.w", g.param("mask.b"));
  if (trunk.late_spatial >= 0) {
    logits = g.tape.add(logits, g.conv1x1(trunk.late_spatial, "mask.w_spatial"));
  }
  return logits;
}

void check_batch(const std::vector<MultichannelAudio>& batch,
                 int min_channels, int64_t min_samples) {
  if (batch.empty()) throw DataError("forward: empty batch");
  for (const MultichannelAudio& a : batch) {
    if (a.num_channels < min_channels) {
      throw DataError("forward: mixture channel count below configuration");
    }
    if (a.num_samples != batch[0].num_samples) {
      throw DataError("forward: batch items must share one length");
    }
  }
  if (batch[0].num_samples < min_samples) {
    throw DataError("forward: input shorter than the encoder kernel");
  }
}

// Builds the learnable/fixed kernel feature node for a batch.
int kernel_feature_node(GraphCtx& g,
                        const std::vector<MultichannelAudio>& batch) {
  const ModelConfig& cfg = g.cfg;
  KernelBank bank = make_stft_kernels(cfg.kernel_length, cfg.kernel_stride,
                                      WindowType::kHann, cfg.kernel_mode());
  const std::vector<MicPair> pairs = parse_mic_pairs(cfg.mic_pairs);
  auto audio = std::make_shared<const std::vector<MultichannelAudio>>(batch);
  int k_re = -1, k_im = -1, window = -1;
  switch (cfg.frontend) {
    case Frontend::kKernelIpdFixed: {
      Tensor re({bank.num_bins, bank.kernel_length});
      Tensor im({bank.num_bins, bank.kernel_length});
      re.data = bank.k_re;
      im.data = bank.k_im;
      k_re = g.tape.leaf(std::move(re), false);
      k_im = g.tape.leaf(std::move(im), false);
      break;
    }
    case Frontend::kKernelIpdUnconstrained:
      k_re = g.param("frontend.k_re");
      k_im = g.param("frontend.k_im");
      break;
    case Frontend::kKernelIpdWindow:
      window = g.param("frontend.window");
      break;
    default:
      throw ConfigError("kernel features requested for a non-kernel frontend");
  }
  return g.tape.kernel_ipd(std::move(audio), bank, k_re, k_im, window, pairs,
                           cfg.feature_set.sin_ipd);
}

}  // namespace

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "tasnet") return ModelKind::kTasnet;
  if (name == "freq_tcn") return ModelKind::kFreqTcn;
  if (name == "cascade_refine") return ModelKind::kCascadeRefine;
  throw ConfigError("unknown model kind: " + name);
}

Normalization normalization_from_string(const std::string& name) {
  if (name == "batch_norm") return Normalization::kBatchNorm;
  if (name == "global_layer_norm") return Normalization::kGlobalLayerNorm;
  throw ConfigError("unknown normalization: " + name);
}

FusionStrategy fusion_from_string(const std::string& name) {
  if (name == "none") return FusionStrategy::kNone;
  if (name == "early") return FusionStrategy::kEarly;
  if (name == "middle") return FusionStrategy::kMiddle;
  if (name == "late") return FusionStrategy::kLate;
  throw ConfigError("unknown fusion strategy: " + name);
}

Frontend frontend_from_string(const std::string& name) {
  if (name == "single") return Frontend::kSingle;
  if (name == "parallel") return Frontend::kParallel;
  if (name == "kernel_ipd_fixed") return Frontend::kKernelIpdFixed;
  if (name == "kernel_ipd_unconstrained") {
    return Frontend::kKernelIpdUnconstrained;
  }
  if (name == "kernel_ipd_window") return Frontend::kKernelIpdWindow;
  throw ConfigError("unknown frontend: " + name);
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kTasnet: return "tasnet";
    case ModelKind::kFreqTcn: return "freq_tcn";
    case ModelKind::kCascadeRefine: return "cascade_refine";
  }
  return "?";
}

std::string to_string(Normalization norm) {
  return norm == Normalization::kBatchNorm ? "batch_norm"
                                           : "global_layer_norm";
}

std::string to_string(FusionStrategy fusion) {
  switch (fusion) {
    case FusionStrategy::kNone: return "none";
    case FusionStrategy::kEarly: return "early";
    case FusionStrategy::kMiddle: return "middle";
    case FusionStrategy::kLate: return "late";
  }
  return "?";
}

std::string to_string(Frontend frontend) {
  switch (frontend) {
    case Frontend::kSingle: return "single";
    case Frontend::kParallel: return "parallel";
    case Frontend::kKernelIpdFixed: return "kernel_ipd_fixed";
    case Frontend::kKernelIpdUnconstrained: return "kernel_ipd_unconstrained";
    case Frontend::kKernelIpdWindow: return "kernel_ipd_window";
  }
  return "?";
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw ConfigError(std::string(what) + " must be >= 1");
  };
  positive(num_basis, "num_basis");
  positive(encoder_kernel, "encoder_kernel");
  positive(encoder_stride, "encoder_stride");
  positive(tcn_repeats, "tcn_repeats");
  positive(blocks_per_repeat, "blocks_per_repeat");
  positive(bottleneck_dim, "bottleneck_dim");
  positive(conv_channels, "conv_channels");
  positive(conv_kernel, "conv_kernel");
  positive(num_speakers, "num_speakers");
  positive(num_channels, "num_channels");
  if (encoder_stride > encoder_kernel) {
    throw ConfigError("encoder_stride must not exceed encoder_kernel");
  }
  if (conv_kernel % 2 == 0) {
    throw ConfigError("conv_kernel must be odd (symmetric padding)");
  }
  if (num_speakers > 6) {
    throw ConfigError("num_speakers > 6 exceeds the permutation search bound");
  }
  if (sample_rate <= 0.0) throw ConfigError("sample_rate must be positive");
  if (fusion != FusionStrategy::kNone) {
    positive(spatial_dim, "spatial_dim");
    if (!kernel_frontend() && feature_set.empty()) {
      throw ConfigError(
          "fusion requires spectral features or a kernel frontend");
    }
  }
  if (kernel_frontend()) {
    if (fusion == FusionStrategy::kNone) {
      throw ConfigError("kernel frontends feed the fusion path; pick a "
                        "fusion strategy");
    }
    if (feature_set.lps) {
      throw ConfigError(
          "log-power features are not produced by the kernel frontend");
    }
    if (!feature_set.cos_ipd) {
      throw ConfigError("kernel frontends emit cosine phase features; "
                        "enable cos_ipd");
    }
    if (kernel_length < 2 || kernel_length % 2 != 0) {
      throw ConfigError("kernel_length must be even and >= 2");
    }
    positive(kernel_stride, "kernel_stride");
  }
  if (fusion == FusionStrategy::kMiddle && tcn_repeats % 2 != 0) {
    throw ConfigError("middle fusion requires an even number of repeats");
  }
  if (fusion != FusionStrategy::kNone || kind == ModelKind::kFreqTcn) {
    if (feature_set.cos_ipd || feature_set.sin_ipd) {
      const std::vector<MicPair> pairs = parse_mic_pairs(mic_pairs);
      if (pairs.empty()) throw ConfigError("mic_pairs must be nonempty");
      if (max_pair_index(pairs) > num_channels) {
        throw ConfigError("mic_pairs reference channels beyond num_channels");
      }
    }
  }
  if (!kernel_frontend() &&
      (kind == ModelKind::kFreqTcn || (fusion != FusionStrategy::kNone &&
                                       !feature_set.empty()))) {
    if (stft_window < 2 || stft_hop < 1 || stft_hop > stft_window) {
      throw ConfigError("bad spectral analysis geometry");
    }
  }
  if (kind == ModelKind::kFreqTcn) {
    if (feature_set.empty()) {
      throw ConfigError("the frequency-domain model needs spectral features");
    }
    if (fusion != FusionStrategy::kNone) {
      throw ConfigError("the frequency-domain model has no fusion path");
    }
  }
  if (kind == ModelKind::kCascadeRefine) {
    if (fusion != FusionStrategy::kNone || frontend != Frontend::kSingle) {
      throw ConfigError(
          "the refinement stage is single-channel without fusion");
    }
  }
}

int ModelConfig::spectral_feature_dim() const {
  const int bins = num_bins();
  int pairs_n = 0;
  if (feature_set.cos_ipd || feature_set.sin_ipd) {
    pairs_n = static_cast<int>(parse_mic_pairs(mic_pairs).size());
  }
  int dim = 0;
  if (feature_set.lps) dim += bins;
  if (feature_set.cos_ipd) dim += pairs_n * bins;
  if (feature_set.sin_ipd) dim += pairs_n * bins;
  return dim;
}

AnalysisSpec ModelConfig::spectral_analysis() const {
  AnalysisSpec spec;
  spec.window_length = stft_window;
  spec.hop = stft_hop;
  spec.fft_size = stft_window;
  spec.window = WindowType::kHann;
  return spec;
}

KernelMode ModelConfig::kernel_mode() const {
  switch (frontend) {
    case Frontend::kKernelIpdUnconstrained: return KernelMode::kUnconstrained;
    case Frontend::kKernelIpdWindow: return KernelMode::kWindowConstrained;
    default: return KernelMode::kFixed;
  }
}

int receptive_field_frames(int repeats, int blocks_per_repeat,
                           int conv_kernel) {
  // Each block with dilation d widens the field by (kernel-1)*d on top of
  // the running total; summing the geometric dilations gives the closed
  // form below.
  const int per_repeat = (conv_kernel - 1) * (pow2i(blocks_per_repeat) - 1);
  return repeats * per_repeat + 1;
}

ParameterStore build_params(const ModelConfig& config, uint64_t seed) {
  config.validate();
  ParameterStore store;

  auto add_random = [&](const std::string& name, std::vector<int> shape,
                        double fan_in) {
    Tensor t(std::move(shape));
    std::mt19937_64 rng(detail::mix_seed(seed, fnv1a(name)));
    const double bound = std::sqrt(1.0 / fan_in);
    for (double& v : t.data) v = (2.0 * uniform01(rng) - 1.0) * bound;
    store.params.emplace(name, std::move(t));
  };
  auto add_const = [&](const std::string& name, std::vector<int> shape,
                       double value) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = value;
    store.params.emplace(name, std::move(t));
  };
  auto add_norm = [&](const std::string& prefix, int channels) {
    add_const(prefix + ".gamma", {channels}, 1.0);
    add_const(prefix + ".beta", {channels}, 0.0);
    if (config.normalization == Normalization::kBatchNorm) {
      Tensor mean({channels});
      Tensor var({channels});
      for (double& v : var.data) v = 1.0;
      store.buffers.emplace(prefix + ".mean", std::move(mean));
      store.buffers.emplace(prefix + ".var", std::move(var));
    }
  };
  auto add_block = [&](const std::string& prefix) {
    const int B = config.bottleneck_dim;
    const int H = config.conv_channels;
    const int P = config.conv_kernel;
    add_random(prefix + ".in.w", {H, B, 1}, B);
    add_const(prefix + ".in.alpha", {H}, 0.25);
    add_norm(prefix + ".norm1", H);
    add_random(prefix + ".dw.w", {H, 1, P}, P);
    add_const(prefix + ".dw.alpha", {H}, 0.25);
    add_norm(prefix + ".norm2", H);
    add_random(prefix + ".out.w", {B, H, 1}, H);
  };
  auto add_chain = [&](const std::string& name_prefix, int repeat_begin,
                       int repeat_end) {
    for (int r = repeat_begin; r < repeat_end; ++r) {
      for (int b = 0; b < config.blocks_per_repeat; ++b) {
        add_block(name_prefix + std::to_string(r) + "." + std::to_string(b));
      }
    }
  };

  const int N = config.num_basis;
  const int L = config.encoder_kernel;
  const int B = config.bottleneck_dim;
  const int C = config.num_speakers;

  if (config.kind == ModelKind::kFreqTcn) {
    const int D = config.spectral_feature_dim();
    const int bins = config.num_bins();
    add_random("bottleneck.w", {B, D, 1}, D);
    add_chain("block", 0, config.tcn_repeats + 1);
    add_random("mask.w", {C * bins, B, 1}, B);
    add_const("mask.b", {C * bins}, 0.0);
    return store;
  }

  const int enc_in = (config.kind == ModelKind::kTasnet &&
                      config.frontend == Frontend::kParallel)
                         ? config.num_channels
                         : 1;
  add_random("enc.w", {N, enc_in, L}, static_cast<double>(enc_in) * L);
  add_random("decoder.w", {N, L}, N);
  const int bottleneck_in =
      config.kind == ModelKind::kCascadeRefine ? C * N : N;
  add_random("bottleneck.w", {B, bottleneck_in, 1}, bottleneck_in);
  add_chain("block", 0, config.tcn_repeats);
  add_random("mask.w", {C * N, B, 1}, B);
  add_const("mask.b", {C * N}, 0.0);

  if (config.kind == ModelKind::kTasnet &&
      config.fusion != FusionStrategy::kNone) {
    int feature_dim;
    if (config.kernel_frontend()) {
      const int pairs_n =
          static_cast<int>(parse_mic_pairs(config.mic_pairs).size());
      feature_dim =
          pairs_n * config.kernel_bins() * (config.feature_set.sin_ipd ? 2 : 1);
    } else {
      feature_dim = config.spectral_feature_dim();
    }
    add_random("spatial.w", {config.spatial_dim, feature_dim, 1}, feature_dim);
    switch (config.fusion) {
      case FusionStrategy::kEarly:
        add_random("fuse.early.w_spatial", {B, config.spatial_dim, 1},
                   config.spatial_dim);
        break;
      case FusionStrategy::kMiddle:
        add_random("fuse.branch.in.w", {B, config.spatial_dim, 1},
                   config.spatial_dim);
        add_chain("fuse.branch.block", 0, config.tcn_repeats / 2);
        add_random("fuse.merge.w", {B, 2 * B, 1}, 2 * B);
        break;
      case FusionStrategy::kLate:
        add_random("fuse.branch.in.w", {B, config.spatial_dim, 1},
                   config.spatial_dim);
        add_chain("fuse.branch.block", 0, config.tcn_repeats);
        add_random("mask.w_spatial", {C * N, B, 1}, B);
        break;
      default:
        break;
    }
    // Learnable-kernel frontend parameters start as the short-time
    // transform they generalize.
    if (config.frontend == Frontend::kKernelIpdUnconstrained) {
      const KernelBank bank =
          make_stft_kernels(config.kernel_length, config.kernel_stride,
                            WindowType::kHann, KernelMode::kUnconstrained);
      Tensor re({bank.num_bins, bank.kernel_length});
      Tensor im({bank.num_bins, bank.kernel_length});
      re.data = bank.k_re;
      im.data = bank.k_im;
      store.params.emplace("frontend.k_re", std::move(re));
      store.params.emplace("frontend.k_im", std::move(im));
    } else if (config.frontend == Frontend::kKernelIpdWindow) {
      Tensor w({config.kernel_length});
      w.data = make_window(WindowType::kHann, config.kernel_length);
      store.params.emplace("frontend.window", std::move(w));
    }
  }
  return store;
}

KernelBank kernel_bank_from_store(const ModelConfig& config,
                                  const ParameterStore& store) {
  KernelBank bank =
      make_stft_kernels(config.kernel_length, config.kernel_stride,
                        WindowType::kHann, config.kernel_mode());
  if (config.frontend == Frontend::kKernelIpdUnconstrained) {
    bank.k_re = store.params.at("frontend.k_re").data;
    bank.k_im = store.params.at("frontend.k_im").data;
  } else if (config.frontend == Frontend::kKernelIpdWindow) {
    bank.window = store.params.at("frontend.window").data;
    bank.rebuild_from_window();
  }
  return bank;
}

SeparationResult tasnet_forward(Tape& tape, const ModelConfig& config,
                                ParameterStore& store,
                                const std::vector<MultichannelAudio>& batch,
                                ForwardMode mode) {
  config.validate();
  if (config.kind != ModelKind::kTasnet) {
    throw ConfigError("tasnet_forward called with a non-time-domain config");
  }
  const bool parallel = config.frontend == Frontend::kParallel;
  const int enc_in = parallel ? config.num_channels : 1;
  check_batch(batch, enc_in, config.encoder_kernel);

  GraphCtx g{tape, config, store, mode, {}};
  const int batch_n = static_cast<int>(batch.size());
  const int64_t S = batch[0].num_samples;

  Tensor x({batch_n, enc_in, static_cast<int>(S)});
  for (int b = 0; b < batch_n; ++b) {
    for (int c = 0; c < enc_in; ++c) {
      const double* src = batch[b].channel(c);
      double* dst = &x.data[(static_cast<size_t>(b) * enc_in + c) * S];
      std::copy(src, src + S, dst);
    }
  }
  const int x_leaf = tape.leaf(std::move(x), false);
  int w_node = tape.relu(tape.conv1d(x_leaf, g.param("enc.w"), -1,
                                     config.encoder_stride, 1, 1, 0));
  int frames = tape.value(w_node).dim(2);

  int e_node = -1;
  if (config.fusion != FusionStrategy::kNone) {
    int feats;
    if (config.kernel_frontend()) {
      feats = kernel_feature_node(g, batch);
      const int kframes = tape.value(feats).dim(2);
      const int aligned = std::min(frames, kframes);
      if (aligned < 1) throw DataError("forward: no aligned frames");
      if (aligned < frames) w_node = tape.slice_time(w_node, 0, aligned);
      if (aligned < kframes) feats = tape.slice_time(feats, 0, aligned);
      frames = aligned;
    } else {
      const int D = config.spectral_feature_dim();
      Tensor f({batch_n, D, frames});
      for (int b = 0; b < batch_n; ++b) {
        const FeatureMap fm =
            upsample_frames(spectral_features(config, batch[b]), frames);
        for (int fr = 0; fr < frames; ++fr) {
          for (int d = 0; d < D; ++d) {
            f.at(b, d, fr) = fm.values[fm.idx(fr, d)];
          }
        }
      }
      feats = tape.leaf(std::move(f), false);
    }
    e_node = g.conv1x1(feats, "spatial.w");
  }

  const TrunkOut trunk = separator_trunk(g, w_node, e_node, config.tcn_repeats);
  const int masks_all = tape.sigmoid(mask_logits(g, trunk));

  SeparationResult result;
  result.frames = frames;
  const int N = config.num_basis;
  const int dec = g.param("decoder.w");
  for (int c = 0; c < config.num_speakers; ++c) {
    const int mask_c = tape.slice_channels(masks_all, c * N, (c + 1) * N);
    const int masked = tape.mul(mask_c, w_node);
    result.mask_nodes.push_back(mask_c);
    result.wave_nodes.push_back(
        tape.conv_transpose1d(masked, dec, config.encoder_stride));
  }
  result.param_nodes = std::move(g.param_nodes);
  return result;
}

SeparationResult refine_forward(
    Tape& tape, const ModelConfig& config, ParameterStore& store,
    const std::vector<std::vector<std::vector<double>>>& waves,
    ForwardMode mode) {
  config.validate();
  if (config.kind != ModelKind::kCascadeRefine) {
    throw ConfigError("refine_forward called with a non-refinement config");
  }
  if (waves.empty()) throw DataError("refine: empty batch");
  const int batch_n = static_cast<int>(waves.size());
  const int C = config.num_speakers;
  const int64_t S = waves[0].at(0).size();
  for (const auto& item : waves) {
    if (static_cast<int>(item.size()) != C) {
      throw DataError("refine: speaker count mismatch");
    }
    for (const auto& w : item) {
      if (static_cast<int64_t>(w.size()) != S) {
        throw DataError("refine: waveforms must share one length");
      }
    }
  }
  if (S < config.encoder_kernel) {
    throw DataError("refine: input shorter than the encoder kernel");
  }

  GraphCtx g{tape, config, store, mode, {}};
  const int enc_w = g.param("enc.w");
  std::vector<int> reps(C);
  for (int c = 0; c < C; ++c) {
    Tensor x({batch_n, 1, static_cast<int>(S)});
    for (int b = 0; b < batch_n; ++b) {
      std::copy(waves[b][c].begin(), waves[b][c].end(),
                &x.data[static_cast<size_t>(b) * S]);
    }
    reps[c] = tape.relu(tape.conv1d(tape.leaf(std::move(x), false), enc_w, -1,
                                    config.encoder_stride, 1, 1, 0));
  }
  const int cat = tape.concat_channels(reps);
  const TrunkOut trunk = separator_trunk(g, cat, -1, config.tcn_repeats);
  const int masks_all = tape.sigmoid(mask_logits(g, trunk));

  SeparationResult result;
  result.frames = tape.value(cat).dim(2);
  const int N = config.num_basis;
  const int dec = g.param("decoder.w");
  for (int c = 0; c < C; ++c) {
    const int mask_c = tape.slice_channels(masks_all, c * N, (c + 1) * N);
    const int masked = tape.mul(mask_c, reps[c]);
    result.mask_nodes.push_back(mask_c);
    result.wave_nodes.push_back(
        tape.conv_transpose1d(masked, dec, config.encoder_stride));
  }
  result.param_nodes = std::move(g.param_nodes);
  return result;
}

FreqMaskResult freq_tcn_forward(Tape& tape, const ModelConfig& config,
                                ParameterStore& store,
                                const MultichannelAudio& mixture,
                                ForwardMode mode) {
  config.validate();
  if (config.kind != ModelKind::kFreqTcn) {
    throw ConfigError("freq_tcn_forward called with a non-frequency config");
  }
  const FeatureMap fm = spectral_features(config, mixture);
  const int frames = fm.num_frames;
  const int D = fm.dim;
  Tensor f({1, D, frames});
  for (int fr = 0; fr < frames; ++fr) {
    for (int d = 0; d < D; ++d) f.at(0, d, fr) = fm.values[fm.idx(fr, d)];
  }
  GraphCtx g{tape, config, store, mode, {}};
  const int feats = tape.leaf(std::move(f), false);
  // One extra repeat stands in for a recurrent tail: same mask estimator,
  // longer receptive field.
  const TrunkOut trunk =
      separator_trunk(g, feats, -1, config.tcn_repeats + 1);
  const int masks_all = tape.sigmoid(mask_logits(g, trunk));

  FreqMaskResult result;
  result.frames = frames;
  result.bins = config.num_bins();
  for (int c = 0; c < config.num_speakers; ++c) {
    result.mask_nodes.push_back(tape.slice_channels(
        masks_all, c * result.bins, (c + 1) * result.bins));
  }
  result.param_nodes = std::move(g.param_nodes);
  return result;
}

std::vector<std::vector<double>> separate(const ModelConfig& config,
                                          ParameterStore& store,
                                          const MultichannelAudio& mixture) {
  Tape tape;
  const SeparationResult result =
      tasnet_forward(tape, config, store, {mixture}, ForwardMode::kEval);
  std::vector<std::vector<double>> waves;
  for (int node : result.wave_nodes) {
    const Tensor& v = tape.value(node);
    waves.emplace_back(v.data.begin(), v.data.end());
  }
  return waves;
}

namespace {

std::vector<std::vector<double>> apply_freq_masks(
    const ModelConfig& config, const MultichannelAudio& mixture,
    const std::vector<std::vector<double>>& masks, int frames, int bins) {
  const AnalysisSpec analysis = config.spectral_analysis();
  const ComplexSpectrogram y = stft(mixture, 0, analysis);
  if (y.num_frames != frames || y.num_bins != bins) {
    throw DataError("stage-1 masks do not match the mixture analysis grid");
  }
  std::vector<std::vector<double>> waves;
  for (const std::vector<double>& m : masks) {
    if (static_cast<int64_t>(m.size()) !=
        static_cast<int64_t>(frames) * bins) {
      throw DataError("stage-1 mask size mismatch");
    }
    ComplexSpectrogram xc(frames, bins);
    for (int f = 0; f < frames; ++f) {
      for (int k = 0; k < bins; ++k) {
        const size_t i = y.idx(f, k);
        xc.re[i] = m[i] * y.re[i];
        xc.im[i] = m[i] * y.im[i];
      }
    }
    waves.push_back(istft(xc, analysis));
  }
  return waves;
}

}  // namespace

std::vector<std::vector<double>> freq_separate(const ModelConfig& config,
                                               ParameterStore& store,
                                               const MultichannelAudio& mixture) {
  Tape tape;
  const FreqMaskResult result =
      freq_tcn_forward(tape, config, store, mixture, ForwardMode::kEval);
  std::vector<std::vector<double>> masks;
  for (int node : result.mask_nodes) {
    const Tensor& v = tape.value(node);
    std::vector<double> m(static_cast<size_t>(result.frames) * result.bins);
    for (int f = 0; f < result.frames; ++f) {
      for (int k = 0; k < result.bins; ++k) {
        m[static_cast<size_t>(f) * result.bins + k] = v.at(0, k, f);
      }
    }
    masks.push_back(std::move(m));
  }
  return apply_freq_masks(config, mixture, masks, result.frames, result.bins);
}

std::vector<std::vector<double>> cascaded_separate(
    const ModelConfig& freq_config, ParameterStore& freq_store,
    const ModelConfig& time_config, ParameterStore& time_store,
    const MultichannelAudio& mixture,
    const std::vector<std::vector<double>>* stage1_masks) {
  std::vector<std::vector<double>> pre;
  if (stage1_masks != nullptr) {
    const AnalysisSpec analysis = freq_config.spectral_analysis();
    const ComplexSpectrogram y = stft(mixture, 0, analysis);
    pre = apply_freq_masks(freq_config, mixture, *stage1_masks, y.num_frames,
                           y.num_bins);
  } else {
    pre = freq_separate(freq_config, freq_store, mixture);
  }
  // The inverse transforms share one geometry, but trim defensively so the
  // refinement stage always sees equal lengths.
  size_t min_len = pre.at(0).size();
  for (const auto& w : pre) min_len = std::min(min_len, w.size());
  for (auto& w : pre) w.resize(min_len);

  Tape tape;
  const SeparationResult result = refine_forward(
      tape, time_config, time_store, {pre}, ForwardMode::kEval);
  std::vector<std::vector<double>> waves;
  for (int node : result.wave_nodes) {
    const Tensor& v = tape.value(node);
    waves.emplace_back(v.data.begin(), v.data.end());
  }
  return waves;
}

double grad_check(const ModelConfig& config, uint64_t seed, double epsilon,
                  int num_probes, double weight_scale) {
  config.validate();
  if (config.kind != ModelKind::kTasnet) {
    throw ConfigError("grad_check probes the time-domain model");
  }
  ParameterStore store = build_params(config, seed);
  if (weight_scale != 1.0) {
    for (auto& [name, tensor] : store.params) {
      if (name.size() > 2 && (name.rfind(".w") == name.size() - 2 ||
                              name.rfind(".w_spatial") != std::string::npos)) {
        for (double& v : tensor.data) v *= weight_scale;
      }
    }
  }

  std::mt19937_64 rng(detail::mix_seed(seed, 0x9e3779b97f4a7c15ull));
  const int channels = config.num_channels;
  int64_t samples = config.encoder_kernel + config.encoder_stride * 24;
  if (config.kernel_frontend()) {
    samples = std::max(samples,
                       static_cast<int64_t>(config.kernel_length +
                                            config.kernel_stride * 8));
  } else if (config.fusion != FusionStrategy::kNone) {
    samples = std::max(samples, static_cast<int64_t>(config.stft_window +
                                                     config.stft_hop * 4));
  }
  const int batch_n = 2;
  std::vector<MultichannelAudio> batch;
  for (int b = 0; b < batch_n; ++b) {
    MultichannelAudio a(channels, samples, config.sample_rate);
    for (double& v : a.samples) v = 2.0 * uniform01(rng) - 1.0;
    batch.push_back(std::move(a));
  }

  // Fixed permutation and constant references keep the probed loss smooth.
  const int frames = (static_cast<int>(samples) - config.encoder_kernel) /
                         config.encoder_stride + 1;
  const int64_t out_len =
      static_cast<int64_t>(frames - 1) * config.encoder_stride +
      config.encoder_kernel;
  auto refs =
      std::make_shared<std::vector<std::vector<std::vector<double>>>>();
  refs->resize(batch_n);
  for (int b = 0; b < batch_n; ++b) {
    (*refs)[b].resize(config.num_speakers);
    for (int c = 0; c < config.num_speakers; ++c) {
      (*refs)[b][c].resize(out_len);
      for (double& v : (*refs)[b][c]) v = 2.0 * uniform01(rng) - 1.0;
    }
  }
  std::vector<std::vector<int>> perm(batch_n);
  for (int b = 0; b < batch_n; ++b) {
    for (int c = 0; c < config.num_speakers; ++c) perm[b].push_back(c);
  }

  auto eval_loss = [&](ParameterStore& probe_store) {
    Tape tape;
    const SeparationResult result = tasnet_forward(
        tape, config, probe_store, batch, ForwardMode::kFrozen);
    const int loss = tape.neg_si_snr_loss(result.wave_nodes, refs, perm);
    return tape.value(loss).data[0];
  };

  Tape tape;
  const SeparationResult result =
      tasnet_forward(tape, config, store, batch, ForwardMode::kFrozen);
  const int loss = tape.neg_si_snr_loss(result.wave_nodes, refs, perm);
  tape.backward(loss);

  std::vector<std::pair<std::string, int64_t>> entries;
  for (const auto& [name, tensor] : store.params) {
    for (int64_t i = 0; i < tensor.size(); ++i) entries.emplace_back(name, i);
  }
  std::vector<size_t> order(entries.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  const size_t probes =
      std::min<size_t>(order.size(), static_cast<size_t>(num_probes));
  for (size_t i = 0; i < probes; ++i) {
    const size_t j =
        i + static_cast<size_t>(uniform01(rng) *
                                static_cast<double>(order.size() - i));
    std::swap(order[i], order[std::min(j, order.size() - 1)]);
  }

  double max_rel = 0.0;
  for (size_t p = 0; p < probes; ++p) {
    const auto& [name, index] = entries[order[p]];
    double analytic = 0.0;
    const auto it = result.param_nodes.find(name);
    if (it != result.param_nodes.end() && tape.has_grad(it->second)) {
      analytic = tape.grad(it->second).data[static_cast<size_t>(index)];
    }
    double& slot = store.param(name).data[static_cast<size_t>(index)];
    const double saved = slot;
    slot = saved + epsilon;
    const double plus = eval_loss(store);
    slot = saved - epsilon;
    const double minus = eval_loss(store);
    slot = saved;
    const double fd = (plus - minus) / (2.0 * epsilon);
    const double rel = std::abs(analytic - fd) /
                       std::max({1e-6, std::abs(analytic), std::abs(fd)});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace tdsep
