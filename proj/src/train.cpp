// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tdsep/errors.hpp"
#include "tdsep/objectives.hpp"
#include "tdsep/stft.hpp"

namespace tdsep {

namespace {

struct ChunkRef {
  int item = 0;
  int64_t offset = 0;
  int64_t length = 0;
  double baseline_si_snr = 0.0;  // channel-1 mixture vs references
};

int64_t min_chunk_samples(const ModelConfig& config) {
  int64_t need = config.encoder_kernel;
  if (config.kind == ModelKind::kFreqTcn ||
      (!config.kernel_frontend() && config.fusion != FusionStrategy::kNone)) {
    need = std::max<int64_t>(need, config.stft_window);
  }
  if (config.kernel_frontend()) {
    need = std::max<int64_t>(need, config.kernel_length);
  }
  return need;
}

std::vector<ChunkRef> chunk_items(const TrainSettings& settings,
                                  const std::vector<TrainItem>& items) {
  const int64_t min_len = min_chunk_samples(settings.model);
  const int64_t chunk_len = std::max<int64_t>(
      min_len,
      std::llround(settings.chunk_seconds * settings.model.sample_rate));
  std::vector<ChunkRef> chunks;
  for (size_t i = 0; i < items.size(); ++i) {
    const int64_t total = items[i].mixture.num_samples;
    if (total >= chunk_len) {
      for (int64_t off = 0; off + chunk_len <= total; off += chunk_len) {
        chunks.push_back({static_cast<int>(i), off, chunk_len, 0.0});
      }
    } else if (total >= min_len) {
      chunks.push_back({static_cast<int>(i), 0, total, 0.0});
    }
  }
  if (chunks.empty()) {
    throw DataError(
        "no trainable chunks: every utterance is shorter than the model's "
        "minimum input");
  }
  for (ChunkRef& c : chunks) {
    const TrainItem& item = items[c.item];
    const double* mix = item.mixture.channel(0) + c.offset;
    double sum = 0.0;
    for (const auto& ref : item.references) {
      sum += si_snr(mix, ref.data() + c.offset, c.length);
    }
    c.baseline_si_snr = sum / static_cast<double>(item.references.size());
  }
  return chunks;
}

MultichannelAudio slice_audio(const MultichannelAudio& audio, int64_t offset,
                              int64_t length) {
  MultichannelAudio out(audio.num_channels, length, audio.sample_rate);
  for (int c = 0; c < audio.num_channels; ++c) {
    const double* src = audio.channel(c) + offset;
    std::copy(src, src + length, out.channel(c));
  }
  return out;
}

// Maps the first non-finite tape node to a parameter name when it is a
// parameter leaf; otherwise reports the node index.
std::string non_finite_diagnostic(const Tape& tape,
                                  const std::map<std::string, int>& params) {
  const int node = tape.first_non_finite();
  if (node < 0) return "loss non-finite but every recorded tensor is finite";
  for (const auto& [name, id] : params) {
    if (id == node) return "parameter '" + name + "' is non-finite";
  }
  return "activation node " + std::to_string(node) + " is non-finite";
}

std::map<std::string, Tensor> collect_grads(
    Tape& tape, const std::map<std::string, int>& param_nodes) {
  std::map<std::string, Tensor> grads;
  for (const auto& [name, node] : param_nodes) {
    if (tape.has_grad(node)) {
      grads.emplace(name, tape.grad(node));
    } else {
      Tensor zero(tape.value(node).shape);
      grads.emplace(name, std::move(zero));
    }
  }
  return grads;
}

// Phase-sensitive target |X| cos(ang Y - ang X) truncated into [0, |Y|],
// laid out to match the [1, bins, frames] mask tensors.
void psa_tensors(const ComplexSpectrogram& mix_spec,
                 const std::vector<ComplexSpectrogram>& ref_specs,
                 Tensor* ymag, std::vector<Tensor>* targets) {
  const int frames = mix_spec.num_frames;
  const int bins = mix_spec.num_bins;
  *ymag = Tensor({1, bins, frames});
  for (int f = 0; f < frames; ++f) {
    for (int k = 0; k < bins; ++k) {
      const size_t i = mix_spec.idx(f, k);
      ymag->data[static_cast<size_t>(k) * frames + f] =
          std::hypot(mix_spec.re[i], mix_spec.im[i]);
    }
  }
  targets->clear();
  for (const ComplexSpectrogram& ref : ref_specs) {
    Tensor t({1, bins, frames});
    for (int f = 0; f < frames; ++f) {
      for (int k = 0; k < bins; ++k) {
        const size_t i = mix_spec.idx(f, k);
        const double mag_y = std::hypot(mix_spec.re[i], mix_spec.im[i]);
        const double mag_x = std::hypot(ref.re[i], ref.im[i]);
        const double ang = std::atan2(mix_spec.im[i], mix_spec.re[i]) -
                           std::atan2(ref.im[i], ref.re[i]);
        double v = mag_x * std::cos(ang);
        v = std::clamp(v, 0.0, mag_y);
        t.data[static_cast<size_t>(k) * frames + f] = v;
      }
    }
    targets->push_back(std::move(t));
  }
}

struct StepResult {
  double loss = 0.0;
  double mean_si_snr = 0.0;  // chosen-permutation SI-SNR (si_snr loss only)
};

// One optimizer update on a batch of equal-length chunks.
StepResult waveform_step(const TrainSettings& settings,
                         const std::vector<TrainItem>& items,
                         const std::vector<ChunkRef>& batch,
                         ParameterStore& store, AdamOptimizer& optimizer) {
  const ModelConfig& config = settings.model;
  const int batch_size = static_cast<int>(batch.size());
  const int C = config.num_speakers;
  auto refs =
      std::make_shared<std::vector<std::vector<std::vector<double>>>>();
  refs->resize(batch_size);
  Tape tape;
  SeparationResult result;
  if (config.kind == ModelKind::kCascadeRefine) {
    std::vector<std::vector<std::vector<double>>> waves(batch_size);
    for (int b = 0; b < batch_size; ++b) {
      const ChunkRef& c = batch[b];
      const TrainItem& item = items[c.item];
      waves[b].resize(C);
      (*refs)[b].resize(C);
      for (int s = 0; s < C; ++s) {
        waves[b][s].assign(item.stage1[s].begin() + c.offset,
                           item.stage1[s].begin() + c.offset + c.length);
        (*refs)[b][s].assign(item.references[s].begin() + c.offset,
                             item.references[s].begin() + c.offset + c.length);
      }
    }
    result = refine_forward(tape, config, store, waves, ForwardMode::kTrain);
  } else {
    std::vector<MultichannelAudio> mixtures;
    mixtures.reserve(batch_size);
    for (int b = 0; b < batch_size; ++b) {
      const ChunkRef& c = batch[b];
      const TrainItem& item = items[c.item];
      mixtures.push_back(slice_audio(item.mixture, c.offset, c.length));
      (*refs)[b].resize(C);
      for (int s = 0; s < C; ++s) {
        (*refs)[b][s].assign(item.references[s].begin() + c.offset,
                             item.references[s].begin() + c.offset + c.length);
      }
    }
    result = tasnet_forward(tape, config, store, mixtures, ForwardMode::kTrain);
  }

  // Choose each item's permutation by value, then differentiate through the
  // loss at that fixed assignment.
  std::vector<std::vector<int>> perms(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    const int64_t ref_len = batch[b].length;
    std::vector<std::vector<double>> ests(C), ref_trim(C);
    for (int s = 0; s < C; ++s) {
      const Tensor& wave = tape.value(result.wave_nodes[s]);
      const int64_t out_len = wave.shape[2];
      const int64_t len = std::min(ref_len, out_len);
      const double* row =
          wave.data.data() + static_cast<size_t>(b) * out_len;
      ests[s].assign(row, row + len);
      ref_trim[s].assign((*refs)[b][s].begin(), (*refs)[b][s].begin() + len);
    }
    perms[b] = pit_si_snr(ests, ref_trim).best_permutation;
  }
  const int loss_id = tape.neg_si_snr_loss(result.wave_nodes, refs, perms);
  StepResult step;
  step.loss = tape.value(loss_id).data[0];
  step.mean_si_snr = -step.loss;
  if (!std::isfinite(step.loss)) {
    throw NumericError("training loss went non-finite: " +
                       non_finite_diagnostic(tape, result.param_nodes));
  }
  tape.backward(loss_id);
  optimizer.step(store, collect_grads(tape, result.param_nodes));
  return step;
}

StepResult spectrogram_step(const TrainSettings& settings,
                            const std::vector<TrainItem>& items,
                            const ChunkRef& chunk, ParameterStore& store,
                            AdamOptimizer& optimizer) {
  const ModelConfig& config = settings.model;
  const TrainItem& item = items[chunk.item];
  const MultichannelAudio mixture =
      slice_audio(item.mixture, chunk.offset, chunk.length);
  Tape tape;
  FreqMaskResult result =
      freq_tcn_forward(tape, config, store, mixture, ForwardMode::kTrain);
  const AnalysisSpec analysis = config.spectral_analysis();
  const ComplexSpectrogram mix_spec = stft(mixture, 0, analysis);
  std::vector<ComplexSpectrogram> ref_specs;
  for (const auto& ref : item.references) {
    ref_specs.push_back(
        stft(ref.data() + chunk.offset, chunk.length, analysis));
  }
  if (mix_spec.num_frames != result.frames ||
      mix_spec.num_bins != result.bins) {
    throw DataError("spectrogram training: mask/target grids disagree");
  }
  auto ymag = std::make_shared<Tensor>();
  auto targets = std::make_shared<std::vector<Tensor>>();
  psa_tensors(mix_spec, ref_specs, ymag.get(), targets.get());

  const int C = config.num_speakers;
  std::vector<const Tensor*> masks(C);
  for (int s = 0; s < C; ++s) masks[s] = &tape.value(result.mask_nodes[s]);
  const auto pair_cost = [&](int est, int ref) {
    const Tensor& m = *masks[est];
    const Tensor& t = (*targets)[ref];
    double sum = 0.0;
    for (size_t i = 0; i < m.data.size(); ++i) {
      const double d = m.data[i] * ymag->data[i] - t.data[i];
      sum += d * d;
    }
    return sum;
  };
  const PermutationResult pit = pit_wrap(pair_cost, C, PitMode::kMinimize);
  const int loss_id =
      tape.psa_loss_node(result.mask_nodes, ymag, targets,
                         pit.best_permutation);
  StepResult step;
  const double raw = tape.value(loss_id).data[0];
  step.loss = raw / (static_cast<double>(C) * static_cast<double>(ymag->size()));
  if (!std::isfinite(raw)) {
    throw NumericError("training loss went non-finite: " +
                       non_finite_diagnostic(tape, result.param_nodes));
  }
  tape.backward(loss_id);
  optimizer.step(store, collect_grads(tape, result.param_nodes));
  return step;
}

}  // namespace

std::vector<TrainItem> load_training_items(
    const TrainSettings& settings, const std::vector<SceneRecord>& records,
    const std::string& manifest_dir) {
  const bool cascade = settings.model.kind == ModelKind::kCascadeRefine;
  ModelConfig stage1_config;
  ParameterStore stage1_store;
  if (cascade) {
    Checkpoint ckpt = load_checkpoint(settings.stage1_checkpoint);
    stage1_config =
        model_config_from_json(nlohmann::json::parse(ckpt.config_json));
    if (stage1_config.kind != ModelKind::kFreqTcn) {
      throw ConfigError(
          "stage1_checkpoint must hold a frequency-domain model");
    }
    stage1_store = std::move(ckpt.store);
  }
  std::vector<TrainItem> items;
  items.reserve(records.size());
  for (const SceneRecord& record : records) {
    const LoadedScene scene = load_scene_audio(manifest_dir, record);
    TrainItem item;
    item.scene_id = record.scene_id;
    item.angle_deg = record.angle_difference_deg;
    if (static_cast<int>(scene.references.size()) !=
        settings.model.num_speakers) {
      throw DataError(record.scene_id + ": scene has " +
                      std::to_string(scene.references.size()) +
                      " sources but the model separates " +
                      std::to_string(settings.model.num_speakers));
    }
    int64_t keep = scene.mixture.num_samples;
    if (cascade) {
      item.stage1 = freq_separate(stage1_config, stage1_store, scene.mixture);
      for (const auto& wave : item.stage1) {
        keep = std::min<int64_t>(keep, static_cast<int64_t>(wave.size()));
      }
      for (auto& wave : item.stage1) wave.resize(keep);
    }
    item.mixture = slice_audio(scene.mixture, 0, keep);
    for (const MultichannelAudio& ref : scene.references) {
      item.references.emplace_back(ref.channel(0), ref.channel(0) + keep);
    }
    items.push_back(std::move(item));
  }
  return items;
}

TrainOutcome train_model(const TrainSettings& settings,
                         const std::vector<TrainItem>& items,
                         ParameterStore& store, AdamOptimizer& optimizer,
                         int start_epoch, int start_steps,
                         const EpochCallback& per_epoch) {
  settings.model.validate();
  const std::vector<ChunkRef> chunks = chunk_items(settings, items);
  TrainOutcome outcome;
  outcome.epochs_run = start_epoch;
  outcome.total_steps = start_steps;
  const bool spectrogram = settings.loss == "psa";

  for (int epoch = start_epoch; epoch < settings.epochs; ++epoch) {
    if (settings.max_steps > 0 && outcome.total_steps >= settings.max_steps) {
      break;
    }
    std::vector<int> order(chunks.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(
        detail::mix_seed(settings.seed, static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    EpochLog log;
    log.epoch = epoch + 1;
    double loss_sum = 0.0;
    double si_snr_weighted = 0.0;
    double baseline_sum = 0.0;
    int64_t items_seen = 0;
    bool hit_step_cap = false;

    size_t pos = 0;
    while (pos < order.size()) {
      std::vector<ChunkRef> batch{chunks[order[pos]]};
      ++pos;
      while (!spectrogram && pos < order.size() &&
             static_cast<int>(batch.size()) < settings.batch_size &&
             chunks[order[pos]].length == batch.front().length) {
        batch.push_back(chunks[order[pos]]);
        ++pos;
      }
      StepResult step;
      if (spectrogram) {
        step = spectrogram_step(settings, items, batch.front(), store,
                                optimizer);
      } else {
        step = waveform_step(settings, items, batch, store, optimizer);
        si_snr_weighted += step.mean_si_snr * batch.size();
        for (const ChunkRef& c : batch) baseline_sum += c.baseline_si_snr;
        items_seen += static_cast<int64_t>(batch.size());
      }
      loss_sum += step.loss;
      ++log.steps_this_epoch;
      ++outcome.total_steps;
      log.last_grad_norm = optimizer.last_grad_norm();
      if (settings.max_steps > 0 &&
          outcome.total_steps >= settings.max_steps) {
        hit_step_cap = true;
        break;
      }
    }

    log.total_steps = outcome.total_steps;
    log.mean_loss =
        log.steps_this_epoch > 0 ? loss_sum / log.steps_this_epoch : 0.0;
    if (!spectrogram && items_seen > 0) {
      log.train_si_snri =
          (si_snr_weighted - baseline_sum) / static_cast<double>(items_seen);
    }
    outcome.epochs_run = epoch + 1;
    outcome.history.push_back(log);
    if (per_epoch) per_epoch(log, store, optimizer);

    if (hit_step_cap) break;
    if (!spectrogram && !std::isnan(settings.early_stop_si_snri) &&
        !std::isnan(log.train_si_snri) &&
        log.train_si_snri >= settings.early_stop_si_snri) {
      outcome.early_stopped = true;
      break;
    }
  }
  return outcome;
}

double training_set_metric(const TrainSettings& settings,
                           const std::string& manifest_dir,
                           const std::vector<SceneRecord>& records,
                           ParameterStore& store) {
  ModelConfig stage1_config;
  ParameterStore stage1_store;
  const ModelConfig* stage1_cfg_ptr = nullptr;
  ParameterStore* stage1_store_ptr = nullptr;
  if (settings.model.kind == ModelKind::kCascadeRefine) {
    Checkpoint ckpt = load_checkpoint(settings.stage1_checkpoint);
    stage1_config =
        model_config_from_json(nlohmann::json::parse(ckpt.config_json));
    stage1_store = std::move(ckpt.store);
    stage1_cfg_ptr = &stage1_config;
    stage1_store_ptr = &stage1_store;
  }
  const EvalResult result =
      evaluate_model(settings.model, store, manifest_dir, records,
                     /*workers=*/1, stage1_cfg_ptr, stage1_store_ptr);
  if (result.aggregate.total == 0) {
    throw DataError("training metric: no utterance produced a score");
  }
  return result.aggregate.average;
}

}  // namespace tdsep
