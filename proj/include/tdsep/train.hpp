// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "tdsep/config_io.hpp"
#include "tdsep/eval.hpp"
#include "tdsep/manifest.hpp"
#include "tdsep/model.hpp"
#include "tdsep/params.hpp"

namespace tdsep {

// One training utterance: the rendered mixture, the channel-1 source
// images it should separate into, and (for refinement models) the
// pre-separated stage-1 inputs.
struct TrainItem {
  MultichannelAudio mixture;
  std::vector<std::vector<double>> references;
  std::vector<std::vector<double>> stage1;
  std::string scene_id;
  double angle_deg = 0.0;
};

// Loads every manifest record; for cascade_refine settings this also runs
// the stage-1 model from settings.stage1_checkpoint over each mixture.
std::vector<TrainItem> load_training_items(
    const TrainSettings& settings, const std::vector<SceneRecord>& records,
    const std::string& manifest_dir);

struct EpochLog {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  // Running estimate: mean chunk SI-SNR under the chosen permutation minus
  // the mixture baseline. NaN for PSA training.
  double train_si_snri = std::numeric_limits<double>::quiet_NaN();
  int steps_this_epoch = 0;
  int total_steps = 0;
  double last_grad_norm = 0.0;
};

struct TrainOutcome {
  int epochs_run = 0;  // count includes epochs restored from a checkpoint
  int total_steps = 0;
  bool early_stopped = false;
  std::vector<EpochLog> history;
  // Mean SI-SNRi of the final weights over the full training utterances,
  // computed by the same routine the evaluation command uses.
  double final_metric = std::numeric_limits<double>::quiet_NaN();
};

// Called after each epoch with the freshly logged epoch; the store and
// optimizer hold the post-epoch state (checkpointing hook).
using EpochCallback =
    std::function<void(const EpochLog&, ParameterStore&, AdamOptimizer&)>;

// Epoch loop: chunk utterances, shuffle with an epoch-keyed RNG, group
// equal-length chunks into batches, and run forward/uPIT-loss/backward/Adam
// steps. Deterministic for a fixed seed; resuming at `start_epoch` with the
// checkpointed store/optimizer reproduces the uninterrupted trajectory. A
// non-finite loss raises NumericError naming the first non-finite tensor.
TrainOutcome train_model(const TrainSettings& settings,
                         const std::vector<TrainItem>& items,
                         ParameterStore& store, AdamOptimizer& optimizer,
                         int start_epoch, int start_steps,
                         const EpochCallback& per_epoch);

// The full-utterance training metric behind TrainOutcome::final_metric.
double training_set_metric(const TrainSettings& settings,
                           const std::string& manifest_dir,
                           const std::vector<SceneRecord>& records,
                           ParameterStore& store);

}  // namespace tdsep
