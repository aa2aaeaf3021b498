// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdsep/manifest.hpp"
#include "tdsep/model.hpp"
#include "tdsep/objectives.hpp"

namespace tdsep {

// Scores use the reverberant channel-1 source images as references; SI-SNRi
// is measured against the channel-1 mixture. Reports state this convention.

struct EvalRow {
  std::string scene_id;
  std::string method;  // "model" or an oracle name
  double angle_deg = 0.0;
  AngleBin bin = AngleBin::kLt15;
  std::vector<double> si_snr;    // per reference slot, best permutation
  std::vector<double> si_snri;
  std::vector<int> permutation;  // estimate index chosen for each slot
  double mean_si_snri = 0.0;
  std::string error;  // nonempty: scene skipped, reason recorded
};

struct EvalAggregate {
  std::array<double, 4> bin_mean{};  // <15, 15-45, 45-90, >90
  std::array<int, 4> bin_count{};
  double average = 0.0;  // mean over every scored utterance
  int total = 0;
  int errors = 0;
};

EvalAggregate aggregate_rows(const std::vector<EvalRow>& rows);

// Mean-SI-SNRi table, columns {<15, 15-45, 45-90, >90, Ave.}, one row per
// method.
std::string format_aggregate_table(
    const std::vector<std::pair<std::string, EvalAggregate>>& methods);

nlohmann::json eval_row_to_json(const EvalRow& row);
nlohmann::json eval_aggregate_to_json(const std::string& method,
                                      const EvalAggregate& aggregate);

struct LoadedScene {
  MultichannelAudio mixture;
  std::vector<MultichannelAudio> references;
};

// Reads the rendered audio behind a manifest record and cross-checks the
// channel/length bookkeeping.
LoadedScene load_scene_audio(const std::string& manifest_dir,
                             const SceneRecord& record);

// Best-permutation SI-SNR/SI-SNRi of `estimates` against the channel-1
// references; waveforms are trimmed to the shortest length involved.
EvalRow score_separation(const SceneRecord& record, const std::string& method,
                         const std::vector<std::vector<double>>& estimates,
                         const LoadedScene& scene);

struct EvalResult {
  std::vector<EvalRow> rows;
  EvalAggregate aggregate;
};

// Runs the checkpointed model over every manifest record. `workers`
// parallelizes across scenes; results are ordered by record regardless.
// Cascaded models require the stage-1 pair; others ignore it.
EvalResult evaluate_model(const ModelConfig& config, ParameterStore& store,
                          const std::string& manifest_dir,
                          const std::vector<SceneRecord>& records, int workers,
                          const ModelConfig* stage1_config = nullptr,
                          ParameterStore* stage1_store = nullptr);

// Oracle-mask separation over every manifest record.
EvalResult evaluate_oracle(OracleKind kind, const std::string& manifest_dir,
                           const std::vector<SceneRecord>& records,
                           int workers);

}  // namespace tdsep
