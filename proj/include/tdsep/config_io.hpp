// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <limits>
#include <string>

#include <json.hpp>

#include "tdsep/model.hpp"
#include "tdsep/params.hpp"
#include "tdsep/roomsim.hpp"

namespace tdsep {

// Configuration files are JSON. Parsers accept partial objects (defaults
// fill the gaps) and reject unknown keys, so typos fail loudly. The
// `*_to_json` functions echo every effective value for provenance.

nlohmann::json load_json_file(const std::string& path);  // ConfigError on failure
void write_text_file(const std::string& path, const std::string& text);

ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json model_config_to_json(const ModelConfig& config);

struct SourceSettings {
  std::string kind = "synthetic";  // "synthetic" | "pool"
  double duration_seconds = 2.0;   // synthetic sources
  std::string dir;                 // pool directory of mono WAVs
};

struct SimulateSettings {
  double sample_rate = 8000.0;
  SceneRanges ranges;
  SourceSettings sources;
  WallFormula wall_formula = WallFormula::kEyring;
  int max_order = -1;
  double coverage_factor = 1.25;
  uint64_t seed = 0;  // overridden by --seed
};

SimulateSettings simulate_settings_from_json(const nlohmann::json& j);
nlohmann::json simulate_settings_to_json(const SimulateSettings& settings);

struct TrainSettings {
  std::string manifest;
  uint64_t seed = 0;
  int epochs = 1;
  int batch_size = 1;
  double chunk_seconds = 1.0;
  std::string loss = "si_snr";  // "si_snr" | "psa"
  // Refinement models train on pre-separated inputs produced by this
  // frequency-domain checkpoint (required when model.kind is
  // cascade_refine, rejected otherwise).
  std::string stage1_checkpoint;
  // Stop after any epoch whose running training SI-SNRi estimate reaches
  // this value; NaN disables.
  double early_stop_si_snri = std::numeric_limits<double>::quiet_NaN();
  int max_steps = 0;  // 0 = unlimited; otherwise stop once reached
  AdamConfig optimizer;
  ModelConfig model;
};

TrainSettings train_settings_from_json(const nlohmann::json& j);
nlohmann::json train_settings_to_json(const TrainSettings& settings);

}  // namespace tdsep
