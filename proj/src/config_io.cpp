// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/config_io.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <vector>

namespace tdsep {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) {
    throw ConfigError(where + ": expected a JSON object");
  }
  for (const auto& item : j.items()) {
    if (allowed.find(item.key()) == allowed.end()) {
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& slot) {
  if (j.contains(key)) {
    try {
      slot = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

void maybe_range(const json& j, const char* key, std::array<double, 2>& slot) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2) {
    throw ConfigError(std::string("config key '") + key +
                      "': expected [lo, hi]");
  }
  slot = {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << text;
  if (!out) throw DataError("write failed: " + path);
}

ModelConfig model_config_from_json(const json& j) {
  reject_unknown_keys(
      j,
      {"kind", "num_basis", "encoder_kernel", "encoder_stride", "tcn_repeats",
       "blocks_per_repeat", "bottleneck_dim", "conv_channels", "conv_kernel",
       "num_speakers", "normalization", "fusion", "frontend", "feature_set",
       "num_channels", "mic_pairs", "spatial_dim", "kernel_length",
       "kernel_stride", "stft_window", "stft_hop", "sample_rate"},
      "model");
  ModelConfig c;
  std::string kind = to_string(c.kind);
  std::string normalization = to_string(c.normalization);
  std::string fusion = to_string(c.fusion);
  std::string frontend = to_string(c.frontend);
  maybe(j, "kind", kind);
  maybe(j, "num_basis", c.num_basis);
  maybe(j, "encoder_kernel", c.encoder_kernel);
  maybe(j, "encoder_stride", c.encoder_stride);
  maybe(j, "tcn_repeats", c.tcn_repeats);
  maybe(j, "blocks_per_repeat", c.blocks_per_repeat);
  maybe(j, "bottleneck_dim", c.bottleneck_dim);
  maybe(j, "conv_channels", c.conv_channels);
  maybe(j, "conv_kernel", c.conv_kernel);
  maybe(j, "num_speakers", c.num_speakers);
  maybe(j, "normalization", normalization);
  maybe(j, "fusion", fusion);
  maybe(j, "frontend", frontend);
  maybe(j, "num_channels", c.num_channels);
  maybe(j, "mic_pairs", c.mic_pairs);
  maybe(j, "spatial_dim", c.spatial_dim);
  maybe(j, "kernel_length", c.kernel_length);
  maybe(j, "kernel_stride", c.kernel_stride);
  maybe(j, "stft_window", c.stft_window);
  maybe(j, "stft_hop", c.stft_hop);
  maybe(j, "sample_rate", c.sample_rate);
  c.kind = model_kind_from_string(kind);
  c.normalization = normalization_from_string(normalization);
  c.fusion = fusion_from_string(fusion);
  c.frontend = frontend_from_string(frontend);
  if (j.contains("feature_set")) {
    const auto& fs = j.at("feature_set");
    if (!fs.is_array()) {
      throw ConfigError("model.feature_set: expected an array of strings");
    }
    c.feature_set = FeatureSet{};
    for (const auto& item : fs) {
      const std::string name = item.get<std::string>();
      if (name == "LPS") {
        c.feature_set.lps = true;
      } else if (name == "cosIPD") {
        c.feature_set.cos_ipd = true;
      } else if (name == "sinIPD") {
        c.feature_set.sin_ipd = true;
      } else {
        throw ConfigError("model.feature_set: unknown feature '" + name + "'");
      }
    }
  }
  return c;
}

json model_config_to_json(const ModelConfig& c) {
  json fs = json::array();
  if (c.feature_set.lps) fs.push_back("LPS");
  if (c.feature_set.cos_ipd) fs.push_back("cosIPD");
  if (c.feature_set.sin_ipd) fs.push_back("sinIPD");
  return json{{"kind", to_string(c.kind)},
              {"num_basis", c.num_basis},
              {"encoder_kernel", c.encoder_kernel},
              {"encoder_stride", c.encoder_stride},
              {"tcn_repeats", c.tcn_repeats},
              {"blocks_per_repeat", c.blocks_per_repeat},
              {"bottleneck_dim", c.bottleneck_dim},
              {"conv_channels", c.conv_channels},
              {"conv_kernel", c.conv_kernel},
              {"num_speakers", c.num_speakers},
              {"normalization", to_string(c.normalization)},
              {"fusion", to_string(c.fusion)},
              {"frontend", to_string(c.frontend)},
              {"feature_set", fs},
              {"num_channels", c.num_channels},
              {"mic_pairs", c.mic_pairs},
              {"spatial_dim", c.spatial_dim},
              {"kernel_length", c.kernel_length},
              {"kernel_stride", c.kernel_stride},
              {"stft_window", c.stft_window},
              {"stft_hop", c.stft_hop},
              {"sample_rate", c.sample_rate}};
}

SimulateSettings simulate_settings_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"sample_rate", "ranges", "array", "sources",
                       "num_sources", "wall_formula", "max_order",
                       "coverage_factor", "seed"},
                      "simulate");
  SimulateSettings s;
  maybe(j, "sample_rate", s.sample_rate);
  maybe(j, "seed", s.seed);
  std::string wall = to_string(s.wall_formula);
  maybe(j, "wall_formula", wall);
  s.wall_formula = wall_formula_from_string(wall);
  maybe(j, "max_order", s.max_order);
  maybe(j, "coverage_factor", s.coverage_factor);
  maybe(j, "num_sources", s.ranges.num_sources);
  if (j.contains("ranges")) {
    const json& r = j.at("ranges");
    reject_unknown_keys(r,
                        {"room_x", "room_y", "room_z", "t60", "snr_db",
                         "height", "wall_margin", "min_source_array_dist"},
                        "simulate.ranges");
    maybe_range(r, "room_x", s.ranges.room_x);
    maybe_range(r, "room_y", s.ranges.room_y);
    maybe_range(r, "room_z", s.ranges.room_z);
    maybe_range(r, "t60", s.ranges.t60);
    maybe_range(r, "snr_db", s.ranges.snr_db);
    maybe_range(r, "height", s.ranges.height);
    maybe(r, "wall_margin", s.ranges.wall_margin);
    maybe(r, "min_source_array_dist", s.ranges.min_source_array_dist);
  }
  if (j.contains("array")) {
    const json& a = j.at("array");
    reject_unknown_keys(a, {"num_mics", "radius"}, "simulate.array");
    maybe(a, "num_mics", s.ranges.num_mics);
    maybe(a, "radius", s.ranges.mic_radius);
  }
  if (j.contains("sources")) {
    const json& src = j.at("sources");
    reject_unknown_keys(src, {"kind", "duration_seconds", "dir"},
                        "simulate.sources");
    maybe(src, "kind", s.sources.kind);
    maybe(src, "duration_seconds", s.sources.duration_seconds);
    maybe(src, "dir", s.sources.dir);
    if (s.sources.kind != "synthetic" && s.sources.kind != "pool") {
      throw ConfigError("simulate.sources.kind must be 'synthetic' or 'pool'");
    }
    if (s.sources.kind == "pool" && s.sources.dir.empty()) {
      throw ConfigError("simulate.sources.dir required for a WAV pool");
    }
    if (s.sources.kind == "synthetic" && s.sources.duration_seconds <= 0.0) {
      throw ConfigError("simulate.sources.duration_seconds must be positive");
    }
  }
  s.ranges.validate();
  return s;
}

json simulate_settings_to_json(const SimulateSettings& s) {
  return json{
      {"sample_rate", s.sample_rate},
      {"seed", s.seed},
      {"wall_formula", to_string(s.wall_formula)},
      {"max_order", s.max_order},
      {"coverage_factor", s.coverage_factor},
      {"num_sources", s.ranges.num_sources},
      {"ranges",
       {{"room_x", s.ranges.room_x},
        {"room_y", s.ranges.room_y},
        {"room_z", s.ranges.room_z},
        {"t60", s.ranges.t60},
        {"snr_db", s.ranges.snr_db},
        {"height", s.ranges.height},
        {"wall_margin", s.ranges.wall_margin},
        {"min_source_array_dist", s.ranges.min_source_array_dist}}},
      {"array",
       {{"num_mics", s.ranges.num_mics}, {"radius", s.ranges.mic_radius}}},
      {"sources",
       {{"kind", s.sources.kind},
        {"duration_seconds", s.sources.duration_seconds},
        {"dir", s.sources.dir}}}};
}

TrainSettings train_settings_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"manifest", "seed", "epochs", "batch_size",
                       "chunk_seconds", "loss", "stage1_checkpoint",
                       "early_stop_si_snri", "max_steps", "optimizer",
                       "model"},
                      "train");
  TrainSettings s;
  maybe(j, "manifest", s.manifest);
  maybe(j, "seed", s.seed);
  maybe(j, "epochs", s.epochs);
  maybe(j, "batch_size", s.batch_size);
  maybe(j, "chunk_seconds", s.chunk_seconds);
  maybe(j, "loss", s.loss);
  maybe(j, "stage1_checkpoint", s.stage1_checkpoint);
  maybe(j, "early_stop_si_snri", s.early_stop_si_snri);
  maybe(j, "max_steps", s.max_steps);
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    reject_unknown_keys(o, {"lr", "beta1", "beta2", "eps", "clip_norm"},
                        "train.optimizer");
    maybe(o, "lr", s.optimizer.lr);
    maybe(o, "beta1", s.optimizer.beta1);
    maybe(o, "beta2", s.optimizer.beta2);
    maybe(o, "eps", s.optimizer.eps);
    maybe(o, "clip_norm", s.optimizer.clip_norm);
  }
  if (j.contains("model")) s.model = model_config_from_json(j.at("model"));
  if (s.manifest.empty()) throw ConfigError("train.manifest is required");
  if (s.epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (s.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (s.chunk_seconds <= 0.0) {
    throw ConfigError("train.chunk_seconds must be positive");
  }
  if (s.loss != "si_snr" && s.loss != "psa") {
    throw ConfigError("train.loss must be 'si_snr' or 'psa'");
  }
  if (s.loss == "psa" && s.model.kind != ModelKind::kFreqTcn) {
    throw ConfigError("the PSA loss trains the frequency-domain model");
  }
  if (s.loss == "si_snr" && s.model.kind == ModelKind::kFreqTcn) {
    throw ConfigError("the frequency-domain model trains with the PSA loss");
  }
  if (s.loss == "psa" && s.batch_size != 1) {
    throw ConfigError(
        "the frequency-domain model trains one utterance chunk per step "
        "(batch_size 1)");
  }
  if (s.loss == "psa" && !std::isnan(s.early_stop_si_snri)) {
    throw ConfigError(
        "early_stop_si_snri tracks the SI-SNR objective; it does not apply "
        "to PSA training");
  }
  if ((s.model.kind == ModelKind::kCascadeRefine) !=
      !s.stage1_checkpoint.empty()) {
    throw ConfigError(
        "stage1_checkpoint is required for cascade_refine models and "
        "meaningless otherwise");
  }
  if (s.max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
  s.model.validate();
  return s;
}

json train_settings_to_json(const TrainSettings& s) {
  json j{{"manifest", s.manifest},
         {"seed", s.seed},
         {"epochs", s.epochs},
         {"batch_size", s.batch_size},
         {"chunk_seconds", s.chunk_seconds},
         {"loss", s.loss},
         {"stage1_checkpoint", s.stage1_checkpoint},
         {"max_steps", s.max_steps},
         {"optimizer",
          {{"lr", s.optimizer.lr},
           {"beta1", s.optimizer.beta1},
           {"beta2", s.optimizer.beta2},
           {"eps", s.optimizer.eps},
           {"clip_norm", s.optimizer.clip_norm}}},
         {"model", model_config_to_json(s.model)}};
  if (!std::isnan(s.early_stop_si_snri)) {
    j["early_stop_si_snri"] = s.early_stop_si_snri;
  }
  return j;
}

}  // namespace tdsep
