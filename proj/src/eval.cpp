// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <functional>
#include <sstream>
#include <thread>

#include "tdsep/errors.hpp"
#include "tdsep/wav.hpp"

namespace tdsep {

namespace {

using nlohmann::json;

constexpr const char* kBinNames[4] = {"<15", "15-45", "45-90", ">90"};

// Runs fn(i) for i in [0, n) on `workers` threads. Each index is handled
// exactly once; fn writes only to its own slot, so the result order is
// independent of scheduling.
void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

EvalRow error_row(const SceneRecord& record, const std::string& method,
                  const std::string& message) {
  EvalRow row;
  row.scene_id = record.scene_id;
  row.method = method;
  row.angle_deg = record.angle_difference_deg;
  row.bin = angle_bin(record.angle_difference_deg);
  row.error = message;
  return row;
}

}  // namespace

EvalAggregate aggregate_rows(const std::vector<EvalRow>& rows) {
  EvalAggregate agg;
  std::array<double, 4> sums{};
  double total_sum = 0.0;
  for (const EvalRow& row : rows) {
    if (!row.error.empty()) {
      ++agg.errors;
      continue;
    }
    const int b = static_cast<int>(row.bin);
    sums[b] += row.mean_si_snri;
    ++agg.bin_count[b];
    total_sum += row.mean_si_snri;
    ++agg.total;
  }
  for (int b = 0; b < 4; ++b) {
    agg.bin_mean[b] = agg.bin_count[b] > 0 ? sums[b] / agg.bin_count[b] : 0.0;
  }
  agg.average = agg.total > 0 ? total_sum / agg.total : 0.0;
  return agg;
}

std::string format_aggregate_table(
    const std::vector<std::pair<std::string, EvalAggregate>>& methods) {
  std::ostringstream out;
  char buf[64];
  out << "SI-SNRi (dB) by source angle difference (deg); reverberant "
         "channel-1 references\n";
  std::snprintf(buf, sizeof(buf), "%-14s", "method");
  out << buf;
  for (const char* name : kBinNames) {
    std::snprintf(buf, sizeof(buf), "%10s", name);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "%10s", "Ave.");
  out << buf << "\n";
  for (const auto& [name, agg] : methods) {
    std::snprintf(buf, sizeof(buf), "%-14s", name.c_str());
    out << buf;
    for (int b = 0; b < 4; ++b) {
      if (agg.bin_count[b] > 0) {
        std::snprintf(buf, sizeof(buf), "%10.2f", agg.bin_mean[b]);
      } else {
        std::snprintf(buf, sizeof(buf), "%10s", "-");
      }
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%10.2f", agg.average);
    out << buf << "\n";
  }
  return out.str();
}

json eval_row_to_json(const EvalRow& row) {
  json j{{"record", "utterance"},
         {"scene_id", row.scene_id},
         {"method", row.method},
         {"angle_deg", row.angle_deg},
         {"angle_bin", to_string(row.bin)}};
  if (!row.error.empty()) {
    j["error"] = row.error;
    return j;
  }
  j["si_snr"] = row.si_snr;
  j["si_snri"] = row.si_snri;
  j["permutation"] = row.permutation;
  j["mean_si_snri"] = row.mean_si_snri;
  return j;
}

json eval_aggregate_to_json(const std::string& method,
                            const EvalAggregate& agg) {
  json bins = json::object();
  for (int b = 0; b < 4; ++b) {
    bins[kBinNames[b]] = {{"mean_si_snri", agg.bin_mean[b]},
                          {"count", agg.bin_count[b]}};
  }
  return json{{"record", "aggregate"},
              {"method", method},
              {"bins", bins},
              {"Ave.", agg.average},
              {"utterances", agg.total},
              {"errors", agg.errors},
              {"reference_convention", "reverberant channel-1 source images"}};
}

LoadedScene load_scene_audio(const std::string& manifest_dir,
                             const SceneRecord& record) {
  LoadedScene scene;
  scene.mixture =
      wav_read(resolve_relative(manifest_dir, record.mixture_path));
  if (scene.mixture.num_channels != record.num_mics) {
    throw DataError(record.scene_id + ": mixture channel count " +
                    std::to_string(scene.mixture.num_channels) +
                    " does not match the manifest");
  }
  for (const std::string& path : record.reference_paths) {
    scene.references.push_back(
        wav_read(resolve_relative(manifest_dir, path)));
    const MultichannelAudio& ref = scene.references.back();
    if (ref.num_channels != record.num_mics ||
        ref.num_samples != scene.mixture.num_samples) {
      throw DataError(record.scene_id + ": reference " + path +
                      " disagrees with the mixture layout");
    }
  }
  return scene;
}

EvalRow score_separation(const SceneRecord& record, const std::string& method,
                         const std::vector<std::vector<double>>& estimates,
                         const LoadedScene& scene) {
  EvalRow row;
  row.scene_id = record.scene_id;
  row.method = method;
  row.angle_deg = record.angle_difference_deg;
  row.bin = angle_bin(record.angle_difference_deg);
  const int num_refs = static_cast<int>(scene.references.size());
  if (static_cast<int>(estimates.size()) != num_refs) {
    throw DataError(record.scene_id + ": estimate count " +
                    std::to_string(estimates.size()) + " != reference count " +
                    std::to_string(num_refs));
  }
  int64_t len = scene.mixture.num_samples;
  for (const auto& est : estimates) {
    len = std::min<int64_t>(len, static_cast<int64_t>(est.size()));
  }
  if (len <= 0) throw DataError(record.scene_id + ": empty estimates");
  std::vector<std::vector<double>> ests(num_refs), refs(num_refs);
  for (int c = 0; c < num_refs; ++c) {
    ests[c].assign(estimates[c].begin(), estimates[c].begin() + len);
    const double* r = scene.references[c].channel(0);
    refs[c].assign(r, r + len);
  }
  const PermutationResult pit = pit_si_snr(ests, refs);
  row.permutation = pit.best_permutation;
  row.si_snr = pit.per_pair_scores;
  const double* mix = scene.mixture.channel(0);
  double sum = 0.0;
  for (int c = 0; c < num_refs; ++c) {
    const double base = si_snr(mix, refs[c].data(), len);
    row.si_snri.push_back(row.si_snr[c] - base);
    sum += row.si_snri.back();
  }
  row.mean_si_snri = sum / num_refs;
  return row;
}

EvalResult evaluate_model(const ModelConfig& config, ParameterStore& store,
                          const std::string& manifest_dir,
                          const std::vector<SceneRecord>& records, int workers,
                          const ModelConfig* stage1_config,
                          ParameterStore* stage1_store) {
  if (config.kind == ModelKind::kCascadeRefine &&
      (stage1_config == nullptr || stage1_store == nullptr)) {
    throw ConfigError(
        "a cascaded refinement model needs its stage-1 checkpoint to run");
  }
  EvalResult result;
  result.rows.resize(records.size());
  parallel_for(static_cast<int>(records.size()), workers, [&](int i) {
    const SceneRecord& record = records[i];
    try {
      const LoadedScene scene = load_scene_audio(manifest_dir, record);
      std::vector<std::vector<double>> estimates;
      switch (config.kind) {
        case ModelKind::kTasnet:
          estimates = separate(config, store, scene.mixture);
          break;
        case ModelKind::kFreqTcn:
          estimates = freq_separate(config, store, scene.mixture);
          break;
        case ModelKind::kCascadeRefine:
          estimates = cascaded_separate(*stage1_config, *stage1_store, config,
                                        store, scene.mixture);
          break;
      }
      result.rows[i] = score_separation(record, "model", estimates, scene);
    } catch (const std::exception& e) {
      result.rows[i] = error_row(record, "model", e.what());
    }
  });
  result.aggregate = aggregate_rows(result.rows);
  return result;
}

EvalResult evaluate_oracle(OracleKind kind, const std::string& manifest_dir,
                           const std::vector<SceneRecord>& records,
                           int workers) {
  const std::string method = to_string(kind);
  EvalResult result;
  result.rows.resize(records.size());
  const AnalysisSpec analysis = default_oracle_analysis();
  parallel_for(static_cast<int>(records.size()), workers, [&](int i) {
    const SceneRecord& record = records[i];
    try {
      const LoadedScene scene = load_scene_audio(manifest_dir, record);
      const OracleSeparation sep =
          oracle_separate(scene.mixture, scene.references, kind, analysis);
      EvalRow row;
      row.scene_id = record.scene_id;
      row.method = method;
      row.angle_deg = record.angle_difference_deg;
      row.bin = angle_bin(record.angle_difference_deg);
      row.si_snr = sep.si_snr_per_source;
      row.si_snri = sep.si_snri_per_source;
      row.permutation = sep.permutation;
      double sum = 0.0;
      for (double v : row.si_snri) sum += v;
      row.mean_si_snri =
          row.si_snri.empty() ? 0.0 : sum / static_cast<double>(row.si_snri.size());
      result.rows[i] = std::move(row);
    } catch (const std::exception& e) {
      result.rows[i] = error_row(record, method, e.what());
    }
  });
  result.aggregate = aggregate_rows(result.rows);
  return result;
}

}  // namespace tdsep
