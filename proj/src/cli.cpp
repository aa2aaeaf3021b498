// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "tdsep/config_io.hpp"
#include "tdsep/errors.hpp"
#include "tdsep/eval.hpp"
#include "tdsep/featio.hpp"
#include "tdsep/kernelfeat.hpp"
#include "tdsep/manifest.hpp"
#include "tdsep/model.hpp"
#include "tdsep/objectives.hpp"
#include "tdsep/roomsim.hpp"
#include "tdsep/stft.hpp"
#include "tdsep/synth.hpp"
#include "tdsep/train.hpp"
#include "tdsep/wav.hpp"

namespace tdsep {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void run_parallel(int n, int workers, const std::function<void(int)>& fn) {
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

std::string scene_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%06d", index);
  return buf;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string config;
  std::string out;
  int num_scenes = 0;
  uint64_t seed = 0;
  bool seed_given = false;
  int workers = 1;
};

// Speech pool: sorted WAV listing, mono conversion and rate check at use.
std::vector<std::string> list_pool(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    throw ConfigError("source pool is not a directory: " + dir);
  }
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("source pool has no .wav files: " + dir);
  return files;
}

MultichannelAudio make_source(const SimulateSettings& settings,
                              const std::vector<std::string>& pool,
                              const std::string& ref) {
  const double fs = settings.sample_rate;
  if (ref.rfind("synthetic:", 0) == 0) {
    const uint64_t seed = std::stoull(ref.substr(10));
    const int64_t n = std::llround(settings.sources.duration_seconds * fs);
    MultichannelAudio audio(1, n, fs);
    const std::vector<double> wave = make_synthetic_voice(seed, n, fs);
    std::copy(wave.begin(), wave.end(), audio.channel(0));
    return audio;
  }
  (void)pool;
  const std::string path = settings.sources.dir + "/" + ref;
  MultichannelAudio raw = wav_read(path);
  if (raw.sample_rate != fs) {
    throw DataError("pool file " + path + " has sample rate " +
                    std::to_string(raw.sample_rate) + ", expected " +
                    std::to_string(fs));
  }
  MultichannelAudio mono(1, raw.num_samples, fs);
  std::copy(raw.channel(0), raw.channel(0) + raw.num_samples,
            mono.channel(0));
  return mono;
}

// The record a fresh run would produce for scene `index`, paths included,
// hashes blank until rendered.
SceneRecord plan_scene(const SimulateSettings& settings,
                       const std::vector<std::string>& pool, int index) {
  const uint64_t scene_seed = detail::mix_seed(settings.seed, index);
  const SceneSpec spec = sample_scene(scene_seed, settings.ranges);
  SceneRecord r;
  r.scene_id = scene_name(index);
  r.index = index;
  r.seed = scene_seed;
  r.sample_rate = settings.sample_rate;
  r.room_dimensions = spec.room.dimensions;
  r.t60 = spec.room.t60;
  r.array_center = spec.room.array_center;
  r.source_positions = spec.room.source_positions;
  r.speed_of_sound = spec.room.speed_of_sound;
  r.num_mics = settings.ranges.num_mics;
  r.mic_radius = settings.ranges.mic_radius;
  r.mixing_snr_db = spec.mixing_snr_db;
  r.angle_difference_deg = angle_difference(spec);
  const int num_sources = settings.ranges.num_sources;
  if (settings.sources.kind == "synthetic") {
    for (int s = 0; s < num_sources; ++s) {
      r.source_audio_refs.push_back(
          "synthetic:" +
          std::to_string(detail::mix_seed(scene_seed, 1000 + s)));
    }
  } else {
    std::mt19937_64 rng(detail::mix_seed(scene_seed, 2000));
    std::vector<int> picks;
    while (static_cast<int>(picks.size()) < num_sources) {
      const int p = static_cast<int>(rng() % pool.size());
      if (std::find(picks.begin(), picks.end(), p) == picks.end() ||
          static_cast<int>(pool.size()) < num_sources) {
        picks.push_back(p);
      }
    }
    for (int p : picks) {
      r.source_audio_refs.push_back(fs::path(pool[p]).filename().string());
    }
  }
  r.mixture_path = r.scene_id + "/mixture.wav";
  for (int s = 0; s < num_sources; ++s) {
    r.reference_paths.push_back(r.scene_id + "/ref" + std::to_string(s + 1) +
                                ".wav");
  }
  return r;
}

// True when the on-disk audio matches the record's hashes.
bool rendered_files_match(const std::string& out_dir, const SceneRecord& r) {
  if (r.mixture_hash.empty()) return false;
  try {
    if (hash_file_hex(resolve_relative(out_dir, r.mixture_path)) !=
        r.mixture_hash) {
      return false;
    }
    for (size_t s = 0; s < r.reference_paths.size(); ++s) {
      if (hash_file_hex(resolve_relative(out_dir, r.reference_paths[s])) !=
          r.reference_hashes[s]) {
        return false;
      }
    }
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

void render_scene(const SimulateSettings& settings,
                  const std::vector<std::string>& pool,
                  const std::string& out_dir, SceneRecord& r) {
  const SceneSpec spec = scene_spec_from_record(r);
  std::vector<MultichannelAudio> sources;
  for (const std::string& ref : r.source_audio_refs) {
    sources.push_back(make_source(settings, pool, ref));
  }
  RirOptions options;
  options.max_order = settings.max_order;
  options.coverage_factor = settings.coverage_factor;
  options.formula = settings.wall_formula;
  const SpatializeResult rendered = spatialize_mix(spec, sources, options);
  fs::create_directories(fs::path(out_dir) / r.scene_id);
  const std::string mix_path = resolve_relative(out_dir, r.mixture_path);
  wav_write(mix_path, rendered.mixture, WavFormat::kFloat32);
  r.mixture_hash = hash_file_hex(mix_path);
  r.reference_hashes.clear();
  for (size_t s = 0; s < rendered.references.size(); ++s) {
    const std::string ref_path =
        resolve_relative(out_dir, r.reference_paths[s]);
    wav_write(ref_path, rendered.references[s], WavFormat::kFloat32);
    r.reference_hashes.push_back(hash_file_hex(ref_path));
  }
}

void cmd_simulate(const SimulateArgs& args) {
  SimulateSettings settings =
      simulate_settings_from_json(load_json_file(args.config));
  if (args.seed_given) settings.seed = args.seed;
  if (args.num_scenes < 1) throw ConfigError("--num-scenes must be >= 1");
  fs::create_directories(args.out);

  json echo = simulate_settings_to_json(settings);
  echo["num_scenes"] = args.num_scenes;
  write_text_file((fs::path(args.out) / "config.json").string(),
                  echo.dump(2) + "\n");

  std::vector<std::string> pool;
  if (settings.sources.kind == "pool") pool = list_pool(settings.sources.dir);

  // Previously rendered scenes are reused when their parameters, paths, and
  // file hashes still match the current settings.
  std::map<int, SceneRecord> existing;
  const std::string manifest_path =
      (fs::path(args.out) / "manifest.jsonl").string();
  if (fs::exists(manifest_path)) {
    for (SceneRecord& r : read_manifest(manifest_path)) {
      existing.emplace(r.index, std::move(r));
    }
  }

  std::vector<SceneRecord> records(args.num_scenes);
  std::vector<char> cached(args.num_scenes, 0);
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::string first_error;
  run_parallel(args.num_scenes, args.workers, [&](int i) {
    if (failed.load()) return;
    try {
      SceneRecord planned = plan_scene(settings, pool, i);
      const auto it = existing.find(i);
      if (it != existing.end() && same_scene_parameters(it->second, planned) &&
          it->second.mixture_path == planned.mixture_path &&
          it->second.reference_paths == planned.reference_paths &&
          rendered_files_match(args.out, it->second)) {
        records[i] = it->second;
        cached[i] = 1;
        return;
      }
      render_scene(settings, pool, args.out, planned);
      records[i] = std::move(planned);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!failed.exchange(true)) {
        first_error = scene_name(i) + std::string(": ") + e.what();
      }
    }
  });
  if (failed.load()) throw DataError("simulation failed at " + first_error);

  write_manifest(manifest_path, records);

  int reused = 0;
  std::array<int, 4> bins{};
  for (int i = 0; i < args.num_scenes; ++i) {
    reused += cached[i];
    ++bins[static_cast<int>(angle_bin(records[i].angle_difference_deg))];
  }
  std::cout << "simulated " << args.num_scenes << " scenes (" << reused
            << " reused) -> " << manifest_path << "\n";
  std::cout << "angle-difference histogram: <15: " << bins[0]
            << "  15-45: " << bins[1] << "  45-90: " << bins[2]
            << "  >90: " << bins[3] << "\n";
}

// ---------------------------------------------------------------------------
// features

struct FeaturesArgs {
  std::string manifest;
  std::string pairs = "1-4,2-5,3-6,1-2,3-4,5-6";
  std::string out;
  int kernel_length = 64;
  int kernel_stride = 32;
  int workers = 1;
};

FeatureMap trig_of(const FeatureMap& ipd, bool use_sin) {
  FeatureMap out(ipd.num_frames, ipd.dim, ipd.frame_hop);
  for (size_t i = 0; i < ipd.values.size(); ++i) {
    out.values[i] = use_sin ? std::sin(ipd.values[i]) : std::cos(ipd.values[i]);
  }
  return out;
}

FeatureMap kernel_log_power(const MultichannelAudio& audio,
                            const KernelBank& bank) {
  const auto [re, im] = conv_analysis(audio, 0, bank);
  FeatureMap out(re.num_frames, re.dim, re.frame_hop);
  const double floor_power = std::pow(10.0, -120.0 / 10.0);
  for (size_t i = 0; i < re.values.size(); ++i) {
    const double p =
        re.values[i] * re.values[i] + im.values[i] * im.values[i];
    out.values[i] = 10.0 * std::log10(std::max(p, floor_power));
  }
  return out;
}

void cmd_features(const FeaturesArgs& args) {
  if (args.out.empty()) throw ConfigError("--out is required");
  if (args.kernel_length < 2 || args.kernel_length % 2 != 0) {
    throw ConfigError("--kernel-length must be even and >= 2");
  }
  if (args.kernel_stride < 1 || args.kernel_stride > args.kernel_length) {
    throw ConfigError("--kernel-stride must be in [1, kernel length]");
  }
  const std::vector<MicPair> pairs = parse_mic_pairs(args.pairs);
  const std::vector<SceneRecord> records = read_manifest(args.manifest);
  if (records.empty()) throw DataError("manifest has no scenes");
  const std::string manifest_dir = parent_directory(args.manifest);
  fs::create_directories(args.out);

  const AnalysisSpec analysis{args.kernel_length, args.kernel_stride,
                              args.kernel_length,
                              WindowType::kHann};
  const KernelBank bank =
      make_stft_kernels(args.kernel_length, args.kernel_stride,
                        WindowType::kHann, KernelMode::kFixed);

  struct SceneOutcome {
    std::string error;
    double max_delta = 0.0;
    int frames = 0;
  };
  std::vector<SceneOutcome> outcomes(records.size());

  run_parallel(static_cast<int>(records.size()), args.workers, [&](int i) {
    const SceneRecord& record = records[i];
    SceneOutcome& outcome = outcomes[i];
    try {
      const LoadedScene scene = load_scene_audio(manifest_dir, record);
      const MultichannelAudio& audio = scene.mixture;
      for (const MicPair& p : pairs) {
        if (p.first > audio.num_channels || p.second > audio.num_channels) {
          throw DataError("pair uses a channel beyond the recording");
        }
      }
      std::vector<ComplexSpectrogram> specs;
      specs.reserve(audio.num_channels);
      for (int c = 0; c < audio.num_channels; ++c) {
        specs.push_back(stft(audio, c, analysis));
      }
      const FeatureMap ipd_stft =
          ipd_from_spectra(specs, pairs, analysis.hop);
      const FeatureMap ipd_kernel = ipd_from_kernels(audio, bank, pairs);
      const FeatureMap lps_stft = log_power_spectrum(specs[0], analysis.hop);
      const FeatureMap lps_kernel = kernel_log_power(audio, bank);

      const int frames = std::min(ipd_stft.num_frames, ipd_kernel.num_frames);
      outcome.frames = frames;
      double max_delta = 0.0;
      for (int f = 0; f < frames; ++f) {
        for (int d = 0; d < ipd_stft.dim; ++d) {
          const double delta = std::abs(wrap_angle(
              ipd_stft.values[ipd_stft.idx(f, d)] -
              ipd_kernel.values[ipd_kernel.idx(f, d)]));
          max_delta = std::max(max_delta, delta);
        }
      }
      outcome.max_delta = max_delta;

      const std::string base =
          (fs::path(args.out) / record.scene_id).string();
      write_feature_archive(base + ".stft.lps.feat", lps_stft);
      write_feature_archive(base + ".stft.cosipd.feat",
                            trig_of(ipd_stft, false));
      write_feature_archive(base + ".stft.sinipd.feat",
                            trig_of(ipd_stft, true));
      write_feature_archive(base + ".kernel.lps.feat", lps_kernel);
      write_feature_archive(base + ".kernel.cosipd.feat",
                            trig_of(ipd_kernel, false));
      write_feature_archive(base + ".kernel.sinipd.feat",
                            trig_of(ipd_kernel, true));
    } catch (const std::exception& e) {
      outcome.error = e.what();
    }
  });

  const std::string report_path =
      (fs::path(args.out) / "features_report.jsonl").string();
  std::ofstream report(report_path, std::ios::binary | std::ios::trunc);
  if (!report) throw DataError("cannot write " + report_path);
  int errors = 0;
  double overall = 0.0;
  for (size_t i = 0; i < records.size(); ++i) {
    json line{{"scene_id", records[i].scene_id},
              {"pairs", static_cast<int>(pairs.size())},
              {"bins", bank.num_bins}};
    if (!outcomes[i].error.empty()) {
      line["error"] = outcomes[i].error;
      ++errors;
    } else {
      line["frames"] = outcomes[i].frames;
      line["max_ipd_delta_rad"] = outcomes[i].max_delta;
      overall = std::max(overall, outcomes[i].max_delta);
    }
    report << line.dump() << "\n";
  }
  report << json{{"record", "summary"},
                 {"scenes", records.size()},
                 {"errors", errors},
                 {"max_ipd_delta_rad", overall}}
                .dump()
         << "\n";
  report.close();
  std::cout << "features for " << records.size() << " scenes (" << errors
            << " errors), max IPD path delta " << overall << " rad -> "
            << args.out << "\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;
  std::string out;
  std::string resume;
};

std::string checkpoint_path(const std::string& out, int epoch) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "checkpoint_epoch_%04d.ckpt", epoch);
  return (fs::path(out) / buf).string();
}

std::string kernels_path(const std::string& out, int epoch) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "kernels_epoch_%04d.csv", epoch);
  return (fs::path(out) / buf).string();
}

bool learnable_kernels(const ModelConfig& config) {
  return config.frontend == Frontend::kKernelIpdUnconstrained ||
         config.frontend == Frontend::kKernelIpdWindow;
}

void cmd_train(const TrainArgs& args) {
  const TrainSettings settings =
      train_settings_from_json(load_json_file(args.config));
  fs::create_directories(args.out);
  const std::string config_echo = train_settings_to_json(settings).dump(2);
  write_text_file((fs::path(args.out) / "config.json").string(),
                  config_echo + "\n");
  const std::string model_echo = model_config_to_json(settings.model).dump();

  const std::vector<SceneRecord> records = read_manifest(settings.manifest);
  const std::string manifest_dir = parent_directory(settings.manifest);
  const std::vector<TrainItem> items =
      load_training_items(settings, records, manifest_dir);

  ParameterStore store;
  AdamOptimizer optimizer(settings.optimizer);
  int start_epoch = 0;
  int start_steps = 0;
  const std::string log_path = (fs::path(args.out) / "log.jsonl").string();
  if (args.resume.empty()) {
    store = build_params(settings.model, settings.seed);
    std::ofstream(log_path, std::ios::binary | std::ios::trunc);
    if (learnable_kernels(settings.model)) {
      export_kernels_csv(kernels_path(args.out, 0),
                         kernel_bank_from_store(settings.model, store), 0);
    }
  } else {
    Checkpoint ckpt = load_checkpoint(args.resume);
    if (json::parse(ckpt.config_json).dump() != model_echo) {
      throw ConfigError(
          "resume checkpoint was trained with a different model config");
    }
    store = std::move(ckpt.store);
    if (ckpt.has_optimizer) {
      optimizer.restore(ckpt.adam_step_count, std::move(ckpt.adam_m),
                        std::move(ckpt.adam_v));
    }
    start_epoch = static_cast<int>(ckpt.epoch);
    start_steps = static_cast<int>(ckpt.step);
  }

  std::ofstream log(log_path, std::ios::binary | std::ios::app);
  if (!log) throw DataError("cannot write " + log_path);

  const auto save = [&](const std::string& path, int epoch, int steps) {
    Checkpoint ckpt;
    ckpt.config_json = model_echo;
    ckpt.epoch = epoch;
    ckpt.step = steps;
    ckpt.store = store;
    ckpt.has_optimizer = true;
    ckpt.adam_step_count = optimizer.step_count();
    ckpt.adam_m = optimizer.first_moments();
    ckpt.adam_v = optimizer.second_moments();
    save_checkpoint(path, ckpt);
  };

  std::string last_good =
      args.resume.empty() ? std::string("none") : args.resume;
  const EpochCallback per_epoch = [&](const EpochLog& entry, ParameterStore&,
                                      AdamOptimizer&) {
    const std::string path = checkpoint_path(args.out, entry.epoch);
    save(path, entry.epoch, entry.total_steps);
    last_good = path;
    if (learnable_kernels(settings.model)) {
      export_kernels_csv(
          kernels_path(args.out, entry.epoch),
          kernel_bank_from_store(settings.model, store), entry.epoch);
    }
    json line{{"record", "epoch"},
              {"epoch", entry.epoch},
              {"mean_loss", entry.mean_loss},
              {"steps_this_epoch", entry.steps_this_epoch},
              {"total_steps", entry.total_steps},
              {"grad_norm", entry.last_grad_norm},
              {"checkpoint", path}};
    if (!std::isnan(entry.train_si_snri)) {
      line["train_si_snri"] = entry.train_si_snri;
    }
    log << line.dump() << "\n";
    log.flush();
    std::cout << "epoch " << entry.epoch << ": mean loss " << entry.mean_loss;
    if (!std::isnan(entry.train_si_snri)) {
      std::cout << ", train SI-SNRi " << entry.train_si_snri << " dB";
    }
    std::cout << " (" << entry.total_steps << " steps)\n";
  };

  TrainOutcome outcome;
  try {
    outcome = train_model(settings, items, store, optimizer, start_epoch,
                          start_steps, per_epoch);
  } catch (const NumericError& e) {
    log << json{{"record", "abort"},
                {"reason", e.what()},
                {"last_good_checkpoint", last_good}}
               .dump()
        << "\n";
    log.flush();
    throw;
  }

  // The logged final metric is produced by the same routine `eval` runs, on
  // the same manifest, so the two agree bit-for-bit.
  outcome.final_metric =
      training_set_metric(settings, manifest_dir, records, store);
  const std::string final_path = (fs::path(args.out) / "final.ckpt").string();
  save(final_path, outcome.epochs_run, outcome.total_steps);
  log << json{{"record", "final"},
              {"epochs", outcome.epochs_run},
              {"total_steps", outcome.total_steps},
              {"early_stopped", outcome.early_stopped},
              {"final_metric_si_snri", outcome.final_metric},
              {"metric_convention",
               "mean SI-SNRi over the training manifest, full utterances, "
               "reverberant channel-1 references"},
              {"checkpoint", final_path}}
             .dump()
      << "\n";
  std::cout << "training done: " << outcome.epochs_run << " epochs, "
            << outcome.total_steps << " steps, final train SI-SNRi "
            << outcome.final_metric << " dB -> " << final_path << "\n";
}

// ---------------------------------------------------------------------------
// eval / oracle

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string report;
  std::string oracle;  // comma-separated subset of ibm,irm,ipsm
  std::string stage1;
  int workers = 1;
};

std::vector<OracleKind> parse_oracle_list(const std::string& text) {
  std::vector<OracleKind> kinds;
  std::stringstream stream(text);
  std::string part;
  while (std::getline(stream, part, ',')) {
    if (!part.empty()) kinds.push_back(oracle_kind_from_string(part));
  }
  return kinds;
}

void write_report(const std::string& path,
                  const std::vector<std::pair<std::string, EvalResult>>& all) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& [method, result] : all) {
    for (const EvalRow& row : result.rows) {
      out << eval_row_to_json(row).dump() << "\n";
    }
  }
  for (const auto& [method, result] : all) {
    out << eval_aggregate_to_json(method, result.aggregate).dump() << "\n";
  }
}

void print_table(const std::vector<std::pair<std::string, EvalResult>>& all) {
  std::vector<std::pair<std::string, EvalAggregate>> aggregates;
  for (const auto& [method, result] : all) {
    aggregates.emplace_back(method, result.aggregate);
  }
  std::cout << format_aggregate_table(aggregates);
}

void cmd_eval(const EvalArgs& args) {
  Checkpoint ckpt = load_checkpoint(args.checkpoint);
  const ModelConfig config =
      model_config_from_json(json::parse(ckpt.config_json));
  ModelConfig stage1_config;
  ParameterStore stage1_store;
  const ModelConfig* stage1_cfg_ptr = nullptr;
  ParameterStore* stage1_store_ptr = nullptr;
  if (config.kind == ModelKind::kCascadeRefine) {
    if (args.stage1.empty()) {
      throw ConfigError(
          "--stage1 (frequency-domain checkpoint) is required for cascaded "
          "models");
    }
    Checkpoint s1 = load_checkpoint(args.stage1);
    stage1_config = model_config_from_json(json::parse(s1.config_json));
    stage1_store = std::move(s1.store);
    stage1_cfg_ptr = &stage1_config;
    stage1_store_ptr = &stage1_store;
  }
  const std::vector<SceneRecord> records = read_manifest(args.manifest);
  const std::string manifest_dir = parent_directory(args.manifest);

  std::vector<std::pair<std::string, EvalResult>> all;
  all.emplace_back("model",
                   evaluate_model(config, ckpt.store, manifest_dir, records,
                                  args.workers, stage1_cfg_ptr,
                                  stage1_store_ptr));
  for (OracleKind kind : parse_oracle_list(args.oracle)) {
    all.emplace_back(to_string(kind), evaluate_oracle(kind, manifest_dir,
                                                      records, args.workers));
  }
  write_report(args.report, all);
  print_table(all);
  std::cout << "report -> " << args.report << "\n";
}

void cmd_oracle(const EvalArgs& args) {
  const std::vector<SceneRecord> records = read_manifest(args.manifest);
  const std::string manifest_dir = parent_directory(args.manifest);
  std::vector<OracleKind> kinds = parse_oracle_list(args.oracle);
  if (kinds.empty()) {
    kinds = {OracleKind::kIbm, OracleKind::kIrm, OracleKind::kIpsm};
  }
  std::vector<std::pair<std::string, EvalResult>> all;
  for (OracleKind kind : kinds) {
    all.emplace_back(to_string(kind), evaluate_oracle(kind, manifest_dir,
                                                      records, args.workers));
  }
  write_report(args.report, all);
  // Oracle ceilings move with the corpus and the acoustics; treat them as
  // per-dataset references, not portable targets.
  std::ofstream append(args.report, std::ios::binary | std::ios::app);
  append << json{{"record", "note"},
                 {"note",
                  "oracle-mask scores are upper-bound references for this "
                  "dataset; absolute values depend on the corpus, room "
                  "acoustics, and the reference convention (reverberant "
                  "channel-1 source images)"}}
                .dump()
         << "\n";
  print_table(all);
  std::cout << "report -> " << args.report << "\n";
}

}  // namespace

int run_cli(std::vector<std::string> args) {
  CLI::App app{"multi-channel speech separation toolkit"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* sim_cmd =
      app.add_subcommand("simulate", "render a simulated 2-speaker corpus");
  sim_cmd->add_option("--config", sim.config, "simulation settings (JSON)")
      ->required();
  sim_cmd->add_option("--out", sim.out, "output corpus directory")->required();
  sim_cmd->add_option("--num-scenes", sim.num_scenes, "number of scenes")
      ->required();
  CLI::Option* seed_opt =
      sim_cmd->add_option("--seed", sim.seed, "override the config seed");
  sim_cmd->add_option("--workers", sim.workers, "parallel scene workers");

  FeaturesArgs feat;
  CLI::App* feat_cmd = app.add_subcommand(
      "features", "dump spectral and kernel features for every scene");
  feat_cmd->add_option("--manifest", feat.manifest, "corpus manifest (JSONL)")
      ->required();
  feat_cmd->add_option("--pairs", feat.pairs, "microphone pairs, e.g. 1-4,2-5");
  feat_cmd->add_option("--out", feat.out, "feature output directory")
      ->required();
  feat_cmd->add_option("--kernel-length", feat.kernel_length,
                       "analysis kernel taps (even)");
  feat_cmd->add_option("--kernel-stride", feat.kernel_stride,
                       "analysis hop, samples");
  feat_cmd->add_option("--workers", feat.workers, "parallel scene workers");

  TrainArgs train;
  CLI::App* train_cmd =
      app.add_subcommand("train", "train a separation model");
  train_cmd->add_option("--config", train.config, "training settings (JSON)")
      ->required();
  train_cmd->add_option("--out", train.out, "run directory")->required();
  train_cmd->add_option("--resume", train.resume,
                        "checkpoint to continue from");

  EvalArgs eval;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint over a manifest");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "model checkpoint")
      ->required();
  eval_cmd->add_option("--manifest", eval.manifest, "corpus manifest (JSONL)")
      ->required();
  eval_cmd->add_option("--report", eval.report, "report path (JSONL)")
      ->required();
  eval_cmd->add_option("--oracle", eval.oracle,
                       "oracle rows to add: comma subset of ibm,irm,ipsm");
  eval_cmd->add_option("--stage1", eval.stage1,
                       "frequency-domain checkpoint for cascaded models");
  eval_cmd->add_option("--workers", eval.workers, "parallel scene workers");

  EvalArgs oracle;
  CLI::App* oracle_cmd = app.add_subcommand(
      "oracle", "oracle-mask upper bounds over a manifest");
  oracle_cmd
      ->add_option("--manifest", oracle.manifest, "corpus manifest (JSONL)")
      ->required();
  oracle_cmd->add_option("--report", oracle.report, "report path (JSONL)")
      ->required();
  oracle_cmd->add_option("--oracle", oracle.oracle,
                         "kinds: comma subset of ibm,irm,ipsm (default all)");
  oracle_cmd->add_option("--workers", oracle.workers,
                         "parallel scene workers");

  try {
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
    sim.seed_given = seed_opt->count() > 0;
    if (sim_cmd->parsed()) {
      cmd_simulate(sim);
    } else if (feat_cmd->parsed()) {
      cmd_features(feat);
    } else if (train_cmd->parsed()) {
      cmd_train(train);
    } else if (eval_cmd->parsed()) {
      cmd_eval(eval);
    } else if (oracle_cmd->parsed()) {
      cmd_oracle(oracle);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace tdsep
