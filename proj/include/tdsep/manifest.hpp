// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdsep/roomsim.hpp"

namespace tdsep {

// One line of a dataset manifest: everything needed to reload a rendered
// scene and to regenerate it bit-identically from its seed. Audio paths
// are relative to the manifest's directory.
struct SceneRecord {
  std::string scene_id;
  int index = 0;
  uint64_t seed = 0;
  double sample_rate = 8000.0;
  Vec3 room_dimensions{0, 0, 0};
  double t60 = 0.0;
  Vec3 array_center{0, 0, 0};
  std::vector<Vec3> source_positions;
  double speed_of_sound = 343.0;
  int num_mics = 6;
  double mic_radius = 0.035;
  double mixing_snr_db = 0.0;
  double angle_difference_deg = 0.0;
  std::vector<std::string> source_audio_refs;
  std::string mixture_path;
  std::vector<std::string> reference_paths;
  std::string mixture_hash;
  std::vector<std::string> reference_hashes;
};

nlohmann::json scene_record_to_json(const SceneRecord& record);
SceneRecord scene_record_from_json(const nlohmann::json& j);

// JSONL, one record per line. read throws DataError on malformed lines.
std::vector<SceneRecord> read_manifest(const std::string& path);
void write_manifest(const std::string& path,
                    const std::vector<SceneRecord>& records);

// Rebuilds the geometry/room description the record was rendered from.
SceneSpec scene_spec_from_record(const SceneRecord& record);

// True when the geometry, seed, and mixing fields agree (paths and hashes
// excluded) -- the test for "this manifest line is the scene the current
// settings would regenerate".
bool same_scene_parameters(const SceneRecord& a, const SceneRecord& b);

// Directory part of a path ("" when the path has no directory).
std::string parent_directory(const std::string& path);

// Joins a manifest-relative path onto the manifest's directory.
std::string resolve_relative(const std::string& base_dir,
                             const std::string& relative);

}  // namespace tdsep
