// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/manifest.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "tdsep/errors.hpp"

namespace tdsep {

namespace {

using nlohmann::json;

json vec3_to_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 vec3_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) {
    throw DataError("manifest: " + where + " must be [x, y, z]");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-12; }

}  // namespace

json scene_record_to_json(const SceneRecord& r) {
  json positions = json::array();
  for (const Vec3& p : r.source_positions) positions.push_back(vec3_to_json(p));
  return json{{"scene_id", r.scene_id},
              {"index", r.index},
              {"seed", r.seed},
              {"sample_rate", r.sample_rate},
              {"room", vec3_to_json(r.room_dimensions)},
              {"t60", r.t60},
              {"array_center", vec3_to_json(r.array_center)},
              {"source_positions", positions},
              {"speed_of_sound", r.speed_of_sound},
              {"num_mics", r.num_mics},
              {"mic_radius", r.mic_radius},
              {"mixing_snr_db", r.mixing_snr_db},
              {"angle_difference_deg", r.angle_difference_deg},
              {"source_audio", r.source_audio_refs},
              {"mixture", r.mixture_path},
              {"references", r.reference_paths},
              {"mixture_hash", r.mixture_hash},
              {"reference_hashes", r.reference_hashes}};
}

SceneRecord scene_record_from_json(const json& j) {
  static const std::set<std::string> kKeys = {
      "scene_id",         "index",
      "seed",             "sample_rate",
      "room",             "t60",
      "array_center",     "source_positions",
      "speed_of_sound",   "num_mics",
      "mic_radius",       "mixing_snr_db",
      "angle_difference_deg", "source_audio",
      "mixture",          "references",
      "mixture_hash",     "reference_hashes"};
  if (!j.is_object()) throw DataError("manifest: record is not an object");
  for (const auto& item : j.items()) {
    if (kKeys.find(item.key()) == kKeys.end()) {
      throw DataError("manifest: unknown key '" + item.key() + "'");
    }
  }
  SceneRecord r;
  try {
    r.scene_id = j.at("scene_id").get<std::string>();
    r.index = j.at("index").get<int>();
    r.seed = j.at("seed").get<uint64_t>();
    r.sample_rate = j.at("sample_rate").get<double>();
    r.room_dimensions = vec3_from_json(j.at("room"), "room");
    r.t60 = j.at("t60").get<double>();
    r.array_center = vec3_from_json(j.at("array_center"), "array_center");
    for (const auto& p : j.at("source_positions")) {
      r.source_positions.push_back(vec3_from_json(p, "source_positions"));
    }
    r.speed_of_sound = j.at("speed_of_sound").get<double>();
    r.num_mics = j.at("num_mics").get<int>();
    r.mic_radius = j.at("mic_radius").get<double>();
    r.mixing_snr_db = j.at("mixing_snr_db").get<double>();
    r.angle_difference_deg = j.at("angle_difference_deg").get<double>();
    r.source_audio_refs =
        j.at("source_audio").get<std::vector<std::string>>();
    r.mixture_path = j.at("mixture").get<std::string>();
    r.reference_paths = j.at("references").get<std::vector<std::string>>();
    r.mixture_hash = j.at("mixture_hash").get<std::string>();
    r.reference_hashes =
        j.at("reference_hashes").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  if (r.reference_paths.size() != r.source_positions.size() ||
      r.reference_hashes.size() != r.reference_paths.size()) {
    throw DataError("manifest: per-source list lengths disagree in " +
                    r.scene_id);
  }
  return r;
}

std::vector<SceneRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  std::vector<SceneRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("manifest " + path + " line " +
                      std::to_string(line_no) + ": " + e.what());
    }
    records.push_back(scene_record_from_json(j));
  }
  return records;
}

void write_manifest(const std::string& path,
                    const std::vector<SceneRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open manifest for writing: " + path);
  for (const SceneRecord& r : records) {
    out << scene_record_to_json(r).dump() << "\n";
  }
  if (!out) throw DataError("manifest write failed: " + path);
}

SceneSpec scene_spec_from_record(const SceneRecord& r) {
  SceneSpec scene;
  scene.room.dimensions = r.room_dimensions;
  scene.room.t60 = r.t60;
  scene.room.array_center = r.array_center;
  scene.room.source_positions = r.source_positions;
  scene.room.speed_of_sound = r.speed_of_sound;
  scene.geometry = circular_array(r.num_mics, r.mic_radius);
  scene.mixing_snr_db = r.mixing_snr_db;
  scene.seed = r.seed;
  scene.source_audio_refs = r.source_audio_refs;
  return scene;
}

bool same_scene_parameters(const SceneRecord& a, const SceneRecord& b) {
  if (a.seed != b.seed || a.num_mics != b.num_mics ||
      a.source_positions.size() != b.source_positions.size()) {
    return false;
  }
  if (!close(a.sample_rate, b.sample_rate) || !close(a.t60, b.t60) ||
      !close(a.mic_radius, b.mic_radius) ||
      !close(a.mixing_snr_db, b.mixing_snr_db) ||
      !close(a.speed_of_sound, b.speed_of_sound)) {
    return false;
  }
  for (int d = 0; d < 3; ++d) {
    if (!close(a.room_dimensions[d], b.room_dimensions[d]) ||
        !close(a.array_center[d], b.array_center[d])) {
      return false;
    }
  }
  for (size_t s = 0; s < a.source_positions.size(); ++s) {
    for (int d = 0; d < 3; ++d) {
      if (!close(a.source_positions[s][d], b.source_positions[s][d])) {
        return false;
      }
    }
  }
  return a.source_audio_refs == b.source_audio_refs;
}

std::string parent_directory(const std::string& path) {
  const size_t slash = path.find_last_of('/');
  if (slash == std::string::npos) return "";
  return path.substr(0, slash);
}

std::string resolve_relative(const std::string& base_dir,
                             const std::string& relative) {
  if (relative.empty() || relative.front() == '/' || base_dir.empty()) {
    return relative;
  }
  return base_dir + "/" + relative;
}

}  // namespace tdsep
