// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>

#include "tdsep/audio.hpp"

namespace tdsep {

// Binary feature archive: 8 magic bytes, a version word, the dimension
// list, the frame hop (samples, 64-bit real), then row-major 32-bit
// reals. Feature maps are stored as [frames, dim].
void write_feature_archive(const std::string& path, const FeatureMap& features);
FeatureMap read_feature_archive(const std::string& path);

// 64-bit FNV-1a over the file's bytes, as a fixed-width hex string.
// Used for resumable simulation (content fingerprints in the manifest).
std::string hash_file_hex(const std::string& path);

}  // namespace tdsep
