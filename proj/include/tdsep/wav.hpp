// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>

#include "tdsep/audio.hpp"

namespace tdsep {

enum class WavFormat { kPcm16, kFloat32 };

// Reads a RIFF/WAVE file. Supports PCM16 and IEEE float32 payloads
// (including WAVE_FORMAT_EXTENSIBLE wrappers). PCM16 samples are scaled
// by 1/32768.
MultichannelAudio wav_read(const std::string& path);

void wav_write(const std::string& path, const MultichannelAudio& audio,
               WavFormat format = WavFormat::kFloat32);

}  // namespace tdsep
