// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/wav.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace tdsep {
namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  T value = 0;
  for (size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(buf[i]) << (8 * i);
  }
  return value;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

float bits_to_float(uint32_t bits) {
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return f;
}

uint32_t float_to_bits(float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  return bits;
}

}  // namespace

MultichannelAudio wav_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open wav file: " + path);

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) {
    throw DataError("not a RIFF file: " + path);
  }
  read_le<uint32_t>(in);  // riff payload size; chunk scan below is authoritative
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) {
    throw DataError("not a WAVE file: " + path);
  }

  uint16_t format = 0;
  uint16_t channels = 0;
  uint32_t sample_rate = 0;
  uint16_t bits_per_sample = 0;
  bool have_fmt = false;
  std::vector<char> data;
  bool have_data = false;

  while (in) {
    in.read(tag, 4);
    if (!in) break;
    uint32_t size = read_le<uint32_t>(in);
    if (!in) break;
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_le<uint16_t>(in);
      channels = read_le<uint16_t>(in);
      sample_rate = read_le<uint32_t>(in);
      read_le<uint32_t>(in);  // byte rate
      read_le<uint16_t>(in);  // block align
      bits_per_sample = read_le<uint16_t>(in);
      uint32_t consumed = 16;
      if (format == kFormatExtensible && size >= 26) {
        read_le<uint16_t>(in);  // cbSize
        read_le<uint16_t>(in);  // valid bits
        read_le<uint32_t>(in);  // channel mask
        format = read_le<uint16_t>(in);  // first two bytes of the subformat GUID
        consumed = 26;
      }
      in.ignore(size - consumed + (size & 1));
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(size);
      in.read(data.data(), size);
      if (static_cast<uint32_t>(in.gcount()) != size) {
        throw DataError("truncated data chunk: " + path);
      }
      if (size & 1) in.ignore(1);
      have_data = true;
    } else {
      in.ignore(static_cast<std::streamsize>(size) + (size & 1));
    }
  }

  if (!have_fmt || !have_data) {
    throw DataError("missing fmt or data chunk: " + path);
  }
  if (channels == 0 || sample_rate == 0) {
    throw DataError("degenerate wav header: " + path);
  }

  int bytes_per_sample;
  if (format == kFormatPcm && bits_per_sample == 16) {
    bytes_per_sample = 2;
  } else if (format == kFormatFloat && bits_per_sample == 32) {
    bytes_per_sample = 4;
  } else {
    throw DataError("unsupported wav encoding (need PCM16 or float32): " +
                    path);
  }

  const size_t frame_bytes = static_cast<size_t>(bytes_per_sample) * channels;
  const int64_t num_samples = static_cast<int64_t>(data.size() / frame_bytes);
  MultichannelAudio audio(channels, num_samples,
                          static_cast<double>(sample_rate));
  const unsigned char* raw =
      reinterpret_cast<const unsigned char*>(data.data());
  for (int64_t t = 0; t < num_samples; ++t) {
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = raw + t * frame_bytes + c * bytes_per_sample;
      if (bytes_per_sample == 2) {
        int16_t v = static_cast<int16_t>(p[0] | (p[1] << 8));
        audio.at(c, t) = static_cast<double>(v) / 32768.0;
      } else {
        uint32_t bits = static_cast<uint32_t>(p[0]) |
                        (static_cast<uint32_t>(p[1]) << 8) |
                        (static_cast<uint32_t>(p[2]) << 16) |
                        (static_cast<uint32_t>(p[3]) << 24);
        audio.at(c, t) = static_cast<double>(bits_to_float(bits));
      }
    }
  }
  return audio;
}

void wav_write(const std::string& path, const MultichannelAudio& audio,
               WavFormat format) {
  if (audio.num_channels <= 0 || audio.sample_rate <= 0.0) {
    throw DataError("cannot write wav with empty header: " + path);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot create wav file: " + path);

  const int bytes_per_sample = format == WavFormat::kPcm16 ? 2 : 4;
  const uint16_t fmt_code =
      format == WavFormat::kPcm16 ? kFormatPcm : kFormatFloat;
  const uint32_t sample_rate = static_cast<uint32_t>(audio.sample_rate);
  const uint16_t block_align =
      static_cast<uint16_t>(bytes_per_sample * audio.num_channels);
  const uint32_t data_bytes =
      static_cast<uint32_t>(audio.num_samples * block_align);

  out.write("RIFF", 4);
  write_le<uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<uint32_t>(out, 16);
  write_le<uint16_t>(out, fmt_code);
  write_le<uint16_t>(out, static_cast<uint16_t>(audio.num_channels));
  write_le<uint32_t>(out, sample_rate);
  write_le<uint32_t>(out, sample_rate * block_align);
  write_le<uint16_t>(out, block_align);
  write_le<uint16_t>(out, static_cast<uint16_t>(8 * bytes_per_sample));
  out.write("data", 4);
  write_le<uint32_t>(out, data_bytes);

  for (int64_t t = 0; t < audio.num_samples; ++t) {
    for (int c = 0; c < audio.num_channels; ++c) {
      double v = audio.at(c, t);
      if (format == WavFormat::kPcm16) {
        double scaled = v * 32768.0;
        if (scaled > 32767.0) scaled = 32767.0;
        if (scaled < -32768.0) scaled = -32768.0;
        write_le<uint16_t>(
            out, static_cast<uint16_t>(static_cast<int16_t>(std::lrint(scaled))));
      } else {
        write_le<uint32_t>(out, float_to_bits(static_cast<float>(v)));
      }
    }
  }
  if (!out) throw DataError("failed writing wav file: " + path);
}

}  // namespace tdsep
