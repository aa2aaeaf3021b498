// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/featio.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "tdsep/errors.hpp"

namespace tdsep {

namespace {

constexpr char kMagic[8] = {'T', 'D', 'S', 'E', 'P', 'F', 'T', '1'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 4);
}

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint32_t read_u32(std::istream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw DataError("feature archive: truncated header");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[i]) << (8 * i);
  return v;
}

uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw DataError("feature archive: truncated header");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_feature_archive(const std::string& path,
                           const FeatureMap& features) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("feature archive: cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_u32(out, 2);  // rank
  write_u64(out, static_cast<uint64_t>(features.num_frames));
  write_u64(out, static_cast<uint64_t>(features.dim));
  const double hop = features.frame_hop;
  out.write(reinterpret_cast<const char*>(&hop), sizeof(hop));
  std::vector<float> row(static_cast<size_t>(features.dim));
  for (int f = 0; f < features.num_frames; ++f) {
    for (int d = 0; d < features.dim; ++d) {
      row[static_cast<size_t>(d)] =
          static_cast<float>(features.values[features.idx(f, d)]);
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw DataError("feature archive: write failed: " + path);
}

FeatureMap read_feature_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("feature archive: cannot open: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("feature archive: bad magic: " + path);
  }
  if (read_u32(in) != kVersion) {
    throw DataError("feature archive: unsupported version: " + path);
  }
  if (read_u32(in) != 2) {
    throw DataError("feature archive: expected a rank-2 archive: " + path);
  }
  const uint64_t frames = read_u64(in);
  const uint64_t dim = read_u64(in);
  if (frames > (1ull << 31) || dim > (1ull << 31)) {
    throw DataError("feature archive: implausible dimensions: " + path);
  }
  double hop = 0.0;
  in.read(reinterpret_cast<char*>(&hop), sizeof(hop));
  if (!in) throw DataError("feature archive: truncated header: " + path);
  FeatureMap out(static_cast<int>(frames), static_cast<int>(dim), hop);
  std::vector<float> row(static_cast<size_t>(dim));
  for (uint64_t f = 0; f < frames; ++f) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw DataError("feature archive: truncated payload: " + path);
    for (uint64_t d = 0; d < dim; ++d) {
      out.values[out.idx(static_cast<int>(f), static_cast<int>(d))] =
          static_cast<double>(row[static_cast<size_t>(d)]);
    }
  }
  return out;
}

std::string hash_file_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("hash: cannot open: " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  char text[17];
  std::snprintf(text, sizeof(text), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(text);
}

}  // namespace tdsep
