// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/roomsim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tdsep/stft.hpp"

namespace tdsep {

namespace {

constexpr int kSincHalfWidth = 40;  // 81-tap interpolation filter
constexpr double kSabineConstant = 0.161;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  // Fixed 53-bit mapping; std::uniform_real_distribution is not
  // bit-reproducible across standard library implementations.
  const double u =
      static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
  return lo + u * (hi - lo);
}

double dist3(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Windowed-sinc tap at offset u from the impulse position, |u| <= half+0.5.
double sinc_tap(double u) {
  const double span = kSincHalfWidth + 0.5;
  if (std::abs(u) >= span) return 0.0;
  if (u == std::nearbyint(u)) return u == 0.0 ? 1.0 : 0.0;
  const double w = 0.5 * (1.0 + std::cos(M_PI * u / span));
  const double x = M_PI * u;
  return w * std::sin(x) / x;
}

// Polyphase table of the interpolation filter: row q holds the taps for
// fractional delay q/kSincSteps. Rows are interpolated linearly, which
// keeps the tap error below 1e-5 while avoiding per-image transcendentals.
constexpr int kSincSteps = 1024;
constexpr int kSincTaps = 2 * kSincHalfWidth + 2;

const std::vector<double>& sinc_table() {
  static const std::vector<double> table = [] {
    std::vector<double> t(static_cast<size_t>(kSincSteps + 1) * kSincTaps);
    for (int q = 0; q <= kSincSteps; ++q) {
      const double frac = static_cast<double>(q) / kSincSteps;
      for (int m = 0; m < kSincTaps; ++m) {
        t[static_cast<size_t>(q) * kSincTaps + m] =
            sinc_tap(static_cast<double>(m - kSincHalfWidth) - frac);
      }
    }
    return t;
  }();
  return table;
}

double surface_area(const Vec3& d) {
  return 2.0 * (d[0] * d[1] + d[0] * d[2] + d[1] * d[2]);
}

double volume(const Vec3& d) { return d[0] * d[1] * d[2]; }

}  // namespace

ArrayGeometry circular_array(int num_mics, double radius) {
  if (num_mics < 1) throw ConfigError("circular_array: need >= 1 mic");
  if (radius <= 0.0) throw ConfigError("circular_array: radius must be > 0");
  ArrayGeometry geom;
  geom.mic_positions.resize(num_mics);
  for (int i = 0; i < num_mics; ++i) {
    const double az = 2.0 * M_PI * static_cast<double>(i) / num_mics;
    geom.mic_positions[i] = {radius * std::cos(az), radius * std::sin(az), 0.0};
  }
  return geom;
}

WallFormula wall_formula_from_string(const std::string& name) {
  if (name == "eyring") return WallFormula::kEyring;
  if (name == "sabine") return WallFormula::kSabine;
  throw ConfigError("unknown wall coefficient formula: " + name);
}

std::string to_string(WallFormula formula) {
  return formula == WallFormula::kEyring ? "eyring" : "sabine";
}

double wall_reflection_coefficient(const RoomSpec& room, WallFormula formula) {
  if (room.t60 <= 0.0) return 0.0;
  const double v = volume(room.dimensions);
  const double s = surface_area(room.dimensions);
  if (v <= 0.0 || s <= 0.0) throw ConfigError("degenerate room dimensions");
  const double sabine = kSabineConstant * v / (s * room.t60);
  if (formula == WallFormula::kSabine) {
    const double alpha = std::clamp(sabine, 1e-12, 1.0 - 1e-12);
    return std::sqrt(1.0 - alpha);
  }
  // Eyring: 1 - alpha = exp(-0.161 V / (S t60)), so the image model's
  // exponential decay hits -60 dB at t60 itself rather than only in the
  // small-absorption limit.
  return std::exp(-0.5 * sabine);
}

ImpulseResponse image_method_rir(const RoomSpec& room, int source_index,
                                 const Vec3& mic_position, double sample_rate,
                                 const RirOptions& options) {
  if (source_index < 0 ||
      source_index >= static_cast<int>(room.source_positions.size())) {
    throw DataError("image_method_rir: source index out of range");
  }
  if (sample_rate <= 0.0) throw ConfigError("sample rate must be > 0");
  const Vec3 src = room.source_positions[source_index];
  const Vec3& dims = room.dimensions;
  const double c = room.speed_of_sound;
  if (dist3(src, mic_position) < 1e-9) {
    throw DataError("image_method_rir: source coincides with mic");
  }

  const double beta = wall_reflection_coefficient(room, options.formula);
  const double direct = dist3(src, mic_position);
  const double coverage =
      direct + std::max(0.0, options.coverage_factor * room.t60 * c);

  std::array<int, 3> order{};
  for (int a = 0; a < 3; ++a) {
    if (options.max_order >= 0) {
      order[a] = options.max_order;
    } else {
      order[a] = static_cast<int>(std::ceil(coverage / (2.0 * dims[a]))) + 1;
    }
  }

  // Worst-case image distance bounds the tap buffer.
  double bound = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double reach = (2.0 * order[a] + 1.0) * dims[a];
    bound += reach * reach;
  }
  bound = std::sqrt(bound);
  const double max_dist = options.max_order >= 0 ? bound : coverage;
  const int64_t length =
      static_cast<int64_t>(std::ceil(max_dist / c * sample_rate)) +
      2 * kSincHalfWidth + 2;

  ImpulseResponse rir;
  rir.num_mics = 1;
  rir.length = length;
  rir.sample_rate = sample_rate;
  rir.taps.assign(length, 0.0);

  const int max_refl = 2 * (order[0] + order[1] + order[2]) + 3;
  std::vector<double> beta_pow(max_refl + 1, 0.0);
  beta_pow[0] = 1.0;
  for (int r = 1; r <= max_refl; ++r) beta_pow[r] = beta_pow[r - 1] * beta;
  const std::vector<double>& table = sinc_table();

  for (int nx = -order[0]; nx <= order[0]; ++nx) {
    for (int qx = 0; qx <= 1; ++qx) {
      const double ix = (1 - 2 * qx) * src[0] + 2.0 * nx * dims[0];
      const int rx = std::abs(nx - qx) + std::abs(nx);
      for (int ny = -order[1]; ny <= order[1]; ++ny) {
        for (int qy = 0; qy <= 1; ++qy) {
          const double iy = (1 - 2 * qy) * src[1] + 2.0 * ny * dims[1];
          const int ry = std::abs(ny - qy) + std::abs(ny);
          for (int nz = -order[2]; nz <= order[2]; ++nz) {
            for (int qz = 0; qz <= 1; ++qz) {
              const double iz = (1 - 2 * qz) * src[2] + 2.0 * nz * dims[2];
              const int rz = std::abs(nz - qz) + std::abs(nz);
              const double dx = ix - mic_position[0];
              const double dy = iy - mic_position[1];
              const double dz = iz - mic_position[2];
              const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
              if (options.max_order < 0 && d > max_dist) continue;
              const int refl = rx + ry + rz;
              if (beta == 0.0 && refl > 0) continue;
              const double amp =
                  beta_pow[refl] / (4.0 * M_PI * std::max(d, 1e-3));
              const double delay = d / c * sample_rate;
              const int64_t center = static_cast<int64_t>(std::floor(delay));
              const double frac = delay - static_cast<double>(center);
              const double step = frac * kSincSteps;
              const int q0 = std::min(static_cast<int>(step), kSincSteps - 1);
              const double w1 = step - q0;
              const double w0 = 1.0 - w1;
              const double* row0 = table.data() +
                                   static_cast<size_t>(q0) * kSincTaps;
              const double* row1 = row0 + kSincTaps;
              const int64_t base = center - kSincHalfWidth;
              const int m_lo = base < 0 ? static_cast<int>(-base) : 0;
              const int64_t hi64 = std::min<int64_t>(kSincTaps, length - base);
              const int m_hi = hi64 > 0 ? static_cast<int>(hi64) : 0;
              double* taps = rir.taps.data();
              for (int m = m_lo; m < m_hi; ++m) {
                taps[base + m] += amp * (w0 * row0[m] + w1 * row1[m]);
              }
            }
          }
        }
      }
    }
  }
  return rir;
}

void SceneRanges::validate() const {
  auto check_range = [](const std::array<double, 2>& r, const char* name) {
    if (!(r[0] <= r[1])) {
      throw ConfigError(std::string("bad range for ") + name);
    }
  };
  check_range(room_x, "room_x");
  check_range(room_y, "room_y");
  check_range(room_z, "room_z");
  check_range(t60, "t60");
  check_range(snr_db, "snr_db");
  check_range(height, "height");
  if (t60[0] < 0.0) throw ConfigError("t60 must be >= 0");
  if (num_sources < 1) throw ConfigError("need >= 1 source");
  if (num_mics < 1) throw ConfigError("need >= 1 mic");
  if (mic_radius <= 0.0) throw ConfigError("mic radius must be > 0");
  if (wall_margin < 0.0) throw ConfigError("wall margin must be >= 0");
  const double array_margin = wall_margin + mic_radius;
  if (room_x[0] <= 2.0 * array_margin || room_y[0] <= 2.0 * array_margin) {
    throw ConfigError("room too small for wall margins and array radius");
  }
  if (room_z[0] <= 2.0 * wall_margin) {
    throw ConfigError("room too low for wall margins");
  }
  if (height[0] < wall_margin) {
    throw ConfigError("height range violates floor margin");
  }
  if (height[1] > room_z[0] - wall_margin) {
    throw ConfigError("height range violates ceiling margin at min room height");
  }
}

SceneSpec sample_scene(uint64_t seed, const SceneRanges& ranges) {
  ranges.validate();
  std::mt19937_64 rng(seed);
  SceneSpec scene;
  scene.seed = seed;
  RoomSpec& room = scene.room;
  room.speed_of_sound = ranges.speed_of_sound;
  room.dimensions = {uniform(rng, ranges.room_x[0], ranges.room_x[1]),
                     uniform(rng, ranges.room_y[0], ranges.room_y[1]),
                     uniform(rng, ranges.room_z[0], ranges.room_z[1])};
  room.t60 = uniform(rng, ranges.t60[0], ranges.t60[1]);
  scene.mixing_snr_db = uniform(rng, ranges.snr_db[0], ranges.snr_db[1]);

  const double am = ranges.wall_margin + ranges.mic_radius;
  room.array_center = {
      uniform(rng, am, room.dimensions[0] - am),
      uniform(rng, am, room.dimensions[1] - am),
      uniform(rng, ranges.height[0],
              std::min(ranges.height[1], room.dimensions[2] - ranges.wall_margin))};
  scene.geometry = circular_array(ranges.num_mics, ranges.mic_radius);

  const double sm = ranges.wall_margin;
  for (int s = 0; s < ranges.num_sources; ++s) {
    bool placed = false;
    for (int attempt = 0; attempt < 10000; ++attempt) {
      Vec3 pos = {
          uniform(rng, sm, room.dimensions[0] - sm),
          uniform(rng, sm, room.dimensions[1] - sm),
          uniform(rng, ranges.height[0],
                  std::min(ranges.height[1],
                           room.dimensions[2] - ranges.wall_margin))};
      if (dist3(pos, room.array_center) < ranges.min_source_array_dist) {
        continue;
      }
      const double hx = pos[0] - room.array_center[0];
      const double hy = pos[1] - room.array_center[1];
      if (std::sqrt(hx * hx + hy * hy) < 1e-6) continue;  // azimuth undefined
      room.source_positions.push_back(pos);
      placed = true;
      break;
    }
    if (!placed) {
      throw ConfigError("sample_scene: cannot place source within constraints");
    }
  }
  return scene;
}

namespace detail {

uint64_t mix_seed(uint64_t seed, uint64_t index) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::vector<double> fast_convolve(const double* a, int64_t len_a,
                                  const double* b, int64_t len_b,
                                  int64_t out_len) {
  const int64_t full = len_a + len_b - 1;
  int64_t n = 1;
  while (n < full) n <<= 1;
  std::vector<double> are(n, 0.0), aim(n, 0.0), bre(n, 0.0), bim(n, 0.0);
  std::copy(a, a + len_a, are.begin());
  std::copy(b, b + len_b, bre.begin());
  tdsep::detail::fft(are, aim, false);
  tdsep::detail::fft(bre, bim, false);
  for (int64_t i = 0; i < n; ++i) {
    const double re = are[i] * bre[i] - aim[i] * bim[i];
    const double im = are[i] * bim[i] + aim[i] * bre[i];
    are[i] = re;
    aim[i] = im;
  }
  tdsep::detail::fft(are, aim, true);
  std::vector<double> out(out_len, 0.0);
  const int64_t copy_len = std::min(out_len, full);
  std::copy(are.begin(), are.begin() + copy_len, out.begin());
  return out;
}

}  // namespace detail

SpatializeResult spatialize_mix(const SceneSpec& scene,
                                const std::vector<MultichannelAudio>& sources,
                                const RirOptions& options) {
  const int num_sources = static_cast<int>(scene.room.source_positions.size());
  if (static_cast<int>(sources.size()) != num_sources) {
    throw DataError("spatialize_mix: source count mismatch");
  }
  if (sources.empty()) throw DataError("spatialize_mix: no sources");
  const double fs = sources[0].sample_rate;
  int64_t num_samples = sources[0].num_samples;
  for (const auto& s : sources) {
    if (s.num_channels != 1) throw DataError("spatialize_mix: sources must be mono");
    if (s.sample_rate != fs) throw DataError("spatialize_mix: sample-rate mismatch");
    num_samples = std::min(num_samples, s.num_samples);
  }
  if (num_samples < 1) throw DataError("spatialize_mix: empty source");

  const int num_mics = static_cast<int>(scene.geometry.mic_positions.size());
  SpatializeResult result;
  result.references.reserve(num_sources);
  for (int s = 0; s < num_sources; ++s) {
    MultichannelAudio image(num_mics, num_samples, fs);
    for (int m = 0; m < num_mics; ++m) {
      Vec3 mic_abs = scene.room.array_center;
      for (int a = 0; a < 3; ++a) {
        mic_abs[a] += scene.geometry.mic_positions[m][a];
      }
      const ImpulseResponse rir =
          image_method_rir(scene.room, s, mic_abs, fs, options);
      const std::vector<double> conv = detail::fast_convolve(
          sources[s].channel(0), num_samples, rir.mic(0), rir.length,
          num_samples);
      std::copy(conv.begin(), conv.end(), image.channel(m));
    }
    result.references.push_back(std::move(image));
  }

  if (num_sources >= 2) {
    auto mic1_energy = [num_samples](const MultichannelAudio& a) {
      double e = 0.0;
      const double* x = a.channel(0);
      for (int64_t t = 0; t < num_samples; ++t) e += x[t] * x[t];
      return e;
    };
    const double e1 = mic1_energy(result.references[0]);
    const double e2 = mic1_energy(result.references[1]);
    if (e1 <= 0.0 || e2 <= 0.0) {
      throw DataError("spatialize_mix: zero-energy reverberant source");
    }
    const double target_ratio = std::pow(10.0, scene.mixing_snr_db / 10.0);
    const double gain = std::sqrt(e1 / (e2 * target_ratio));
    if (!std::isfinite(gain) || gain <= 0.0) {
      throw DataError("spatialize_mix: degenerate mixing gain");
    }
    for (double& v : result.references[1].samples) v *= gain;
  }

  result.mixture = MultichannelAudio(num_mics, num_samples, fs);
  for (const auto& ref : result.references) {
    for (size_t i = 0; i < result.mixture.samples.size(); ++i) {
      result.mixture.samples[i] += ref.samples[i];
    }
  }
  return result;
}

double angle_difference(const SceneSpec& scene) {
  if (scene.room.source_positions.size() != 2) {
    throw DataError("angle_difference: need exactly two sources");
  }
  double az[2];
  for (int s = 0; s < 2; ++s) {
    const double dx =
        scene.room.source_positions[s][0] - scene.room.array_center[0];
    const double dy =
        scene.room.source_positions[s][1] - scene.room.array_center[1];
    if (std::sqrt(dx * dx + dy * dy) < 1e-9) {
      throw DataError("angle_difference: source at array center");
    }
    az[s] = std::atan2(dy, dx) * 180.0 / M_PI;
  }
  double d = std::fmod(std::abs(az[0] - az[1]), 360.0);
  if (d > 180.0) d = 360.0 - d;
  return d;
}

AngleBin angle_bin(double degrees) {
  if (degrees < 0.0 || degrees > 180.0) {
    throw DataError("angle_bin: degrees out of [0, 180]");
  }
  if (degrees < 15.0) return AngleBin::kLt15;
  if (degrees < 45.0) return AngleBin::k15to45;
  if (degrees <= 90.0) return AngleBin::k45to90;
  return AngleBin::kGt90;
}

std::string to_string(AngleBin bin) {
  switch (bin) {
    case AngleBin::kLt15:
      return "<15";
    case AngleBin::k15to45:
      return "15-45";
    case AngleBin::k45to90:
      return "45-90";
    case AngleBin::kGt90:
      return ">90";
  }
  return "?";
}

}  // namespace tdsep
