// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tdsep/audio.hpp"

namespace tdsep {

using Vec3 = std::array<double, 3>;

struct ArrayGeometry {
  // Positions relative to the array center, meters.
  std::vector<Vec3> mic_positions;
};

// num_mics equally spaced on a horizontal circle, mic i at azimuth
// (i-1) * 360/num_mics degrees.
ArrayGeometry circular_array(int num_mics, double radius);

enum class WallFormula { kEyring, kSabine };

WallFormula wall_formula_from_string(const std::string& name);
std::string to_string(WallFormula formula);

struct RoomSpec {
  Vec3 dimensions{0, 0, 0};
  double t60 = 0.0;
  Vec3 array_center{0, 0, 0};
  std::vector<Vec3> source_positions;
  double speed_of_sound = 343.0;
};

struct SceneSpec {
  RoomSpec room;
  ArrayGeometry geometry;
  double mixing_snr_db = 0.0;
  uint64_t seed = 0;
  std::vector<std::string> source_audio_refs;
};

struct ImpulseResponse {
  int num_mics = 0;
  int64_t length = 0;
  double sample_rate = 0.0;
  std::vector<double> taps;  // [num_mics x length]

  double* mic(int m) { return taps.data() + static_cast<size_t>(m) * length; }
  const double* mic(int m) const {
    return taps.data() + static_cast<size_t>(m) * length;
  }
};

struct RirOptions {
  // Reflections per axis; negative selects the smallest order whose image
  // set covers coverage_factor * t60 * c of propagation distance.
  int max_order = -1;
  double coverage_factor = 1.25;
  WallFormula formula = WallFormula::kEyring;
};

// Uniform frequency-independent pressure reflection coefficient for the
// requested decay time. Eyring inverts the exponential decay the image
// model actually produces; Sabine is its small-absorption approximation.
double wall_reflection_coefficient(const RoomSpec& room, WallFormula formula);

// Allen-Berkley image-source RIR for one source/mic pair. mic_position is
// absolute (room coordinates). Fractional delays use an 81-tap windowed
// sinc so that inter-mic delay differences survive at sub-sample accuracy.
ImpulseResponse image_method_rir(const RoomSpec& room, int source_index,
                                 const Vec3& mic_position, double sample_rate,
                                 const RirOptions& options = {});

struct SceneRanges {
  std::array<double, 2> room_x{3.0, 8.0};
  std::array<double, 2> room_y{3.0, 10.0};
  std::array<double, 2> room_z{2.5, 6.0};
  std::array<double, 2> t60{0.05, 0.5};
  std::array<double, 2> snr_db{-2.5, 2.5};
  std::array<double, 2> height{1.2, 2.0};
  double wall_margin = 0.3;
  double min_source_array_dist = 0.5;
  int num_sources = 2;
  int num_mics = 6;
  double mic_radius = 0.035;
  double speed_of_sound = 343.0;

  void validate() const;  // throws ConfigError on infeasible ranges
};

// Deterministic: the seed fixes every draw. Positions honor the wall
// margin and the minimum source-array distance by rejection.
SceneSpec sample_scene(uint64_t seed, const SceneRanges& ranges);

struct SpatializeResult {
  MultichannelAudio mixture;
  std::vector<MultichannelAudio> references;
};

// Convolves each mono source with its multi-mic RIR, rescales source 2 so
// the reverberant energy ratio at mic 1 matches mixing_snr_db, and sums.
// mixture == sum of references holds sample-exactly.
SpatializeResult spatialize_mix(const SceneSpec& scene,
                                const std::vector<MultichannelAudio>& sources,
                                const RirOptions& options = {});

// Absolute azimuth difference between the two sources as seen from the
// array center, folded into [0, 180] degrees.
double angle_difference(const SceneSpec& scene);

enum class AngleBin { kLt15, k15to45, k45to90, kGt90 };

// Bin edges: [0,15), [15,45), [45,90], (90,180].
AngleBin angle_bin(double degrees);
std::string to_string(AngleBin bin);

namespace detail {

// splitmix64 keyed by (seed, index); decorrelates per-scene streams.
uint64_t mix_seed(uint64_t seed, uint64_t index);

// Linear convolution via FFT, truncated to out_len samples.
std::vector<double> fast_convolve(const double* a, int64_t len_a,
                                  const double* b, int64_t len_b,
                                  int64_t out_len);

}  // namespace detail

}  // namespace tdsep
