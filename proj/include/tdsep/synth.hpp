// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <vector>

namespace tdsep {

// Deterministic speech-like test signal: a harmonic stack with a wandering
// fundamental, two formant-style spectral emphases, a syllabic on/off
// envelope, and a faint noise floor. Not a voice corpus substitute for
// perceptual work, but statistically rich enough to drive separation
// training and evaluation without external data.
std::vector<double> make_synthetic_voice(uint64_t seed, int64_t num_samples,
                                         double sample_rate);

}  // namespace tdsep
