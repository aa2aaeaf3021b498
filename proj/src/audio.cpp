// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/audio.hpp"

#include <cmath>

namespace tdsep {

WindowType window_type_from_string(const std::string& name) {
  if (name == "hann") return WindowType::kHann;
  if (name == "rectangular" || name == "rect") return WindowType::kRectangular;
  throw ConfigError("unknown window type: " + name);
}

std::string to_string(WindowType type) {
  switch (type) {
    case WindowType::kHann:
      return "hann";
    case WindowType::kRectangular:
      return "rectangular";
  }
  return "?";
}

std::vector<double> make_window(WindowType type, int length) {
  if (length <= 0) throw ConfigError("window length must be positive");
  std::vector<double> w(length, 1.0);
  if (type == WindowType::kHann) {
    for (int n = 0; n < length; ++n) {
      w[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / length);
    }
  }
  return w;
}

}  // namespace tdsep
