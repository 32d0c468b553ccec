// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dasr/signal.hpp"

namespace dasr {

std::string to_string(WindowType w) {
  switch (w) {
    case WindowType::kSqrtHann: return "sqrt_hann";
    case WindowType::kHann: return "hann";
    case WindowType::kRectangular: return "rect";
  }
  return "unknown";
}

WindowType window_from_string(const std::string& name) {
  if (name == "sqrt_hann" || name == "sqrthann") return WindowType::kSqrtHann;
  if (name == "hann") return WindowType::kHann;
  if (name == "rect" || name == "rectangular") return WindowType::kRectangular;
  throw ConfigError("unknown window type: " + name);
}

}  // namespace dasr
