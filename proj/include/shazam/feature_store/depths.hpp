#pragma once

#include <algorithm>
#include <cstdint>

#include "shazam/core/error.hpp"

namespace shazam {

struct ExtractionDepths {
  std::int64_t low = 0;
  std::int64_t mid = 0;
  std::int64_t high = 0;

  bool operator==(const ExtractionDepths&) const = default;
};

/// Transformer block indices hooked for the low/mid/high scales of an encoder with
/// `depth` blocks: floor(0.33 L), floor(0.66 L), L, clamped so every scale has a block.
inline ExtractionDepths extraction_depths(std::int64_t depth) {
  require(depth >= 1, ErrorKind::InvalidArgument, "encoder depth must be >= 1");
  // Integer form of floor(0.33 L) avoids binary rounding of 0.33.
  const std::int64_t low = std::max<std::int64_t>(1, (33 * depth) / 100);
  const std::int64_t mid = std::max<std::int64_t>(1, (66 * depth) / 100);
  return {low, mid, depth};
}

}  // namespace shazam
