#pragma once

#include <affgr/error.hpp>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace affgr {

/// Row-major binary image; nonzero = foreground.
struct AffordanceMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  AffordanceMask() = default;
  AffordanceMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {
    if (w <= 0 || h <= 0) throw Error(ErrorCode::InvalidArgument, "mask dimensions must be positive");
  }

  std::size_t size() const { return bits.size(); }
  bool at(int col, int row) const { return bits[index(col, row)] != 0; }
  void set(int col, int row, bool on = true) { bits[index(col, row)] = on ? 1 : 0; }
  std::size_t index(int col, int row) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(col);
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }
  bool empty() const { return count() == 0; }

  friend bool operator==(const AffordanceMask& a, const AffordanceMask& b) {
    if (a.width != b.width || a.height != b.height) return false;
    for (std::size_t i = 0; i < a.bits.size(); ++i)
      if ((a.bits[i] != 0) != (b.bits[i] != 0)) return false;
    return true;
  }
};

struct OverlapCounts {
  std::size_t intersection = 0;
  std::size_t uni = 0;
};

inline OverlapCounts overlap_counts(const AffordanceMask& a, const AffordanceMask& b) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                    std::to_string(b.width) + "x" + std::to_string(b.height));
  }
  OverlapCounts c;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool x = a.bits[i] != 0, y = b.bits[i] != 0;
    c.intersection += x && y;
    c.uni += x || y;
  }
  return c;
}

/// Pixel-count IoU; two empty masks are a perfect match (1.0).
inline double mask_iou(const AffordanceMask& a, const AffordanceMask& b) {
  const auto c = overlap_counts(a, b);
  if (c.uni == 0) return 1.0;
  return static_cast<double>(c.intersection) / static_cast<double>(c.uni);
}

}  // namespace affgr
