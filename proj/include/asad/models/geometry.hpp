#pragma once

#include <array>
#include <cstddef>

// Compile-time view of the fixed layer geometry shared by the DenseNet
// builders. Everything here is constexpr so shape traces can be checked by
// static_assert.
namespace asad::models::geometry {

struct Window {
  std::size_t kernel;
  std::size_t stride;
  std::size_t pad;
};

inline constexpr Window kStemPool{3, 2, 1};
inline constexpr Window kTransitionSpatial{2, 1, 0};
inline constexpr Window kTransitionTemporal{7, 3, 0};

/// Output extent of a sliding window, or 0 when the window does not fit.
constexpr std::size_t extent(std::size_t in, Window w) {
  if (w.stride == 0 || in + 2 * w.pad < w.kernel) return 0;
  return (in + 2 * w.pad - w.kernel) / w.stride + 1;
}

struct Plane {
  std::size_t height;
  std::size_t width;
  constexpr bool operator==(const Plane&) const = default;
};

/// Spatial plane after the stem pool and after each of the three transitions.
constexpr std::array<Plane, 4> spatial_trace(Plane grid) {
  std::array<Plane, 4> out{};
  Plane p{extent(grid.height, kStemPool), extent(grid.width, kStemPool)};
  out[0] = p;
  for (std::size_t i = 1; i < 4; ++i) {
    p = {extent(p.height, kTransitionSpatial), extent(p.width, kTransitionSpatial)};
    out[i] = p;
  }
  return out;
}

/// Temporal extent after each transition (0 marks an underflow).
constexpr std::array<std::size_t, 3> temporal_trace(std::size_t samples) {
  std::array<std::size_t, 3> out{};
  std::size_t t = samples;
  for (auto& slot : out) {
    t = extent(t, kTransitionTemporal);
    slot = t;
  }
  return out;
}

/// Channel width after dense block b (1-based), halving at each transition.
constexpr std::size_t block_width(std::size_t growth, std::size_t b, std::size_t stem_factor = 2,
                                  std::size_t layers = 4) {
  std::size_t width = stem_factor * growth;
  for (std::size_t i = 1; i <= b; ++i) {
    width += layers * growth;
    if (i < b) width /= 2;
  }
  return width;
}

/// Smallest window length whose three transitions all fit.
constexpr std::size_t min_densenet3d_samples() {
  std::size_t t = 1;
  while (temporal_trace(t)[2] == 0) ++t;
  return t;
}

}  // namespace asad::models::geometry
