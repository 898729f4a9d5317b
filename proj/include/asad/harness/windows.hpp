#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asad/harness/container.hpp"
#include "asad/tensor.hpp"
#include "asad/topo/topology.hpp"

namespace asad::harness {

inline constexpr double kWindowRate = 128.0;

struct DecisionWindow {
  /// [10, 11, T] with T = 128 * duration.
  Tensor<float> grid;
  int label = kLeft;
  std::string subject_id;
  std::uint32_t trial_id = 0;
  /// Position of the window within its trial.
  std::size_t window_index = 0;
  double duration_s = 1.0;
};

struct SliceResult {
  std::vector<DecisionWindow> windows;
  std::size_t discarded_samples = 0;
  /// One entry per trial too short to hold a single window.
  std::vector<std::string> warnings;
};

/// Cuts each trial into contiguous windows of `duration_s` seconds, drops the
/// trailing remainder and grids every window. `hop_s` of 0 means
/// non-overlapping (hop = duration).
SliceResult slice_windows(const EegRecording& recording, double duration_s,
                          const topo::TopologyMap& topology, double hop_s = 0.0);

/// Window length in samples at 128 Hz; throws ValidationError unless
/// duration * 128 is a positive whole number.
std::size_t window_samples(double duration_s);

}  // namespace asad::harness
