#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "asad/dsp/recording.hpp"

namespace asad::dsp {

/// Anti-alias design for rational-ratio resampling.
struct ResamplerDesign {
  std::size_t up = 1;
  std::size_t down = 1;
  double input_fs = 0.0;
  double output_fs = 0.0;
  double cutoff_hz = 0.0;
  double transition_hz = 0.0;
  double stopband_db = 0.0;
  /// Linear-phase low-pass taps at input_fs * up, gain `up` in the passband.
  std::vector<double> taps;
};

/// Kaiser-windowed sinc low-pass centered at `cutoff_hz` with a total
/// transition width `transition_hz` and the given stopband attenuation.
ResamplerDesign design_resampler(double input_fs, double output_fs, double cutoff_hz,
                                 double transition_hz, double stopband_db);

/// Polyphase evaluation of upsample-by-up, filter, downsample-by-down. The
/// filter delay is compensated so output sample n aligns with input time
/// n / output_fs; samples beyond either end are treated as zero.
std::vector<double> resample(std::span<const double> input, const ResamplerDesign& design);

inline constexpr double kTargetRate = 128.0;

/// Brings the recording to 128 Hz. Identity when already at 128 Hz; inputs
/// below 128 Hz or with a non-integer rate are rejected.
RecordingBuffer resample_to_128(const RecordingBuffer& buffer);

/// The design used by resample_to_128: cutoff 0.45 * 128 Hz, 4 Hz transition,
/// 80 dB stopband.
ResamplerDesign design_resampler_to_128(double input_fs);

}  // namespace asad::dsp
