#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace asad::dsp {

/// Channels x time samples, channel-major.
struct RecordingBuffer {
  double fs = 0.0;
  std::vector<std::string> channel_labels;
  std::size_t n_samples = 0;
  std::vector<double> samples;

  RecordingBuffer() = default;
  RecordingBuffer(double sampling_rate, std::vector<std::string> labels, std::size_t length);

  std::size_t n_channels() const { return channel_labels.size(); }
  std::span<double> channel(std::size_t c) {
    return std::span<double>(samples).subspan(c * n_samples, n_samples);
  }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(samples).subspan(c * n_samples, n_samples);
  }
  /// Throws ValidationError when label count or sample storage are inconsistent.
  void validate() const;
};

}  // namespace asad::dsp
