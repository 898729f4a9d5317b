#include "asad/dsp/preprocess.hpp"

#include <cmath>
#include <string>

#include "asad/error.hpp"

namespace asad::dsp {

RecordingBuffer zscore_normalize(const RecordingBuffer& buffer) {
  buffer.validate();
  if (buffer.n_samples < 2 && buffer.n_channels() > 0) {
    throw ValidationError("z-score needs at least 2 samples per channel, got " +
                          std::to_string(buffer.n_samples));
  }
  RecordingBuffer out = buffer;
  const double count = static_cast<double>(buffer.n_samples);
  for (std::size_t c = 0; c < out.n_channels(); ++c) {
    auto samples = out.channel(c);
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= count;
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    const double stddev = std::sqrt(var / count);
    if (stddev < 1e-12) {
      std::fill(samples.begin(), samples.end(), 0.0);
      continue;
    }
    for (double& v : samples) v = (v - mean) / stddev;
  }
  return out;
}

RecordingBuffer preprocess(const RecordingBuffer& buffer, const PreprocessConfig& config) {
  RecordingBuffer resampled = resample_to_128(buffer);
  const BiquadCascade band = design_butterworth_bandpass(
      config.filter_order, config.band_low_hz, config.band_high_hz, resampled.fs);
  return zscore_normalize(apply_filter(resampled, band));
}

}  // namespace asad::dsp
