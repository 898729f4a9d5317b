#pragma once

#include "asad/dsp/butterworth.hpp"
#include "asad/dsp/recording.hpp"
#include "asad/dsp/resample.hpp"

namespace asad::dsp {

/// Per channel over the full time axis: subtract the mean and divide by the
/// population standard deviation. Channels with std < 1e-12 become zeros.
RecordingBuffer zscore_normalize(const RecordingBuffer& buffer);

struct PreprocessConfig {
  int filter_order = 8;
  double band_low_hz = 14.0;
  double band_high_hz = 31.0;
};

/// resample_to_128 -> Butterworth band-pass -> zscore_normalize.
RecordingBuffer preprocess(const RecordingBuffer& buffer, const PreprocessConfig& config = {});

}  // namespace asad::dsp
