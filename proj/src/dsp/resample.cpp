#include "asad/dsp/resample.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "asad/error.hpp"

namespace asad::dsp {

namespace {

/// Zeroth-order modified Bessel function of the first kind (power series).
double bessel_i0(double x) {
  const double half = x / 2.0;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 200; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

double kaiser_beta(double attenuation_db) {
  if (attenuation_db > 50.0) return 0.1102 * (attenuation_db - 8.7);
  if (attenuation_db >= 21.0) {
    return 0.5842 * std::pow(attenuation_db - 21.0, 0.4) + 0.07886 * (attenuation_db - 21.0);
  }
  return 0.0;
}

}  // namespace

ResamplerDesign design_resampler(double input_fs, double output_fs, double cutoff_hz,
                                 double transition_hz, double stopband_db) {
  if (!(input_fs > 0.0) || !(output_fs > 0.0) || std::floor(input_fs) != input_fs ||
      std::floor(output_fs) != output_fs) {
    throw ValidationError("resampling needs positive integer rates, got " +
                          std::to_string(input_fs) + " -> " + std::to_string(output_fs));
  }
  const auto in_rate = static_cast<std::size_t>(input_fs);
  const auto out_rate = static_cast<std::size_t>(output_fs);
  const std::size_t divisor = std::gcd(in_rate, out_rate);
  ResamplerDesign design;
  design.up = out_rate / divisor;
  design.down = in_rate / divisor;
  design.input_fs = input_fs;
  design.output_fs = output_fs;
  design.cutoff_hz = cutoff_hz;
  design.transition_hz = transition_hz;
  design.stopband_db = stopband_db;

  const double pi = std::numbers::pi;
  const double rate = input_fs * static_cast<double>(design.up);
  const double delta_omega = 2.0 * pi * transition_hz / rate;
  auto length = static_cast<std::size_t>(std::ceil((stopband_db - 7.95) / (2.285 * delta_omega))) + 1;
  if (length % 2 == 0) ++length;
  const double beta = kaiser_beta(stopband_db);
  const double norm = bessel_i0(beta);
  const double fc = cutoff_hz / rate;
  const double mid = static_cast<double>(length - 1) / 2.0;
  design.taps.resize(length);
  for (std::size_t i = 0; i < length; ++i) {
    const double t = static_cast<double>(i) - mid;
    const double sinc = t == 0.0 ? 2.0 * fc : std::sin(2.0 * pi * fc * t) / (pi * t);
    const double r = t / mid;
    const double window = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
    design.taps[i] = sinc * window * static_cast<double>(design.up);
  }
  return design;
}

std::vector<double> resample(std::span<const double> input, const ResamplerDesign& design) {
  const std::size_t up = design.up;
  const std::size_t down = design.down;
  const std::size_t taps = design.taps.size();
  const std::size_t delay = (taps - 1) / 2;
  const std::size_t out_len = (input.size() * up + down - 1) / down;
  std::vector<double> out(out_len, 0.0);
  for (std::size_t n = 0; n < out_len; ++n) {
    // Position in the upsampled stream, shifted by the filter delay.
    const std::size_t pos = n * down + delay;
    double acc = 0.0;
    // Only taps aligned with non-zero upsampled samples contribute.
    for (std::size_t k = pos % up; k < taps && k <= pos; k += up) {
      const std::size_t src = (pos - k) / up;
      if (src < input.size()) acc += design.taps[k] * input[src];
    }
    out[n] = acc;
  }
  return out;
}

ResamplerDesign design_resampler_to_128(double input_fs) {
  return design_resampler(input_fs, kTargetRate, 0.45 * kTargetRate, 4.0, 80.0);
}

RecordingBuffer resample_to_128(const RecordingBuffer& buffer) {
  buffer.validate();
  if (buffer.fs < kTargetRate) {
    throw ValidationError("cannot resample from " + std::to_string(buffer.fs) +
                          " Hz: input rate must be at least 128 Hz (no upsampling path)");
  }
  if (buffer.fs == kTargetRate) return buffer;
  const ResamplerDesign design = design_resampler_to_128(buffer.fs);
  RecordingBuffer out;
  out.fs = kTargetRate;
  out.channel_labels = buffer.channel_labels;
  for (std::size_t c = 0; c < buffer.n_channels(); ++c) {
    std::vector<double> channel = resample(buffer.channel(c), design);
    if (c == 0) {
      out.n_samples = channel.size();
      out.samples.reserve(channel.size() * buffer.n_channels());
    }
    out.samples.insert(out.samples.end(), channel.begin(), channel.end());
  }
  return out;
}

}  // namespace asad::dsp
