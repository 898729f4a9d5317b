#pragma once

#include <array>
#include <complex>
#include <span>
#include <vector>

#include "asad/dsp/recording.hpp"

namespace asad::dsp {

/// y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  std::complex<double> response(std::complex<double> z_inv) const;
  /// Roots of z^2 + a1 z + a2.
  std::array<std::complex<double>, 2> poles() const;
};

struct BiquadCascade {
  std::vector<Biquad> sections;
  int order = 0;
  double f_low = 0.0;
  double f_high = 0.0;
  double fs = 0.0;

  std::complex<double> response(double frequency_hz) const;
  double magnitude(double frequency_hz) const { return std::abs(response(frequency_hz)); }
  double magnitude_db(double frequency_hz) const;
  std::vector<std::complex<double>> poles() const;
  bool is_stable(double margin = 1e-9) const;
};

/// Digital Butterworth band-pass of total order `order` (even): analog
/// low-pass prototype of order/2, low-pass to band-pass transform, bilinear
/// transform with pre-warped band edges, one biquad per conjugate pole pair.
/// Each section has zeros at z = 1 and z = -1 and unit gain at the
/// pre-warped center frequency.
BiquadCascade design_butterworth_bandpass(int order, double f_low, double f_high, double fs);

/// Causal transposed direct form II, zero initial state, in place.
void filter_in_place(const BiquadCascade& cascade, std::span<double> signal);

RecordingBuffer apply_filter(const RecordingBuffer& buffer, const BiquadCascade& cascade);

}  // namespace asad::dsp
