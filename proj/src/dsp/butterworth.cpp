#include "asad/dsp/butterworth.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "asad/error.hpp"

namespace asad::dsp {

using Complex = std::complex<double>;

RecordingBuffer::RecordingBuffer(double sampling_rate, std::vector<std::string> labels,
                                 std::size_t length)
    : fs(sampling_rate), channel_labels(std::move(labels)), n_samples(length) {
  samples.assign(channel_labels.size() * n_samples, 0.0);
}

void RecordingBuffer::validate() const {
  if (samples.size() != channel_labels.size() * n_samples) {
    throw ValidationError("recording holds " + std::to_string(samples.size()) + " samples, " +
                          "expected " + std::to_string(channel_labels.size()) + " channels x " +
                          std::to_string(n_samples));
  }
  if (!(fs > 0.0)) throw ValidationError("sampling rate must be positive");
}

Complex Biquad::response(Complex z_inv) const {
  const Complex z_inv2 = z_inv * z_inv;
  return (b0 + b1 * z_inv + b2 * z_inv2) / (1.0 + a1 * z_inv + a2 * z_inv2);
}

std::array<Complex, 2> Biquad::poles() const {
  const Complex disc = std::sqrt(Complex(a1 * a1 - 4.0 * a2, 0.0));
  return {(-a1 + disc) / 2.0, (-a1 - disc) / 2.0};
}

Complex BiquadCascade::response(double frequency_hz) const {
  const Complex z_inv = std::polar(1.0, -2.0 * std::numbers::pi * frequency_hz / fs);
  Complex h(1.0, 0.0);
  for (const Biquad& s : sections) h *= s.response(z_inv);
  return h;
}

double BiquadCascade::magnitude_db(double frequency_hz) const {
  return 20.0 * std::log10(magnitude(frequency_hz));
}

std::vector<Complex> BiquadCascade::poles() const {
  std::vector<Complex> out;
  for (const Biquad& s : sections) {
    const auto p = s.poles();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

bool BiquadCascade::is_stable(double margin) const {
  for (const Complex& p : poles()) {
    if (std::abs(p) >= 1.0 - margin) return false;
  }
  return true;
}

BiquadCascade design_butterworth_bandpass(int order, double f_low, double f_high, double fs) {
  if (order <= 0 || order % 2 != 0) {
    throw ValidationError("band-pass order must be a positive even integer, got " +
                          std::to_string(order));
  }
  if (!(fs > 0.0) || !(f_low > 0.0) || !(f_low < f_high) || !(f_high < fs / 2.0)) {
    throw ValidationError("invalid band edges: need 0 < f_low < f_high < fs/2 (f_low=" +
                          std::to_string(f_low) + ", f_high=" + std::to_string(f_high) +
                          ", fs=" + std::to_string(fs) + ")");
  }
  const double pi = std::numbers::pi;
  const double k = 2.0 * fs;
  const double w_low = k * std::tan(pi * f_low / fs);
  const double w_high = k * std::tan(pi * f_high / fs);
  const double bandwidth = w_high - w_low;
  const double center_sq = w_low * w_high;
  const int prototype_order = order / 2;

  // Upper-half-plane band-pass poles; each pairs with its conjugate.
  std::vector<Complex> analog_poles;
  for (int m = 0; m < prototype_order; ++m) {
    const double theta = pi * (2.0 * m + 1.0 + prototype_order) / (2.0 * prototype_order);
    const Complex lowpass = std::polar(1.0, theta);
    const Complex half = lowpass * bandwidth / 2.0;
    const Complex root = std::sqrt(half * half - center_sq);
    for (const Complex& s : {half + root, half - root}) {
      if (s.imag() > 0.0) analog_poles.push_back(s);
    }
  }
  if (analog_poles.size() != static_cast<std::size_t>(prototype_order)) {
    throw NumericError("band-pass pole pairing failed");
  }

  const double w_center = 2.0 * std::atan(std::sqrt(center_sq) / k);
  const Complex z_center_inv = std::polar(1.0, -w_center);
  BiquadCascade cascade;
  cascade.order = order;
  cascade.f_low = f_low;
  cascade.f_high = f_high;
  cascade.fs = fs;
  for (const Complex& s : analog_poles) {
    const Complex z = (k + s) / (k - s);
    Biquad section;
    section.a1 = -2.0 * z.real();
    section.a2 = std::norm(z);
    section.b0 = 1.0;
    section.b1 = 0.0;
    section.b2 = -1.0;
    const double gain = 1.0 / std::abs(section.response(z_center_inv));
    section.b0 = gain;
    section.b2 = -gain;
    cascade.sections.push_back(section);
  }
  return cascade;
}

void filter_in_place(const BiquadCascade& cascade, std::span<double> signal) {
  for (const Biquad& s : cascade.sections) {
    double state1 = 0.0;
    double state2 = 0.0;
    for (double& v : signal) {
      const double x = v;
      const double y = s.b0 * x + state1;
      state1 = s.b1 * x - s.a1 * y + state2;
      state2 = s.b2 * x - s.a2 * y;
      v = y;
    }
  }
}

RecordingBuffer apply_filter(const RecordingBuffer& buffer, const BiquadCascade& cascade) {
  buffer.validate();
  if (std::abs(buffer.fs - cascade.fs) > 1e-9) {
    throw ValidationError("recording fs " + std::to_string(buffer.fs) +
                          " Hz does not match filter fs " + std::to_string(cascade.fs) + " Hz");
  }
  RecordingBuffer out = buffer;
  for (std::size_t c = 0; c < out.n_channels(); ++c) filter_in_place(cascade, out.channel(c));
  return out;
}

}  // namespace asad::dsp
