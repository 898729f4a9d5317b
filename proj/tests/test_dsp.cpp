#include <doctest.h>

#include <cmath>

#include "asad/dsp/butterworth.hpp"
#include "asad/dsp/preprocess.hpp"
#include "asad/dsp/resample.hpp"
#include "asad/error.hpp"
#include "asad/rng.hpp"
#include "oracles.hpp"

using namespace asad;
using namespace asad::dsp;

namespace {

RecordingBuffer single_channel(double fs, const std::vector<double>& x) {
  RecordingBuffer buf(fs, {"Cz"}, x.size());
  std::copy(x.begin(), x.end(), buf.channel(0).begin());
  return buf;
}

std::vector<double> tone(double f, double fs, std::size_t n, double amplitude = 1.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amplitude * std::sin(2 * M_PI * f * double(i) / fs);
  return x;
}

double rms(const std::vector<double>& x, std::size_t begin, std::size_t end) {
  double acc = 0.0;
  for (std::size_t i = begin; i < end; ++i) acc += x[i] * x[i];
  return std::sqrt(acc / double(end - begin));
}

}  // namespace

TEST_CASE("band-pass design hits its band edges and center") {
  const auto bp = design_butterworth_bandpass(8, 14.0, 31.0, 128.0);
  CHECK(bp.sections.size() == 4);
  CHECK(std::abs(bp.magnitude_db(14.0) + 3.0103) <= 0.2);
  CHECK(std::abs(bp.magnitude_db(31.0) + 3.0103) <= 0.2);
  CHECK(std::abs(bp.magnitude_db(std::sqrt(14.0 * 31.0))) <= 0.1);
  CHECK(bp.magnitude(0.0) == 0.0);
  for (const auto& p : bp.poles()) CHECK(std::abs(p) < 1.0 - 1e-9);
}

TEST_CASE("band-pass design rejects bad arguments") {
  CHECK_THROWS_AS(design_butterworth_bandpass(7, 14, 31, 128), ValidationError);
  CHECK_THROWS_AS(design_butterworth_bandpass(8, 31, 14, 128), ValidationError);
  CHECK_THROWS_AS(design_butterworth_bandpass(8, 14, 70, 128), ValidationError);
  CHECK_THROWS_AS(design_butterworth_bandpass(8, 0, 31, 128), ValidationError);
}

TEST_CASE("designed cascades are stable across bands and orders") {
  for (int order : {2, 4, 6, 8, 10}) {
    for (double lo : {1.0, 4.0, 14.0}) {
      for (double hi : {20.0, 31.0, 60.0}) {
        CHECK(design_butterworth_bandpass(order, lo, hi, 128.0).is_stable());
      }
    }
  }
}

TEST_CASE("impulse response spectrum matches the designed response") {
  const auto bp = design_butterworth_bandpass(8, 14.0, 31.0, 128.0);
  std::vector<double> h(8192, 0.0);
  h[0] = 1.0;
  filter_in_place(bp, h);
  for (double f = 0.0; f <= 64.0; f += 0.25) {
    CHECK(std::abs(std::abs(oracle::dft_at(h, f, 128.0)) - bp.magnitude(f)) <= 1e-6);
  }
}

TEST_CASE("filtering zero, DC, and linear combinations") {
  const auto bp = design_butterworth_bandpass(8, 14.0, 31.0, 128.0);
  std::vector<double> zero(512, 0.0);
  filter_in_place(bp, zero);
  CHECK(std::all_of(zero.begin(), zero.end(), [](double v) { return v == 0.0; }));

  std::vector<double> dc(1280, 2.5);
  filter_in_place(bp, dc);
  CHECK(rms(dc, 960, 1280) <= 1e-6 * 2.5);

  Rng rng(4);
  std::vector<double> x(600), y(600), mix(600);
  for (std::size_t i = 0; i < 600; ++i) {
    x[i] = rng.normal();
    y[i] = rng.normal();
    mix[i] = 0.7 * x[i] - 1.9 * y[i];
  }
  filter_in_place(bp, x);
  filter_in_place(bp, y);
  filter_in_place(bp, mix);
  for (std::size_t i = 0; i < 600; ++i) CHECK(std::abs(mix[i] - (0.7 * x[i] - 1.9 * y[i])) <= 1e-10);
}

TEST_CASE("apply_filter checks the sampling rate") {
  const auto bp = design_butterworth_bandpass(8, 14.0, 31.0, 128.0);
  CHECK_THROWS_AS(apply_filter(single_channel(256.0, std::vector<double>(64, 0.0)), bp), ValidationError);
  const auto out = apply_filter(single_channel(128.0, std::vector<double>(64, 0.0)), bp);
  CHECK(out.n_samples == 64);
}

TEST_CASE("resampling at 128 Hz is the identity") {
  Rng rng(6);
  std::vector<double> x(300);
  for (double& v : x) v = rng.normal();
  const auto buf = single_channel(128.0, x);
  const auto out = resample_to_128(buf);
  CHECK(out.fs == 128.0);
  CHECK(out.samples == buf.samples);
  CHECK_THROWS_AS(resample_to_128(single_channel(100.0, x)), ValidationError);
}

TEST_CASE("10 Hz tone survives 512 -> 128 Hz with under 1% amplitude error") {
  const auto out = resample_to_128(single_channel(512.0, tone(10.0, 512.0, 512 * 10)));
  REQUIRE(out.n_samples == 1280);
  const std::vector<double> y(out.channel(0).begin(), out.channel(0).end());
  const auto fit = oracle::fit_sine(y, 10.0, 128.0, 128, 1152);
  CHECK(std::abs(fit.amplitude - 1.0) <= 0.01);
}

TEST_CASE("60 Hz tone is rejected by the anti-alias filter") {
  const auto input = tone(60.0, 512.0, 512 * 10);
  const auto out = resample_to_128(single_channel(512.0, input));
  const std::vector<double> y(out.channel(0).begin(), out.channel(0).end());
  CHECK(rms(y, 128, 1152) <= 1e-3 * rms(input, 0, input.size()));
}

TEST_CASE("resampling preserves in-band tone frequency") {
  for (double f : {5.0, 12.5, 20.0, 33.0, 41.0, 50.0}) {
    for (double fs : {256.0, 512.0, 384.0}) {
      const auto out = resample_to_128(single_channel(fs, tone(f, fs, std::size_t(fs * 8))));
      const std::vector<double> y(out.channel(0).begin(), out.channel(0).end());
      const double est = oracle::fit_frequency(y, f, 128.0, 102, 922);
      CHECK_MESSAGE(std::abs(est - f) <= 0.01, "f=" << f << " fs=" << fs << " est=" << est);
    }
  }
}

TEST_CASE("z-score normalization") {
  Rng rng(7);
  RecordingBuffer buf(128.0, {"A", "B", "C"}, 400);
  for (std::size_t i = 0; i < 400; ++i) {
    buf.channel(0)[i] = 3.0 + 5.0 * rng.normal();
    buf.channel(1)[i] = -1.0;
    buf.channel(2)[i] = rng.uniform();
  }
  const auto z = zscore_normalize(buf);
  for (std::size_t c : {0u, 2u}) {
    double sum = 0, sq = 0;
    for (double v : z.channel(c)) sum += v;
    const double mean = sum / 400;
    for (double v : z.channel(c)) sq += (v - mean) * (v - mean);
    CHECK(std::abs(mean) <= 1e-12);
    CHECK(std::abs(sq / 400 - 1.0) <= 1e-9);
  }
  for (double v : z.channel(1)) CHECK(v == 0.0);
  const auto twice = zscore_normalize(z);
  for (std::size_t i = 0; i < z.samples.size(); ++i) CHECK(std::abs(twice.samples[i] - z.samples[i]) <= 1e-10);
}

TEST_CASE("preprocessing concentrates a 20 Hz tone in the beta band") {
  Rng rng(8);
  auto x = tone(20.0, 256.0, 2560);
  for (double& v : x) v += rng.normal();
  const auto out = preprocess(single_channel(256.0, x));
  CHECK(out.fs == 128.0);
  const std::vector<double> y(out.channel(0).begin(), out.channel(0).end());
  double band = 0.0, total = 0.0;
  for (std::size_t k = 0; k <= y.size() / 2; ++k) {
    const double f = double(k) * 128.0 / double(y.size());
    const double p = std::norm(oracle::dft_at(y, f, 128.0));
    total += p;
    if (f >= 14.0 && f <= 31.0) band += p;
  }
  CHECK(band / total >= 0.95);
}
