#pragma once

#include <cstdint>
#include <vector>

#include "asad/harness/container.hpp"
#include "asad/topo/topology.hpp"

namespace asad::harness {

/// Desk-scale lateralized EEG. Each trial carries one shared 14-31 Hz source
/// projected onto every mapped channel with gain beta_amplitude, multiplied
/// by asymmetry_ratio on the hemisphere that matches the label (attend-left
/// boosts the left-hemisphere columns 0-4, attend-right columns 6-10). Each
/// channel adds its own 1/f^noise_exponent noise.
struct SyntheticSpec {
  std::size_t n_subjects = 2;
  std::size_t trials_per_subject = 4;
  double trial_length_s = 360.0;
  double fs = 256.0;
  double noise_exponent = 1.0;
  /// Broadband standard deviation of each channel's noise.
  double noise_amplitude = 1.0;
  double beta_low_hz = 14.0;
  double beta_high_hz = 31.0;
  /// RMS of the β component on the non-boosted hemisphere.
  double beta_amplitude = 0.3;
  double asymmetry_ratio = 1.5;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Subjects are named "S01", "S02", ...; trial labels alternate and are
/// then shuffled, so each subject is balanced to within one trial.
std::vector<EegRecording> synthesize(const SyntheticSpec& spec,
                                     const topo::TopologyMap& topology = topo::default_topology());

struct LogisticModel {
  std::vector<double> weights;  // last entry is the intercept
  double logit(std::span<const double> features) const;
  int predict(std::span<const double> features) const { return logit(features) > 0.0 ? 1 : 0; }
};

/// Ridge-regularized logistic regression fitted by Newton's method.
LogisticModel fit_logistic(const std::vector<std::vector<double>>& features,
                           const std::vector<int>& labels, double ridge = 1e-3,
                           int iterations = 50);

enum class PowerFeature {
  /// log mean per-channel β power, left minus right hemisphere. Needs
  /// unnormalized data.
  kChannelPower,
  /// log β power of the hemisphere-averaged signal, left minus right.
  /// Survives per-channel z-scoring because it measures coherence.
  kPooledPower,
};

struct OracleResult {
  double accuracy = 0.0;
  std::size_t train_windows = 0;
  std::size_t test_windows = 0;
};

/// Band-passes every trial, cuts non-overlapping windows, computes the
/// hemispheric feature and scores a logistic classifier on a seeded 4:1
/// split of the pooled windows.
OracleResult band_power_oracle(const std::vector<EegRecording>& recordings,
                               const topo::TopologyMap& topology, double window_s,
                               std::uint64_t seed, PowerFeature feature);

}  // namespace asad::harness
