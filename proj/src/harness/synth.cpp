#include "asad/harness/synth.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numeric>

#include "asad/dsp/butterworth.hpp"
#include "asad/error.hpp"
#include "asad/rng.hpp"

namespace asad::harness {

namespace {

constexpr std::size_t kNoiseTaps = 256;

/// Fractional integration (1 - z^-1)^(-alpha/2) truncated to `taps` terms,
/// scaled to unit output variance for unit white input.
std::vector<double> pink_filter(double alpha, std::size_t taps) {
  std::vector<double> h(taps);
  h[0] = 1.0;
  for (std::size_t k = 1; k < taps; ++k) {
    h[k] = h[k - 1] * (static_cast<double>(k) - 1.0 + alpha / 2.0) / static_cast<double>(k);
  }
  double energy = 0.0;
  for (double v : h) energy += v * v;
  const double scale = 1.0 / std::sqrt(energy);
  for (double& v : h) v *= scale;
  return h;
}

void fill_colored_noise(Rng& rng, const std::vector<double>& h, double amplitude,
                        std::span<double> out) {
  const std::size_t taps = h.size();
  std::vector<double> white(out.size() + taps - 1);
  for (double& v : white) v = rng.normal();
  for (std::size_t n = 0; n < out.size(); ++n) {
    // out[n] = sum_k h[k] * white[n + taps - 1 - k]
    const double* w = white.data() + n + taps - 1;
    double acc = 0.0;
    for (std::size_t k = 0; k < taps; ++k) acc += h[k] * w[-static_cast<std::ptrdiff_t>(k)];
    out[n] = amplitude * acc;
  }
}

std::vector<double> beta_source(Rng& rng, const dsp::BiquadCascade& band, std::size_t n,
                                std::size_t warmup) {
  std::vector<double> x(n + warmup);
  for (double& v : x) v = rng.normal();
  dsp::filter_in_place(band, x);
  std::vector<double> s(x.begin() + static_cast<std::ptrdiff_t>(warmup), x.end());
  double power = 0.0;
  for (double v : s) power += v * v;
  const double rms = std::sqrt(power / static_cast<double>(n));
  if (rms > 0.0) {
    for (double& v : s) v /= rms;
  }
  return s;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_subjects == 0 || trials_per_subject == 0) {
    throw ValidationError("synthetic spec needs at least one subject and one trial");
  }
  if (!(fs > 2.0 * beta_high_hz) || !(beta_low_hz > 0.0) || !(beta_high_hz > beta_low_hz)) {
    throw ValidationError("synthetic β band must lie in (0, fs/2)");
  }
  if (!(trial_length_s * fs >= 1.0)) throw ValidationError("synthetic trials must be non-empty");
  if (!(asymmetry_ratio >= 1.0)) throw ValidationError("asymmetry_ratio must be >= 1");
  if (!(noise_amplitude >= 0.0) || !(beta_amplitude >= 0.0) || !(noise_exponent >= 0.0)) {
    throw ValidationError("synthetic amplitudes and exponent must be non-negative");
  }
}

std::vector<EegRecording> synthesize(const SyntheticSpec& spec, const topo::TopologyMap& topology) {
  spec.validate();
  const auto band = dsp::design_butterworth_bandpass(8, spec.beta_low_hz, spec.beta_high_hz, spec.fs);
  const auto pink = pink_filter(spec.noise_exponent, kNoiseTaps);
  const std::size_t n = static_cast<std::size_t>(std::llround(spec.trial_length_s * spec.fs));
  const std::size_t warmup = static_cast<std::size_t>(std::llround(2.0 * spec.fs));
  const auto labels = topology.labels();

  std::vector<EegRecording> out;
  for (std::size_t s = 0; s < spec.n_subjects; ++s) {
    EegRecording rec;
    rec.subject_id = (s + 1 < 10 ? "S0" : "S") + std::to_string(s + 1);
    std::vector<int> trial_labels(spec.trials_per_subject);
    for (std::size_t t = 0; t < trial_labels.size(); ++t) trial_labels[t] = static_cast<int>(t % 2);
    Rng label_rng(derive_seed(spec.seed, s, 0xA11E));
    label_rng.shuffle(std::span<int>(trial_labels));

    for (std::size_t t = 0; t < spec.trials_per_subject; ++t) {
      Trial trial;
      trial.trial_id = static_cast<std::uint32_t>(t);
      trial.label = trial_labels[t];
      trial.buffer = dsp::RecordingBuffer(spec.fs, labels, n);
      Rng rng(derive_seed(spec.seed, s, t + 1));
      const auto source = beta_source(rng, band, n, warmup);
      const topo::Hemisphere boosted =
          trial.label == kLeft ? topo::Hemisphere::kLeft : topo::Hemisphere::kRight;
      for (std::size_t c = 0; c < labels.size(); ++c) {
        auto channel = trial.buffer.channel(c);
        fill_colored_noise(rng, pink, spec.noise_amplitude, channel);
        const auto side = topology.hemisphere(topology.entries()[c].cell);
        const double gain =
            spec.beta_amplitude * (side == boosted ? spec.asymmetry_ratio : 1.0);
        for (std::size_t i = 0; i < n; ++i) channel[i] += gain * source[i];
      }
      rec.trials.push_back(std::move(trial));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

double LogisticModel::logit(std::span<const double> features) const {
  if (features.size() + 1 != weights.size()) {
    throw ValidationError("logistic model expects " + std::to_string(weights.size() - 1) +
                          " features, got " + std::to_string(features.size()));
  }
  double z = weights.back();
  for (std::size_t i = 0; i < features.size(); ++i) z += weights[i] * features[i];
  return z;
}

LogisticModel fit_logistic(const std::vector<std::vector<double>>& features,
                           const std::vector<int>& labels, double ridge, int iterations) {
  if (features.empty() || features.size() != labels.size()) {
    throw ValidationError("logistic fit needs matching, non-empty features and labels");
  }
  const std::size_t d = features.front().size() + 1;
  const std::size_t n = features.size();
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() + 1 != d) throw ValidationError("ragged logistic feature rows");
    for (std::size_t j = 0; j + 1 < d; ++j) x(i, j) = features[i][j];
    x(i, d - 1) = 1.0;
    y(i) = labels[i];
  }
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd p = ((-(x * w)).array().exp() + 1.0).inverse().matrix();
    const Eigen::VectorXd r = p.array() * (1.0 - p.array());
    Eigen::VectorXd grad = x.transpose() * (p - y) + ridge * w;
    Eigen::MatrixXd hess = x.transpose() * r.asDiagonal() * x;
    hess.diagonal().array() += ridge;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    w -= step;
    if (step.norm() < 1e-12 * (1.0 + w.norm())) break;
  }
  LogisticModel model;
  model.weights.assign(w.data(), w.data() + d);
  return model;
}

OracleResult band_power_oracle(const std::vector<EegRecording>& recordings,
                               const topo::TopologyMap& topology, double window_s,
                               std::uint64_t seed, PowerFeature feature) {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (const auto& rec : recordings) {
    if (rec.trials.empty()) continue;
    const double fs = rec.fs();
    const auto band = dsp::design_butterworth_bandpass(8, 14.0, 31.0, fs);
    const std::size_t length = static_cast<std::size_t>(std::llround(window_s * fs));
    std::vector<int> side(rec.channel_labels().size(), -1);
    for (std::size_t c = 0; c < side.size(); ++c) {
      if (const auto cell = topology.find(rec.channel_labels()[c])) {
        const auto h = topology.hemisphere(*cell);
        side[c] = h == topo::Hemisphere::kLeft ? 0 : h == topo::Hemisphere::kRight ? 1 : -1;
      }
    }
    for (const auto& trial : rec.trials) {
      const auto filtered = dsp::apply_filter(trial.buffer, band);
      for (std::size_t start = 0; start + length <= filtered.n_samples; start += length) {
        std::array<double, 2> power{0.0, 0.0};
        std::array<std::size_t, 2> count{0, 0};
        std::vector<double> pooled[2] = {std::vector<double>(length, 0.0),
                                         std::vector<double>(length, 0.0)};
        for (std::size_t c = 0; c < side.size(); ++c) {
          if (side[c] < 0) continue;
          const auto x = filtered.channel(c).subspan(start, length);
          ++count[side[c]];
          if (feature == PowerFeature::kChannelPower) {
            for (double v : x) power[side[c]] += v * v;
          } else {
            for (std::size_t i = 0; i < length; ++i) pooled[side[c]][i] += x[i];
          }
        }
        if (count[0] == 0 || count[1] == 0) {
          throw ValidationError("oracle needs channels on both hemispheres");
        }
        if (feature == PowerFeature::kPooledPower) {
          for (int h = 0; h < 2; ++h) {
            for (double v : pooled[h]) power[h] += v * v;
            power[h] /= static_cast<double>(count[h]) * static_cast<double>(count[h]);
          }
        } else {
          for (int h = 0; h < 2; ++h) power[h] /= static_cast<double>(count[h]);
        }
        rows.push_back({std::log(power[0] + 1e-300) - std::log(power[1] + 1e-300)});
        labels.push_back(trial.label);
      }
    }
  }
  if (rows.size() < 5) throw ValidationError("oracle needs at least 5 windows");
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x0AC1E));
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t n_test = rows.size() / 5;
  std::vector<std::vector<double>> train_x;
  std::vector<int> train_y;
  for (std::size_t k = n_test; k < order.size(); ++k) {
    train_x.push_back(rows[order[k]]);
    train_y.push_back(labels[order[k]]);
  }
  const LogisticModel model = fit_logistic(train_x, train_y);
  std::size_t correct = 0;
  for (std::size_t k = 0; k < n_test; ++k) {
    correct += model.predict(rows[order[k]]) == labels[order[k]] ? 1 : 0;
  }
  OracleResult result;
  result.train_windows = train_x.size();
  result.test_windows = n_test;
  result.accuracy = static_cast<double>(correct) / static_cast<double>(n_test);
  return result;
}

}  // namespace asad::harness
