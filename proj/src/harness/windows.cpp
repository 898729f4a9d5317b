#include "asad/harness/windows.hpp"

#include <cmath>

#include "asad/error.hpp"

namespace asad::harness {

std::size_t window_samples(double duration_s) {
  const double samples = duration_s * kWindowRate;
  if (!(samples >= 1.0) || samples != std::floor(samples)) {
    throw ValidationError("window duration " + std::to_string(duration_s) +
                          " s is not a whole number of 128 Hz samples");
  }
  return static_cast<std::size_t>(samples);
}

SliceResult slice_windows(const EegRecording& recording, double duration_s,
                          const topo::TopologyMap& topology, double hop_s) {
  const std::size_t length = window_samples(duration_s);
  const std::size_t hop = hop_s == 0.0 ? length : window_samples(hop_s);
  SliceResult result;
  if (recording.trials.empty()) return result;
  if (recording.fs() != kWindowRate) {
    throw ValidationError("slice_windows expects 128 Hz preprocessed data, '" +
                          recording.subject_id + "' is at " + std::to_string(recording.fs()) +
                          " Hz");
  }
  for (const Trial& trial : recording.trials) {
    const std::size_t n = trial.buffer.n_samples;
    if (n < length) {
      result.warnings.push_back("subject '" + recording.subject_id + "' trial " +
                                std::to_string(trial.trial_id) + " has " + std::to_string(n) +
                                " samples, shorter than one " + std::to_string(length) +
                                "-sample window; skipped");
      result.discarded_samples += n;
      continue;
    }
    const std::size_t count = (n - length) / hop + 1;
    for (std::size_t w = 0; w < count; ++w) {
      DecisionWindow window;
      window.grid = topo::to_grid<float>(trial.buffer, topology, w * hop, length);
      window.label = trial.label;
      window.subject_id = recording.subject_id;
      window.trial_id = trial.trial_id;
      window.window_index = w;
      window.duration_s = duration_s;
      result.windows.push_back(std::move(window));
    }
    const std::size_t covered = (count - 1) * hop + length;
    result.discarded_samples += n - covered;
  }
  return result;
}

}  // namespace asad::harness
