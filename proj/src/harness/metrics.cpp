#include "asad/harness/metrics.hpp"

#include <cmath>
#include <limits>

#include "asad/error.hpp"

namespace asad::harness {

Metrics score_decisions(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.empty()) throw ValidationError("cannot score an empty window set");
  if (predicted.size() != labels.size()) {
    throw ValidationError("decision count " + std::to_string(predicted.size()) +
                          " differs from label count " + std::to_string(labels.size()));
  }
  Metrics m;
  m.decisions = predicted.size();
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const int y = labels[i];
    if (y != 0 && y != 1) throw ValidationError("label " + std::to_string(y) + " outside {0, 1}");
    ++m.class_count[y];
    if (predicted[i] == y) {
      ++m.correct;
      ++m.class_correct[y];
    }
  }
  m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.decisions);
  for (int c = 0; c < 2; ++c) {
    m.class_accuracy[c] = m.class_count[c] == 0
                              ? std::numeric_limits<double>::quiet_NaN()
                              : static_cast<double>(m.class_correct[c]) /
                                    static_cast<double>(m.class_count[c]);
  }
  return m;
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw ValidationError("cannot summarize an empty set");
  Summary s;
  s.count = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  return s;
}

}  // namespace asad::harness
