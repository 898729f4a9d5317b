#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace asad::harness {

struct Metrics {
  std::size_t decisions = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::array<std::size_t, 2> class_count{};
  std::array<std::size_t, 2> class_correct{};
  /// NaN for a class with no windows.
  std::array<double, 2> class_accuracy{};
};

/// Throws ValidationError on an empty or mismatched set.
Metrics score_decisions(std::span<const int> predicted, std::span<const int> labels);

struct SubjectAccuracy {
  std::string subject;
  double accuracy = 0.0;
};

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  /// Sample standard deviation (n - 1); 0 for a single value.
  double sd = 0.0;
};

Summary summarize(std::span<const double> values);

}  // namespace asad::harness
