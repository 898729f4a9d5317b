#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asad/nn/layers.hpp"

namespace asad::nn {

struct GradcheckOptions {
  double step = 1e-6;
  /// Coordinates sampled per tensor; tensors at most this large are checked
  /// exhaustively.
  std::size_t coords_per_tensor = 12;
  /// Denominator floor of the relative error, so that near-zero gradients are
  /// judged on absolute error instead.
  double denominator_floor = 1e-4;
  bool check_input = true;
  std::uint64_t seed = 7;
};

struct GradcheckEntry {
  std::string name;
  std::size_t coords_checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;

  double max_rel_error() const;
  bool passed(double tolerance) const { return max_rel_error() <= tolerance; }
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Central-difference check of a layer's backward pass. The scalar objective
/// is sum(output * R) for a fixed random projection R, so every output
/// coordinate contributes. The layer keeps whatever training/evaluation mode
/// it is in; in training mode batch-norm statistics are recomputed per
/// evaluation, which is itself a deterministic function of the input.
GradcheckReport gradcheck(Layer<double>& layer, const Tensor<double>& input,
                          const GradcheckOptions& options = {});

}  // namespace asad::nn
