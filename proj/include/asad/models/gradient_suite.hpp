#pragma once

#include <string>
#include <vector>

#include "asad/nn/gradcheck.hpp"

namespace asad::models {

struct SuiteCase {
  std::string name;
  nn::GradcheckReport report;
};

/// Finite-difference checks (64-bit) of every layer type in 2D and 3D
/// variants, a small dense block, and a full DenseNet-2D at growth rate 4.
/// Inputs of stand-alone ReLU and max-pool layers are drawn at least 1e-3
/// away from their kinks.
std::vector<SuiteCase> run_gradient_suite(const nn::GradcheckOptions& options = {});

}  // namespace asad::models
