#pragma once

#include "asad/models/checkpoint.hpp"

namespace asad::models {

/// Appends a temporal axis of extent `repeats` to a [out, in, kh, kw] kernel,
/// each slice equal to the 2D kernel divided by `repeats`.
template <typename T>
Tensor<T> inflate_kernel(const Tensor<T>& kernel2d, std::size_t repeats);

/// Maps a trained DenseNet-2D checkpoint onto a DenseNet-3D of paired
/// structure. Conv kernels are inflated along time; batch-norm parameters,
/// running statistics and the classifier head are copied unchanged.
Checkpoint inflate_2d_to_3d(const Checkpoint& checkpoint2d, const ModelSpec& spec3d);

}  // namespace asad::models
