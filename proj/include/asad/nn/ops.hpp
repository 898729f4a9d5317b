#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "asad/tensor.hpp"

/// Layer primitives with hand-written backward passes. Activations are laid
/// out as [batch, channels, spatial...] with one to three spatial axes.
namespace asad::nn {

/// floor((in + 2*pad - kernel) / stride) + 1, or throws ShapeError when the
/// result would be < 1.
std::size_t output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t pad, std::size_t axis);

struct ConvSpec {
  std::vector<std::size_t> kernel;
  std::vector<std::size_t> stride;
  std::vector<std::size_t> padding;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  bool bias = true;

  std::size_t spatial_rank() const { return kernel.size(); }
  /// Shape of the weight tensor: [out, in, kernel...].
  Shape weight_shape() const;
  /// Validates `input` ([batch, in, spatial...]) and returns the output shape.
  Shape output_shape(const Shape& input) const;
};

/// Convenience: square/cubic kernel with stride 1 and the given padding.
ConvSpec make_conv(std::size_t in_channels, std::size_t out_channels,
                   std::vector<std::size_t> kernel, std::vector<std::size_t> padding = {},
                   bool bias = true);

struct PoolSpec {
  std::vector<std::size_t> kernel;
  std::vector<std::size_t> stride;
  std::vector<std::size_t> padding;

  std::size_t spatial_rank() const { return kernel.size(); }
  Shape output_shape(const Shape& input) const;
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string parameter_name, Tensor<T> initial)
      : name(std::move(parameter_name)), value(std::move(initial)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
struct BatchNormState {
  Parameter<T> gamma;
  Parameter<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
  bool training = true;

  BatchNormState() = default;
  BatchNormState(const std::string& name, std::size_t channels);
  std::size_t channels() const { return gamma.value.size(); }
};

/// Values saved by the forward pass that the backward pass needs.
template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;
  std::vector<double> inv_std;
  bool training = true;
};

template <typename T>
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
};

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weights,
                       const Tensor<T>* bias);

/// Returns grad_input; grad_weights (and grad_bias when non-null) are
/// accumulated into.
template <typename T>
Tensor<T> conv_backward(const Tensor<T>& grad_out, const Tensor<T>& saved_input,
                        const ConvSpec& spec, const Tensor<T>& weights, Tensor<T>& grad_weights,
                        Tensor<T>* grad_bias);

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormState<T>& state,
                            BatchNormCache<T>* cache = nullptr);

/// Accumulates into state.gamma.grad / state.beta.grad; returns grad_input.
template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& grad_out, const BatchNormCache<T>& cache,
                             BatchNormState<T>& state);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& saved_input);

/// `argmax` receives, per output cell, the flat input index that won.
template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, const PoolSpec& spec,
                          std::vector<std::size_t>* argmax = nullptr);

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_out, const std::vector<std::size_t>& argmax,
                           const Shape& input_shape);

/// Average pooling without padding; every window has the full kernel volume.
template <typename T>
Tensor<T> avgpool_forward(const Tensor<T>& x, const PoolSpec& spec);

template <typename T>
Tensor<T> avgpool_backward(const Tensor<T>& grad_out, const PoolSpec& spec,
                           const Shape& input_shape);

/// Mean over every non-batch, non-channel axis: [batch, channels, ...] -> [batch, channels].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_out, const Shape& input_shape);

/// y = x W^T + b with x [batch, in], W [out, in], b [out].
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>* bias);

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& grad_out, const Tensor<T>& saved_input,
                          const Tensor<T>& weights, Tensor<T>& grad_weights,
                          Tensor<T>* grad_bias);

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad_logits;
  Tensor<T> probabilities;
};

/// Mean cross-entropy over the batch. Labels are class indices in [0, classes).
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

template <typename T>
AdamState<T> make_adam(std::span<Parameter<T>* const> params, double learning_rate = 1e-3);

/// One bias-corrected Adam update using each parameter's accumulated grad.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state);

template <typename T>
void zero_grads(std::span<Parameter<T>* const> params) {
  for (Parameter<T>* p : params) p->zero_grad();
}

}  // namespace asad::nn
