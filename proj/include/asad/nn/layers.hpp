#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "asad/nn/ops.hpp"
#include "asad/rng.hpp"

namespace asad::nn {

/// Named reference to a tensor that belongs in a checkpoint (parameter values
/// and batch-norm running statistics).
template <typename T>
struct StateRef {
  std::string name;
  Tensor<T>* tensor;
};

/// A differentiable stage. `forward` caches what `backward` needs, so a
/// backward call must follow the forward call it differentiates.
template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  /// Shape inference without computing anything; throws ShapeError.
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual std::string kind() const = 0;

  virtual void collect_parameters(std::vector<Parameter<T>*>&) {}
  virtual void collect_state(std::vector<StateRef<T>>&) {}
  virtual void set_training(bool) {}
  /// Kaiming-style fan-in normal for weights, zeros for biases.
  virtual void initialize(Rng&) {}

  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

template <typename T>
class Conv final : public Layer<T> {
 public:
  Conv(std::string name, ConvSpec spec);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override { return spec_.output_shape(input); }
  std::string kind() const override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void collect_state(std::vector<StateRef<T>>& out) override;
  void initialize(Rng& rng) override;

  const ConvSpec& spec() const { return spec_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  ConvSpec spec_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> saved_input_;
};

template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  BatchNorm(std::string name, std::size_t channels);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override;
  std::string kind() const override { return "batchnorm"; }
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void collect_state(std::vector<StateRef<T>>& out) override;
  void set_training(bool training) override { state_.training = training; }

  BatchNormState<T>& state() { return state_; }

 private:
  BatchNormState<T> state_;
  BatchNormCache<T> cache_;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  explicit ReLU(std::string name) : Layer<T>(std::move(name)) {}
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override { return input; }
  std::string kind() const override { return "relu"; }

 private:
  /// 1 where the forward input was positive.
  std::vector<std::uint8_t> mask_;
  Shape shape_;
};

template <typename T>
class MaxPool final : public Layer<T> {
 public:
  MaxPool(std::string name, PoolSpec spec) : Layer<T>(std::move(name)), spec_(std::move(spec)) {}
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override { return spec_.output_shape(input); }
  std::string kind() const override { return "maxpool"; }

 private:
  PoolSpec spec_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

template <typename T>
class AvgPool final : public Layer<T> {
 public:
  AvgPool(std::string name, PoolSpec spec) : Layer<T>(std::move(name)), spec_(std::move(spec)) {}
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override { return spec_.output_shape(input); }
  std::string kind() const override { return "avgpool"; }

 private:
  PoolSpec spec_;
  Shape input_shape_;
};

template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  explicit GlobalAvgPool(std::string name) : Layer<T>(std::move(name)) {}
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override;
  std::string kind() const override { return "global_avgpool"; }

 private:
  Shape input_shape_;
};

/// [batch, ...] -> [batch, product(...)].
template <typename T>
class Flatten final : public Layer<T> {
 public:
  explicit Flatten(std::string name) : Layer<T>(std::move(name)) {}
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override;
  std::string kind() const override { return "flatten"; }

 private:
  Shape input_shape_;
};

template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::string name, std::size_t in_features, std::size_t out_features);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override;
  std::string kind() const override { return "linear"; }
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void collect_state(std::vector<StateRef<T>>& out) override;
  void initialize(Rng& rng) override;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> saved_input_;
};

/// Runs children in order.
template <typename T>
class Sequential : public Layer<T> {
 public:
  explicit Sequential(std::string name) : Layer<T>(std::move(name)) {}

  Layer<T>& add(LayerPtr<T> layer);
  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    add(std::move(layer));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override;
  std::string kind() const override { return "sequential"; }
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void collect_state(std::vector<StateRef<T>>& out) override;
  void set_training(bool training) override;
  void initialize(Rng& rng) override;

  std::size_t size() const { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& at(std::size_t i) const { return *layers_.at(i); }

 private:
  std::vector<LayerPtr<T>> layers_;
};

/// Each composite layer sees the channel-wise concatenation of the block
/// input and every earlier layer's output; the block returns the full
/// concatenation.
template <typename T>
class DenseBlock final : public Layer<T> {
 public:
  DenseBlock(std::string name, std::size_t in_channels, std::size_t growth_rate);

  /// Appends a composite layer that must map `input_width()`-channel input to
  /// `growth_rate` channels.
  void add_layer(LayerPtr<T> layer);
  std::size_t input_width() const { return in_channels_ + layers_.size() * growth_rate_; }

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override;
  std::string kind() const override { return "dense_block"; }
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void collect_state(std::vector<StateRef<T>>& out) override;
  void set_training(bool training) override;
  void initialize(Rng& rng) override;

  std::size_t size() const { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i); }

 private:
  std::size_t in_channels_;
  std::size_t growth_rate_;
  std::vector<LayerPtr<T>> layers_;
};

extern template class Conv<float>;
extern template class Conv<double>;
extern template class BatchNorm<float>;
extern template class BatchNorm<double>;
extern template class ReLU<float>;
extern template class ReLU<double>;
extern template class MaxPool<float>;
extern template class MaxPool<double>;
extern template class AvgPool<float>;
extern template class AvgPool<double>;
extern template class GlobalAvgPool<float>;
extern template class GlobalAvgPool<double>;
extern template class Flatten<float>;
extern template class Flatten<double>;
extern template class Linear<float>;
extern template class Linear<double>;
extern template class Sequential<float>;
extern template class Sequential<double>;
extern template class DenseBlock<float>;
extern template class DenseBlock<double>;

}  // namespace asad::nn
