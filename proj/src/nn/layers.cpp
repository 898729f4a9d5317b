#include "asad/nn/layers.hpp"

#include <cmath>

#include "asad/error.hpp"

namespace asad::nn {

namespace {

template <typename T>
void kaiming_fill(Tensor<T>& weights, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (T& w : weights.data()) w = static_cast<T>(rng.normal(0.0, stddev));
}

}  // namespace

// ---------------------------------------------------------------- Conv

template <typename T>
Conv<T>::Conv(std::string name, ConvSpec spec)
    : Layer<T>(std::move(name)),
      spec_(std::move(spec)),
      weight_(this->name() + ".weight", Tensor<T>(spec_.weight_shape())) {
  if (spec_.stride.empty()) spec_.stride.assign(spec_.kernel.size(), 1);
  if (spec_.padding.empty()) spec_.padding.assign(spec_.kernel.size(), 0);
  if (spec_.bias) bias_ = Parameter<T>(this->name() + ".bias", Tensor<T>({spec_.out_channels}));
}

template <typename T>
std::string Conv<T>::kind() const {
  return "conv" + std::to_string(spec_.spatial_rank()) + "d";
}

template <typename T>
Tensor<T> Conv<T>::forward(const Tensor<T>& x) {
  saved_input_ = x;
  return conv_forward(x, spec_, weight_.value, spec_.bias ? &bias_.value : nullptr);
}

template <typename T>
Tensor<T> Conv<T>::backward(const Tensor<T>& grad_out) {
  return conv_backward(grad_out, saved_input_, spec_, weight_.value, weight_.grad,
                       spec_.bias ? &bias_.grad : nullptr);
}

template <typename T>
void Conv<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  if (spec_.bias) out.push_back(&bias_);
}

template <typename T>
void Conv<T>::collect_state(std::vector<StateRef<T>>& out) {
  out.push_back({weight_.name, &weight_.value});
  if (spec_.bias) out.push_back({bias_.name, &bias_.value});
}

template <typename T>
void Conv<T>::initialize(Rng& rng) {
  kaiming_fill(weight_.value, weight_.value.size() / spec_.out_channels, rng);
  if (spec_.bias) bias_.value.fill(T{0});
}

// ---------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(std::string name, std::size_t channels)
    : Layer<T>(std::move(name)), state_(this->name(), channels) {}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x) {
  return batchnorm_forward(x, state_, &cache_);
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& grad_out) {
  return batchnorm_backward(grad_out, cache_, state_);
}

template <typename T>
Shape BatchNorm<T>::output_shape(const Shape& input) const {
  if (input.size() < 2 || input[1] != state_.channels()) {
    throw ShapeError(this->name() + ": expects " + std::to_string(state_.channels()) +
                     " channels on axis 1, got " + shape_string(input));
  }
  return input;
}

template <typename T>
void BatchNorm<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&state_.gamma);
  out.push_back(&state_.beta);
}

template <typename T>
void BatchNorm<T>::collect_state(std::vector<StateRef<T>>& out) {
  out.push_back({state_.gamma.name, &state_.gamma.value});
  out.push_back({state_.beta.name, &state_.beta.value});
  out.push_back({this->name() + ".running_mean", &state_.running_mean});
  out.push_back({this->name() + ".running_var", &state_.running_var});
}

// ---------------------------------------------------------------- simple layers

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x) {
  shape_ = x.shape();
  mask_.resize(x.size());
  Tensor<T> y(x.shape());
  const T* __restrict in = x.data().data();
  T* __restrict out = y.data().data();
  std::uint8_t* __restrict m = mask_.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = in[i] > T{0};
    out[i] = in[i] <= T{0} ? T{0} : in[i];  // NaN passes through
  }
  return y;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.shape() != shape_) {
    throw ShapeError("relu grad_out has shape " + shape_string(grad_out.shape()) +
                     ", forward saw " + shape_string(shape_));
  }
  Tensor<T> g(shape_);
  const T* __restrict in = grad_out.data().data();
  T* __restrict out = g.data().data();
  const std::uint8_t* __restrict m = mask_.data();
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = m[i] ? in[i] : T{0};
  return g;
}

template <typename T>
Tensor<T> MaxPool<T>::forward(const Tensor<T>& x) {
  input_shape_ = x.shape();
  return maxpool_forward(x, spec_, &argmax_);
}

template <typename T>
Tensor<T> MaxPool<T>::backward(const Tensor<T>& grad_out) {
  return maxpool_backward(grad_out, argmax_, input_shape_);
}

template <typename T>
Tensor<T> AvgPool<T>::forward(const Tensor<T>& x) {
  input_shape_ = x.shape();
  return avgpool_forward(x, spec_);
}

template <typename T>
Tensor<T> AvgPool<T>::backward(const Tensor<T>& grad_out) {
  return avgpool_backward(grad_out, spec_, input_shape_);
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x) {
  input_shape_ = x.shape();
  return global_avg_pool(x);
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
  return global_avg_pool_backward(grad_out, input_shape_);
}

template <typename T>
Shape GlobalAvgPool<T>::output_shape(const Shape& input) const {
  if (input.size() < 3) throw ShapeError(this->name() + ": needs a spatial axis");
  return {input[0], input[1]};
}

template <typename T>
Tensor<T> Flatten<T>::forward(const Tensor<T>& x) {
  input_shape_ = x.shape();
  Tensor<T> y = x;
  y.reshape(output_shape(x.shape()));
  return y;
}

template <typename T>
Tensor<T> Flatten<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  g.reshape(input_shape_);
  return g;
}

template <typename T>
Shape Flatten<T>::output_shape(const Shape& input) const {
  if (input.empty()) throw ShapeError(this->name() + ": empty shape");
  return {input[0], shape_volume(input) / input[0]};
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(std::string name, std::size_t in_features, std::size_t out_features)
    : Layer<T>(std::move(name)),
      weight_(this->name() + ".weight", Tensor<T>({out_features, in_features})),
      bias_(this->name() + ".bias", Tensor<T>({out_features})) {}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  saved_input_ = x;
  return linear_forward(x, weight_.value, &bias_.value);
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  return linear_backward(grad_out, saved_input_, weight_.value, weight_.grad, &bias_.grad);
}

template <typename T>
Shape Linear<T>::output_shape(const Shape& input) const {
  if (input.size() != 2 || input[1] != weight_.value.dim(1)) {
    throw ShapeError(this->name() + ": expects [batch, " + std::to_string(weight_.value.dim(1)) +
                     "], got " + shape_string(input));
  }
  return {input[0], weight_.value.dim(0)};
}

template <typename T>
void Linear<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
void Linear<T>::collect_state(std::vector<StateRef<T>>& out) {
  out.push_back({weight_.name, &weight_.value});
  out.push_back({bias_.name, &bias_.value});
}

template <typename T>
void Linear<T>::initialize(Rng& rng) {
  kaiming_fill(weight_.value, weight_.value.dim(1), rng);
  bias_.value.fill(T{0});
}

// ---------------------------------------------------------------- Sequential

template <typename T>
Layer<T>& Sequential<T>::add(LayerPtr<T> layer) {
  layers_.push_back(std::move(layer));
  return *layers_.back();
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x) {
  if (layers_.empty()) return x;
  Tensor<T> h = layers_.front()->forward(x);
  for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i]->forward(h);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename T>
Shape Sequential<T>::output_shape(const Shape& input) const {
  Shape shape = input;
  for (const auto& layer : layers_) shape = layer->output_shape(shape);
  return shape;
}

template <typename T>
void Sequential<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  for (auto& layer : layers_) layer->collect_parameters(out);
}

template <typename T>
void Sequential<T>::collect_state(std::vector<StateRef<T>>& out) {
  for (auto& layer : layers_) layer->collect_state(out);
}

template <typename T>
void Sequential<T>::set_training(bool training) {
  for (auto& layer : layers_) layer->set_training(training);
}

template <typename T>
void Sequential<T>::initialize(Rng& rng) {
  for (auto& layer : layers_) layer->initialize(rng);
}

// ---------------------------------------------------------------- DenseBlock

template <typename T>
DenseBlock<T>::DenseBlock(std::string name, std::size_t in_channels, std::size_t growth_rate)
    : Layer<T>(std::move(name)), in_channels_(in_channels), growth_rate_(growth_rate) {}

template <typename T>
void DenseBlock<T>::add_layer(LayerPtr<T> layer) {
  layers_.push_back(std::move(layer));
}

template <typename T>
Tensor<T> DenseBlock<T>::forward(const Tensor<T>& x) {
  if (x.rank() < 2 || x.dim(1) != in_channels_) {
    throw ShapeError(this->name() + ": expects " + std::to_string(in_channels_) +
                     " channels, got " + shape_string(x.shape()));
  }
  Tensor<T> features = x;
  for (auto& layer : layers_) features = concat_channels(features, layer->forward(features));
  return features;
}

template <typename T>
Tensor<T> DenseBlock<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> grad = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    auto [grad_prefix, grad_new] = split_channels(grad, grad.dim(1) - growth_rate_);
    Tensor<T> through = (*it)->backward(grad_new);
    for (std::size_t i = 0; i < grad_prefix.size(); ++i) grad_prefix[i] += through[i];
    grad = std::move(grad_prefix);
  }
  return grad;
}

template <typename T>
Shape DenseBlock<T>::output_shape(const Shape& input) const {
  if (input.size() < 2 || input[1] != in_channels_) {
    throw ShapeError(this->name() + ": expects " + std::to_string(in_channels_) +
                     " channels, got " + shape_string(input));
  }
  Shape shape = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Shape produced = layers_[i]->output_shape(shape);
    if (produced.size() != shape.size() || produced[1] != growth_rate_) {
      throw ShapeError(layers_[i]->name() + ": produces " + shape_string(produced) +
                       ", expected " + std::to_string(growth_rate_) + " channels");
    }
    for (std::size_t axis = 2; axis < shape.size(); ++axis) {
      if (produced[axis] != shape[axis]) {
        throw ShapeError(layers_[i]->name() + ": changes spatial extent on axis " +
                         std::to_string(axis));
      }
    }
    shape[1] += growth_rate_;
  }
  return shape;
}

template <typename T>
void DenseBlock<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  for (auto& layer : layers_) layer->collect_parameters(out);
}

template <typename T>
void DenseBlock<T>::collect_state(std::vector<StateRef<T>>& out) {
  for (auto& layer : layers_) layer->collect_state(out);
}

template <typename T>
void DenseBlock<T>::set_training(bool training) {
  for (auto& layer : layers_) layer->set_training(training);
}

template <typename T>
void DenseBlock<T>::initialize(Rng& rng) {
  for (auto& layer : layers_) layer->initialize(rng);
}

template class Conv<float>;
template class Conv<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class ReLU<float>;
template class ReLU<double>;
template class MaxPool<float>;
template class MaxPool<double>;
template class AvgPool<float>;
template class AvgPool<double>;
template class GlobalAvgPool<float>;
template class GlobalAvgPool<double>;
template class Flatten<float>;
template class Flatten<double>;
template class Linear<float>;
template class Linear<double>;
template class Sequential<float>;
template class Sequential<double>;
template class DenseBlock<float>;
template class DenseBlock<double>;

}  // namespace asad::nn
