#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "asad/nn/layers.hpp"

namespace asad::models {

enum class ModelKind { kCnnBaseline, kCnn3d, kDenseNet2d, kDenseNet3d };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

struct DenseNetConfig {
  std::size_t growth_rate = 16;
  /// Bottleneck width = bottleneck_factor * growth_rate.
  std::size_t bottleneck_factor = 4;
  /// Stem output width = stem_factor * growth_rate.
  std::size_t stem_factor = 2;
  double compression = 0.5;
  std::size_t num_blocks = 4;
  std::size_t layers_per_block = 4;
  std::size_t num_classes = 2;

  bool operator==(const DenseNetConfig&) const = default;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Everything needed to rebuild a graph with identical structure.
struct ModelSpec {
  ModelKind kind = ModelKind::kDenseNet3d;
  DenseNetConfig densenet;
  /// Temporal extent T of a decision window (ignored by DenseNet-2D).
  std::size_t samples = 128;
  std::size_t grid_height = 10;
  std::size_t grid_width = 11;
  /// Channel count C for the CNN baseline's C x T input.
  std::size_t channels = 64;

  /// Per-sample input shape including the leading feature axis of extent 1.
  Shape input_shape() const;
  KeyValues to_key_values() const;
  static ModelSpec from_key_values(const KeyValues& values);
  bool operator==(const ModelSpec&) const = default;
};

struct TraceEntry {
  std::string layer;
  std::string kind;
  Shape output;
};

/// An ordered layer stack with named parameters and its validated shape
/// trace. One trainer at a time; forward caches activations for backward.
template <typename T>
class ModelGraph {
 public:
  ModelGraph(ModelSpec spec, std::unique_ptr<nn::Sequential<T>> network);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<TraceEntry>& trace() const { return trace_; }

  Tensor<T> forward(const Tensor<T>& x) { return network_->forward(x); }
  Tensor<T> backward(const Tensor<T>& grad_out) { return network_->backward(grad_out); }
  void set_training(bool training);
  bool training() const { return training_; }
  void initialize(std::uint64_t seed);

  std::vector<nn::Parameter<T>*> parameters();
  std::vector<nn::StateRef<T>> state();
  std::size_t parameter_count();

  nn::Sequential<T>& network() { return *network_; }
  /// Top-level layer by name; throws if absent.
  nn::Layer<T>& layer(const std::string& name);

 private:
  ModelSpec spec_;
  std::unique_ptr<nn::Sequential<T>> network_;
  std::vector<TraceEntry> trace_;
  bool training_ = true;
};

/// Builds and initializes (Kaiming normal, seeded) the graph for `spec`.
template <typename T>
ModelGraph<T> build_model(const ModelSpec& spec, std::uint64_t seed = 0);

template <typename T>
ModelGraph<T> build_densenet2d(const DenseNetConfig& config, std::uint64_t seed = 0);
template <typename T>
ModelGraph<T> build_densenet3d(const DenseNetConfig& config, std::size_t samples,
                               std::uint64_t seed = 0);
template <typename T>
ModelGraph<T> build_cnn_baseline(std::size_t samples, std::uint64_t seed = 0);
template <typename T>
ModelGraph<T> build_cnn3d(std::size_t samples, std::uint64_t seed = 0);

/// Temporal extents after each DenseNet-3D transition for a window of T
/// samples; throws ShapeError naming the transition that underflows.
std::vector<std::size_t> densenet3d_temporal_trace(std::size_t samples,
                                                   const DenseNetConfig& config = {});

extern template class ModelGraph<float>;
extern template class ModelGraph<double>;

}  // namespace asad::models
