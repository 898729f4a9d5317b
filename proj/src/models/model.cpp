#include "asad/models/model.hpp"

#include <cmath>
#include <sstream>

#include "asad/error.hpp"
#include "asad/models/geometry.hpp"

namespace asad::models {

using nn::AvgPool;
using nn::BatchNorm;
using nn::Conv;
using nn::ConvSpec;
using nn::DenseBlock;
using nn::Flatten;
using nn::GlobalAvgPool;
using nn::Linear;
using nn::MaxPool;
using nn::PoolSpec;
using nn::ReLU;
using nn::Sequential;

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kCnnBaseline: return "cnn-baseline";
    case ModelKind::kCnn3d: return "cnn3d";
    case ModelKind::kDenseNet2d: return "densenet2d";
    case ModelKind::kDenseNet3d: return "densenet3d";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& text) {
  for (ModelKind kind : {ModelKind::kCnnBaseline, ModelKind::kCnn3d, ModelKind::kDenseNet2d,
                         ModelKind::kDenseNet3d}) {
    if (to_string(kind) == text) return kind;
  }
  throw ValidationError("unknown model kind '" + text +
                        "' (expected cnn-baseline, cnn3d, densenet2d or densenet3d)");
}

Shape ModelSpec::input_shape() const {
  switch (kind) {
    case ModelKind::kCnnBaseline: return {1, channels, samples};
    case ModelKind::kDenseNet2d: return {1, grid_height, grid_width};
    case ModelKind::kCnn3d:
    case ModelKind::kDenseNet3d: return {1, grid_height, grid_width, samples};
  }
  return {};
}

namespace {

std::string format_double(double value) {
  std::ostringstream out;
  out.precision(17);
  out << value;
  return out.str();
}

const std::string& lookup(const KeyValues& values, const std::string& key) {
  for (const auto& [k, v] : values) {
    if (k == key) return v;
  }
  throw FormatError("model config is missing key '" + key + "'");
}

std::size_t lookup_size(const KeyValues& values, const std::string& key) {
  const std::string& text = lookup(values, key);
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw FormatError("model config key '" + key + "' is not an unsigned integer: " + text);
  }
}

}  // namespace

KeyValues ModelSpec::to_key_values() const {
  return {
      {"kind", to_string(kind)},
      {"samples", std::to_string(samples)},
      {"grid_height", std::to_string(grid_height)},
      {"grid_width", std::to_string(grid_width)},
      {"channels", std::to_string(channels)},
      {"growth_rate", std::to_string(densenet.growth_rate)},
      {"bottleneck_factor", std::to_string(densenet.bottleneck_factor)},
      {"stem_factor", std::to_string(densenet.stem_factor)},
      {"compression", format_double(densenet.compression)},
      {"num_blocks", std::to_string(densenet.num_blocks)},
      {"layers_per_block", std::to_string(densenet.layers_per_block)},
      {"num_classes", std::to_string(densenet.num_classes)},
  };
}

ModelSpec ModelSpec::from_key_values(const KeyValues& values) {
  ModelSpec spec;
  spec.kind = parse_model_kind(lookup(values, "kind"));
  spec.samples = lookup_size(values, "samples");
  spec.grid_height = lookup_size(values, "grid_height");
  spec.grid_width = lookup_size(values, "grid_width");
  spec.channels = lookup_size(values, "channels");
  spec.densenet.growth_rate = lookup_size(values, "growth_rate");
  spec.densenet.bottleneck_factor = lookup_size(values, "bottleneck_factor");
  spec.densenet.stem_factor = lookup_size(values, "stem_factor");
  spec.densenet.compression = std::stod(lookup(values, "compression"));
  spec.densenet.num_blocks = lookup_size(values, "num_blocks");
  spec.densenet.layers_per_block = lookup_size(values, "layers_per_block");
  spec.densenet.num_classes = lookup_size(values, "num_classes");
  return spec;
}

// ---------------------------------------------------------------- ModelGraph

template <typename T>
ModelGraph<T>::ModelGraph(ModelSpec spec, std::unique_ptr<nn::Sequential<T>> network)
    : spec_(std::move(spec)), network_(std::move(network)) {
  Shape shape{1};
  const Shape input = spec_.input_shape();
  shape.insert(shape.end(), input.begin(), input.end());
  for (std::size_t i = 0; i < network_->size(); ++i) {
    auto& layer = network_->at(i);
    try {
      shape = layer.output_shape(shape);
    } catch (const ShapeError& e) {
      throw ShapeError(to_string(spec_.kind) + " shape trace fails at '" + layer.name() +
                       "': " + e.what());
    }
    trace_.push_back({layer.name(), layer.kind(), shape});
  }
}

template <typename T>
void ModelGraph<T>::set_training(bool training) {
  training_ = training;
  network_->set_training(training);
}

template <typename T>
void ModelGraph<T>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  network_->initialize(rng);
}

template <typename T>
std::vector<nn::Parameter<T>*> ModelGraph<T>::parameters() {
  std::vector<nn::Parameter<T>*> out;
  network_->collect_parameters(out);
  return out;
}

template <typename T>
std::vector<nn::StateRef<T>> ModelGraph<T>::state() {
  std::vector<nn::StateRef<T>> out;
  network_->collect_state(out);
  return out;
}

template <typename T>
std::size_t ModelGraph<T>::parameter_count() {
  std::size_t total = 0;
  for (auto* p : parameters()) total += p->value.size();
  return total;
}

template <typename T>
nn::Layer<T>& ModelGraph<T>::layer(const std::string& name) {
  for (std::size_t i = 0; i < network_->size(); ++i) {
    if (network_->at(i).name() == name) return network_->at(i);
  }
  throw ValidationError("model has no layer named '" + name + "'");
}

template class ModelGraph<float>;
template class ModelGraph<double>;

// ---------------------------------------------------------------- DenseNet

namespace {

/// Spatial-only kernels for 2D; 3D appends a temporal axis of extent 1.
struct Axes {
  bool three_d;

  std::vector<std::size_t> extend(std::vector<std::size_t> spatial, std::size_t temporal) const {
    if (three_d) spatial.push_back(temporal);
    return spatial;
  }
  ConvSpec pointwise(std::size_t in, std::size_t out) const {
    return nn::make_conv(in, out, extend({1, 1}, 1), {}, false);
  }
  ConvSpec spatial3x3(std::size_t in, std::size_t out) const {
    return nn::make_conv(in, out, extend({3, 3}, 1), extend({1, 1}, 0), false);
  }
};

template <typename T>
std::unique_ptr<Sequential<T>> bn_relu_conv_pair(const std::string& prefix, const Axes& axes,
                                                 std::size_t in, std::size_t bottleneck,
                                                 std::size_t out) {
  auto seq = std::make_unique<Sequential<T>>(prefix);
  seq->template emplace<BatchNorm<T>>(prefix + ".bn1", in);
  seq->template emplace<ReLU<T>>(prefix + ".relu1");
  seq->template emplace<Conv<T>>(prefix + ".conv1", axes.pointwise(in, bottleneck));
  seq->template emplace<BatchNorm<T>>(prefix + ".bn2", bottleneck);
  seq->template emplace<ReLU<T>>(prefix + ".relu2");
  seq->template emplace<Conv<T>>(prefix + ".conv2", axes.spatial3x3(bottleneck, out));
  return seq;
}

template <typename T>
std::unique_ptr<Sequential<T>> build_densenet_network(const DenseNetConfig& config, bool three_d) {
  if (config.growth_rate == 0 || config.bottleneck_factor == 0 || config.stem_factor == 0 ||
      config.num_blocks == 0 || config.num_classes < 2) {
    throw ValidationError("DenseNet config needs positive growth/bottleneck/stem/blocks and >= 2 classes");
  }
  if (!(config.compression > 0.0 && config.compression <= 1.0)) {
    throw ValidationError("DenseNet compression must lie in (0, 1]");
  }
  const Axes axes{three_d};
  const std::size_t k = config.growth_rate;
  const std::size_t bottleneck = config.bottleneck_factor * k;
  auto net = std::make_unique<Sequential<T>>(three_d ? "densenet3d" : "densenet2d");

  // Stem: BN-ReLU-Conv(1x1)-BN-ReLU-Conv(3x3), then max pool stride 2, pad 1.
  std::size_t channels = config.stem_factor * k;
  net->add(bn_relu_conv_pair<T>("stem", axes, 1, bottleneck, channels));
  constexpr auto sp = geometry::kStemPool;
  PoolSpec stem_pool{axes.extend({sp.kernel, sp.kernel}, 1), axes.extend({sp.stride, sp.stride}, 1),
                     axes.extend({sp.pad, sp.pad}, 0)};
  net->template emplace<MaxPool<T>>("stem.pool", stem_pool);

  for (std::size_t b = 1; b <= config.num_blocks; ++b) {
    const std::string block_name = "block" + std::to_string(b);
    auto block = std::make_unique<DenseBlock<T>>(block_name, channels, k);
    for (std::size_t l = 1; l <= config.layers_per_block; ++l) {
      block->add_layer(bn_relu_conv_pair<T>(block_name + ".layer" + std::to_string(l), axes,
                                            block->input_width(), bottleneck, k));
    }
    channels += config.layers_per_block * k;
    net->add(std::move(block));
    if (b == config.num_blocks) break;

    const auto compressed =
        static_cast<std::size_t>(std::floor(config.compression * static_cast<double>(channels)));
    if (compressed == 0) {
      throw ValidationError("compression " + std::to_string(config.compression) +
                            " leaves transition " + std::to_string(b) + " with zero channels");
    }
    const std::string trans = "trans" + std::to_string(b);
    net->template emplace<BatchNorm<T>>(trans + ".bn", channels);
    net->template emplace<ReLU<T>>(trans + ".relu");
    net->template emplace<Conv<T>>(trans + ".conv", axes.pointwise(channels, compressed));
    constexpr auto ts = geometry::kTransitionSpatial;
    constexpr auto tt = geometry::kTransitionTemporal;
    PoolSpec pool{axes.extend({ts.kernel, ts.kernel}, tt.kernel), axes.extend({ts.stride, ts.stride}, tt.stride), {}};
    net->template emplace<AvgPool<T>>(trans + ".pool", pool);
    channels = compressed;
  }
  net->template emplace<GlobalAvgPool<T>>("head.pool");
  net->template emplace<Linear<T>>("head.fc", channels, config.num_classes);
  return net;
}

}  // namespace

template <typename T>
ModelGraph<T> build_densenet2d(const DenseNetConfig& config, std::uint64_t seed) {
  ModelSpec spec;
  spec.kind = ModelKind::kDenseNet2d;
  spec.densenet = config;
  return build_model<T>(spec, seed);
}

template <typename T>
ModelGraph<T> build_densenet3d(const DenseNetConfig& config, std::size_t samples,
                               std::uint64_t seed) {
  ModelSpec spec;
  spec.kind = ModelKind::kDenseNet3d;
  spec.densenet = config;
  spec.samples = samples;
  return build_model<T>(spec, seed);
}

template <typename T>
ModelGraph<T> build_cnn_baseline(std::size_t samples, std::uint64_t seed) {
  ModelSpec spec;
  spec.kind = ModelKind::kCnnBaseline;
  spec.samples = samples;
  return build_model<T>(spec, seed);
}

template <typename T>
ModelGraph<T> build_cnn3d(std::size_t samples, std::uint64_t seed) {
  ModelSpec spec;
  spec.kind = ModelKind::kCnn3d;
  spec.samples = samples;
  return build_model<T>(spec, seed);
}

std::vector<std::size_t> densenet3d_temporal_trace(std::size_t samples,
                                                   const DenseNetConfig& config) {
  std::vector<std::size_t> trace;
  std::size_t t = samples;
  for (std::size_t b = 1; b < config.num_blocks; ++b) {
    if (t < geometry::kTransitionTemporal.kernel) {
      throw ShapeError("temporal extent " + std::to_string(t) + " underflows the 2x2x7 pool of trans" +
                       std::to_string(b) + " (window of " + std::to_string(samples) + " samples)");
    }
    t = nn::output_extent(t, geometry::kTransitionTemporal.kernel, geometry::kTransitionTemporal.stride, 0, 4);
    trace.push_back(t);
  }
  return trace;
}

template <typename T>
ModelGraph<T> build_model(const ModelSpec& spec, std::uint64_t seed) {
  std::unique_ptr<Sequential<T>> net;
  switch (spec.kind) {
    case ModelKind::kDenseNet2d:
      net = build_densenet_network<T>(spec.densenet, false);
      break;
    case ModelKind::kDenseNet3d:
      densenet3d_temporal_trace(spec.samples, spec.densenet);
      net = build_densenet_network<T>(spec.densenet, true);
      break;
    case ModelKind::kCnnBaseline: {
      if (spec.samples < 17) {
        throw ShapeError("cnn-baseline needs T >= 17 samples, got " + std::to_string(spec.samples));
      }
      const std::size_t filters = 5;
      net = std::make_unique<Sequential<T>>("cnn-baseline");
      net->template emplace<Conv<T>>("conv", nn::make_conv(1, filters, {spec.channels, 17}));
      net->template emplace<ReLU<T>>("relu");
      const std::size_t steps = spec.samples - 16;
      net->template emplace<AvgPool<T>>("pool", PoolSpec{{1, steps}, {1, 1}, {}});
      net->template emplace<Flatten<T>>("flatten");
      net->template emplace<Linear<T>>("fc1", filters, filters);
      net->template emplace<ReLU<T>>("fc1.relu");
      net->template emplace<Linear<T>>("fc2", filters, 2);
      break;
    }
    case ModelKind::kCnn3d: {
      if (spec.samples < 1) throw ShapeError("cnn3d needs T >= 1");
      const std::size_t filters = 20;
      net = std::make_unique<Sequential<T>>("cnn3d");
      net->template emplace<Conv<T>>("conv", nn::make_conv(1, filters, {5, 5, 1}));
      net->template emplace<ReLU<T>>("relu");
      net->template emplace<AvgPool<T>>("pool", PoolSpec{{1, 1, spec.samples}, {1, 1, 1}, {}});
      net->template emplace<Flatten<T>>("flatten");
      const std::size_t flat =
          filters * (spec.grid_height - 4) * (spec.grid_width - 4);
      net->template emplace<Linear<T>>("fc1", flat, filters);
      net->template emplace<ReLU<T>>("fc1.relu");
      net->template emplace<Linear<T>>("fc2", filters, 2);
      break;
    }
  }
  ModelGraph<T> graph(spec, std::move(net));
  graph.initialize(seed);
  return graph;
}

#define ASAD_INSTANTIATE_BUILDERS(T)                                                      \
  template ModelGraph<T> build_model(const ModelSpec&, std::uint64_t);                    \
  template ModelGraph<T> build_densenet2d(const DenseNetConfig&, std::uint64_t);          \
  template ModelGraph<T> build_densenet3d(const DenseNetConfig&, std::size_t, std::uint64_t); \
  template ModelGraph<T> build_cnn_baseline(std::size_t, std::uint64_t);                  \
  template ModelGraph<T> build_cnn3d(std::size_t, std::uint64_t);

ASAD_INSTANTIATE_BUILDERS(float)
ASAD_INSTANTIATE_BUILDERS(double)

#undef ASAD_INSTANTIATE_BUILDERS

}  // namespace asad::models
