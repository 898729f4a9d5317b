#include "asad/models/gradient_suite.hpp"

#include <cmath>
#include <functional>

#include "asad/models/model.hpp"

namespace asad::models {

namespace {

using nn::Layer;

Tensor<double> random_input(const Shape& shape, Rng& rng) {
  Tensor<double> x(shape);
  for (double& v : x.data()) v = rng.normal();
  return x;
}

/// Values with |v| >= margin, so a step of 1e-6 never crosses zero.
Tensor<double> away_from_zero(const Shape& shape, Rng& rng, double margin = 1e-3) {
  Tensor<double> x(shape);
  for (double& v : x.data()) {
    const double magnitude = margin + std::abs(rng.normal());
    v = rng.uniform() < 0.5 ? -magnitude : magnitude;
  }
  return x;
}

/// A shuffled ladder with spacing 1e-2, so no two pooled values are within
/// reach of each other under the finite-difference step.
Tensor<double> distinct_values(const Shape& shape, Rng& rng) {
  Tensor<double> x(shape);
  std::vector<double> values(x.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = (static_cast<double>(i) - static_cast<double>(values.size()) / 2.0) * 1e-2;
  }
  rng.shuffle(std::span<double>(values));
  std::copy(values.begin(), values.end(), x.data().begin());
  return x;
}

}  // namespace

std::vector<SuiteCase> run_gradient_suite(const nn::GradcheckOptions& options) {
  std::vector<SuiteCase> out;
  Rng rng(options.seed);
  const auto run = [&](const std::string& name, Layer<double>& layer, const Tensor<double>& x) {
    Rng init(derive_seed(options.seed, out.size()));
    layer.initialize(init);
    out.push_back({name, nn::gradcheck(layer, x, options)});
  };

  {
    nn::Conv<double> conv("conv2d", nn::make_conv(2, 3, {3, 3}, {1, 1}, true));
    run("conv2d 3x3 pad 1", conv, random_input({2, 2, 5, 6}, rng));
  }
  {
    nn::ConvSpec spec = nn::make_conv(2, 3, {3, 2}, {0, 1}, true);
    spec.stride = {2, 1};
    nn::Conv<double> conv("conv2d_strided", spec);
    run("conv2d 3x2 stride (2,1)", conv, random_input({2, 2, 7, 5}, rng));
  }
  {
    nn::Conv<double> conv("conv3d", nn::make_conv(2, 2, {3, 3, 1}, {1, 1, 0}, false));
    run("conv3d 3x3x1 pad (1,1,0)", conv, random_input({2, 2, 4, 5, 3}, rng));
  }
  {
    nn::ConvSpec spec = nn::make_conv(1, 2, {2, 3, 3}, {0, 1, 1}, true);
    spec.stride = {1, 2, 2};
    nn::Conv<double> conv("conv3d_strided", spec);
    run("conv3d 2x3x3 stride (1,2,2)", conv, random_input({2, 1, 3, 5, 6}, rng));
  }
  {
    nn::Linear<double> fc("linear", 7, 3);
    run("linear 7->3", fc, random_input({4, 7}, rng));
  }
  {
    nn::BatchNorm<double> bn("bn_train", 3);
    bn.set_training(true);
    run("batchnorm training", bn, random_input({4, 3, 2, 3}, rng));
  }
  {
    nn::BatchNorm<double> bn("bn_eval", 3);
    Tensor<double> warm = random_input({4, 3, 2, 3}, rng);
    bn.forward(warm);
    bn.set_training(false);
    run("batchnorm evaluation", bn, random_input({4, 3, 2, 3}, rng));
  }
  {
    nn::ReLU<double> relu("relu");
    run("relu", relu, away_from_zero({3, 2, 4, 5}, rng));
  }
  {
    nn::MaxPool<double> pool("maxpool2d", nn::PoolSpec{{3, 3}, {2, 2}, {1, 1}});
    run("maxpool2d 3x3 stride 2 pad 1", pool, distinct_values({2, 2, 10, 11}, rng));
  }
  {
    nn::MaxPool<double> pool("maxpool3d", nn::PoolSpec{{3, 3, 1}, {2, 2, 1}, {1, 1, 0}});
    run("maxpool3d 3x3x1 stride (2,2,1)", pool, distinct_values({2, 2, 5, 6, 3}, rng));
  }
  {
    nn::AvgPool<double> pool("avgpool2d", nn::PoolSpec{{2, 2}, {1, 1}, {}});
    run("avgpool2d 2x2 stride 1", pool, random_input({2, 3, 5, 6}, rng));
  }
  {
    nn::AvgPool<double> pool("avgpool3d", nn::PoolSpec{{2, 2, 7}, {1, 1, 3}, {}});
    run("avgpool3d 2x2x7 stride (1,1,3)", pool, random_input({2, 2, 3, 4, 13}, rng));
  }
  {
    nn::GlobalAvgPool<double> pool("global_pool");
    run("global average pool", pool, random_input({2, 3, 4, 5, 2}, rng));
  }
  {
    nn::Sequential<double> seq("flatten_linear");
    seq.emplace<nn::Flatten<double>>("flatten");
    seq.emplace<nn::Linear<double>>("fc", 2 * 3 * 4, 2);
    run("flatten + linear", seq, random_input({3, 2, 3, 4}, rng));
  }
  {
    nn::DenseBlock<double> block("dense_block", 3, 2);
    for (int l = 0; l < 2; ++l) {
      auto composite = std::make_unique<nn::Sequential<double>>("layer" + std::to_string(l));
      const std::size_t width = block.input_width();
      composite->emplace<nn::BatchNorm<double>>("bn", width);
      composite->emplace<nn::Conv<double>>("conv", nn::make_conv(width, 2, {3, 3}, {1, 1}, false));
      block.add_layer(std::move(composite));
    }
    run("dense block (2 layers, k=2)", block, random_input({2, 3, 4, 5}, rng));
  }
  {
    DenseNetConfig config;
    config.growth_rate = 4;
    auto model = build_densenet2d<double>(config, derive_seed(options.seed, 0xD2));
    model.set_training(true);
    out.push_back({"densenet2d k=4", nn::gradcheck(model.network(), random_input({2, 1, 10, 11}, rng), options)});
  }
  return out;
}

}  // namespace asad::models
