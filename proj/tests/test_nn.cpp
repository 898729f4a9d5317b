#include <doctest.h>

#include <cmath>
#include <numeric>

#include "asad/error.hpp"
#include "asad/nn/gradcheck.hpp"
#include "asad/nn/layers.hpp"
#include "asad/nn/ops.hpp"
#include "oracles.hpp"

using namespace asad;
using namespace asad::nn;

namespace {

ConvSpec conv_spec(std::size_t in, std::size_t out, std::vector<std::size_t> k,
                   std::vector<std::size_t> s, std::vector<std::size_t> p) {
  ConvSpec spec;
  spec.in_channels = in;
  spec.out_channels = out;
  spec.kernel = std::move(k);
  spec.stride = std::move(s);
  spec.padding = std::move(p);
  return spec;
}

PoolSpec pool_spec(std::vector<std::size_t> k, std::vector<std::size_t> s,
                   std::vector<std::size_t> p = {}) {
  if (p.empty()) p.assign(k.size(), 0);
  return PoolSpec{std::move(k), std::move(s), std::move(p)};
}

}  // namespace

TEST_CASE("identity 1x1 kernel passes the input through") {
  Rng rng(3);
  const auto x = oracle::random_tensor({2, 1, 4, 5}, rng);
  const Tensor<double> w({1, 1, 1, 1}, 1.0);
  const Tensor<double> b({1}, 0.0);
  const auto spec = conv_spec(1, 1, {1, 1}, {1, 1}, {0, 0});
  CHECK(conv_forward(x, spec, w, &b) == x);

  Tensor<double> gw(w.shape());
  Tensor<double> gb(b.shape());
  const auto g = oracle::random_tensor(x.shape(), rng);
  CHECK(conv_backward(g, x, spec, w, gw, &gb) == g);
}

TEST_CASE("3x3 ones kernel over 3x3 ones gives 9") {
  const Tensor<double> x({1, 1, 3, 3}, 1.0);
  const Tensor<double> w({1, 1, 3, 3}, 1.0);
  const auto y = conv_forward(x, conv_spec(1, 1, {3, 3}, {1, 1}, {0, 0}), w, static_cast<const Tensor<double>*>(nullptr));
  REQUIRE(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y[0] == 9.0);
}

TEST_CASE("conv on 1x1x5x6 with pad 1 matches the nested-loop oracle") {
  Rng rng(11);
  const auto x = oracle::random_tensor({1, 1, 5, 6}, rng);
  const auto w = oracle::random_tensor({1, 1, 3, 3}, rng);
  const auto b = oracle::random_tensor({1}, rng);
  const auto y = conv_forward(x, conv_spec(1, 1, {3, 3}, {1, 1}, {1, 1}), w, &b);
  const auto ref = oracle::conv(x, w, &b, {{3, 3}, {1, 1}, {1, 1}});
  REQUIRE(y.shape() == ref.shape());
  CHECK(oracle::max_abs_diff(y, ref) <= 1e-12);
}

TEST_CASE("conv backward of a zero gradient is zero") {
  Rng rng(5);
  const auto x = oracle::random_tensor({2, 3, 4, 5, 6}, rng);
  const auto w = oracle::random_tensor({2, 3, 3, 3, 1}, rng);
  const auto spec = conv_spec(3, 2, {3, 3, 1}, {1, 1, 1}, {1, 1, 0});
  Tensor<double> gw(w.shape());
  Tensor<double> gb({2});
  const Tensor<double> zero(spec.output_shape(x.shape()));
  const auto gi = conv_backward(zero, x, spec, w, gw, &gb);
  CHECK(std::all_of(gi.data().begin(), gi.data().end(), [](double v) { return v == 0.0; }));
  CHECK(std::all_of(gw.data().begin(), gw.data().end(), [](double v) { return v == 0.0; }));
  CHECK(std::all_of(gb.data().begin(), gb.data().end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("conv rejects mismatched channels and names the axis") {
  const Tensor<double> x({1, 2, 5, 5});
  const Tensor<double> w({1, 3, 3, 3});
  CHECK_THROWS_AS(conv_forward(x, conv_spec(3, 1, {3, 3}, {1, 1}, {0, 0}), w, static_cast<const Tensor<double>*>(nullptr)), ShapeError);
  try {
    conv_forward(Tensor<double>({1, 1, 2, 5}), conv_spec(1, 1, {3, 3}, {1, 1}, {0, 0}),
                 Tensor<double>({1, 1, 3, 3}), static_cast<const Tensor<double>*>(nullptr));
    FAIL("expected a ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("axis") != std::string::npos);
  }
}

TEST_CASE("output extent formula holds and rejects empty outputs") {
  CHECK(output_extent(10, 3, 2, 1, 0) == 5);
  CHECK(output_extent(11, 3, 2, 1, 1) == 6);
  CHECK(output_extent(128, 7, 3, 0, 2) == 41);
  CHECK_THROWS_AS(output_extent(2, 3, 1, 0, 0), ShapeError);
}

TEST_CASE("random conv and pool shapes match the oracles") {
  Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t rank = 2 + rng.below(2);
    const std::size_t n = 1 + rng.below(2), ci = 1 + rng.below(4), co = 1 + rng.below(3);
    Shape xs{n, ci};
    oracle::Geometry g;
    const std::size_t caps[3] = {8, 9, 11};
    for (std::size_t a = 0; a < rank; ++a) {
      const std::size_t extent = 3 + rng.below(caps[3 - rank + a] - 2);
      const std::size_t k = 1 + rng.below(std::min<std::size_t>(extent, 3));
      xs.push_back(extent);
      g.kernel.push_back(k);
      g.stride.push_back(1 + rng.below(2));
      g.pad.push_back(rng.below(k));
    }
    const auto x = oracle::random_tensor(xs, rng);
    Shape ws{co, ci};
    ws.insert(ws.end(), g.kernel.begin(), g.kernel.end());
    const auto w = oracle::random_tensor(ws, rng);
    const auto b = oracle::random_tensor({co}, rng);
    const auto y = conv_forward(x, conv_spec(ci, co, g.kernel, g.stride, g.pad), w, &b);
    const auto ref = oracle::conv(x, w, &b, g);
    REQUIRE(y.shape() == ref.shape());
    CHECK(oracle::max_abs_diff(y, ref) <= 1e-12);

    oracle::Geometry gm = g;
    for (std::size_t a = 0; a < rank; ++a) gm.pad[a] = std::min(gm.pad[a], gm.kernel[a] / 2);
    const auto mp = maxpool_forward(x, pool_spec(gm.kernel, gm.stride, gm.pad));
    CHECK(mp == oracle::pool(x, gm, true));
    oracle::Geometry ga = g;
    ga.pad.assign(rank, 0);
    const auto ap = avgpool_forward(x, pool_spec(ga.kernel, ga.stride));
    CHECK(oracle::max_abs_diff(ap, oracle::pool(x, ga, false)) <= 1e-12);
  }
}

TEST_CASE("batchnorm evaluation with unit statistics is the identity") {
  Rng rng(8);
  BatchNormState<double> state("bn", 3);
  state.training = false;
  const auto x = oracle::random_tensor({4, 3, 2, 5}, rng);
  const auto y = batchnorm_forward(x, state);
  // eps makes the scale 1/sqrt(1 + 1e-5) rather than exactly 1.
  CHECK(oracle::max_abs_diff(x, y) <= 1e-5 * 4 * 6);
  const double scale = 1.0 / std::sqrt(1.0 + 1e-5);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i] * scale).epsilon(1e-14));
}

TEST_CASE("batchnorm training output is standardized per channel") {
  Rng rng(9);
  BatchNormState<double> state("bn", 2);
  auto x = oracle::random_tensor({5, 2, 3, 4}, rng);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 7.0 + 3.0 * x[i];
  const auto y = batchnorm_forward(x, state);
  for (std::size_t c = 0; c < 2; ++c) {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < 5; ++b)
      for (std::size_t s = 0; s < 12; ++s) {
        const double v = y[(b * 2 + c) * 12 + s];
        sum += v;
        sq += v * v;
        ++count;
      }
    const double mean = sum / count;
    CHECK(std::abs(mean) <= 1e-10);
    // Variance comes out as var / (var + eps), a hair under one.
    CHECK(std::abs(sq / count - mean * mean - 1.0) <= 1e-5);
  }
  for (double v : state.running_var.data()) CHECK(v > 0.0);
}

TEST_CASE("batchnorm evaluation leaves running statistics untouched") {
  Rng rng(10);
  BatchNormState<double> state("bn", 2);
  batchnorm_forward(oracle::random_tensor({3, 2, 4}, rng), state);
  state.training = false;
  const auto mean = state.running_mean, var = state.running_var;
  const auto x = oracle::random_tensor({3, 2, 4}, rng);
  const auto y1 = batchnorm_forward(x, state);
  const auto y2 = batchnorm_forward(x, state);
  CHECK(y1 == y2);
  CHECK(state.running_mean == mean);
  CHECK(state.running_var == var);
}

TEST_CASE("relu definition and dead gradients") {
  const Tensor<double> x({3}, std::vector<double>{-1.0, 0.0, 2.0});
  CHECK(relu(x).storage() == std::vector<double>{0.0, 0.0, 2.0});
  const Tensor<double> neg({4}, std::vector<double>{-1, -2, -3, -0.5});
  const Tensor<double> g({4}, 1.0);
  CHECK(relu(neg) == Tensor<double>({4}, 0.0));
  CHECK(relu_backward(g, neg) == Tensor<double>({4}, 0.0));
  // Subgradient at exactly 0 is 0.
  CHECK(relu_backward(Tensor<double>({3}, 1.0), x).storage() == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("maxpool constant input and stem geometry") {
  const Tensor<double> x({1, 2, 10, 11}, 4.5);
  const auto y = maxpool_forward(x, pool_spec({3, 3}, {2, 2}, {1, 1}));
  CHECK(y.shape() == Shape{1, 2, 5, 6});
  CHECK(y == Tensor<double>(y.shape(), 4.5));
}

TEST_CASE("maxpool backward routes each window to exactly one cell, first maximum on ties") {
  Rng rng(12);
  const auto x = oracle::random_tensor({2, 3, 6, 7, 5}, rng);
  const auto spec = pool_spec({3, 3, 1}, {2, 2, 1}, {1, 1, 0});
  std::vector<std::size_t> argmax;
  const auto y = maxpool_forward(x, spec, &argmax);
  REQUIRE(argmax.size() == y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    Tensor<double> g(y.shape());
    g[i] = 1.0;
    const auto gi = maxpool_backward(g, argmax, x.shape());
    const auto nonzero = std::count_if(gi.data().begin(), gi.data().end(), [](double v) { return v != 0.0; });
    CHECK(nonzero == 1);
    CHECK(gi[argmax[i]] == 1.0);
    CHECK(x[argmax[i]] == y[i]);
  }

  // All-equal window: the first cell in row-major order wins.
  const Tensor<double> flat({1, 1, 2, 2}, 1.0);
  std::vector<std::size_t> am;
  maxpool_forward(flat, pool_spec({2, 2}, {1, 1}), &am);
  CHECK(am == std::vector<std::size_t>{0});
}

TEST_CASE("avgpool constant input and transition temporal trace") {
  const Tensor<double> x({1, 1, 3, 3, 20}, -2.0);
  const auto y = avgpool_forward(x, pool_spec({2, 2, 7}, {1, 1, 3}));
  CHECK(y == Tensor<double>(y.shape(), -2.0));
  std::size_t t = 128;
  std::vector<std::size_t> trace;
  for (int i = 0; i < 3; ++i) trace.push_back(t = output_extent(t, 7, 3, 0, 2));
  CHECK(trace == std::vector<std::size_t>{41, 12, 2});
}

TEST_CASE("global average pooling") {
  Rng rng(13);
  const auto one = oracle::random_tensor({2, 4, 1, 1}, rng);
  const auto y = global_avg_pool(one);
  CHECK(y.shape() == Shape{2, 4});
  CHECK(y.storage() == one.storage());
  CHECK(global_avg_pool(Tensor<double>({1, 3, 2, 3, 2}, 1.25)) == Tensor<double>({1, 3}, 1.25));
  const auto x = oracle::random_tensor({2, 3, 4, 5}, rng);
  const auto gap = global_avg_pool(x);
  for (std::size_t i = 0; i < 6; ++i) {
    double sum = 0.0;
    for (std::size_t s = 0; s < 20; ++s) sum += x[i * 20 + s];
    CHECK(std::abs(gap[i] - sum / 20.0) <= 1e-12);
  }
}

TEST_CASE("linear layer hand cases") {
  const Tensor<double> x({1, 2}, std::vector<double>{3, 4});
  const Tensor<double> w({1, 2}, std::vector<double>{1, 1});
  const Tensor<double> b({1}, 0.0);
  CHECK(linear_forward(x, w, &b).storage() == std::vector<double>{7.0});
  const Tensor<double> eye({2, 2}, std::vector<double>{1, 0, 0, 1});
  CHECK(linear_forward(x, eye, static_cast<const Tensor<double>*>(nullptr)) == x);
}

TEST_CASE("softmax cross-entropy") {
  const Tensor<double> even({1, 2}, std::vector<double>{0.3, 0.3});
  const std::vector<int> left{0};
  const auto r = softmax_cross_entropy(even, left);
  CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(r.probabilities[0] == doctest::Approx(0.5));
  const Tensor<double> sure({1, 2}, std::vector<double>{50.0, 0.0});
  CHECK(softmax_cross_entropy(sure, left).loss <= 1e-20);
  CHECK_THROWS_AS(softmax_cross_entropy(even, std::vector<int>{2}), ValidationError);

  Rng rng(14);
  const auto logits = oracle::random_tensor({6, 2}, rng);
  const auto p = softmax(logits);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(p[2 * i] >= 0.0);
    CHECK(std::abs(p[2 * i] + p[2 * i + 1] - 1.0) <= 1e-12);
  }
  const std::vector<int> labels{0, 1, 1, 0, 1, 0};
  const auto base = softmax_cross_entropy(logits, labels);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    auto plus = logits, minus = logits;
    plus[i] += 1e-6;
    minus[i] -= 1e-6;
    const double numeric = (softmax_cross_entropy(plus, labels).loss -
                            softmax_cross_entropy(minus, labels).loss) / 2e-6;
    CHECK(relative_error(base.grad_logits[i], numeric, 1e-4) <= 1e-6);
  }
}

TEST_CASE("adam hand evaluation") {
  Parameter<double> p("w", Tensor<double>({1}, 0.0));
  std::vector<Parameter<double>*> params{&p};
  auto state = make_adam<double>(params, 1e-3);
  p.grad[0] = 1.0;
  adam_step<double>(params, state);
  CHECK(std::abs(p.value[0] + 1e-3) <= 1e-6);

  Parameter<double> q("q", Tensor<double>({3}, std::vector<double>{1, -2, 3}));
  std::vector<Parameter<double>*> qs{&q};
  auto qstate = make_adam<double>(qs, 1e-3);
  const auto before = q.value;
  q.zero_grad();
  adam_step<double>(qs, qstate);
  CHECK(q.value == before);
}

TEST_CASE("adam steps decrease a convex quadratic") {
  Parameter<double> p("w", Tensor<double>({1}, 2.0));
  std::vector<Parameter<double>*> params{&p};
  auto state = make_adam<double>(params, 0.1);
  double loss = p.value[0] * p.value[0];
  for (int step = 0; step < 2; ++step) {
    p.zero_grad();
    p.grad[0] = 2.0 * p.value[0];
    adam_step<double>(params, state);
    const double next = p.value[0] * p.value[0];
    CHECK(next < loss);
    loss = next;
  }
  CHECK(state.step == 2);
}

TEST_CASE("layer gradients match finite differences") {
  Rng rng(21);
  GradcheckOptions opt;
  opt.coords_per_tensor = 16;

  SUBCASE("conv3d") {
    Conv<double> conv("c", conv_spec(2, 3, {3, 3, 1}, {1, 1, 1}, {1, 1, 0}));
    conv.initialize(rng);
    CHECK(gradcheck(conv, oracle::random_tensor({2, 2, 4, 5, 3}, rng), opt).passed(1e-6));
  }
  SUBCASE("batchnorm training") {
    BatchNorm<double> bn("bn", 3);
    for (double& v : bn.state().gamma.value.data()) v = rng.uniform(0.5, 1.5);
    for (double& v : bn.state().beta.value.data()) v = rng.normal();
    CHECK(gradcheck(bn, oracle::random_tensor({4, 3, 2, 3}, rng), opt).passed(1e-5));
  }
  SUBCASE("relu away from the kink") {
    ReLU<double> r("r");
    auto x = oracle::random_tensor({3, 2, 4}, rng);
    for (double& v : x.data()) v = (v < 0 ? -1.0 : 1.0) * (std::abs(v) + 1e-3);
    CHECK(gradcheck(r, x, opt).passed(1e-6));
  }
  SUBCASE("linear") {
    Linear<double> lin("fc", 5, 2);
    lin.initialize(rng);
    CHECK(gradcheck(lin, oracle::random_tensor({3, 5}, rng), opt).passed(1e-7));
  }
  SUBCASE("avgpool and global pool") {
    AvgPool<double> ap("ap", pool_spec({2, 2, 7}, {1, 1, 3}));
    CHECK(gradcheck(ap, oracle::random_tensor({2, 2, 3, 3, 13}, rng), opt).passed(1e-6));
    GlobalAvgPool<double> gp("gap");
    CHECK(gradcheck(gp, oracle::random_tensor({2, 3, 2, 3}, rng), opt).passed(1e-6));
  }
}

TEST_CASE("activations stay finite through a layer stack") {
  Rng rng(30);
  Sequential<double> net("net");
  net.emplace<Conv<double>>("c1", conv_spec(1, 4, {3, 3}, {1, 1}, {1, 1}));
  net.emplace<BatchNorm<double>>("bn", 4);
  net.emplace<ReLU<double>>("r");
  net.emplace<MaxPool<double>>("mp", pool_spec({3, 3}, {2, 2}, {1, 1}));
  net.emplace<GlobalAvgPool<double>>("gap");
  net.emplace<Linear<double>>("fc", 4, 2);
  net.initialize(rng);
  const auto y = net.forward(oracle::random_tensor({3, 1, 10, 11}, rng));
  CHECK(y.all_finite());
  CHECK(net.backward(oracle::random_tensor(y.shape(), rng)).all_finite());
}
