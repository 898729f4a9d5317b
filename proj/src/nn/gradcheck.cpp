#include "asad/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace asad::nn {

double GradcheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& entry : entries) worst = std::max(worst, entry.max_rel_error);
  return worst;
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

namespace {

double objective(Layer<double>& layer, const Tensor<double>& input,
                 const Tensor<double>& projection) {
  const Tensor<double> out = layer.forward(input);
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) total += out[i] * projection[i];
  return total;
}

std::vector<std::size_t> sample_coords(std::size_t size, std::size_t count, Rng& rng) {
  std::vector<std::size_t> coords(size);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (size <= count) return coords;
  rng.shuffle(std::span<std::size_t>(coords));
  coords.resize(count);
  std::sort(coords.begin(), coords.end());
  return coords;
}

}  // namespace

GradcheckReport gradcheck(Layer<double>& layer, const Tensor<double>& input,
                          const GradcheckOptions& options) {
  Rng rng(options.seed);
  const Shape out_shape = layer.output_shape(input.shape());
  const double scale = 1.0 / std::sqrt(static_cast<double>(shape_volume(out_shape)));
  Tensor<double> projection(out_shape);
  for (double& r : projection.data()) r = rng.normal() * scale;

  std::vector<Parameter<double>*> params;
  layer.collect_parameters(params);
  for (auto* p : params) p->zero_grad();
  layer.forward(input);
  const Tensor<double> grad_input = layer.backward(projection);

  GradcheckReport report;
  auto check = [&](const std::string& name, Tensor<double>& target,
                   const Tensor<double>& analytic, const Tensor<double>& probe_input,
                   bool perturbs_input) {
    GradcheckEntry entry;
    entry.name = name;
    for (std::size_t coord : sample_coords(target.size(), options.coords_per_tensor, rng)) {
      const double original = target[coord];
      target[coord] = original + options.step;
      const double plus = objective(layer, perturbs_input ? target : probe_input, projection);
      target[coord] = original - options.step;
      const double minus = objective(layer, perturbs_input ? target : probe_input, projection);
      target[coord] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(analytic[coord] - numeric));
      entry.max_rel_error = std::max(
          entry.max_rel_error,
          relative_error(analytic[coord], numeric, options.denominator_floor));
      ++entry.coords_checked;
    }
    report.entries.push_back(std::move(entry));
  };

  for (auto* p : params) check(p->name, p->value, p->grad, input, false);
  if (options.check_input) {
    Tensor<double> probe = input;
    check("input", probe, grad_input, input, true);
  }
  return report;
}

}  // namespace asad::nn
