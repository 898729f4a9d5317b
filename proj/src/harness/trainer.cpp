#include "asad/harness/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "asad/error.hpp"
#include "asad/models/inflate.hpp"
#include "asad/rng.hpp"

namespace asad::harness {

using models::ModelKind;
using models::ModelSpec;

namespace {

constexpr std::uint64_t kShuffleStream = 0x5401;
constexpr std::uint64_t kSliceStream = 0x511CE;
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kPretrainStream = 0x2D;

std::string format_number(double value) {
  std::ostringstream out;
  out.precision(17);
  out << value;
  return out.str();
}

struct Sample {
  std::size_t window;
  std::size_t slice;
};

void check_window(const ModelSpec& spec, const DecisionWindow& window,
                  const topo::TopologyMap& topology) {
  const Shape& g = window.grid.shape();
  if (g.size() != 3 || g[0] != spec.grid_height || g[1] != spec.grid_width) {
    throw ShapeError("window grid " + shape_string(g) + " does not match the model's " +
                     std::to_string(spec.grid_height) + "x" + std::to_string(spec.grid_width) +
                     " grid");
  }
  if (spec.kind != ModelKind::kDenseNet2d && g[2] != spec.samples) {
    throw ShapeError("window has T=" + std::to_string(g[2]) + " but " + models::to_string(spec.kind) +
                     " was built for T=" + std::to_string(spec.samples));
  }
  if (spec.kind == ModelKind::kCnnBaseline && topology.size() != spec.channels) {
    throw ShapeError("topology maps " + std::to_string(topology.size()) +
                     " channels but the baseline expects " + std::to_string(spec.channels));
  }
}

std::vector<Sample> expand(const ModelSpec& spec, const std::vector<DecisionWindow>& windows,
                           const std::vector<std::size_t>& indices, std::size_t slices_per_window,
                           Rng& rng) {
  std::vector<Sample> out;
  if (spec.kind != ModelKind::kDenseNet2d) {
    for (std::size_t i : indices) out.push_back({i, 0});
    return out;
  }
  for (std::size_t i : indices) {
    const std::size_t t = windows[i].grid.dim(2);
    for (std::size_t k = 0; k < slices_per_window; ++k) out.push_back({i, rng.below(t)});
  }
  return out;
}

struct BatchOutcome {
  double loss_sum = 0.0;
  std::size_t correct = 0;
};

/// Forward pass only; returns summed loss and correct count.
BatchOutcome score_samples(models::ModelGraph<float>& model,
                           const std::vector<DecisionWindow>& windows,
                           const std::vector<Sample>& samples, std::size_t batch_size,
                           const topo::TopologyMap& topology) {
  BatchOutcome total;
  std::vector<std::size_t> idx, slices;
  std::vector<int> labels;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    idx.clear();
    slices.clear();
    labels.clear();
    for (std::size_t k = start; k < end; ++k) {
      idx.push_back(samples[k].window);
      slices.push_back(samples[k].slice);
      labels.push_back(windows[samples[k].window].label);
    }
    const auto logits = model.forward(make_batch(model.spec(), windows, idx, topology, slices));
    const auto loss = nn::softmax_cross_entropy(logits, labels);
    total.loss_sum += loss.loss * static_cast<double>(end - start);
    for (std::size_t b = 0; b < labels.size(); ++b) {
      const int predicted = logits.at({b, 1}) > logits.at({b, 0}) ? 1 : 0;
      total.correct += predicted == labels[b] ? 1 : 0;
    }
  }
  return total;
}

models::KeyValues train_metadata(const TrainConfig& config, const ModelSpec& spec,
                                 std::size_t best_epoch, std::size_t epochs_run) {
  models::KeyValues meta = {
      {"seed", std::to_string(config.seed)},
      {"learning_rate", format_number(config.learning_rate)},
      {"batch_size", std::to_string(config.batch_size)},
      {"max_epochs", std::to_string(config.max_epochs)},
      {"patience", std::to_string(config.patience)},
      {"best_epoch", std::to_string(best_epoch)},
      {"epochs_run", std::to_string(epochs_run)},
  };
  if (spec.kind == ModelKind::kDenseNet2d) {
    meta.emplace_back("slices_per_window", std::to_string(config.slices_per_window));
  }
  return meta;
}

}  // namespace

Tensor<float> make_batch(const ModelSpec& spec, const std::vector<DecisionWindow>& windows,
                         std::span<const std::size_t> indices, const topo::TopologyMap& topology,
                         std::span<const std::size_t> slices) {
  Shape shape = spec.input_shape();
  shape.insert(shape.begin(), indices.size());
  Tensor<float> batch(shape);
  const std::size_t per = shape_volume(spec.input_shape());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const DecisionWindow& w = windows.at(indices[b]);
    check_window(spec, w, topology);
    float* dst = batch.data().data() + b * per;
    switch (spec.kind) {
      case ModelKind::kCnn3d:
      case ModelKind::kDenseNet3d:
        std::copy(w.grid.storage().begin(), w.grid.storage().end(), dst);
        break;
      case ModelKind::kCnnBaseline: {
        const Tensor<float> ct = topo::from_grid(w.grid, topology);
        std::copy(ct.storage().begin(), ct.storage().end(), dst);
        break;
      }
      case ModelKind::kDenseNet2d: {
        if (slices.size() != indices.size()) {
          throw ValidationError("DenseNet-2D batches need one time slice per window");
        }
        const std::size_t t_len = w.grid.dim(2);
        const std::size_t t = slices[b];
        if (t >= t_len) throw ShapeError("time slice " + std::to_string(t) + " outside window");
        const std::size_t cells = w.grid.dim(0) * w.grid.dim(1);
        for (std::size_t c = 0; c < cells; ++c) dst[c] = w.grid[c * t_len + t];
        break;
      }
    }
  }
  return batch;
}

TrainResult train(models::ModelGraph<float>& model, const std::vector<DecisionWindow>& windows,
                  const std::vector<std::size_t>& train_indices,
                  const std::vector<std::size_t>& val_indices, const TrainConfig& config,
                  const topo::TopologyMap& topology, const std::string& stage) {
  if (config.batch_size == 0) throw ValidationError("batch size must be positive");
  if (!(config.learning_rate >= 0.0)) throw ValidationError("learning rate must be >= 0");
  if (train_indices.empty()) throw ValidationError("training set is empty");
  const ModelSpec& spec = model.spec();

  auto params = model.parameters();
  auto adam = nn::make_adam<float>(params, config.learning_rate);
  Rng shuffle_rng(derive_seed(config.seed, kShuffleStream));
  Rng val_rng(derive_seed(config.seed, kSliceStream, 1));
  Rng slice_rng(derive_seed(config.seed, kSliceStream, 2));
  const auto val_samples = expand(spec, windows, val_indices, config.slices_per_window, val_rng);

  TrainResult result;
  result.checkpoint = models::capture_checkpoint(model, train_metadata(config, spec, 0, 0));
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> idx, slices;
  std::vector<int> labels;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    model.set_training(true);
    auto samples = expand(spec, windows, train_indices, config.slices_per_window, slice_rng);
    shuffle_rng.shuffle(std::span<Sample>(samples));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += config.batch_size) {
      const std::size_t end = std::min(samples.size(), start + config.batch_size);
      idx.clear();
      slices.clear();
      labels.clear();
      for (std::size_t k = start; k < end; ++k) {
        idx.push_back(samples[k].window);
        slices.push_back(samples[k].slice);
        labels.push_back(windows[samples[k].window].label);
      }
      nn::zero_grads<float>(params);
      const auto logits = model.forward(make_batch(spec, windows, idx, topology, slices));
      auto loss = nn::softmax_cross_entropy(logits, labels);
      if (!std::isfinite(loss.loss)) {
        std::string where = stage + " epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(start / config.batch_size);
        if (!config.dump_dir.empty()) {
          const auto path = config.dump_dir / (stage + "-diverged.ckpt");
          models::save_checkpoint(
              models::capture_checkpoint(model, train_metadata(config, spec, 0, epoch), &adam),
              path);
          where += ", state dumped to " + path.string();
        }
        throw NumericError("training diverged (non-finite loss) at " + where);
      }
      loss_sum += loss.loss * static_cast<double>(end - start);
      model.backward(loss.grad_logits);
      nn::adam_step<float>(params, adam);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(samples.size());
    if (val_samples.empty()) {
      entry.val_loss = entry.train_loss;
      entry.val_accuracy = std::numeric_limits<double>::quiet_NaN();
    } else {
      model.set_training(false);
      const auto scored = score_samples(model, windows, val_samples, config.batch_size, topology);
      entry.val_loss = scored.loss_sum / static_cast<double>(val_samples.size());
      entry.val_accuracy =
          static_cast<double>(scored.correct) / static_cast<double>(val_samples.size());
    }
    result.log.push_back(entry);
    if (config.on_epoch) config.on_epoch(stage, entry);

    if (entry.val_loss < best_loss) {
      best_loss = entry.val_loss;
      since_best = 0;
      result.best_epoch = epoch;
      result.checkpoint = models::capture_checkpoint(
          model, train_metadata(config, spec, epoch, epoch), &adam);
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  // epochs_run reflects the whole run, not just the best epoch.
  for (auto& [key, value] : result.checkpoint.metadata) {
    if (key == "epochs_run") value = std::to_string(result.log.size());
  }
  models::restore_checkpoint(model, result.checkpoint);
  model.set_training(false);
  return result;
}

PipelineResult train_pipeline(const ModelSpec& spec, const std::vector<DecisionWindow>& windows,
                              const std::vector<std::size_t>& train_indices,
                              const std::vector<std::size_t>& val_indices,
                              const TrainConfig& config, const topo::TopologyMap& topology,
                              bool bootstrap, const models::Checkpoint* pretrained_2d) {
  PipelineResult out;
  if (spec.kind == ModelKind::kDenseNet3d && bootstrap) {
    models::Checkpoint source;
    if (pretrained_2d != nullptr) {
      source = *pretrained_2d;
    } else {
      ModelSpec spec2d = spec;
      spec2d.kind = ModelKind::kDenseNet2d;
      TrainConfig pre = config;
      pre.seed = derive_seed(config.seed, kPretrainStream);
      if (config.pretrain_epochs > 0) pre.max_epochs = config.pretrain_epochs;
      auto model2d = models::build_model<float>(spec2d, derive_seed(pre.seed, kInitStream));
      out.pretrain = train(model2d, windows, train_indices, val_indices, pre, topology, "pretrain2d");
      source = out.pretrain->checkpoint;
    }
    auto model3d = models::build_model<float>(spec, 0);
    models::restore_checkpoint(model3d, models::inflate_2d_to_3d(source, spec));
    out.result = train(model3d, windows, train_indices, val_indices, config, topology, "train3d");
    return out;
  }
  auto model = models::build_model<float>(spec, derive_seed(config.seed, kInitStream));
  out.result = train(model, windows, train_indices, val_indices, config, topology);
  return out;
}

Tensor<float> window_logits(models::ModelGraph<float>& model,
                            const std::vector<DecisionWindow>& windows,
                            std::span<const std::size_t> indices,
                            const topo::TopologyMap& topology, std::size_t batch_size) {
  const ModelSpec& spec = model.spec();
  const std::size_t classes = spec.densenet.num_classes;
  model.set_training(false);
  Tensor<float> out({indices.size(), classes});
  if (spec.kind != ModelKind::kDenseNet2d) {
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
      const std::size_t end = std::min(indices.size(), start + batch_size);
      const auto logits =
          model.forward(make_batch(spec, windows, indices.subspan(start, end - start), topology));
      std::copy(logits.storage().begin(), logits.storage().end(),
                out.data().begin() + static_cast<std::ptrdiff_t>(start * classes));
    }
    return out;
  }
  std::vector<std::size_t> idx, slices;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t t_len = windows.at(indices[i]).grid.dim(2);
    std::vector<double> sum(classes, 0.0);
    for (std::size_t start = 0; start < t_len; start += batch_size) {
      const std::size_t end = std::min(t_len, start + batch_size);
      idx.assign(end - start, indices[i]);
      slices.resize(end - start);
      std::iota(slices.begin(), slices.end(), start);
      const auto logits = model.forward(make_batch(spec, windows, idx, topology, slices));
      for (std::size_t b = 0; b < end - start; ++b) {
        for (std::size_t c = 0; c < classes; ++c) sum[c] += logits.at({b, c});
      }
    }
    for (std::size_t c = 0; c < classes; ++c) {
      out.at({i, c}) = static_cast<float>(sum[c] / static_cast<double>(t_len));
    }
  }
  return out;
}

Metrics evaluate(models::ModelGraph<float>& model, const std::vector<DecisionWindow>& windows,
                 std::span<const std::size_t> indices, const topo::TopologyMap& topology) {
  if (indices.empty()) throw ValidationError("cannot evaluate on an empty window set");
  const auto logits = window_logits(model, windows, indices, topology);
  std::vector<int> predicted(indices.size()), labels(indices.size());
  const std::size_t classes = logits.dim(1);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (logits.at({i, c}) > logits.at({i, best})) best = c;
    }
    predicted[i] = static_cast<int>(best);
    labels[i] = windows.at(indices[i]).label;
  }
  return score_decisions(predicted, labels);
}

Metrics evaluate(const models::Checkpoint& checkpoint, const std::vector<DecisionWindow>& windows,
                 std::span<const std::size_t> indices, const topo::TopologyMap& topology) {
  auto model = models::instantiate<float>(checkpoint);
  return evaluate(model, windows, indices, topology);
}

}  // namespace asad::harness
