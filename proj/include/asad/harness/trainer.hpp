#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "asad/harness/metrics.hpp"
#include "asad/harness/windows.hpp"
#include "asad/models/checkpoint.hpp"
#include "asad/models/model.hpp"

namespace asad::harness {

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainConfig {
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  /// Time slices drawn per training window per epoch when training DenseNet-2D.
  std::size_t slices_per_window = 8;
  /// Epoch cap for the DenseNet-2D stage of the DenseNet-3D path; 0 reuses
  /// max_epochs.
  std::size_t pretrain_epochs = 0;
  /// Where a diverged model is dumped; empty disables the dump.
  std::filesystem::path dump_dir;
  std::function<void(const std::string& stage, const EpochLog&)> on_epoch;
};

struct TrainResult {
  /// Best-validation-loss state (or the initialization when no epoch ran).
  models::Checkpoint checkpoint;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

/// Fills a model input batch for the selected windows. DenseNet-2D reads the
/// time slice `slices[i]` of window `indices[i]`; the CNN baseline reads the
/// C x T matrix gathered back from the grid in topology order.
Tensor<float> make_batch(const models::ModelSpec& spec, const std::vector<DecisionWindow>& windows,
                         std::span<const std::size_t> indices, const topo::TopologyMap& topology,
                         std::span<const std::size_t> slices = {});

/// Mini-batch Adam on softmax cross-entropy with a seeded per-epoch shuffle
/// and early stopping on validation loss. On return the model holds the best
/// checkpoint. A non-finite loss throws NumericError after dumping state.
TrainResult train(models::ModelGraph<float>& model, const std::vector<DecisionWindow>& windows,
                  const std::vector<std::size_t>& train_indices,
                  const std::vector<std::size_t>& val_indices, const TrainConfig& config,
                  const topo::TopologyMap& topology, const std::string& stage = "train");

struct PipelineResult {
  std::optional<TrainResult> pretrain;
  TrainResult result;
};

/// Builds, initializes and trains `spec`. For DenseNet-3D with `bootstrap`,
/// a paired DenseNet-2D is trained on slices first (unless `pretrained_2d`
/// is supplied), inflated, and used as the starting point.
PipelineResult train_pipeline(const models::ModelSpec& spec,
                              const std::vector<DecisionWindow>& windows,
                              const std::vector<std::size_t>& train_indices,
                              const std::vector<std::size_t>& val_indices,
                              const TrainConfig& config, const topo::TopologyMap& topology,
                              bool bootstrap = true,
                              const models::Checkpoint* pretrained_2d = nullptr);

/// Per-window logits [n, classes] in evaluation mode. DenseNet-2D averages
/// its logits over every time slice of the window.
Tensor<float> window_logits(models::ModelGraph<float>& model,
                            const std::vector<DecisionWindow>& windows,
                            std::span<const std::size_t> indices,
                            const topo::TopologyMap& topology, std::size_t batch_size = 32);

Metrics evaluate(models::ModelGraph<float>& model, const std::vector<DecisionWindow>& windows,
                 std::span<const std::size_t> indices, const topo::TopologyMap& topology);
Metrics evaluate(const models::Checkpoint& checkpoint, const std::vector<DecisionWindow>& windows,
                 std::span<const std::size_t> indices, const topo::TopologyMap& topology);

}  // namespace asad::harness
