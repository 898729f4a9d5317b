#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "asad/harness/folds.hpp"
#include "asad/harness/trainer.hpp"

namespace asad::harness {

enum class ProtocolMode { kDependent, kIndependent };

std::string to_string(ProtocolMode mode);
ProtocolMode parse_protocol_mode(const std::string& text);

struct ProtocolConfig {
  ProtocolMode mode = ProtocolMode::kDependent;
  /// Kind and DenseNet widths; `samples` is overwritten from duration_s.
  models::ModelSpec model;
  double duration_s = 1.0;
  std::uint64_t seed = 0;
  TrainConfig train;
  bool group_by_trial = false;
  bool bootstrap = true;
  /// Worker threads; runs are independent so results do not depend on it.
  std::size_t jobs = 1;
  /// Restrict to these fold indices (empty means all five).
  std::vector<std::size_t> folds;
  /// When set, the best checkpoint of every run is written here.
  std::filesystem::path checkpoint_dir;
  /// DenseNet-3D only: bootstrap each run from the DenseNet-2D checkpoint of
  /// the same subject and fold found here instead of training one inline.
  std::filesystem::path pretrained_dir;
  std::function<void(const std::string&)> progress;
};

/// One trained-and-tested model.
struct RunOutcome {
  /// Subject id, or "pooled" in subject-independent mode.
  std::string subject;
  std::size_t fold = 0;
  std::string model;
  double duration_s = 0.0;
  Metrics metrics;
  /// Accuracy per subject within this run's test fold.
  std::vector<SubjectAccuracy> subject_accuracy;
  std::vector<EpochLog> pretrain_log;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  std::vector<std::uint8_t> checkpoint_bytes;
};

struct ProtocolReport {
  ProtocolMode mode = ProtocolMode::kDependent;
  std::vector<RunOutcome> runs;

  /// Arithmetic mean of the per-run accuracy column.
  double mean_accuracy() const;
  /// Per-subject accuracy (mean over that subject's folds, or over the pooled
  /// folds restricted to the subject's windows).
  std::vector<SubjectAccuracy> per_subject() const;
  Summary subject_summary() const;

  /// Header: subject,fold,model,duration_s,accuracy
  void write_csv(std::ostream& out) const;
  /// Header: subject,fold,stage,epoch,train_loss,val_loss,val_accuracy
  void write_log_csv(std::ostream& out) const;
};

inline constexpr const char* kReportHeader = "subject,fold,model,duration_s,accuracy";

/// Slices every recording, plans folds (per subject or pooled) and trains and
/// tests one model per (subject, fold) or per pooled fold. Fold plans depend
/// only on the master seed and the windows, so different model kinds run
/// with the same seed see the same folds.
ProtocolReport run_protocol(const std::vector<EegRecording>& recordings,
                            const topo::TopologyMap& topology, const ProtocolConfig& config);

/// The fold plan run_protocol uses for subject group `group` (0 when pooled).
FoldPlan protocol_folds(const std::vector<DecisionWindow>& windows, std::uint64_t seed,
                        std::size_t group, bool group_by_trial);

}  // namespace asad::harness
