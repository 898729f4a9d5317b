#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asad/models/model.hpp"
#include "asad/nn/ops.hpp"

namespace asad::models {

enum class Precision : std::uint8_t { kFloat32 = 4, kFloat64 = 8 };

struct CheckpointRecord {
  std::string name;
  Shape shape;
  Precision precision = Precision::kFloat32;
  /// Stored widened; values of a float32 record are exactly representable.
  std::vector<double> values;

  bool operator==(const CheckpointRecord&) const = default;
};

/// Named tensors of a model (parameters and batch-norm running statistics),
/// its structural config, free-form metadata and optional Adam state.
struct Checkpoint {
  std::string model_id;
  KeyValues config;
  KeyValues metadata;
  std::vector<CheckpointRecord> records;

  const CheckpointRecord* find(const std::string& name) const;
  ModelSpec model_spec() const { return ModelSpec::from_key_values(config); }
  std::string metadata_value(const std::string& key, const std::string& fallback = "") const;
  bool operator==(const Checkpoint&) const = default;
};

inline constexpr char kCheckpointMagic[8] = {'A', 'S', 'A', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
Checkpoint capture_checkpoint(ModelGraph<T>& model, KeyValues metadata = {},
                              const nn::AdamState<T>* optimizer = nullptr);

/// Copies values into a graph of the same spec; throws on any name or shape
/// mismatch.
template <typename T>
void restore_checkpoint(ModelGraph<T>& model, const Checkpoint& checkpoint);

/// Restores Adam moments and step counter saved by capture_checkpoint.
template <typename T>
bool restore_optimizer(ModelGraph<T>& model, const Checkpoint& checkpoint,
                       nn::AdamState<T>& optimizer);

/// Builds the graph described by the checkpoint config and restores it.
template <typename T>
ModelGraph<T> instantiate(const Checkpoint& checkpoint);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace asad::models
