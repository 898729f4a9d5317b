#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asad/dsp/recording.hpp"

namespace asad::harness {

inline constexpr int kLeft = 0;
inline constexpr int kRight = 1;

std::string label_name(int label);
int parse_label(const std::string& text);

struct Trial {
  std::uint32_t trial_id = 0;
  int label = kLeft;
  dsp::RecordingBuffer buffer;
};

/// One subject's trials. All trials share channel labels and fs.
struct EegRecording {
  std::string subject_id;
  std::vector<Trial> trials;

  double fs() const;
  const std::vector<std::string>& channel_labels() const;
  /// Throws ValidationError on inconsistent trials, bad labels or NaN samples.
  void validate() const;
};

inline constexpr char kContainerMagic[8] = {'A', 'S', 'A', 'D', 'E', 'E', 'G', '1'};
inline constexpr std::uint32_t kContainerVersion = 1;

/// Little-endian container: magic, u32 version, u32 fs, u32 n_channels,
/// u32 n_trials, u32-length-prefixed UTF-8 channel labels, then per trial
/// u32 trial_id, u8 label, u64 n_samples and channel-major float32 samples.
std::vector<std::uint8_t> serialize_recording(const EegRecording& recording);
EegRecording deserialize_recording(const std::vector<std::uint8_t>& bytes,
                                   const std::string& subject_id);

void write_recording(const EegRecording& recording, const std::filesystem::path& path);
/// Subject id defaults to the file stem.
EegRecording ingest(const std::filesystem::path& path);

/// Single-trial CSV fixture: header `time,<label1>,...,<labelN>`, one row per
/// sample. The sidecar holds `key value` lines: `label left|right`, optional
/// `trial_id N` and `fs HZ` (otherwise inferred from the time column).
EegRecording import_csv(const std::filesystem::path& csv_path,
                        const std::filesystem::path& sidecar_path);

}  // namespace asad::harness
