#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "asad/dsp/recording.hpp"
#include "asad/tensor.hpp"

namespace asad::topo {

inline constexpr std::size_t kGridHeight = 10;
inline constexpr std::size_t kGridWidth = 11;

struct GridCell {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const GridCell&) const = default;
};

struct TopologyEntry {
  std::string label;
  GridCell cell;
};

enum class Hemisphere { kLeft, kMidline, kRight };

/// Electrode label -> cell in a 10 x 11 grid. Entries keep file order, which
/// is also the channel order used when a grid is gathered back to C x T.
class TopologyMap {
 public:
  TopologyMap() = default;
  /// Validates bounds, distinct cells and distinct labels; throws
  /// ValidationError listing every offender.
  TopologyMap(std::vector<TopologyEntry> entries, std::string montage_name,
              std::size_t height = kGridHeight, std::size_t width = kGridWidth);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  const std::string& montage_name() const { return montage_name_; }
  const std::vector<TopologyEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::optional<GridCell> find(const std::string& label) const;
  std::vector<std::string> labels() const;
  /// Columns left of the center column are the left hemisphere.
  Hemisphere hemisphere(const GridCell& cell) const;

 private:
  std::vector<TopologyEntry> entries_;
  std::string montage_name_;
  std::size_t height_ = kGridHeight;
  std::size_t width_ = kGridWidth;
};

/// Parses `label row col` records; `#` starts a comment.
TopologyMap load_topology(std::istream& in, const std::string& montage_name = "custom");
TopologyMap load_topology(const std::filesystem::path& path);
/// The shipped BioSemi 64-channel table (compiled in).
const TopologyMap& default_topology();

/// Places each channel at its cell: [H, W, T], unmapped cells exactly 0.
template <typename T>
Tensor<T> to_grid(const dsp::RecordingBuffer& recording, const TopologyMap& map);

/// Same as to_grid for a time range [start, start + length).
template <typename T>
Tensor<T> to_grid(const dsp::RecordingBuffer& recording, const TopologyMap& map,
                  std::size_t start, std::size_t length);

/// Reads mapped cells back out in topology order: [C, T].
template <typename T>
Tensor<T> from_grid(const Tensor<T>& grid, const TopologyMap& map);

struct GridStats {
  std::size_t mapped = 0;
  std::size_t unmapped = 0;
  std::vector<std::size_t> row_occupancy;
};

GridStats grid_stats(const TopologyMap& map);

}  // namespace asad::topo
