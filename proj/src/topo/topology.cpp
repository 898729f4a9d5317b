#include "asad/topo/topology.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "asad/error.hpp"

namespace asad::topo {

namespace detail {
extern const char* const kDefaultTopologyText;
}

TopologyMap::TopologyMap(std::vector<TopologyEntry> entries, std::string montage_name,
                         std::size_t height, std::size_t width)
    : entries_(std::move(entries)),
      montage_name_(std::move(montage_name)),
      height_(height),
      width_(width) {
  std::vector<std::string> problems;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::string>> by_cell;
  std::map<std::string, std::size_t> by_label;
  for (const auto& e : entries_) {
    if (e.cell.row >= height_ || e.cell.col >= width_) {
      problems.push_back("'" + e.label + "' at (" + std::to_string(e.cell.row) + "," +
                         std::to_string(e.cell.col) + ") is outside the " +
                         std::to_string(height_) + "x" + std::to_string(width_) + " grid");
    }
    by_cell[{e.cell.row, e.cell.col}].push_back(e.label);
    ++by_label[e.label];
  }
  for (const auto& [cell, labels] : by_cell) {
    if (labels.size() < 2) continue;
    std::string joined;
    for (const auto& l : labels) joined += (joined.empty() ? "'" : ", '") + l + "'";
    problems.push_back("cell (" + std::to_string(cell.first) + "," +
                       std::to_string(cell.second) + ") claimed by " + joined);
  }
  for (const auto& [label, count] : by_label) {
    if (count > 1) problems.push_back("label '" + label + "' appears " + std::to_string(count) + " times");
  }
  if (!problems.empty()) {
    std::string message = "invalid topology '" + montage_name_ + "':";
    for (const auto& p : problems) message += "\n  " + p;
    throw ValidationError(message);
  }
}

std::optional<GridCell> TopologyMap::find(const std::string& label) const {
  for (const auto& e : entries_) {
    if (e.label == label) return e.cell;
  }
  return std::nullopt;
}

std::vector<std::string> TopologyMap::labels() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.label);
  return out;
}

Hemisphere TopologyMap::hemisphere(const GridCell& cell) const {
  const std::size_t center = width_ / 2;
  if (cell.col < center) return Hemisphere::kLeft;
  if (cell.col == center) return Hemisphere::kMidline;
  return Hemisphere::kRight;
}

TopologyMap load_topology(std::istream& in, const std::string& montage_name) {
  std::vector<TopologyEntry> entries;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string label;
    if (!(fields >> label)) continue;
    long long row = -1;
    long long col = -1;
    std::string extra;
    if (!(fields >> row >> col) || (fields >> extra) || row < 0 || col < 0) {
      throw FormatError("topology line " + std::to_string(line_number) +
                        ": expected 'label row col' with non-negative integers");
    }
    entries.push_back({label, {static_cast<std::size_t>(row), static_cast<std::size_t>(col)}});
  }
  return TopologyMap(std::move(entries), montage_name);
}

TopologyMap load_topology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open topology file " + path.string());
  return load_topology(in, path.stem().string());
}

const TopologyMap& default_topology() {
  static const TopologyMap map = [] {
    std::istringstream in(detail::kDefaultTopologyText);
    return load_topology(in, "biosemi64_10x11");
  }();
  return map;
}

template <typename T>
Tensor<T> to_grid(const dsp::RecordingBuffer& recording, const TopologyMap& map,
                  std::size_t start, std::size_t length) {
  if (start + length > recording.n_samples || length == 0) {
    throw ShapeError("grid window [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") outside recording of " +
                     std::to_string(recording.n_samples) + " samples");
  }
  Tensor<T> grid({map.height(), map.width(), length});
  for (std::size_t c = 0; c < recording.n_channels(); ++c) {
    const auto cell = map.find(recording.channel_labels[c]);
    if (!cell) {
      throw ValidationError("channel '" + recording.channel_labels[c] +
                            "' has no cell in topology '" + map.montage_name() + "'");
    }
    const auto samples = recording.channel(c).subspan(start, length);
    T* dst = grid.data().data() + (cell->row * map.width() + cell->col) * length;
    for (std::size_t t = 0; t < length; ++t) dst[t] = static_cast<T>(samples[t]);
  }
  return grid;
}

template <typename T>
Tensor<T> to_grid(const dsp::RecordingBuffer& recording, const TopologyMap& map) {
  return to_grid<T>(recording, map, 0, recording.n_samples);
}

template <typename T>
Tensor<T> from_grid(const Tensor<T>& grid, const TopologyMap& map) {
  if (grid.rank() != 3 || grid.dim(0) != map.height() || grid.dim(1) != map.width()) {
    throw ShapeError("grid " + shape_string(grid.shape()) + " does not match a " +
                     std::to_string(map.height()) + "x" + std::to_string(map.width()) +
                     " topology");
  }
  const std::size_t length = grid.dim(2);
  if (map.size() == 0) return Tensor<T>();
  Tensor<T> out({map.size(), length});
  for (std::size_t c = 0; c < map.size(); ++c) {
    const auto& cell = map.entries()[c].cell;
    const T* src = grid.data().data() + (cell.row * map.width() + cell.col) * length;
    std::copy(src, src + length, out.data().data() + c * length);
  }
  return out;
}

GridStats grid_stats(const TopologyMap& map) {
  GridStats stats;
  stats.mapped = map.size();
  stats.unmapped = map.height() * map.width() - map.size();
  stats.row_occupancy.assign(map.height(), 0);
  for (const auto& e : map.entries()) ++stats.row_occupancy[e.cell.row];
  return stats;
}

template Tensor<float> to_grid(const dsp::RecordingBuffer&, const TopologyMap&);
template Tensor<double> to_grid(const dsp::RecordingBuffer&, const TopologyMap&);
template Tensor<float> to_grid(const dsp::RecordingBuffer&, const TopologyMap&, std::size_t,
                               std::size_t);
template Tensor<double> to_grid(const dsp::RecordingBuffer&, const TopologyMap&, std::size_t,
                                std::size_t);
template Tensor<float> from_grid(const Tensor<float>&, const TopologyMap&);
template Tensor<double> from_grid(const Tensor<double>&, const TopologyMap&);

}  // namespace asad::topo
