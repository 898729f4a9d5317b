#include "asad/harness/container.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "asad/error.hpp"

namespace asad::harness {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

std::string label_name(int label) {
  if (label == kLeft) return "left";
  if (label == kRight) return "right";
  throw ValidationError("label " + std::to_string(label) + " outside {left, right}");
}

int parse_label(const std::string& text) {
  if (text == "left" || text == "0") return kLeft;
  if (text == "right" || text == "1") return kRight;
  throw ValidationError("label '" + text + "' outside {left, right}");
}

double EegRecording::fs() const {
  if (trials.empty()) throw ValidationError("recording '" + subject_id + "' has no trials");
  return trials.front().buffer.fs;
}

const std::vector<std::string>& EegRecording::channel_labels() const {
  if (trials.empty()) throw ValidationError("recording '" + subject_id + "' has no trials");
  return trials.front().buffer.channel_labels;
}

void EegRecording::validate() const {
  for (const Trial& trial : trials) {
    trial.buffer.validate();
    label_name(trial.label);
    if (trial.buffer.fs != trials.front().buffer.fs ||
        trial.buffer.channel_labels != trials.front().buffer.channel_labels) {
      throw ValidationError("trial " + std::to_string(trial.trial_id) + " of '" + subject_id +
                            "' disagrees with the first trial on fs or channel labels");
    }
    for (std::size_t i = 0; i < trial.buffer.samples.size(); ++i) {
      if (!std::isfinite(trial.buffer.samples[i])) {
        throw ValidationError("trial " + std::to_string(trial.trial_id) + " channel '" +
                              trial.buffer.channel_labels[i / trial.buffer.n_samples] +
                              "' sample " + std::to_string(i % trial.buffer.n_samples) +
                              " is not finite");
      }
    }
  }
}

namespace {

template <typename V>
void put(std::vector<std::uint8_t>& out, V value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(V));
}

class Cursor {
 public:
  explicit Cursor(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t size, const std::string& what) const {
    if (bytes_.size() - offset_ < size) {
      throw FormatError("truncated container: " + what + " at offset " + std::to_string(offset_) +
                        " needs " + std::to_string(size) + " bytes, file has " +
                        std::to_string(bytes_.size() - offset_) + " remaining (expected total " +
                        std::to_string(offset_ + size) + " bytes, actual " +
                        std::to_string(bytes_.size()) + ")");
    }
  }
  template <typename V>
  V get(const std::string& what) {
    need(sizeof(V), what);
    V value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(V));
    offset_ += sizeof(V);
    return value;
  }
  const std::uint8_t* bytes(std::size_t size, const std::string& what) {
    need(size, what);
    const std::uint8_t* p = bytes_.data() + offset_;
    offset_ += size;
    return p;
  }
  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t offset_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_recording(const EegRecording& recording) {
  recording.validate();
  std::vector<std::uint8_t> out(kContainerMagic, kContainerMagic + sizeof(kContainerMagic));
  const double fs = recording.trials.empty() ? 0.0 : recording.fs();
  if (fs != std::floor(fs) || fs < 0.0 || fs > 4294967295.0) {
    throw ValidationError("container fs must be a whole number of Hz, got " + std::to_string(fs));
  }
  static const std::vector<std::string> kNoLabels;
  const auto& labels = recording.trials.empty() ? kNoLabels : recording.channel_labels();
  put(out, kContainerVersion);
  put(out, static_cast<std::uint32_t>(fs));
  put(out, static_cast<std::uint32_t>(labels.size()));
  put(out, static_cast<std::uint32_t>(recording.trials.size()));
  for (const auto& label : labels) {
    put(out, static_cast<std::uint32_t>(label.size()));
    out.insert(out.end(), label.begin(), label.end());
  }
  for (const Trial& trial : recording.trials) {
    put(out, trial.trial_id);
    put(out, static_cast<std::uint8_t>(trial.label));
    put(out, static_cast<std::uint64_t>(trial.buffer.n_samples));
    for (double v : trial.buffer.samples) put(out, static_cast<float>(v));
  }
  return out;
}

EegRecording deserialize_recording(const std::vector<std::uint8_t>& bytes,
                                   const std::string& subject_id) {
  Cursor in(bytes);
  const std::uint8_t* magic = in.bytes(sizeof(kContainerMagic), "magic");
  if (std::memcmp(magic, kContainerMagic, sizeof(kContainerMagic)) != 0) {
    throw FormatError("bad magic: not an ASADEEG1 container");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version));
  }
  const auto fs = in.get<std::uint32_t>("fs");
  const auto n_channels = in.get<std::uint32_t>("channel count");
  const auto n_trials = in.get<std::uint32_t>("trial count");
  std::vector<std::string> labels;
  for (std::uint32_t c = 0; c < n_channels; ++c) {
    const auto length = in.get<std::uint32_t>("channel label length");
    const auto* p = in.bytes(length, "channel label");
    labels.emplace_back(reinterpret_cast<const char*>(p), length);
  }
  EegRecording recording;
  recording.subject_id = subject_id;
  for (std::uint32_t t = 0; t < n_trials; ++t) {
    Trial trial;
    trial.trial_id = in.get<std::uint32_t>("trial id");
    const auto label = in.get<std::uint8_t>("trial label");
    if (label > 1) {
      throw FormatError("trial " + std::to_string(trial.trial_id) + " has label " +
                        std::to_string(label) + " outside {0=left, 1=right} at offset " +
                        std::to_string(in.offset() - 1));
    }
    trial.label = label;
    const auto n_samples = in.get<std::uint64_t>("sample count");
    const std::string what = "samples of trial " + std::to_string(trial.trial_id);
    if (n_channels > 0 && n_samples > in.remaining() / (4ULL * n_channels)) {
      in.need(n_samples * n_channels * 4ULL, what);
    }
    const auto* data = in.bytes(static_cast<std::size_t>(n_samples) * n_channels * 4, what);
    trial.buffer = dsp::RecordingBuffer(fs, labels, static_cast<std::size_t>(n_samples));
    for (std::size_t i = 0; i < trial.buffer.samples.size(); ++i) {
      float v;
      std::memcpy(&v, data + 4 * i, 4);
      trial.buffer.samples[i] = v;
    }
    recording.trials.push_back(std::move(trial));
  }
  if (in.remaining() != 0) {
    throw FormatError("container has " + std::to_string(in.remaining()) +
                      " trailing bytes after the last trial");
  }
  recording.validate();
  return recording;
}

void write_recording(const EegRecording& recording, const std::filesystem::path& path) {
  const auto bytes = serialize_recording(recording);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

EegRecording ingest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return deserialize_recording(bytes, path.stem().string());
  } catch (const Error& e) {
    throw Error(e.category(), path.string() + ": " + e.what());
  }
}

EegRecording import_csv(const std::filesystem::path& csv_path,
                        const std::filesystem::path& sidecar_path) {
  std::ifstream sidecar(sidecar_path);
  if (!sidecar) throw IoError("cannot open label sidecar " + sidecar_path.string());
  Trial trial;
  bool has_label = false;
  double fs = 0.0;
  std::string line;
  while (std::getline(sidecar, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string key, value;
    if (!(fields >> key)) continue;
    if (!(fields >> value)) throw FormatError("sidecar key '" + key + "' has no value");
    if (key == "label") {
      trial.label = parse_label(value);
      has_label = true;
    } else if (key == "trial_id") {
      trial.trial_id = static_cast<std::uint32_t>(std::stoul(value));
    } else if (key == "fs") {
      fs = std::stod(value);
    } else {
      throw FormatError("unknown sidecar key '" + key + "'");
    }
  }
  if (!has_label) throw FormatError("sidecar " + sidecar_path.string() + " has no label");

  std::ifstream csv(csv_path);
  if (!csv) throw IoError("cannot open " + csv_path.string());
  std::string header;
  if (!std::getline(csv, header)) throw FormatError("empty CSV " + csv_path.string());
  std::vector<std::string> columns;
  {
    std::istringstream fields(header);
    std::string cell;
    while (std::getline(fields, cell, ',')) columns.push_back(cell);
  }
  if (columns.size() < 2 || columns.front() != "time") {
    throw FormatError("CSV header must be 'time,<channel>...'");
  }
  std::vector<std::string> labels(columns.begin() + 1, columns.end());
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  std::size_t line_number = 1;
  while (std::getline(csv, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(fields, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError("CSV line " + std::to_string(line_number) + ": bad number '" + cell + "'");
      }
    }
    if (values.size() != columns.size()) {
      throw FormatError("CSV line " + std::to_string(line_number) + " has " +
                        std::to_string(values.size()) + " fields, expected " +
                        std::to_string(columns.size()));
    }
    times.push_back(values.front());
    rows.emplace_back(values.begin() + 1, values.end());
  }
  if (fs <= 0.0) {
    if (times.size() < 2) throw FormatError("cannot infer fs from fewer than 2 CSV rows");
    fs = std::round(static_cast<double>(times.size() - 1) / (times.back() - times.front()));
  }
  trial.buffer = dsp::RecordingBuffer(fs, labels, rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t c = 0; c < labels.size(); ++c) trial.buffer.channel(c)[t] = rows[t][c];
  }
  EegRecording recording;
  recording.subject_id = csv_path.stem().string();
  recording.trials.push_back(std::move(trial));
  recording.validate();
  return recording;
}

}  // namespace asad::harness
