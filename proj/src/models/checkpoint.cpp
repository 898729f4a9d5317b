#include "asad/models/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <type_traits>

#include "asad/error.hpp"

namespace asad::models {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr const char* kMetaPrefix = "meta.";
constexpr const char* kAdamFirst = "optim.adam.m.";
constexpr const char* kAdamSecond = "optim.adam.v.";

template <typename T>
constexpr Precision precision_of() {
  return std::is_same_v<T, float> ? Precision::kFloat32 : Precision::kFloat64;
}

template <typename T>
CheckpointRecord make_record(std::string name, const Tensor<T>& tensor) {
  CheckpointRecord record;
  record.name = std::move(name);
  record.shape = tensor.shape();
  record.precision = precision_of<T>();
  record.values.assign(tensor.data().begin(), tensor.data().end());
  return record;
}

class Writer {
 public:
  template <typename V>
  void pod(V value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(V));
  }
  void raw(const void* data, std::size_t size) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + size);
  }
  void string(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t size, const char* what) const {
    if (bytes_.size() - offset_ < size) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what +
                        " at offset " + std::to_string(offset_) + ": expected " +
                        std::to_string(size) + " bytes, " +
                        std::to_string(bytes_.size() - offset_) + " available");
    }
  }
  template <typename V>
  V pod(const char* what) {
    need(sizeof(V), what);
    V value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(V));
    offset_ += sizeof(V);
    return value;
  }
  std::string string(const char* what) {
    const auto size = pod<std::uint32_t>(what);
    need(size, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + offset_), size);
    offset_ += size;
    return s;
  }
  const std::uint8_t* take(std::size_t size, const char* what) {
    need(size, what);
    const std::uint8_t* p = bytes_.data() + offset_;
    offset_ += size;
    return p;
  }
  std::size_t offset() const { return offset_; }
  bool done() const { return offset_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t offset_ = 0;
};

std::string encode_key_values(const KeyValues& config, const KeyValues& metadata) {
  std::string text;
  for (const auto& [k, v] : config) text += k + "=" + v + "\n";
  for (const auto& [k, v] : metadata) text += kMetaPrefix + k + "=" + v + "\n";
  return text;
}

void decode_key_values(const std::string& text, KeyValues& config, KeyValues& metadata) {
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint config line without '=': " + line);
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    if (key.rfind(kMetaPrefix, 0) == 0) {
      metadata.emplace_back(key.substr(std::strlen(kMetaPrefix)), std::move(value));
    } else {
      config.emplace_back(std::move(key), std::move(value));
    }
  }
}

}  // namespace

const CheckpointRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

std::string Checkpoint::metadata_value(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  return fallback;
}

template <typename T>
Checkpoint capture_checkpoint(ModelGraph<T>& model, KeyValues metadata,
                              const nn::AdamState<T>* optimizer) {
  Checkpoint checkpoint;
  checkpoint.model_id = to_string(model.spec().kind);
  checkpoint.config = model.spec().to_key_values();
  checkpoint.metadata = std::move(metadata);
  for (const auto& ref : model.state()) checkpoint.records.push_back(make_record(ref.name, *ref.tensor));
  if (optimizer) {
    const auto params = model.parameters();
    if (optimizer->first_moment.size() != params.size()) {
      throw ShapeError("optimizer state does not match the model parameters");
    }
    checkpoint.metadata.emplace_back("optim.adam.step", std::to_string(optimizer->step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      checkpoint.records.push_back(
          make_record(kAdamFirst + params[i]->name, optimizer->first_moment[i]));
      checkpoint.records.push_back(
          make_record(kAdamSecond + params[i]->name, optimizer->second_moment[i]));
    }
  }
  return checkpoint;
}

template <typename T>
void restore_checkpoint(ModelGraph<T>& model, const Checkpoint& checkpoint) {
  if (checkpoint.model_spec() != model.spec()) {
    throw ValidationError("checkpoint config (" + checkpoint.model_id +
                          ") does not match the target graph (" + to_string(model.spec().kind) +
                          ")");
  }
  for (const auto& ref : model.state()) {
    const CheckpointRecord* record = checkpoint.find(ref.name);
    if (!record) throw ValidationError("checkpoint has no record named '" + ref.name + "'");
    if (record->shape != ref.tensor->shape()) {
      throw ShapeError("record '" + ref.name + "' has shape " + shape_string(record->shape) +
                       ", model expects " + shape_string(ref.tensor->shape()));
    }
    for (std::size_t i = 0; i < record->values.size(); ++i) {
      (*ref.tensor)[i] = static_cast<T>(record->values[i]);
    }
  }
}

template <typename T>
bool restore_optimizer(ModelGraph<T>& model, const Checkpoint& checkpoint,
                       nn::AdamState<T>& optimizer) {
  const std::string step = checkpoint.metadata_value("optim.adam.step");
  if (step.empty()) return false;
  const auto params = model.parameters();
  optimizer.first_moment.clear();
  optimizer.second_moment.clear();
  for (const auto* p : params) {
    const CheckpointRecord* m = checkpoint.find(kAdamFirst + p->name);
    const CheckpointRecord* v = checkpoint.find(kAdamSecond + p->name);
    if (!m || !v) throw ValidationError("checkpoint lacks Adam moments for '" + p->name + "'");
    optimizer.first_moment.emplace_back(m->shape, std::vector<T>(m->values.begin(), m->values.end()));
    optimizer.second_moment.emplace_back(v->shape, std::vector<T>(v->values.begin(), v->values.end()));
  }
  optimizer.step = std::stoull(step);
  return true;
}

template <typename T>
ModelGraph<T> instantiate(const Checkpoint& checkpoint) {
  ModelGraph<T> model = build_model<T>(checkpoint.model_spec(), 0);
  restore_checkpoint(model, checkpoint);
  return model;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  w.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.pod(kCheckpointVersion);
  w.string(checkpoint.model_id);
  w.string(encode_key_values(checkpoint.config, checkpoint.metadata));
  w.pod(static_cast<std::uint64_t>(checkpoint.records.size()));
  for (const auto& r : checkpoint.records) {
    if (shape_volume(r.shape) != r.values.size()) {
      throw ShapeError("record '" + r.name + "' holds " + std::to_string(r.values.size()) +
                       " values for shape " + shape_string(r.shape));
    }
    w.string(r.name);
    w.pod(static_cast<std::uint32_t>(r.shape.size()));
    for (std::size_t extent : r.shape) w.pod(static_cast<std::uint64_t>(extent));
    w.pod(static_cast<std::uint8_t>(r.precision));
    if (r.precision == Precision::kFloat32) {
      for (double v : r.values) w.pod(static_cast<float>(v));
    } else {
      for (double v : r.values) w.pod(v);
    }
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const std::uint8_t* magic = r.take(sizeof(kCheckpointMagic), "magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw FormatError("not a checkpoint: bad magic (expected ASADCKPT)");
  }
  const auto version = r.pod<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint checkpoint;
  checkpoint.model_id = r.string("model id");
  decode_key_values(r.string("config block"), checkpoint.config, checkpoint.metadata);
  const auto count = r.pod<std::uint64_t>("record count");
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointRecord record;
    record.name = r.string("record name");
    const auto rank = r.pod<std::uint32_t>("record rank");
    for (std::uint32_t a = 0; a < rank; ++a) {
      record.shape.push_back(static_cast<std::size_t>(r.pod<std::uint64_t>("record extent")));
    }
    const auto tag = r.pod<std::uint8_t>("precision tag");
    if (tag != 4 && tag != 8) {
      throw FormatError("record '" + record.name + "' has unknown precision tag " +
                        std::to_string(tag) + " at offset " + std::to_string(r.offset() - 1));
    }
    record.precision = static_cast<Precision>(tag);
    const std::size_t count_values = shape_volume(record.shape);
    r.need(count_values * tag, "record data");
    record.values.resize(count_values);
    for (std::size_t v = 0; v < count_values; ++v) {
      record.values[v] = tag == 4 ? static_cast<double>(r.pod<float>("record data"))
                                  : r.pod<double>("record data");
    }
    checkpoint.records.push_back(std::move(record));
  }
  if (!r.done()) {
    throw FormatError("trailing bytes after checkpoint records at offset " +
                      std::to_string(r.offset()));
  }
  return checkpoint;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

#define ASAD_INSTANTIATE_CHECKPOINT(T)                                                        \
  template Checkpoint capture_checkpoint(ModelGraph<T>&, KeyValues, const nn::AdamState<T>*); \
  template void restore_checkpoint(ModelGraph<T>&, const Checkpoint&);                        \
  template bool restore_optimizer(ModelGraph<T>&, const Checkpoint&, nn::AdamState<T>&);      \
  template ModelGraph<T> instantiate(const Checkpoint&);

ASAD_INSTANTIATE_CHECKPOINT(float)
ASAD_INSTANTIATE_CHECKPOINT(double)

#undef ASAD_INSTANTIATE_CHECKPOINT

}  // namespace asad::models
