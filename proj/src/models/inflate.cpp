#include "asad/models/inflate.hpp"

#include "asad/error.hpp"

namespace asad::models {

template <typename T>
Tensor<T> inflate_kernel(const Tensor<T>& kernel2d, std::size_t repeats) {
  if (kernel2d.rank() != 4) {
    throw ShapeError("inflate_kernel expects [out, in, kh, kw], got " +
                     shape_string(kernel2d.shape()));
  }
  if (repeats == 0) throw ShapeError("inflation needs at least one temporal repeat");
  Shape shape = kernel2d.shape();
  shape.push_back(repeats);
  Tensor<T> out(shape);
  const T divisor = static_cast<T>(repeats);
  for (std::size_t i = 0; i < kernel2d.size(); ++i) {
    const T w = kernel2d[i];
    const T slice = w / divisor;
    T partial = T{0};
    for (std::size_t t = 0; t + 1 < repeats; ++t) {
      out[i * repeats + t] = slice;
      partial += slice;
    }
    // The last slice takes w - partial, which is exact because partial lies
    // within [w/2, 2w]; summing the slices in order then gives w bit-exactly.
    out[i * repeats + repeats - 1] = w - partial;
  }
  return out;
}

template Tensor<float> inflate_kernel(const Tensor<float>&, std::size_t);
template Tensor<double> inflate_kernel(const Tensor<double>&, std::size_t);

Checkpoint inflate_2d_to_3d(const Checkpoint& checkpoint2d, const ModelSpec& spec3d) {
  const ModelSpec spec2d = checkpoint2d.model_spec();
  if (spec2d.kind != ModelKind::kDenseNet2d) {
    throw ValidationError("inflation source must be a densenet2d checkpoint, got " +
                          checkpoint2d.model_id);
  }
  if (spec3d.kind != ModelKind::kDenseNet3d) {
    throw ValidationError("inflation target must be a densenet3d spec");
  }
  if (!(spec2d.densenet == spec3d.densenet) || spec2d.grid_height != spec3d.grid_height ||
      spec2d.grid_width != spec3d.grid_width) {
    throw ValidationError("2D and 3D DenseNet configs are not structurally paired");
  }

  // The freshly built target supplies the inventory (names and shapes).
  ModelGraph<double> target = build_model<double>(spec3d, 0);
  const auto inventory = target.state();
  std::vector<const CheckpointRecord*> source;
  for (const auto& r : checkpoint2d.records) {
    if (r.name.rfind("optim.", 0) != 0) source.push_back(&r);
  }

  Checkpoint out;
  out.model_id = to_string(spec3d.kind);
  out.config = spec3d.to_key_values();
  out.metadata = {{"inflated_from", checkpoint2d.model_id}};
  for (const auto& [k, v] : checkpoint2d.metadata) {
    if (k == "seed") out.metadata.emplace_back("source_seed", v);
  }
  const std::size_t common = std::min(inventory.size(), source.size());
  for (std::size_t i = 0; i < common; ++i) {
    const auto& ref = inventory[i];
    const CheckpointRecord& src = *source[i];
    if (src.name != ref.name) {
      throw ValidationError("layer inventories diverge at record " + std::to_string(i) +
                            ": 2D has '" + src.name + "', 3D expects '" + ref.name + "'");
    }
    const Shape& shape3d = ref.tensor->shape();
    CheckpointRecord record;
    record.name = ref.name;
    record.precision = src.precision;
    if (shape3d == src.shape) {
      record.shape = src.shape;
      record.values = src.values;
    } else if (shape3d.size() == 5 && src.shape.size() == 4 &&
               Shape(shape3d.begin(), shape3d.end() - 1) == src.shape) {
      record.shape = shape3d;
      if (src.precision == Precision::kFloat32) {
        // Split in float so every slice is exactly representable in the record.
        const Tensor<double> wide(src.shape, src.values);
        const Tensor<float> inflated = inflate_kernel(wide.cast<float>(), shape3d[4]);
        record.values.assign(inflated.storage().begin(), inflated.storage().end());
      } else {
        Tensor<double> inflated = inflate_kernel(Tensor<double>(src.shape, src.values), shape3d[4]);
        record.values = std::move(inflated.storage());
      }
    } else {
      throw ShapeError("record '" + ref.name + "' cannot be inflated from " +
                       shape_string(src.shape) + " to " + shape_string(shape3d));
    }
    out.records.push_back(std::move(record));
  }
  if (inventory.size() != source.size()) {
    const std::string first = inventory.size() > common ? "3D record '" + inventory[common].name + "'"
                                                        : "2D record '" + source[common]->name + "'";
    throw ValidationError("layer inventories diverge at record " + std::to_string(common) + ": " +
                          first + " has no counterpart");
  }
  return out;
}

}  // namespace asad::models
