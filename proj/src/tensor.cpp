#include "asad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "asad/error.hpp"

namespace asad {

const char* category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kUsage: return "usage";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kFormat: return "format";
    case ErrorCategory::kShape: return "shape";
    case ErrorCategory::kValidation: return "validation";
    case ErrorCategory::kNumeric: return "numeric";
  }
  return "unknown";
}

std::size_t shape_volume(const Shape& shape) {
  std::size_t volume = 1;
  for (std::size_t extent : shape) volume *= extent;
  return volume;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw ShapeError("tensor extent on axis " + std::to_string(i) + " is zero in " +
                       shape_string(shape));
    }
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_volume(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != shape_volume(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
  }
}

template <typename T>
std::size_t Tensor<T>::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("index rank " + std::to_string(index.size()) + " != tensor rank " +
                     std::to_string(shape_.size()));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) {
      throw ShapeError("index " + std::to_string(i) + " out of range on axis " +
                       std::to_string(axis) + " of " + shape_string(shape_));
    }
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

template <typename T>
T& Tensor<T>::at(std::initializer_list<std::size_t> index) {
  return data_[offset(index)];
}

template <typename T>
const T& Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  return data_[offset(index)];
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
void Tensor<T>::reshape(Shape shape) {
  check_extents(shape);
  if (shape_volume(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || a.rank() != b.rank() || a.dim(0) != b.dim(0)) {
    throw ShapeError("cannot concatenate " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  for (std::size_t axis = 2; axis < a.rank(); ++axis) {
    if (a.dim(axis) != b.dim(axis)) {
      throw ShapeError("concatenation mismatch on axis " + std::to_string(axis) + ": " +
                       shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
  }
  const std::size_t batch = a.dim(0);
  const std::size_t a_block = a.size() / batch;
  const std::size_t b_block = b.size() / batch;
  Shape shape = a.shape();
  shape[1] += b.dim(1);
  Tensor<T> out(shape);
  T* dst = out.data().data();
  for (std::size_t n = 0; n < batch; ++n) {
    std::memcpy(dst, a.data().data() + n * a_block, a_block * sizeof(T));
    dst += a_block;
    std::memcpy(dst, b.data().data() + n * b_block, b_block * sizeof(T));
    dst += b_block;
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, std::size_t split) {
  if (x.rank() < 2 || split == 0 || split >= x.dim(1)) {
    throw ShapeError("invalid channel split " + std::to_string(split) + " of " +
                     shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t cell = x.size() / (batch * x.dim(1));
  Shape first_shape = x.shape();
  Shape second_shape = x.shape();
  first_shape[1] = split;
  second_shape[1] = x.dim(1) - split;
  Tensor<T> first(first_shape);
  Tensor<T> second(second_shape);
  const std::size_t first_block = split * cell;
  const std::size_t second_block = second_shape[1] * cell;
  const T* src = x.data().data();
  for (std::size_t n = 0; n < batch; ++n) {
    std::memcpy(first.data().data() + n * first_block, src, first_block * sizeof(T));
    src += first_block;
    std::memcpy(second.data().data() + n * second_block, src, second_block * sizeof(T));
    src += second_block;
  }
  return {std::move(first), std::move(second)};
}

template Tensor<float> concat_channels(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> concat_channels(const Tensor<double>&, const Tensor<double>&);
template std::pair<Tensor<float>, Tensor<float>> split_channels(const Tensor<float>&, std::size_t);
template std::pair<Tensor<double>, Tensor<double>> split_channels(const Tensor<double>&,
                                                                  std::size_t);

}  // namespace asad
