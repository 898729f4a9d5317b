#include "asad/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

#include "asad/error.hpp"

namespace asad::nn {

namespace {

constexpr std::size_t kMaxSpatial = 3;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// Sliding-window geometry padded out to three spatial axes. Missing axes
/// are leading (extent 1, kernel 1, stride 1, pad 0) so the innermost loop
/// always runs along the real last axis.
struct Geometry {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::array<std::size_t, kMaxSpatial> in{1, 1, 1};
  std::array<std::size_t, kMaxSpatial> out{1, 1, 1};
  std::array<std::size_t, kMaxSpatial> kernel{1, 1, 1};
  std::array<std::size_t, kMaxSpatial> stride{1, 1, 1};
  std::array<std::size_t, kMaxSpatial> pad{0, 0, 0};

  std::size_t in_volume() const { return in[0] * in[1] * in[2]; }
  std::size_t out_volume() const { return out[0] * out[1] * out[2]; }
  std::size_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }
  bool is_pointwise() const {
    return kernel_volume() == 1 && stride == std::array<std::size_t, 3>{1, 1, 1} &&
           pad == std::array<std::size_t, 3>{0, 0, 0};
  }
};

std::vector<std::size_t> defaulted(const std::vector<std::size_t>& values, std::size_t rank,
                                   std::size_t fill, const char* what) {
  if (values.empty()) return std::vector<std::size_t>(rank, fill);
  if (values.size() != rank) {
    throw ShapeError(std::string(what) + " has " + std::to_string(values.size()) +
                     " entries but the kernel has rank " + std::to_string(rank));
  }
  return values;
}

Geometry make_geometry(const Shape& input, const std::vector<std::size_t>& kernel,
                       const std::vector<std::size_t>& stride_in,
                       const std::vector<std::size_t>& padding_in) {
  const std::size_t rank = kernel.size();
  if (rank == 0 || rank > kMaxSpatial) {
    throw ShapeError("kernel rank " + std::to_string(rank) + " unsupported (1..3)");
  }
  if (input.size() != rank + 2) {
    throw ShapeError("input " + shape_string(input) + " has spatial rank " +
                     std::to_string(input.size() < 2 ? 0 : input.size() - 2) +
                     " but the kernel has rank " + std::to_string(rank));
  }
  const auto stride = defaulted(stride_in, rank, 1, "stride");
  const auto padding = defaulted(padding_in, rank, 0, "padding");
  Geometry g;
  g.batch = input[0];
  g.channels = input[1];
  for (std::size_t axis = 0; axis < rank; ++axis) {
    if (kernel[axis] == 0 || stride[axis] == 0) {
      throw ShapeError("kernel and stride must be positive on axis " + std::to_string(axis + 2));
    }
    const std::size_t slot = kMaxSpatial - rank + axis;
    g.in[slot] = input[axis + 2];
    g.kernel[slot] = kernel[axis];
    g.stride[slot] = stride[axis];
    g.pad[slot] = padding[axis];
    g.out[slot] = output_extent(g.in[slot], kernel[axis], stride[axis], padding[axis], axis + 2);
  }
  return g;
}

Shape output_shape_of(const Geometry& g, std::size_t channels, std::size_t rank) {
  Shape shape{g.batch, channels};
  for (std::size_t axis = 0; axis < rank; ++axis) shape.push_back(g.out[kMaxSpatial - rank + axis]);
  return shape;
}

/// Input coordinate along one axis for an output position and kernel offset;
/// returns false when the tap falls into the zero/-inf padding.
inline bool source_index(std::size_t out_pos, std::size_t k, std::size_t stride, std::size_t pad,
                         std::size_t extent, std::size_t& source) {
  const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(out_pos * stride + k) -
                             static_cast<std::ptrdiff_t>(pad);
  if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(extent)) return false;
  source = static_cast<std::size_t>(pos);
  return true;
}

/// Output positions o in [lo, hi) whose tap k lands inside the input along
/// one axis (all others read padding).
inline void valid_range(std::size_t out, std::size_t k, std::size_t stride, std::size_t pad,
                        std::size_t extent, std::size_t& lo, std::size_t& hi) {
  // o * stride + k - pad must lie in [0, extent).
  lo = k >= pad ? 0 : (pad - k + stride - 1) / stride;
  const std::size_t limit = extent + pad;  // o * stride + k < extent + pad
  hi = limit > k ? std::min(out, (limit - k - 1) / stride + 1) : 0;
  if (hi < lo) hi = lo;
}

/// cols[(c * kvol + k), o] = padded input value under kernel tap k at output o.
template <typename T>
void im2col(const T* x, const Geometry& g, T* cols) {
  const std::size_t out_vol = g.out_volume();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* xc = x + c * g.in_volume();
    for (std::size_t k0 = 0; k0 < g.kernel[0]; ++k0) {
      for (std::size_t k1 = 0; k1 < g.kernel[1]; ++k1) {
        for (std::size_t k2 = 0; k2 < g.kernel[2]; ++k2, ++row) {
          T* dst = cols + row * out_vol;
          std::size_t lo2 = 0, hi2 = 0;
          valid_range(g.out[2], k2, g.stride[2], g.pad[2], g.in[2], lo2, hi2);
          for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
            std::size_t i0 = 0;
            const bool ok0 = source_index(o0, k0, g.stride[0], g.pad[0], g.in[0], i0);
            for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
              std::size_t i1 = 0;
              const bool ok1 = ok0 && source_index(o1, k1, g.stride[1], g.pad[1], g.in[1], i1);
              T* line = dst + (o0 * g.out[1] + o1) * g.out[2];
              if (!ok1) {
                std::fill(line, line + g.out[2], T{0});
                continue;
              }
              std::fill(line, line + lo2, T{0});
              if (hi2 > lo2) {
                // Input index of output lo2; non-negative by construction of the range.
                const T* src = xc + (i0 * g.in[1] + i1) * g.in[2] + (lo2 * g.stride[2] + k2 - g.pad[2]);
                if (g.stride[2] == 1) {
                  std::copy(src, src + (hi2 - lo2), line + lo2);
                } else {
                  for (std::size_t o2 = lo2; o2 < hi2; ++o2) line[o2] = src[(o2 - lo2) * g.stride[2]];
                }
              }
              std::fill(line + hi2, line + g.out[2], T{0});
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters-and-adds columns back onto the input grid.
template <typename T>
void col2im(const T* cols, const Geometry& g, T* x) {
  const std::size_t out_vol = g.out_volume();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* xc = x + c * g.in_volume();
    for (std::size_t k0 = 0; k0 < g.kernel[0]; ++k0) {
      for (std::size_t k1 = 0; k1 < g.kernel[1]; ++k1) {
        for (std::size_t k2 = 0; k2 < g.kernel[2]; ++k2, ++row) {
          const T* src = cols + row * out_vol;
          std::size_t lo2 = 0, hi2 = 0;
          valid_range(g.out[2], k2, g.stride[2], g.pad[2], g.in[2], lo2, hi2);
          for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
            std::size_t i0 = 0;
            if (!source_index(o0, k0, g.stride[0], g.pad[0], g.in[0], i0)) continue;
            for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
              std::size_t i1 = 0;
              if (!source_index(o1, k1, g.stride[1], g.pad[1], g.in[1], i1)) continue;
              const T* line = src + (o0 * g.out[1] + o1) * g.out[2];
              if (hi2 <= lo2) continue;
              T* dst = xc + (i0 * g.in[1] + i1) * g.in[2] + (lo2 * g.stride[2] + k2 - g.pad[2]);
              for (std::size_t o2 = lo2; o2 < hi2; ++o2) dst[(o2 - lo2) * g.stride[2]] += line[o2];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Shape& expected, const char* what) {
  if (a.shape() != expected) {
    throw ShapeError(std::string(what) + " has shape " + shape_string(a.shape()) + ", expected " +
                     shape_string(expected));
  }
}

/// Number of values per channel across batch and all spatial axes.
template <typename T>
std::size_t cells_per_channel(const Tensor<T>& x) {
  return x.size() / (x.dim(0) * x.dim(1));
}

}  // namespace

std::size_t output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad,
                          std::size_t axis) {
  const std::ptrdiff_t span = static_cast<std::ptrdiff_t>(in + 2 * pad) -
                              static_cast<std::ptrdiff_t>(kernel);
  if (stride == 0 || span < 0) {
    throw ShapeError("non-positive output extent on axis " + std::to_string(axis) + " (in=" +
                     std::to_string(in) + ", kernel=" + std::to_string(kernel) + ", stride=" +
                     std::to_string(stride) + ", pad=" + std::to_string(pad) + ")");
  }
  return static_cast<std::size_t>(span) / stride + 1;
}

Shape ConvSpec::weight_shape() const {
  Shape shape{out_channels, in_channels};
  shape.insert(shape.end(), kernel.begin(), kernel.end());
  return shape;
}

Shape ConvSpec::output_shape(const Shape& input) const {
  const Geometry g = make_geometry(input, kernel, stride, padding);
  if (g.channels != in_channels) {
    throw ShapeError("conv expects " + std::to_string(in_channels) +
                     " input channels on axis 1, got " + std::to_string(g.channels));
  }
  return output_shape_of(g, out_channels, spatial_rank());
}

ConvSpec make_conv(std::size_t in_channels, std::size_t out_channels,
                   std::vector<std::size_t> kernel, std::vector<std::size_t> padding, bool bias) {
  ConvSpec spec;
  spec.stride.assign(kernel.size(), 1);
  spec.padding = padding.empty() ? std::vector<std::size_t>(kernel.size(), 0) : std::move(padding);
  spec.kernel = std::move(kernel);
  spec.in_channels = in_channels;
  spec.out_channels = out_channels;
  spec.bias = bias;
  return spec;
}

Shape PoolSpec::output_shape(const Shape& input) const {
  const Geometry g = make_geometry(input, kernel, stride, padding);
  return output_shape_of(g, g.channels, spatial_rank());
}

template <typename T>
BatchNormState<T>::BatchNormState(const std::string& name, std::size_t channels)
    : gamma(name + ".gamma", Tensor<T>({channels}, T{1})),
      beta(name + ".beta", Tensor<T>({channels}, T{0})),
      running_mean({channels}, T{0}),
      running_var({channels}, T{1}) {}

template struct BatchNormState<float>;
template struct BatchNormState<double>;

// ---------------------------------------------------------------- convolution

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weights,
                       const Tensor<T>* bias) {
  const Shape out_shape = spec.output_shape(x.shape());
  check_same_shape(weights, spec.weight_shape(), "conv weights");
  if (bias && !bias->empty()) check_same_shape(*bias, Shape{spec.out_channels}, "conv bias");
  const Geometry g = make_geometry(x.shape(), spec.kernel, spec.stride, spec.padding);
  const std::size_t patch = g.channels * g.kernel_volume();
  const std::size_t out_vol = g.out_volume();

  Tensor<T> y(out_shape);
  ConstMatrixMap<T> w(weights.data().data(), static_cast<Eigen::Index>(spec.out_channels),
                      static_cast<Eigen::Index>(patch));
  std::vector<T> cols(g.is_pointwise() ? 0 : patch * out_vol);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* xn = x.data().data() + n * g.channels * g.in_volume();
    const T* col_ptr = xn;
    if (!g.is_pointwise()) {
      im2col(xn, g, cols.data());
      col_ptr = cols.data();
    }
    ConstMatrixMap<T> c(col_ptr, static_cast<Eigen::Index>(patch),
                        static_cast<Eigen::Index>(out_vol));
    MatrixMap<T> out(y.data().data() + n * spec.out_channels * out_vol,
                     static_cast<Eigen::Index>(spec.out_channels),
                     static_cast<Eigen::Index>(out_vol));
    out.noalias() = w * c;
    if (bias && !bias->empty()) {
      for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
        out.row(static_cast<Eigen::Index>(oc)).array() += (*bias)[oc];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> conv_backward(const Tensor<T>& grad_out, const Tensor<T>& saved_input,
                        const ConvSpec& spec, const Tensor<T>& weights, Tensor<T>& grad_weights,
                        Tensor<T>* grad_bias) {
  const Shape out_shape = spec.output_shape(saved_input.shape());
  check_same_shape(grad_out, out_shape, "conv grad_out");
  check_same_shape(weights, spec.weight_shape(), "conv weights");
  check_same_shape(grad_weights, spec.weight_shape(), "conv grad_weights");
  const Geometry g = make_geometry(saved_input.shape(), spec.kernel, spec.stride, spec.padding);
  const std::size_t patch = g.channels * g.kernel_volume();
  const std::size_t out_vol = g.out_volume();
  const std::size_t in_block = g.channels * g.in_volume();

  Tensor<T> grad_input(saved_input.shape());
  ConstMatrixMap<T> w(weights.data().data(), static_cast<Eigen::Index>(spec.out_channels),
                      static_cast<Eigen::Index>(patch));
  MatrixMap<T> gw(grad_weights.data().data(), static_cast<Eigen::Index>(spec.out_channels),
                  static_cast<Eigen::Index>(patch));
  const bool pointwise = g.is_pointwise();
  std::vector<T> cols(pointwise ? 0 : patch * out_vol);
  std::vector<T> grad_cols(pointwise ? 0 : patch * out_vol);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* xn = saved_input.data().data() + n * in_block;
    ConstMatrixMap<T> go(grad_out.data().data() + n * spec.out_channels * out_vol,
                         static_cast<Eigen::Index>(spec.out_channels),
                         static_cast<Eigen::Index>(out_vol));
    const T* col_ptr = xn;
    if (!pointwise) {
      im2col(xn, g, cols.data());
      col_ptr = cols.data();
    }
    ConstMatrixMap<T> c(col_ptr, static_cast<Eigen::Index>(patch),
                        static_cast<Eigen::Index>(out_vol));
    gw.noalias() += go * c.transpose();
    if (grad_bias && !grad_bias->empty()) {
      for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
        (*grad_bias)[oc] += go.row(static_cast<Eigen::Index>(oc)).sum();
      }
    }
    T* gin = grad_input.data().data() + n * in_block;
    if (pointwise) {
      MatrixMap<T> gi(gin, static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(out_vol));
      gi.noalias() = w.transpose() * go;
    } else {
      MatrixMap<T> gc(grad_cols.data(), static_cast<Eigen::Index>(patch),
                      static_cast<Eigen::Index>(out_vol));
      gc.noalias() = w.transpose() * go;
      col2im(grad_cols.data(), g, gin);
    }
  }
  return grad_input;
}

// ---------------------------------------------------------------- batch norm

namespace {

/// Sum of p[0..n) in double using eight interleaved partial sums (a fixed
/// order, so results stay deterministic).
template <typename T>
double sum_wide(const T* p, std::size_t n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int k = 0; k < 8; ++k) acc[k] += static_cast<double>(p[i + k]);
  }
  for (; i < n; ++i) acc[0] += static_cast<double>(p[i]);
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
double sum_sq_dev(const T* p, std::size_t n, double mean) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int k = 0; k < 8; ++k) {
      const double d = static_cast<double>(p[i + k]) - mean;
      acc[k] += d * d;
    }
  }
  for (; i < n; ++i) {
    const double d = static_cast<double>(p[i]) - mean;
    acc[0] += d * d;
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
double dot_wide(const T* a, const T* b, std::size_t n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int k = 0; k < 8; ++k) acc[k] += static_cast<double>(a[i + k]) * b[i + k];
  }
  for (; i < n; ++i) acc[0] += static_cast<double>(a[i]) * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

}  // namespace

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormState<T>& state,
                            BatchNormCache<T>* cache) {
  if (x.rank() < 2 || x.dim(1) != state.channels()) {
    throw ShapeError("batchnorm expects " + std::to_string(state.channels()) +
                     " channels on axis 1, got shape " + shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t cell = x.size() / (batch * channels);
  const std::size_t count = batch * cell;
  Tensor<T> y(x.shape());
  std::vector<double> inv_std(channels);
  if (cache) {
    cache->normalized = Tensor<T>(x.shape());
    cache->training = state.training;
  }
  const T* src = x.data().data();
  for (std::size_t c = 0; c < channels; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (state.training) {
      for (std::size_t n = 0; n < batch; ++n) mean += sum_wide(src + (n * channels + c) * cell, cell);
      mean /= static_cast<double>(count);
      for (std::size_t n = 0; n < batch; ++n) {
        var += sum_sq_dev(src + (n * channels + c) * cell, cell, mean);
      }
      var /= static_cast<double>(count);
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      state.running_mean[c] = static_cast<T>((1.0 - state.momentum) * state.running_mean[c] +
                                             state.momentum * mean);
      state.running_var[c] = static_cast<T>((1.0 - state.momentum) * state.running_var[c] +
                                            state.momentum * unbiased);
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const double istd = 1.0 / std::sqrt(var + state.epsilon);
    inv_std[c] = istd;
    const double gamma = state.gamma.value[c];
    const double beta = state.beta.value[c];
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels + c) * cell;
      const T* __restrict in = src + base;
      T* __restrict out = y.data().data() + base;
      if (cache) {
        T* __restrict norm = cache->normalized.data().data() + base;
        for (std::size_t i = 0; i < cell; ++i) {
          const double xhat = (in[i] - mean) * istd;
          norm[i] = static_cast<T>(xhat);
          out[i] = static_cast<T>(gamma * xhat + beta);
        }
      } else {
        for (std::size_t i = 0; i < cell; ++i) {
          out[i] = static_cast<T>(gamma * ((in[i] - mean) * istd) + beta);
        }
      }
    }
  }
  if (cache) cache->inv_std = std::move(inv_std);
  return y;
}

template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& grad_out, const BatchNormCache<T>& cache,
                             BatchNormState<T>& state) {
  check_same_shape(grad_out, cache.normalized.shape(), "batchnorm grad_out");
  const std::size_t batch = grad_out.dim(0);
  const std::size_t channels = grad_out.dim(1);
  const std::size_t cell = cells_per_channel(grad_out);
  const double count = static_cast<double>(batch * cell);
  Tensor<T> grad_in(grad_out.shape());
  const T* dy = grad_out.data().data();
  const T* xhat = cache.normalized.data().data();
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels + c) * cell;
      sum_dy += sum_wide(dy + base, cell);
      sum_dy_xhat += dot_wide(dy + base, xhat + base, cell);
    }
    state.gamma.grad[c] += static_cast<T>(sum_dy_xhat);
    state.beta.grad[c] += static_cast<T>(sum_dy);
    const double scale = static_cast<double>(state.gamma.value[c]) * cache.inv_std[c];
    const double mean_dy = cache.training ? sum_dy / count : 0.0;
    const double mean_dy_xhat = cache.training ? sum_dy_xhat / count : 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels + c) * cell;
      const T* __restrict g = dy + base;
      const T* __restrict h = xhat + base;
      T* __restrict out = grad_in.data().data() + base;
      for (std::size_t i = 0; i < cell; ++i) {
        out[i] = static_cast<T>(scale * (g[i] - mean_dy - h[i] * mean_dy_xhat));
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------- relu

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] <= T{0} ? T{0} : x[i];  // NaN passes through
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& saved_input) {
  check_same_shape(grad_out, saved_input.shape(), "relu grad_out");
  Tensor<T> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = saved_input[i] > T{0} ? grad_out[i] : T{0};
  return g;
}

// ---------------------------------------------------------------- pooling

template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, const PoolSpec& spec,
                          std::vector<std::size_t>* argmax) {
  const Geometry g = make_geometry(x.shape(), spec.kernel, spec.stride, spec.padding);
  for (std::size_t axis = 0; axis < kMaxSpatial; ++axis) {
    if (2 * g.pad[axis] > g.kernel[axis]) {
      throw ShapeError("maxpool padding " + std::to_string(g.pad[axis]) +
                       " exceeds half the kernel on axis " +
                       std::to_string(axis + 2 + spec.spatial_rank() - kMaxSpatial));
    }
  }
  Tensor<T> y(output_shape_of(g, g.channels, spec.spatial_rank()));
  if (argmax) argmax->assign(y.size(), 0);
  const std::size_t in_vol = g.in_volume();
  const std::size_t line_len = g.out[2];
  std::vector<T> best(line_len);
  std::vector<std::size_t> best_index(line_len);
  std::vector<std::uint8_t> found(line_len);
  // Taps are visited in (k0, k1, k2) order and a later tap wins only when
  // strictly greater, so ties go to the first maximum.
  std::size_t out_index = 0;
  for (std::size_t plane = 0; plane < g.batch * g.channels; ++plane) {
    const T* xp = x.data().data() + plane * in_vol;
    for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
      for (std::size_t o1 = 0; o1 < g.out[1]; ++o1, out_index += line_len) {
        std::fill(best.begin(), best.end(), -std::numeric_limits<T>::infinity());
        std::fill(found.begin(), found.end(), 0);
        std::fill(best_index.begin(), best_index.end(), 0);
        for (std::size_t k0 = 0; k0 < g.kernel[0]; ++k0) {
          std::size_t i0 = 0;
          if (!source_index(o0, k0, g.stride[0], g.pad[0], g.in[0], i0)) continue;
          for (std::size_t k1 = 0; k1 < g.kernel[1]; ++k1) {
            std::size_t i1 = 0;
            if (!source_index(o1, k1, g.stride[1], g.pad[1], g.in[1], i1)) continue;
            const std::size_t row = (i0 * g.in[1] + i1) * g.in[2];
            for (std::size_t k2 = 0; k2 < g.kernel[2]; ++k2) {
              std::size_t lo = 0, hi = 0;
              valid_range(line_len, k2, g.stride[2], g.pad[2], g.in[2], lo, hi);
              for (std::size_t o2 = lo; o2 < hi; ++o2) {
                const std::size_t flat = row + (o2 * g.stride[2] + k2 - g.pad[2]);
                if (!found[o2] || xp[flat] > best[o2] || (xp[flat] != xp[flat] && best[o2] == best[o2])) {
                  best[o2] = xp[flat];
                  best_index[o2] = flat;
                  found[o2] = 1;
                }
              }
            }
          }
        }
        std::copy(best.begin(), best.end(), y.data().begin() + static_cast<std::ptrdiff_t>(out_index));
        if (argmax) {
          for (std::size_t o2 = 0; o2 < line_len; ++o2) {
            (*argmax)[out_index + o2] = plane * in_vol + best_index[o2];
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_out, const std::vector<std::size_t>& argmax,
                           const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("maxpool grad_out has " + std::to_string(grad_out.size()) +
                     " cells but the forward pass recorded " + std::to_string(argmax.size()));
  }
  Tensor<T> g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

template <typename T>
Tensor<T> avgpool_forward(const Tensor<T>& x, const PoolSpec& spec) {
  for (std::size_t p : spec.padding) {
    if (p != 0) throw ShapeError("average pooling does not support padding");
  }
  const Geometry g = make_geometry(x.shape(), spec.kernel, spec.stride, {});
  Tensor<T> y(output_shape_of(g, g.channels, spec.spatial_rank()));
  const double scale = 1.0 / static_cast<double>(g.kernel_volume());
  const std::size_t in_vol = g.in_volume();
  std::size_t out_index = 0;
  for (std::size_t plane = 0; plane < g.batch * g.channels; ++plane) {
    const T* xp = x.data().data() + plane * in_vol;
    for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
      for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
        for (std::size_t o2 = 0; o2 < g.out[2]; ++o2, ++out_index) {
          double sum = 0.0;
          for (std::size_t k0 = 0; k0 < g.kernel[0]; ++k0) {
            for (std::size_t k1 = 0; k1 < g.kernel[1]; ++k1) {
              const T* line = xp + ((o0 * g.stride[0] + k0) * g.in[1] + o1 * g.stride[1] + k1) *
                                       g.in[2] + o2 * g.stride[2];
              for (std::size_t k2 = 0; k2 < g.kernel[2]; ++k2) sum += line[k2];
            }
          }
          y[out_index] = static_cast<T>(sum * scale);
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> avgpool_backward(const Tensor<T>& grad_out, const PoolSpec& spec,
                           const Shape& input_shape) {
  const Geometry g = make_geometry(input_shape, spec.kernel, spec.stride, {});
  check_same_shape(grad_out, output_shape_of(g, g.channels, spec.spatial_rank()),
                   "avgpool grad_out");
  Tensor<T> gi(input_shape);
  const T scale = static_cast<T>(1.0 / static_cast<double>(g.kernel_volume()));
  const std::size_t in_vol = g.in_volume();
  std::size_t out_index = 0;
  for (std::size_t plane = 0; plane < g.batch * g.channels; ++plane) {
    T* gp = gi.data().data() + plane * in_vol;
    for (std::size_t o0 = 0; o0 < g.out[0]; ++o0) {
      for (std::size_t o1 = 0; o1 < g.out[1]; ++o1) {
        for (std::size_t o2 = 0; o2 < g.out[2]; ++o2, ++out_index) {
          const T share = grad_out[out_index] * scale;
          for (std::size_t k0 = 0; k0 < g.kernel[0]; ++k0) {
            for (std::size_t k1 = 0; k1 < g.kernel[1]; ++k1) {
              T* line = gp + ((o0 * g.stride[0] + k0) * g.in[1] + o1 * g.stride[1] + k1) *
                                 g.in[2] + o2 * g.stride[2];
              for (std::size_t k2 = 0; k2 < g.kernel[2]; ++k2) line[k2] += share;
            }
          }
        }
      }
    }
  }
  return gi;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() < 3) {
    throw ShapeError("global average pooling needs at least one spatial axis, got " +
                     shape_string(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t cell = x.size() / planes;
  Tensor<T> y({x.dim(0), x.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    double sum = 0.0;
    const T* src = x.data().data() + p * cell;
    for (std::size_t i = 0; i < cell; ++i) sum += src[i];
    y[p] = static_cast<T>(sum / static_cast<double>(cell));
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_out, const Shape& input_shape) {
  if (input_shape.size() < 3) throw ShapeError("global pool backward needs a spatial input");
  check_same_shape(grad_out, Shape{input_shape[0], input_shape[1]}, "global pool grad_out");
  Tensor<T> g(input_shape);
  const std::size_t planes = input_shape[0] * input_shape[1];
  const std::size_t cell = g.size() / planes;
  for (std::size_t p = 0; p < planes; ++p) {
    const T share = static_cast<T>(grad_out[p] / static_cast<double>(cell));
    std::fill_n(g.data().data() + p * cell, cell, share);
  }
  return g;
}

// ---------------------------------------------------------------- linear

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>* bias) {
  if (x.rank() != 2 || weights.rank() != 2 || x.dim(1) != weights.dim(1)) {
    throw ShapeError("linear layer: input " + shape_string(x.shape()) +
                     " incompatible with weights " + shape_string(weights.shape()) +
                     " on axis 1");
  }
  const std::size_t out_features = weights.dim(0);
  if (bias && !bias->empty()) check_same_shape(*bias, Shape{out_features}, "linear bias");
  Tensor<T> y({x.dim(0), out_features});
  ConstMatrixMap<T> xm(x.data().data(), static_cast<Eigen::Index>(x.dim(0)),
                       static_cast<Eigen::Index>(x.dim(1)));
  ConstMatrixMap<T> wm(weights.data().data(), static_cast<Eigen::Index>(out_features),
                       static_cast<Eigen::Index>(weights.dim(1)));
  MatrixMap<T> ym(y.data().data(), static_cast<Eigen::Index>(x.dim(0)),
                  static_cast<Eigen::Index>(out_features));
  ym.noalias() = xm * wm.transpose();
  if (bias && !bias->empty()) {
    for (std::size_t n = 0; n < x.dim(0); ++n) {
      for (std::size_t o = 0; o < out_features; ++o) y[n * out_features + o] += (*bias)[o];
    }
  }
  return y;
}

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& grad_out, const Tensor<T>& saved_input,
                          const Tensor<T>& weights, Tensor<T>& grad_weights,
                          Tensor<T>* grad_bias) {
  check_same_shape(grad_out, Shape{saved_input.dim(0), weights.dim(0)}, "linear grad_out");
  check_same_shape(grad_weights, weights.shape(), "linear grad_weights");
  const auto batch = static_cast<Eigen::Index>(saved_input.dim(0));
  const auto in_features = static_cast<Eigen::Index>(weights.dim(1));
  const auto out_features = static_cast<Eigen::Index>(weights.dim(0));
  ConstMatrixMap<T> go(grad_out.data().data(), batch, out_features);
  ConstMatrixMap<T> xm(saved_input.data().data(), batch, in_features);
  ConstMatrixMap<T> wm(weights.data().data(), out_features, in_features);
  MatrixMap<T> gw(grad_weights.data().data(), out_features, in_features);
  gw.noalias() += go.transpose() * xm;
  if (grad_bias && !grad_bias->empty()) {
    for (Eigen::Index o = 0; o < out_features; ++o) {
      (*grad_bias)[static_cast<std::size_t>(o)] += go.col(o).sum();
    }
  }
  Tensor<T> gi(saved_input.shape());
  MatrixMap<T> gim(gi.data().data(), batch, in_features);
  gim.noalias() = go * wm;
  return gi;
}

// ---------------------------------------------------------------- loss

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects [batch, classes]");
  const std::size_t classes = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t n = 0; n < logits.dim(0); ++n) {
    const T* row = logits.data().data() + n * classes;
    const double peak = *std::max_element(row, row + classes);
    double total = 0.0;
    for (std::size_t k = 0; k < classes; ++k) total += std::exp(row[k] - peak);
    for (std::size_t k = 0; k < classes; ++k) {
      p[n * classes + k] = static_cast<T>(std::exp(row[k] - peak) / total);
    }
  }
  return p;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || labels.size() != logits.dim(0)) {
    throw ShapeError("cross-entropy: logits " + shape_string(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  LossResult<T> result;
  result.probabilities = softmax(logits);
  result.grad_logits = Tensor<T>(logits.shape());
  double total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ValidationError("label " + std::to_string(label) + " at batch index " +
                            std::to_string(n) + " outside [0, " + std::to_string(classes) + ")");
    }
    const T* row = logits.data().data() + n * classes;
    const std::size_t top = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
    double rest = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      if (k != top) rest += std::exp(static_cast<double>(row[k]) - row[top]);
    }
    const double log_sum_exp = row[top] + std::log1p(rest);
    total += log_sum_exp - row[label];
    for (std::size_t k = 0; k < classes; ++k) {
      const double target = static_cast<std::size_t>(label) == k ? 1.0 : 0.0;
      const double prob = std::exp(static_cast<double>(row[k]) - log_sum_exp);
      result.grad_logits[n * classes + k] = static_cast<T>((prob - target) / batch);
    }
  }
  result.loss = total / static_cast<double>(batch);
  return result;
}

// ---------------------------------------------------------------- adam

template <typename T>
AdamState<T> make_adam(std::span<Parameter<T>* const> params, double learning_rate) {
  AdamState<T> state;
  state.learning_rate = learning_rate;
  for (const Parameter<T>* p : params) {
    state.first_moment.emplace_back(p->value.shape());
    state.second_moment.emplace_back(p->value.shape());
  }
  return state;
}

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state) {
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    Tensor<T>& m = state.first_moment[i];
    Tensor<T>& v = state.second_moment[i];
    check_same_shape(m, p.value.shape(), "adam first moment");
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      const double m_new = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      const double v_new = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      m[j] = static_cast<T>(m_new);
      v[j] = static_cast<T>(v_new);
      const double m_hat = m_new / correction1;
      const double v_hat = v_new / correction2;
      p.value[j] = static_cast<T>(p.value[j] -
                                  state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
  }
}

#define ASAD_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> conv_forward(const Tensor<T>&, const ConvSpec&, const Tensor<T>&,           \
                                  const Tensor<T>*);                                             \
  template Tensor<T> conv_backward(const Tensor<T>&, const Tensor<T>&, const ConvSpec&,          \
                                   const Tensor<T>&, Tensor<T>&, Tensor<T>*);                    \
  template Tensor<T> batchnorm_forward(const Tensor<T>&, BatchNormState<T>&,                     \
                                       BatchNormCache<T>*);                                      \
  template Tensor<T> batchnorm_backward(const Tensor<T>&, const BatchNormCache<T>&,              \
                                        BatchNormState<T>&);                                     \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> maxpool_forward(const Tensor<T>&, const PoolSpec&,                          \
                                     std::vector<std::size_t>*);                                 \
  template Tensor<T> maxpool_backward(const Tensor<T>&, const std::vector<std::size_t>&,         \
                                      const Shape&);                                             \
  template Tensor<T> avgpool_forward(const Tensor<T>&, const PoolSpec&);                         \
  template Tensor<T> avgpool_backward(const Tensor<T>&, const PoolSpec&, const Shape&);          \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                          \
  template Tensor<T> global_avg_pool_backward(const Tensor<T>&, const Shape&);                   \
  template Tensor<T> linear_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);       \
  template Tensor<T> linear_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                     Tensor<T>&, Tensor<T>*);                                    \
  template Tensor<T> softmax(const Tensor<T>&);                                                  \
  template LossResult<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>);          \
  template AdamState<T> make_adam(std::span<Parameter<T>* const>, double);                       \
  template void adam_step(std::span<Parameter<T>* const>, AdamState<T>&);

ASAD_INSTANTIATE_OPS(float)
ASAD_INSTANTIATE_OPS(double)

#undef ASAD_INSTANTIATE_OPS

}  // namespace asad::nn
