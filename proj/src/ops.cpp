#include "gatt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace gatt {

DType parse_dtype(const std::string& text) {
  if (text == "f32" || text == "float" || text == "float32") return DType::f32;
  if (text == "f64" || text == "double" || text == "float64") return DType::f64;
  throw ConfigError("unknown dtype '" + text + "' (expected f32 or f64)");
}

std::string to_string(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace gatt

namespace gatt::ops {
namespace {

// Walks `shape` in row-major order, calling f(flat, a_off, b_off) where the
// offsets advance by the per-axis strides sa / sb (0 for broadcast axes).
template <class F>
void walk(const Shape& shape, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
          F&& f) {
  const std::size_t rank = shape.size();
  const std::size_t total = shape_size(shape);
  if (rank == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t inner = shape[rank - 1];
  const std::size_t ia = sa[rank - 1], ib = sb[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t a_off = 0, b_off = 0;
  for (std::size_t flat = 0; flat < total; flat += inner) {
    for (std::size_t i = 0; i < inner; ++i) f(flat + i, a_off + i * ia, b_off + i * ib);
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++idx[ax];
      a_off += sa[ax];
      b_off += sb[ax];
      if (idx[ax] < shape[ax]) break;
      a_off -= sa[ax] * shape[ax];
      b_off -= sb[ax] * shape[ax];
      idx[ax] = 0;
    }
  }
}

std::vector<std::size_t> broadcast_strides(const Shape& from, const Shape& to) {
  auto strides = strides_of(from);
  for (std::size_t i = 0; i < from.size(); ++i)
    if (from[i] == 1 && to[i] != 1) strides[i] = 0;
  return strides;
}

template <class T, class Op>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, Op op) {
  if (a.shape() == b.shape()) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i], b[i]);
    return out;
  }
  Shape shape = broadcast_shape(a.shape(), b.shape());
  Tensor<T> out(shape);
  walk(shape, broadcast_strides(a.shape(), shape), broadcast_strides(b.shape(), shape),
       [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = op(a[ia], b[ib]); });
  return out;
}

template <class T, class Op>
Tensor<T> unary(const Tensor<T>& a, Op op) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i]);
  return out;
}

std::vector<std::size_t> normalized_axes(std::vector<std::size_t> axes, std::size_t rank) {
  std::sort(axes.begin(), axes.end());
  GATT_CHECK(std::adjacent_find(axes.begin(), axes.end()) == axes.end(), "reduce: repeated axis");
  for (std::size_t ax : axes)
    GATT_CHECK(ax < rank, "reduce: axis " + std::to_string(ax) + " out of range for rank " +
                              std::to_string(rank));
  return axes;
}

Shape kept_shape(const Shape& shape, const std::vector<std::size_t>& axes) {
  Shape out = shape;
  for (std::size_t ax : axes) out[ax] = 1;
  return out;
}

Shape squeezed_shape(const Shape& shape, const std::vector<std::size_t>& axes) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (std::find(axes.begin(), axes.end(), i) == axes.end()) out.push_back(shape[i]);
  return out;
}

std::vector<std::size_t> reduced_out_strides(const Shape& shape, const std::vector<std::size_t>& axes) {
  auto strides = strides_of(kept_shape(shape, axes));
  for (std::size_t ax : axes) strides[ax] = 0;
  return strides;
}

// ---- plane kernels ---------------------------------------------------------

struct Span1d {
  std::size_t lo, hi;
};

// Output indices o in [lo, hi) whose source o*s + tap - pad lies inside [0, n).
inline Span1d valid_range(std::size_t n, std::size_t out_n, std::size_t tap, std::size_t pad,
                          std::size_t stride) {
  const long off = static_cast<long>(tap) - static_cast<long>(pad);
  long lo = 0;
  if (off < 0) lo = (-off + static_cast<long>(stride) - 1) / static_cast<long>(stride);
  long hi = (static_cast<long>(n) - 1 - off);
  if (hi < 0) return {0, 0};
  hi = hi / static_cast<long>(stride) + 1;
  hi = std::min<long>(hi, static_cast<long>(out_n));
  if (lo >= hi) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// out[oy, ox] += sum_{a,b} w[a,b] * in[oy*s + a - py, ox*s + b - px], taps in row-major order.
template <class T>
void correlate_plane(T* out, const T* in, const T* w, const ConvGeometry& g) {
  for (std::size_t a = 0; a < g.k_y; ++a) {
    const Span1d ys = valid_range(g.in_y, g.out_y, a, g.pad_y, g.stride);
    for (std::size_t b = 0; b < g.k_x; ++b) {
      const T wv = w[a * g.k_x + b];
      const Span1d xs = valid_range(g.in_x, g.out_x, b, g.pad_x, g.stride);
      for (std::size_t oy = ys.lo; oy < ys.hi; ++oy) {
        const T* row_in = in + (oy * g.stride + a - g.pad_y) * g.in_x + b - g.pad_x;
        T* row_out = out + oy * g.out_x;
        if (g.stride == 1) {
          for (std::size_t ox = xs.lo; ox < xs.hi; ++ox) row_out[ox] += wv * row_in[ox];
        } else {
          for (std::size_t ox = xs.lo; ox < xs.hi; ++ox) row_out[ox] += wv * row_in[ox * g.stride];
        }
      }
    }
  }
}

// gin[iy, ix] += w[a,b] * grad[oy, ox] (adjoint of correlate_plane w.r.t. the input).
template <class T>
void correlate_plane_adjoint(T* gin, const T* grad, const T* w, const ConvGeometry& g) {
  for (std::size_t a = 0; a < g.k_y; ++a) {
    const Span1d ys = valid_range(g.in_y, g.out_y, a, g.pad_y, g.stride);
    for (std::size_t b = 0; b < g.k_x; ++b) {
      const T wv = w[a * g.k_x + b];
      const Span1d xs = valid_range(g.in_x, g.out_x, b, g.pad_x, g.stride);
      for (std::size_t oy = ys.lo; oy < ys.hi; ++oy) {
        T* row_in = gin + (oy * g.stride + a - g.pad_y) * g.in_x + b - g.pad_x;
        const T* row_g = grad + oy * g.out_x;
        for (std::size_t ox = xs.lo; ox < xs.hi; ++ox) row_in[ox * g.stride] += wv * row_g[ox];
      }
    }
  }
}

// gw[a,b] += sum_{oy,ox} grad[oy,ox] * in[oy*s + a - py, ox*s + b - px].
template <class T>
void correlate_plane_weight(T* gw, const T* grad, const T* in, const ConvGeometry& g) {
  for (std::size_t a = 0; a < g.k_y; ++a) {
    const Span1d ys = valid_range(g.in_y, g.out_y, a, g.pad_y, g.stride);
    for (std::size_t b = 0; b < g.k_x; ++b) {
      const Span1d xs = valid_range(g.in_x, g.out_x, b, g.pad_x, g.stride);
      T acc = 0;
      for (std::size_t oy = ys.lo; oy < ys.hi; ++oy) {
        const T* row_in = in + (oy * g.stride + a - g.pad_y) * g.in_x + b - g.pad_x;
        const T* row_g = grad + oy * g.out_x;
        for (std::size_t ox = xs.lo; ox < xs.hi; ++ox) acc += row_g[ox] * row_in[ox * g.stride];
      }
      gw[a * g.k_x + b] += acc;
    }
  }
}

void check_conv_shapes(const Shape& in, const Shape& w, const char* who) {
  GATT_CHECK(in.size() == 4, std::string(who) + ": input must be [N,C,Y,X], got " + shape_string(in));
  GATT_CHECK(w.size() == 4, std::string(who) + ": weight must be [O,C,k,k], got " + shape_string(w));
  GATT_CHECK(in[1] == w[1], std::string(who) + ": channel mismatch between input " + shape_string(in) +
                                " and weight " + shape_string(w));
}

}  // namespace

ConvGeometry conv_geometry(std::size_t in_y, std::size_t in_x, std::size_t k_y, std::size_t k_x,
                           ConvOptions options) {
  GATT_CHECK(options.stride >= 1, "convolution stride must be >= 1");
  GATT_CHECK(k_y % 2 == 1 && k_x % 2 == 1,
             "convolution kernel must have odd extents, got " + std::to_string(k_y) + "x" +
                 std::to_string(k_x));
  ConvGeometry g;
  g.in_y = in_y;
  g.in_x = in_x;
  g.k_y = k_y;
  g.k_x = k_x;
  g.stride = options.stride;
  if (options.padding == Padding::same) {
    g.pad_y = k_y / 2;
    g.pad_x = k_x / 2;
    g.out_y = (in_y + options.stride - 1) / options.stride;
    g.out_x = (in_x + options.stride - 1) / options.stride;
  } else {
    GATT_CHECK(in_y >= k_y && in_x >= k_x, "valid convolution needs input at least as large as the kernel");
    g.out_y = (in_y - k_y) / options.stride + 1;
    g.out_x = (in_x - k_x) / options.stride + 1;
  }
  return g;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  GATT_CHECK(a.size() == b.size(),
             "broadcast needs equal ranks, got " + shape_string(a) + " and " + shape_string(b));
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    GATT_CHECK(a[i] == b[i] || a[i] == 1 || b[i] == 1,
               "shapes " + shape_string(a) + " and " + shape_string(b) + " are not broadcast-compatible");
    out[i] = std::max(a[i], b[i]);
  }
  return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, [](T x, T y) { return x + y; });
}
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, [](T x, T y) { return x - y; });
}
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, [](T x, T y) { return x * y; });
}
template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(a, [factor](T x) { return x * factor; });
}
template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  return unary(a, [value](T x) { return x + value; });
}
template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary(a, [](T x) { return x > T(0) ? x : T(0); });
}
template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); });
}

template <class T>
Tensor<T> sum_to_shape(const Tensor<T>& t, const Shape& target) {
  if (t.shape() == target) return t;
  GATT_CHECK(t.rank() == target.size(), "sum_to_shape rank mismatch");
  std::vector<std::size_t> axes;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == t.extent(i)) continue;
    GATT_CHECK(target[i] == 1, "sum_to_shape: cannot reduce " + shape_string(t.shape()) + " to " +
                                   shape_string(target));
    axes.push_back(i);
  }
  return reduce(t, axes, ReduceMode::sum, true);
}

template <class T>
Tensor<T> reduce(const Tensor<T>& t, const std::vector<std::size_t>& axes_in, ReduceMode mode,
                 bool keep_dims) {
  if (axes_in.empty()) return t;
  const auto axes = normalized_axes(axes_in, t.rank());
  const Shape kept = kept_shape(t.shape(), axes);
  const auto in_strides = strides_of(t.shape());
  const auto out_strides = reduced_out_strides(t.shape(), axes);
  Tensor<T> out(kept);
  if (mode == ReduceMode::max) {
    std::vector<char> seen(out.size(), 0);
    walk(t.shape(), in_strides, out_strides, [&](std::size_t, std::size_t i, std::size_t o) {
      if (!seen[o] || t[i] > out[o]) {
        out[o] = t[i];
        seen[o] = 1;
      }
    });
  } else {
    walk(t.shape(), in_strides, out_strides,
         [&](std::size_t, std::size_t i, std::size_t o) { out[o] += t[i]; });
    if (mode == ReduceMode::mean) {
      const T count = static_cast<T>(t.size() / out.size());
      for (auto& v : out.data()) v /= count;
    }
  }
  if (!keep_dims) out.reshape(squeezed_shape(t.shape(), axes));
  return out;
}

template <class T>
std::vector<std::size_t> reduce_argmax(const Tensor<T>& t, const std::vector<std::size_t>& axes_in) {
  const auto axes = normalized_axes(axes_in, t.rank());
  const auto out_strides = reduced_out_strides(t.shape(), axes);
  const std::size_t out_size = shape_size(kept_shape(t.shape(), axes));
  std::vector<std::size_t> arg(out_size, 0);
  std::vector<char> seen(out_size, 0);
  walk(t.shape(), strides_of(t.shape()), out_strides, [&](std::size_t, std::size_t i, std::size_t o) {
    if (!seen[o] || t[i] > t[arg[o]]) {
      arg[o] = i;
      seen[o] = 1;
    }
  });
  return arg;
}

template <class T>
Tensor<T> reduce_backward(const Tensor<T>& grad, const Shape& input_shape,
                          const std::vector<std::size_t>& axes_in, ReduceMode mode,
                          const std::vector<std::size_t>& argmax) {
  if (axes_in.empty()) return grad.reshaped(input_shape);
  const auto axes = normalized_axes(axes_in, input_shape.size());
  const Tensor<T> g = grad.reshaped(kept_shape(input_shape, axes));
  Tensor<T> out(input_shape);
  if (mode == ReduceMode::max) {
    GATT_CHECK(argmax.size() == g.size(), "reduce_backward: argmax size mismatch");
    for (std::size_t o = 0; o < g.size(); ++o) out[argmax[o]] += g[o];
    return out;
  }
  const T factor = mode == ReduceMode::mean ? T(1) / static_cast<T>(out.size() / g.size()) : T(1);
  walk(input_shape, strides_of(input_shape), reduced_out_strides(input_shape, axes),
       [&](std::size_t, std::size_t i, std::size_t o) { out[i] = g[o] * factor; });
  return out;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, ConvOptions options) {
  check_conv_shapes(input.shape(), weight.shape(), "conv2d");
  const std::size_t n_batch = input.extent(0), n_in = input.extent(1), n_out = weight.extent(0);
  const ConvGeometry g = conv_geometry(input.extent(2), input.extent(3), weight.extent(2), weight.extent(3), options);
  const std::size_t in_plane = g.in_y * g.in_x, out_plane = g.out_y * g.out_x, k_plane = g.k_y * g.k_x;
  Tensor<T> out({n_batch, n_out, g.out_y, g.out_x});
  std::vector<T> tmp(out_plane);
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t o = 0; o < n_out; ++o) {
      T* dst = out.data().data() + (n * n_out + o) * out_plane;
      for (std::size_t c = 0; c < n_in; ++c) {
        std::fill(tmp.begin(), tmp.end(), T(0));
        correlate_plane(tmp.data(), input.data().data() + (n * n_in + c) * in_plane,
                        weight.data().data() + (o * n_in + c) * k_plane, g);
        for (std::size_t i = 0; i < out_plane; ++i) dst[i] += tmp[i];
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> conv2d_grad_input(const Tensor<T>& grad, const Tensor<T>& weight, const Shape& input_shape,
                            ConvOptions options) {
  check_conv_shapes(input_shape, weight.shape(), "conv2d_grad_input");
  const std::size_t n_batch = input_shape[0], n_in = input_shape[1], n_out = weight.extent(0);
  const ConvGeometry g = conv_geometry(input_shape[2], input_shape[3], weight.extent(2), weight.extent(3), options);
  const std::size_t in_plane = g.in_y * g.in_x, out_plane = g.out_y * g.out_x, k_plane = g.k_y * g.k_x;
  Tensor<T> gin(input_shape);
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t c = 0; c < n_in; ++c)
      for (std::size_t o = 0; o < n_out; ++o)
        correlate_plane_adjoint(gin.data().data() + (n * n_in + c) * in_plane,
                                grad.data().data() + (n * n_out + o) * out_plane,
                                weight.data().data() + (o * n_in + c) * k_plane, g);
  return gin;
}

template <class T>
Tensor<T> conv2d_grad_weight(const Tensor<T>& grad, const Tensor<T>& input, const Shape& weight_shape,
                             ConvOptions options) {
  check_conv_shapes(input.shape(), weight_shape, "conv2d_grad_weight");
  const std::size_t n_batch = input.extent(0), n_in = input.extent(1), n_out = weight_shape[0];
  const ConvGeometry g = conv_geometry(input.extent(2), input.extent(3), weight_shape[2], weight_shape[3], options);
  const std::size_t in_plane = g.in_y * g.in_x, out_plane = g.out_y * g.out_x, k_plane = g.k_y * g.k_x;
  Tensor<T> gw(weight_shape);
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t o = 0; o < n_out; ++o)
      for (std::size_t c = 0; c < n_in; ++c)
        correlate_plane_weight(gw.data().data() + (o * n_in + c) * k_plane,
                               grad.data().data() + (n * n_out + o) * out_plane,
                               input.data().data() + (n * n_in + c) * in_plane, g);
  return gw;
}

template <class T>
Tensor<T> conv2d_planes(const Tensor<T>& input, const Tensor<T>& weight, ConvOptions options) {
  check_conv_shapes(input.shape(), weight.shape(), "conv2d_planes");
  const std::size_t n_batch = input.extent(0), n_planes = input.extent(1), n_q = weight.extent(0);
  const ConvGeometry g = conv_geometry(input.extent(2), input.extent(3), weight.extent(2), weight.extent(3), options);
  const std::size_t in_plane = g.in_y * g.in_x, out_plane = g.out_y * g.out_x, k_plane = g.k_y * g.k_x;
  Tensor<T> out({n_batch, n_q, n_planes, g.out_y, g.out_x});
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t q = 0; q < n_q; ++q)
      for (std::size_t p = 0; p < n_planes; ++p)
        correlate_plane(out.data().data() + ((n * n_q + q) * n_planes + p) * out_plane,
                        input.data().data() + (n * n_planes + p) * in_plane,
                        weight.data().data() + (q * n_planes + p) * k_plane, g);
  return out;
}

template <class T>
Tensor<T> conv2d_planes_grad_input(const Tensor<T>& grad, const Tensor<T>& weight,
                                   const Shape& input_shape, ConvOptions options) {
  check_conv_shapes(input_shape, weight.shape(), "conv2d_planes_grad_input");
  const std::size_t n_batch = input_shape[0], n_planes = input_shape[1], n_q = weight.extent(0);
  const ConvGeometry g = conv_geometry(input_shape[2], input_shape[3], weight.extent(2), weight.extent(3), options);
  const std::size_t in_plane = g.in_y * g.in_x, out_plane = g.out_y * g.out_x, k_plane = g.k_y * g.k_x;
  Tensor<T> gin(input_shape);
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t p = 0; p < n_planes; ++p)
      for (std::size_t q = 0; q < n_q; ++q)
        correlate_plane_adjoint(gin.data().data() + (n * n_planes + p) * in_plane,
                                grad.data().data() + ((n * n_q + q) * n_planes + p) * out_plane,
                                weight.data().data() + (q * n_planes + p) * k_plane, g);
  return gin;
}

template <class T>
Tensor<T> conv2d_planes_grad_weight(const Tensor<T>& grad, const Tensor<T>& input,
                                    const Shape& weight_shape, ConvOptions options) {
  check_conv_shapes(input.shape(), weight_shape, "conv2d_planes_grad_weight");
  const std::size_t n_batch = input.extent(0), n_planes = input.extent(1), n_q = weight_shape[0];
  const ConvGeometry g = conv_geometry(input.extent(2), input.extent(3), weight_shape[2], weight_shape[3], options);
  const std::size_t in_plane = g.in_y * g.in_x, out_plane = g.out_y * g.out_x, k_plane = g.k_y * g.k_x;
  Tensor<T> gw(weight_shape);
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t q = 0; q < n_q; ++q)
      for (std::size_t p = 0; p < n_planes; ++p)
        correlate_plane_weight(gw.data().data() + (q * n_planes + p) * k_plane,
                               grad.data().data() + ((n * n_q + q) * n_planes + p) * out_plane,
                               input.data().data() + (n * n_planes + p) * in_plane, g);
  return gw;
}

template <class T>
Tensor<T> max_pool2d(const Tensor<T>& input, std::size_t window, std::size_t stride,
                     std::vector<std::size_t>* argmax) {
  GATT_CHECK(input.rank() >= 2, "max_pool2d needs at least two axes");
  GATT_CHECK(window >= 1 && stride >= 1, "max_pool2d window and stride must be positive");
  const std::size_t ny = input.extent(input.rank() - 2), nx = input.extent(input.rank() - 1);
  GATT_CHECK(window <= ny && window <= nx, "max_pool2d window " + std::to_string(window) +
                                               " exceeds spatial extent " + std::to_string(ny) + "x" +
                                               std::to_string(nx));
  const std::size_t oy = (ny - window) / stride + 1, ox = (nx - window) / stride + 1;
  Shape shape = input.shape();
  shape[shape.size() - 2] = oy;
  shape[shape.size() - 1] = ox;
  Tensor<T> out(shape);
  if (argmax) argmax->assign(out.size(), 0);
  const std::size_t planes = input.size() / (ny * nx);
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * ny * nx;
    for (std::size_t y = 0; y < oy; ++y) {
      for (std::size_t x = 0; x < ox; ++x) {
        std::size_t best = base + (y * stride) * nx + x * stride;
        for (std::size_t a = 0; a < window; ++a)
          for (std::size_t b = 0; b < window; ++b) {
            const std::size_t i = base + (y * stride + a) * nx + x * stride + b;
            if (input[i] > input[best]) best = i;
          }
        const std::size_t o = (p * oy + y) * ox + x;
        out[o] = input[best];
        if (argmax) (*argmax)[o] = best;
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> upsample_nearest(const Tensor<T>& input, std::size_t factor) {
  GATT_CHECK(input.rank() >= 2 && factor >= 1, "upsample_nearest needs rank >= 2 and factor >= 1");
  const std::size_t ny = input.extent(input.rank() - 2), nx = input.extent(input.rank() - 1);
  Shape shape = input.shape();
  shape[shape.size() - 2] = ny * factor;
  shape[shape.size() - 1] = nx * factor;
  Tensor<T> out(shape);
  const std::size_t planes = input.size() / (ny * nx);
  const std::size_t oy = ny * factor, ox = nx * factor;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < oy; ++y)
      for (std::size_t x = 0; x < ox; ++x)
        out[(p * oy + y) * ox + x] = input[(p * ny + y / factor) * nx + x / factor];
  return out;
}

template <class T>
Tensor<T> upsample_nearest_backward(const Tensor<T>& grad, std::size_t factor) {
  const std::size_t oy = grad.extent(grad.rank() - 2), ox = grad.extent(grad.rank() - 1);
  GATT_CHECK(oy % factor == 0 && ox % factor == 0, "upsample_nearest_backward: extent not divisible");
  const std::size_t ny = oy / factor, nx = ox / factor;
  Shape shape = grad.shape();
  shape[shape.size() - 2] = ny;
  shape[shape.size() - 1] = nx;
  Tensor<T> out(shape);
  const std::size_t planes = out.size() / (ny * nx);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < oy; ++y)
      for (std::size_t x = 0; x < ox; ++x)
        out[(p * ny + y / factor) * nx + x / factor] += grad[(p * oy + y) * ox + x];
  return out;
}

template <class T>
Tensor<T> pad_zero(const Tensor<T>& input, std::size_t amount) {
  GATT_CHECK(input.rank() >= 2, "pad_zero needs rank >= 2");
  const std::size_t ny = input.extent(input.rank() - 2), nx = input.extent(input.rank() - 1);
  const std::size_t oy = ny + 2 * amount, ox = nx + 2 * amount;
  Shape shape = input.shape();
  shape[shape.size() - 2] = oy;
  shape[shape.size() - 1] = ox;
  Tensor<T> out(shape);
  const std::size_t planes = input.size() / (ny * nx);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < ny; ++y)
      std::copy_n(input.data().data() + (p * ny + y) * nx, nx,
                  out.data().data() + (p * oy + y + amount) * ox + amount);
  return out;
}

template <class T>
Tensor<T> crop(const Tensor<T>& input, std::size_t margin) {
  GATT_CHECK(input.rank() >= 2, "crop needs rank >= 2");
  const std::size_t ny = input.extent(input.rank() - 2), nx = input.extent(input.rank() - 1);
  GATT_CHECK(2 * margin < ny && 2 * margin < nx, "crop margin " + std::to_string(margin) +
                                                     " leaves nothing of " + shape_string(input.shape()));
  const std::size_t oy = ny - 2 * margin, ox = nx - 2 * margin;
  Shape shape = input.shape();
  shape[shape.size() - 2] = oy;
  shape[shape.size() - 1] = ox;
  Tensor<T> out(shape);
  const std::size_t planes = input.size() / (ny * nx);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < oy; ++y)
      std::copy_n(input.data().data() + (p * ny + y + margin) * nx + margin, ox,
                  out.data().data() + (p * oy + y) * ox);
  return out;
}

template <class T>
Tensor<T> gather(const Tensor<T>& input, const std::vector<std::size_t>& indices, Shape out_shape) {
  GATT_CHECK(indices.size() == shape_size(out_shape), "gather: index count does not match output shape");
  std::vector<T> data(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    GATT_CHECK(indices[i] < input.size(), "gather: index out of range");
    data[i] = input[indices[i]];
  }
  return Tensor<T>(std::move(out_shape), std::move(data));
}

template <class T>
Tensor<T> scatter_add(const Tensor<T>& grad, const std::vector<std::size_t>& indices, Shape in_shape) {
  GATT_CHECK(indices.size() == grad.size(), "scatter_add: index count does not match gradient");
  Tensor<T> out(std::move(in_shape));
  for (std::size_t i = 0; i < indices.size(); ++i) out[indices[i]] += grad[i];
  return out;
}

Shape permuted_shape(const Shape& shape, const std::vector<std::size_t>& axes) {
  GATT_CHECK(axes.size() == shape.size(), "permute: axis list must cover every axis");
  std::vector<char> used(shape.size(), 0);
  Shape out(shape.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    GATT_CHECK(axes[i] < shape.size() && !used[axes[i]], "permute: axes must be a permutation");
    used[axes[i]] = 1;
    out[i] = shape[axes[i]];
  }
  return out;
}

std::vector<std::size_t> permute_indices(const Shape& shape, const std::vector<std::size_t>& axes) {
  const Shape out_shape = permuted_shape(shape, axes);
  const auto in_strides = strides_of(shape);
  std::vector<std::size_t> src_strides(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) src_strides[i] = in_strides[axes[i]];
  std::vector<std::size_t> indices(shape_size(shape));
  walk(out_shape, src_strides, src_strides,
       [&](std::size_t o, std::size_t src, std::size_t) { indices[o] = src; });
  return indices;
}

template <class T>
Tensor<T> permute(const Tensor<T>& input, const std::vector<std::size_t>& axes) {
  return gather(input, permute_indices(input.shape(), axes), permuted_shape(input.shape(), axes));
}

template <class T>
Tensor<T> concat(const std::vector<const Tensor<T>*>& parts, std::size_t axis) {
  GATT_CHECK(!parts.empty(), "concat of nothing");
  const Shape& first = parts.front()->shape();
  GATT_CHECK(axis < first.size(), "concat axis out of range");
  Shape shape = first;
  shape[axis] = 0;
  for (const auto* p : parts) {
    GATT_CHECK(p->rank() == first.size(), "concat rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i)
      GATT_CHECK(i == axis || p->extent(i) == first[i], "concat extent mismatch");
    shape[axis] += p->extent(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  Tensor<T> out(shape);
  std::size_t dst = 0;
  for (std::size_t o = 0; o < outer; ++o)
    for (const auto* p : parts) {
      const std::size_t run = p->extent(axis) * inner;
      std::copy_n(p->data().data() + o * run, run, out.data().data() + dst);
      dst += run;
    }
  return out;
}

template <class T>
Tensor<T> slice(const Tensor<T>& input, std::size_t axis, std::size_t begin, std::size_t end) {
  GATT_CHECK(axis < input.rank() && begin < end && end <= input.extent(axis), "slice out of range");
  Shape shape = input.shape();
  shape[axis] = end - begin;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  Tensor<T> out(shape);
  const std::size_t run = (end - begin) * inner, src_run = input.extent(axis) * inner;
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(input.data().data() + o * src_run + begin * inner, run, out.data().data() + o * run);
  return out;
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a, bool transpose_b) {
  GATT_CHECK(a.rank() == 2 && b.rank() == 2, "matmul needs rank-2 operands");
  const std::size_t m = transpose_a ? a.extent(1) : a.extent(0);
  const std::size_t k = transpose_a ? a.extent(0) : a.extent(1);
  const std::size_t kb = transpose_b ? b.extent(1) : b.extent(0);
  const std::size_t n = transpose_b ? b.extent(0) : b.extent(1);
  GATT_CHECK(k == kb, "matmul inner dimension mismatch " + shape_string(a.shape()) + " x " +
                          shape_string(b.shape()));
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T av = transpose_a ? a[p * m + i] : a[i * k + p];
      T* row = out.data().data() + i * n;
      if (transpose_b) {
        for (std::size_t j = 0; j < n; ++j) row[j] += av * b[j * k + p];
      } else {
        const T* brow = b.data().data() + p * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
      }
    }
  return out;
}

#define GATT_INSTANTIATE_OPS(T)                                                                       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> scale(const Tensor<T>&, T);                                                      \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                 \
  template Tensor<T> relu(const Tensor<T>&);                                                          \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                       \
  template Tensor<T> sum_to_shape(const Tensor<T>&, const Shape&);                                    \
  template Tensor<T> reduce(const Tensor<T>&, const std::vector<std::size_t>&, ReduceMode, bool);     \
  template std::vector<std::size_t> reduce_argmax(const Tensor<T>&, const std::vector<std::size_t>&); \
  template Tensor<T> reduce_backward(const Tensor<T>&, const Shape&, const std::vector<std::size_t>&, \
                                     ReduceMode, const std::vector<std::size_t>&);                    \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, ConvOptions);                         \
  template Tensor<T> conv2d_grad_input(const Tensor<T>&, const Tensor<T>&, const Shape&, ConvOptions); \
  template Tensor<T> conv2d_grad_weight(const Tensor<T>&, const Tensor<T>&, const Shape&, ConvOptions); \
  template Tensor<T> conv2d_planes(const Tensor<T>&, const Tensor<T>&, ConvOptions);                  \
  template Tensor<T> conv2d_planes_grad_input(const Tensor<T>&, const Tensor<T>&, const Shape&,       \
                                              ConvOptions);                                           \
  template Tensor<T> conv2d_planes_grad_weight(const Tensor<T>&, const Tensor<T>&, const Shape&,      \
                                               ConvOptions);                                          \
  template Tensor<T> max_pool2d(const Tensor<T>&, std::size_t, std::size_t, std::vector<std::size_t>*); \
  template Tensor<T> upsample_nearest(const Tensor<T>&, std::size_t);                                 \
  template Tensor<T> upsample_nearest_backward(const Tensor<T>&, std::size_t);                        \
  template Tensor<T> pad_zero(const Tensor<T>&, std::size_t);                                         \
  template Tensor<T> crop(const Tensor<T>&, std::size_t);                                             \
  template Tensor<T> gather(const Tensor<T>&, const std::vector<std::size_t>&, Shape);                \
  template Tensor<T> scatter_add(const Tensor<T>&, const std::vector<std::size_t>&, Shape);           \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                      \
  template Tensor<T> concat(const std::vector<const Tensor<T>*>&, std::size_t);                       \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool, bool);

GATT_INSTANTIATE_OPS(float)
GATT_INSTANTIATE_OPS(double)

}  // namespace gatt::ops
