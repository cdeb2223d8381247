#pragma once

#include <cstddef>
#include <vector>

#include "gatt/tensor.hpp"

// Dense primitives shared by every layer. All reductions accumulate in
// row-major index order starting from zero, so results are bit-reproducible.
namespace gatt::ops {

enum class Padding { same, valid };

struct ConvOptions {
  Padding padding = Padding::same;
  std::size_t stride = 1;
};

/// Resolved spatial geometry of a 2-d correlation. For `same` padding the
/// kernel centre visits rows 0, s, 2s, ... so the output extent is ceil(Y / s).
struct ConvGeometry {
  std::size_t in_y = 0, in_x = 0;
  std::size_t k_y = 0, k_x = 0;
  std::size_t out_y = 0, out_x = 0;
  std::size_t pad_y = 0, pad_x = 0;
  std::size_t stride = 1;
};

ConvGeometry conv_geometry(std::size_t in_y, std::size_t in_x, std::size_t k_y, std::size_t k_x,
                           ConvOptions options);

// ---- elementwise -----------------------------------------------------------

/// Broadcast result of two equal-rank shapes where mismatched extents must be 1.
Shape broadcast_shape(const Shape& a, const Shape& b);

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <class T> Tensor<T> add_scalar(const Tensor<T>& a, T value);
template <class T> Tensor<T> relu(const Tensor<T>& a);
template <class T> Tensor<T> sigmoid(const Tensor<T>& a);

/// Sums a broadcast gradient back down to `target` (size-1 axes of target are summed).
template <class T> Tensor<T> sum_to_shape(const Tensor<T>& t, const Shape& target);

// ---- reductions ------------------------------------------------------------

enum class ReduceMode { sum, mean, max };

/// Reduces over `axes`. An empty axis list returns the input unchanged.
/// Max ties resolve to the lowest flat index.
template <class T>
Tensor<T> reduce(const Tensor<T>& t, const std::vector<std::size_t>& axes, ReduceMode mode,
                 bool keep_dims = false);

/// Flat input index of the max winner for every output element of reduce(..., max).
template <class T>
std::vector<std::size_t> reduce_argmax(const Tensor<T>& t, const std::vector<std::size_t>& axes);

/// Gradient of reduce w.r.t. its input. `grad` may be given with or without kept dims.
template <class T>
Tensor<T> reduce_backward(const Tensor<T>& grad, const Shape& input_shape,
                          const std::vector<std::size_t>& axes, ReduceMode mode,
                          const std::vector<std::size_t>& argmax = {});

// ---- convolution -----------------------------------------------------------

/// Cross-correlation out[n,o](y) = sum_c sum_d in[n,c](y*s + d) w[o,c](d), zero padded.
/// Accumulates one input plane at a time: out += (sum over kernel taps for plane c).
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, ConvOptions options = {});
template <class T>
Tensor<T> conv2d_grad_input(const Tensor<T>& grad, const Tensor<T>& weight, const Shape& input_shape,
                            ConvOptions options);
template <class T>
Tensor<T> conv2d_grad_weight(const Tensor<T>& grad, const Tensor<T>& input, const Shape& weight_shape,
                             ConvOptions options);

/// Unreduced correlation: in [N,P,Y,X], w [Q,P,k,k] -> [N,Q,P,Y',X'] with no sum over P.
template <class T>
Tensor<T> conv2d_planes(const Tensor<T>& input, const Tensor<T>& weight, ConvOptions options = {});
template <class T>
Tensor<T> conv2d_planes_grad_input(const Tensor<T>& grad, const Tensor<T>& weight,
                                   const Shape& input_shape, ConvOptions options);
template <class T>
Tensor<T> conv2d_planes_grad_weight(const Tensor<T>& grad, const Tensor<T>& input,
                                    const Shape& weight_shape, ConvOptions options);

// ---- spatial resampling (last two axes) ------------------------------------

/// Valid max pooling; ties go to the lowest index. `argmax` receives flat input
/// indices of the winners when non-null.
template <class T>
Tensor<T> max_pool2d(const Tensor<T>& input, std::size_t window = 2, std::size_t stride = 2,
                     std::vector<std::size_t>* argmax = nullptr);
template <class T>
Tensor<T> upsample_nearest(const Tensor<T>& input, std::size_t factor);
template <class T>
Tensor<T> upsample_nearest_backward(const Tensor<T>& grad, std::size_t factor);
template <class T>
Tensor<T> pad_zero(const Tensor<T>& input, std::size_t amount);
template <class T>
Tensor<T> crop(const Tensor<T>& input, std::size_t margin);

// ---- indexing --------------------------------------------------------------

/// out.flat[i] = in.flat[indices[i]].
template <class T>
Tensor<T> gather(const Tensor<T>& input, const std::vector<std::size_t>& indices, Shape out_shape);
/// Adjoint of gather: out.flat[indices[i]] += grad.flat[i], in ascending i.
template <class T>
Tensor<T> scatter_add(const Tensor<T>& grad, const std::vector<std::size_t>& indices, Shape in_shape);

/// Source indices realising a transpose: out axis i is input axis axes[i].
std::vector<std::size_t> permute_indices(const Shape& shape, const std::vector<std::size_t>& axes);
Shape permuted_shape(const Shape& shape, const std::vector<std::size_t>& axes);
template <class T>
Tensor<T> permute(const Tensor<T>& input, const std::vector<std::size_t>& axes);

/// Concatenation along `axis`; all other extents must agree.
template <class T>
Tensor<T> concat(const std::vector<const Tensor<T>*>& parts, std::size_t axis);
/// Entries [begin, end) along `axis`.
template <class T>
Tensor<T> slice(const Tensor<T>& input, std::size_t axis, std::size_t begin, std::size_t end);

/// [M,K] x [K,N] (operands optionally transposed).
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a = false,
                 bool transpose_b = false);

}  // namespace gatt::ops
