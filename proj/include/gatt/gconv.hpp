#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "gatt/autodiff.hpp"
#include "gatt/group.hpp"
#include "gatt/ops.hpp"
#include "gatt/tensor.hpp"

// Lifting and group convolutions realised as one spatial convolution with a
// materialised bank of |H| transformed filters.
//
// Layouts:
//   feature map  [N, C, |H| or 1, Y, X]
//   filter       [O, C, |H_in|, k, k]
//   responses    [N, O, C, |H|, |H_in|, Y, X]   (intermediate, before the (c, h~) sum)
namespace gatt {

/// Default ceiling on the size of a materialised intermediate response tensor.
inline constexpr std::size_t kDefaultResponseCap = std::size_t{1} << 31;

template <class T>
struct GConvLayer {
  FiniteGroup group;
  Tensor<T> filter;  // [O, C, |H_in|, k, k]
  Tensor<T> bias;    // [O] (or [O, |H|] only to build a deliberately broken layer); empty = none
  ops::ConvOptions conv;
};

/// Source indices building the bank [O*|H|, C*|H_in|, k, k] from a filter, where
/// bank[(o, h), (c, h~)] = L_h[psi][o, c, h~].
std::vector<std::size_t> filter_bank_indices(const FiniteGroup& grp, const Shape& filter_shape);
Shape filter_bank_shape(const FiniteGroup& grp, const Shape& filter_shape);

/// Bytes needed to hold the intermediate responses of one layer.
std::size_t response_bytes(const Shape& input, const Shape& filter, std::size_t group_order,
                           const ops::ConvOptions& conv, std::size_t scalar_bytes);

namespace ad {

template <class T>
Var<T> filter_bank(const FiniteGroup& grp, const Var<T>& psi);

/// Shared lifting/group convolution. `bias` may be undefined.
template <class T>
Var<T> gconv(const FiniteGroup& grp, const Var<T>& f, const Var<T>& psi, const Var<T>& bias,
             ops::ConvOptions conv = {});

/// Intermediate responses [N, O, C, |H|, |H_in|, Y', X'] (no bias).
template <class T>
Var<T> intermediate_responses(const FiniteGroup& grp, const Var<T>& f, const Var<T>& psi, ops::ConvOptions conv = {},
                              std::size_t cap_bytes = kDefaultResponseCap);

/// Adds a per-output-channel bias [O] (or [O, |H|]) to a feature map [N, O, H, Y, X].
template <class T>
Var<T> add_channel_bias(const Var<T>& f, const Var<T>& bias);

}  // namespace ad

/// Planar input [N, C, 1, Y, X] -> [N, O, |H|, Y', X'].
template <class T>
Tensor<T> lift_conv(const Tensor<T>& f, const GConvLayer<T>& layer);
/// Group input [N, C, |H|, Y, X] -> [N, O, |H|, Y', X'].
template <class T>
Tensor<T> group_conv(const Tensor<T>& f, const GConvLayer<T>& layer);
template <class T>
Tensor<T> intermediate_responses(const Tensor<T>& f, const GConvLayer<T>& layer,
                                 std::size_t cap_bytes = kDefaultResponseCap);

enum class PoolMode { max, mean };

/// Reduction over the group axis: [N, C, H, Y, X] -> [N, C, Y, X].
template <class T>
Tensor<T> group_pool(const Tensor<T>& f, PoolMode mode);
/// Reduction over the spatial axes: [N, C, H, Y, X] -> [N, C, H].
template <class T>
Tensor<T> spatial_gpool(const Tensor<T>& f, PoolMode mode = PoolMode::mean);

}  // namespace gatt
