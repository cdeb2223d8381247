#pragma once

#include <cstddef>
#include <vector>

#include "gatt/group.hpp"
#include "gatt/tensor.hpp"

// Left-regular action of point-group elements on grid arrays.
//
// A pixel (i, j) of an n x n plane sits at doubled centred coordinates
// (u, v) = (2j - (n-1), (n-1) - 2i), so every group action is an exact index
// permutation about the plane centre for both even and odd n.
namespace gatt {

/// Source flat index for every output entry of L_h applied to an array of
/// `shape`. Axes listed in `group_axes` are permuted by k -> h^-1 k (skipped
/// when their extent is 1); with `spatial` set, the last two axes are a square
/// plane mapped by p -> h^-1 p.
std::vector<std::size_t> action_indices(const FiniteGroup& grp, std::size_t h, const Shape& shape,
                                        const std::vector<std::size_t>& group_axes, bool spatial = true);

template <class T>
Tensor<T> apply_action(const FiniteGroup& grp, std::size_t h, const Tensor<T>& t,
                       const std::vector<std::size_t>& group_axes, bool spatial = true);

/// L_h on a feature map [N, C, |H| or 1, Y, X].
template <class T>
Tensor<T> transform_feature(const FiniteGroup& grp, std::size_t h, const Tensor<T>& f);

/// L_h on a filter [O, C, |H_in|, k, k]; k must be odd.
template <class T>
Tensor<T> transform_filter(const FiniteGroup& grp, std::size_t h, const Tensor<T>& psi);

/// Shift of the last two axes: out(i, j) = in(i - dy, j - dx), zero fill.
template <class T>
Tensor<T> translate(const Tensor<T>& t, long dy, long dx);

/// Row/column shift realising the grid translation x = (u, v) (u right, v up).
inline std::array<long, 2> translation_rows_cols(const Vec2i& x) { return {-x[1], x[0]}; }

}  // namespace gatt
