#include "gatt/transform.hpp"

#include <algorithm>
#include <string>

#include "gatt/ops.hpp"

namespace gatt {

std::vector<std::size_t> action_indices(const FiniteGroup& grp, std::size_t h, const Shape& shape,
                                        const std::vector<std::size_t>& group_axes, bool spatial) {
  GATT_CHECK(h < grp.order(), "group element index out of range");
  const std::size_t rank = shape.size();
  const std::size_t hinv = grp.inverse(h);
  const Matrix2i& a = grp.action(hinv);
  const bool moves_plane = spatial && !(a == Matrix2i{});
  std::size_t n = 0;
  if (spatial) {
    GATT_CHECK(rank >= 2, "spatial action needs at least two axes");
    n = shape[rank - 1];
    GATT_CHECK(!moves_plane || shape[rank - 2] == n,
               "rotating or mirroring needs a square plane, got " + shape_string(shape));
  }
  std::vector<char> is_group(rank, 0);
  for (std::size_t ax : group_axes) {
    GATT_CHECK(ax < rank, "group axis out of range");
    GATT_CHECK(shape[ax] == 1 || shape[ax] == grp.order(),
               "group axis " + std::to_string(ax) + " of " + shape_string(shape) + " must have extent 1 or " +
                   std::to_string(grp.order()));
    is_group[ax] = shape[ax] == grp.order();
  }

  // Per-axis source coordinate tables for non-spatial axes.
  const std::size_t lead = spatial ? rank - 2 : rank;
  std::vector<std::vector<std::size_t>> src(lead);
  for (std::size_t ax = 0; ax < lead; ++ax) {
    src[ax].resize(shape[ax]);
    for (std::size_t k = 0; k < shape[ax]; ++k) src[ax][k] = is_group[ax] ? grp.product(hinv, k) : k;
  }
  std::vector<std::size_t> plane_src;
  std::size_t plane = 1;
  if (spatial) {
    const std::size_t ny = shape[rank - 2], nx = shape[rank - 1];
    plane = ny * nx;
    plane_src.resize(plane);
    const long m = static_cast<long>(n) - 1;
    for (std::size_t i = 0; i < ny; ++i)
      for (std::size_t j = 0; j < nx; ++j) {
        if (!moves_plane) {
          plane_src[i * nx + j] = i * nx + j;
          continue;
        }
        const Vec2i p{2 * static_cast<long>(j) - m, m - 2 * static_cast<long>(i)};
        const Vec2i q = a * p;
        const long sj = (q[0] + m) / 2, si = (m - q[1]) / 2;
        plane_src[i * nx + j] = static_cast<std::size_t>(si) * nx + static_cast<std::size_t>(sj);
      }
  }

  const auto strides = strides_of(shape);
  const std::size_t outer = shape_size(shape) / plane;
  std::vector<std::size_t> indices(shape_size(shape));
  std::vector<std::size_t> idx(lead, 0);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t base = 0;
    for (std::size_t ax = 0; ax < lead; ++ax) base += src[ax][idx[ax]] * strides[ax];
    if (spatial) {
      for (std::size_t p = 0; p < plane; ++p) indices[o * plane + p] = base + plane_src[p];
    } else {
      indices[o] = base;
    }
    for (std::size_t ax = lead; ax-- > 0;) {
      if (++idx[ax] < shape[ax]) break;
      idx[ax] = 0;
    }
  }
  return indices;
}

template <class T>
Tensor<T> apply_action(const FiniteGroup& grp, std::size_t h, const Tensor<T>& t,
                       const std::vector<std::size_t>& group_axes, bool spatial) {
  return ops::gather(t, action_indices(grp, h, t.shape(), group_axes, spatial), t.shape());
}

template <class T>
Tensor<T> transform_feature(const FiniteGroup& grp, std::size_t h, const Tensor<T>& f) {
  GATT_CHECK(f.rank() == 5, "feature map must be [N,C,H,Y,X], got " + shape_string(f.shape()));
  return apply_action(grp, h, f, {2});
}

template <class T>
Tensor<T> transform_filter(const FiniteGroup& grp, std::size_t h, const Tensor<T>& psi) {
  GATT_CHECK(psi.rank() == 5, "filter must be [O,C,H,k,k], got " + shape_string(psi.shape()));
  GATT_CHECK(psi.extent(3) == psi.extent(4) && psi.extent(3) % 2 == 1,
             "filter kernel must be square with odd size, got " + shape_string(psi.shape()));
  return apply_action(grp, h, psi, {2});
}

template <class T>
Tensor<T> translate(const Tensor<T>& t, long dy, long dx) {
  GATT_CHECK(t.rank() >= 2, "translate needs at least two axes");
  const long ny = static_cast<long>(t.extent(t.rank() - 2)), nx = static_cast<long>(t.extent(t.rank() - 1));
  Tensor<T> out(t.shape());
  const std::size_t plane = static_cast<std::size_t>(ny * nx);
  const std::size_t planes = t.size() / plane;
  for (std::size_t p = 0; p < planes; ++p)
    for (long i = 0; i < ny; ++i)
      for (long j = 0; j < nx; ++j) {
        const long si = i - dy, sj = j - dx;
        if (si < 0 || si >= ny || sj < 0 || sj >= nx) continue;
        out[p * plane + static_cast<std::size_t>(i * nx + j)] = t[p * plane + static_cast<std::size_t>(si * nx + sj)];
      }
  return out;
}

#define GATT_INSTANTIATE_TRANSFORM(T)                                                                  \
  template Tensor<T> apply_action(const FiniteGroup&, std::size_t, const Tensor<T>&,                   \
                                  const std::vector<std::size_t>&, bool);                              \
  template Tensor<T> transform_feature(const FiniteGroup&, std::size_t, const Tensor<T>&);             \
  template Tensor<T> transform_filter(const FiniteGroup&, std::size_t, const Tensor<T>&);              \
  template Tensor<T> translate(const Tensor<T>&, long, long);

GATT_INSTANTIATE_TRANSFORM(float)
GATT_INSTANTIATE_TRANSFORM(double)

}  // namespace gatt
