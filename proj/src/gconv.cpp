#include "gatt/gconv.hpp"

#include <string>

#include "gatt/transform.hpp"

namespace gatt {
namespace {

void check_filter(const FiniteGroup& grp, const Shape& input, const Shape& filter) {
  GATT_CHECK(input.size() == 5, "feature map must be [N,C,H,Y,X], got " + shape_string(input));
  GATT_CHECK(filter.size() == 5, "filter must be [O,C,H,k,k], got " + shape_string(filter));
  GATT_CHECK(input[1] == filter[1], "input has " + std::to_string(input[1]) + " channels but filter expects " +
                                        std::to_string(filter[1]));
  GATT_CHECK(input[2] == filter[2], "input group axis " + std::to_string(input[2]) +
                                        " does not match filter group axis " + std::to_string(filter[2]));
  GATT_CHECK(filter[2] == 1 || filter[2] == grp.order(),
             "filter group axis must be 1 or " + std::to_string(grp.order()) + " for group " + to_string(grp.name()));
}

}  // namespace

Shape filter_bank_shape(const FiniteGroup& grp, const Shape& s) {
  return {s[0] * grp.order(), s[1] * s[2], s[3], s[4]};
}

std::vector<std::size_t> filter_bank_indices(const FiniteGroup& grp, const Shape& s) {
  GATT_CHECK(s.size() == 5 && s[3] == s[4] && s[3] % 2 == 1,
             "filter must be [O,C,H,k,k] with odd square kernel, got " + shape_string(s));
  const std::size_t n_h = grp.order();
  const std::size_t o_n = s[0], rest = s[1] * s[2] * s[3] * s[4];
  std::vector<std::size_t> bank(o_n * n_h * rest);
  for (std::size_t h = 0; h < n_h; ++h) {
    const auto idx = action_indices(grp, h, s, {2});
    for (std::size_t o = 0; o < o_n; ++o)
      for (std::size_t r = 0; r < rest; ++r) bank[(o * n_h + h) * rest + r] = idx[o * rest + r];
  }
  return bank;
}

std::size_t response_bytes(const Shape& input, const Shape& filter, std::size_t group_order,
                           const ops::ConvOptions& conv, std::size_t scalar_bytes) {
  const auto g = ops::conv_geometry(input[3], input[4], filter[3], filter[4], conv);
  return input[0] * filter[0] * filter[1] * group_order * filter[2] * g.out_y * g.out_x * scalar_bytes;
}

namespace ad {

template <class T>
Var<T> filter_bank(const FiniteGroup& grp, const Var<T>& psi) {
  auto idx = std::make_shared<const std::vector<std::size_t>>(filter_bank_indices(grp, psi.shape()));
  return gather(psi, idx, filter_bank_shape(grp, psi.shape()));
}

template <class T>
Var<T> add_channel_bias(const Var<T>& f, const Var<T>& bias) {
  const std::size_t o = f.extent(1), h = f.extent(2);
  if (bias.value().size() == o) return add(f, reshape(bias, Shape{1, o, 1, 1, 1}));
  GATT_CHECK(bias.value().size() == o * h, "bias must have shape [O] or [O,H], got " + shape_string(bias.shape()));
  return add(f, reshape(bias, Shape{1, o, h, 1, 1}));
}

template <class T>
Var<T> gconv(const FiniteGroup& grp, const Var<T>& f, const Var<T>& psi, const Var<T>& bias, ops::ConvOptions conv) {
  check_filter(grp, f.shape(), psi.shape());
  const Shape& s = f.shape();
  Var<T> planar = reshape(f, Shape{s[0], s[1] * s[2], s[3], s[4]});
  Var<T> out = conv2d(planar, filter_bank(grp, psi), conv);
  out = reshape(out, Shape{s[0], psi.extent(0), grp.order(), out.extent(2), out.extent(3)});
  if (bias.defined()) out = add_channel_bias(out, bias);
  return out;
}

template <class T>
Var<T> intermediate_responses(const FiniteGroup& grp, const Var<T>& f, const Var<T>& psi, ops::ConvOptions conv,
                              std::size_t cap_bytes) {
  check_filter(grp, f.shape(), psi.shape());
  const std::size_t bytes = response_bytes(f.shape(), psi.shape(), grp.order(), conv, sizeof(T));
  if (bytes > cap_bytes)
    throw Error("intermediate responses need " + std::to_string(bytes) + " bytes, above the cap of " +
                std::to_string(cap_bytes) +
                "; storing the per-(out-channel, in-channel, h, h~) responses grows as N*O*C*|H|*|H_in|*Y*X "
                "and dominates the memory of attentive group convolutions");
  const Shape& s = f.shape();
  const std::size_t o = psi.extent(0), c = s[1], hin = s[2], n_h = grp.order();
  Var<T> planar = reshape(f, Shape{s[0], c * hin, s[3], s[4]});
  Var<T> planes = conv2d_planes(planar, filter_bank(grp, psi), conv);  // [N, O*H, C*Hin, Y', X']
  const std::size_t oy = planes.extent(3), ox = planes.extent(4);
  planes = reshape(planes, Shape{s[0], o, n_h, c, hin, oy, ox});
  return permute(planes, {0, 1, 3, 2, 4, 5, 6});
}

}  // namespace ad

template <class T>
Tensor<T> lift_conv(const Tensor<T>& f, const GConvLayer<T>& layer) {
  GATT_CHECK(f.rank() == 5 && f.extent(2) == 1, "lifting needs a planar input [N,C,1,Y,X], got " + shape_string(f.shape()));
  GATT_CHECK(layer.filter.rank() == 5 && layer.filter.extent(2) == 1, "lifting filter must have |H_in| = 1");
  ad::Var<T> bias = layer.bias.empty() ? ad::Var<T>() : ad::Var<T>(layer.bias);
  return ad::gconv(layer.group, ad::Var<T>(f), ad::Var<T>(layer.filter), bias, layer.conv).value();
}

template <class T>
Tensor<T> group_conv(const Tensor<T>& f, const GConvLayer<T>& layer) {
  GATT_CHECK(f.rank() == 5 && f.extent(2) == layer.group.order(),
             "group convolution needs an input with a full group axis, got " + shape_string(f.shape()));
  ad::Var<T> bias = layer.bias.empty() ? ad::Var<T>() : ad::Var<T>(layer.bias);
  return ad::gconv(layer.group, ad::Var<T>(f), ad::Var<T>(layer.filter), bias, layer.conv).value();
}

template <class T>
Tensor<T> intermediate_responses(const Tensor<T>& f, const GConvLayer<T>& layer, std::size_t cap_bytes) {
  return ad::intermediate_responses(layer.group, ad::Var<T>(f), ad::Var<T>(layer.filter), layer.conv, cap_bytes)
      .value();
}

template <class T>
Tensor<T> group_pool(const Tensor<T>& f, PoolMode mode) {
  GATT_CHECK(f.rank() == 5, "group_pool needs [N,C,H,Y,X]");
  return ops::reduce(f, {2}, mode == PoolMode::max ? ops::ReduceMode::max : ops::ReduceMode::mean);
}

template <class T>
Tensor<T> spatial_gpool(const Tensor<T>& f, PoolMode mode) {
  GATT_CHECK(f.rank() == 5, "spatial_gpool needs [N,C,H,Y,X]");
  return ops::reduce(f, {3, 4}, mode == PoolMode::max ? ops::ReduceMode::max : ops::ReduceMode::mean);
}

#define GATT_INSTANTIATE_GCONV(T)                                                                            \
  template ad::Var<T> ad::filter_bank(const FiniteGroup&, const ad::Var<T>&);                                \
  template ad::Var<T> ad::add_channel_bias(const ad::Var<T>&, const ad::Var<T>&);                            \
  template ad::Var<T> ad::gconv(const FiniteGroup&, const ad::Var<T>&, const ad::Var<T>&, const ad::Var<T>&, \
                                ops::ConvOptions);                                                           \
  template ad::Var<T> ad::intermediate_responses(const FiniteGroup&, const ad::Var<T>&, const ad::Var<T>&,   \
                                                 ops::ConvOptions, std::size_t);                             \
  template Tensor<T> lift_conv(const Tensor<T>&, const GConvLayer<T>&);                                      \
  template Tensor<T> group_conv(const Tensor<T>&, const GConvLayer<T>&);                                     \
  template Tensor<T> intermediate_responses(const Tensor<T>&, const GConvLayer<T>&, std::size_t);            \
  template Tensor<T> group_pool(const Tensor<T>&, PoolMode);                                                 \
  template Tensor<T> spatial_gpool(const Tensor<T>&, PoolMode);

GATT_INSTANTIATE_GCONV(float)
GATT_INSTANTIATE_GCONV(double)

}  // namespace gatt
