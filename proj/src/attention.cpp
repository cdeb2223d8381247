#include "gatt/attention.hpp"

#include <algorithm>
#include <cctype>

#include "gatt/transform.hpp"

namespace gatt {

Variant parse_variant(const std::string& text) {
  std::string s = text;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "plain") return Variant::plain;
  if (s == "full") return Variant::full;
  if (s == "channel") return Variant::channel;
  if (s == "spatial") return Variant::spatial;
  if (s == "input") return Variant::input;
  throw ConfigError("unknown variant '" + text + "' (expected plain, full, channel, spatial or input)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::plain: return "plain";
    case Variant::full: return "full";
    case Variant::channel: return "channel";
    case Variant::spatial: return "spatial";
    case Variant::input: return "input";
  }
  return "?";
}

std::vector<std::size_t> kernel_index_table(const FiniteGroup& grp, std::size_t h_in, KernelIndexing indexing) {
  const std::size_t n_h = grp.order();
  GATT_CHECK(h_in == 1 || h_in == n_h, "group axis must be 1 or |H|");
  std::vector<std::size_t> table(n_h * h_in, 0);
  if (h_in == 1) return table;
  for (std::size_t h = 0; h < n_h; ++h)
    for (std::size_t ht = 0; ht < h_in; ++ht)
      table[h * h_in + ht] = indexing == KernelIndexing::relative ? grp.product(grp.inverse(h), ht) : ht;
  return table;
}

namespace ad {
namespace {

using Idx = std::shared_ptr<const std::vector<std::size_t>>;

template <class T>
Var<T> ones_like(const Shape& shape) {
  return Var<T>(Tensor<T>(shape, T(1)));
}

// Two-layer bottleneck applied per pair (a, b) with matrices selected by `table`:
// s [N, ..., P, C] (P = pairs) with W1g [P, C/r, C] and W2g [P, C, C/r].
template <class T>
Var<T> bottleneck(const Var<T>& s, const Var<T>& w1g, const Var<T>& w2g, const Shape& lead, std::size_t c,
                  std::size_t cr) {
  Shape s_shape = lead;
  s_shape.push_back(1);
  s_shape.push_back(c);
  Shape w1_shape(lead.size(), 1);
  const std::size_t pairs = w1g.extent(0);
  w1_shape.back() = pairs;
  w1_shape[0] = 1;
  // lead = [N, ..., P]; weights broadcast over all leading axes except P.
  Shape w1b = w1_shape;
  w1b.push_back(cr);
  w1b.push_back(c);
  Var<T> hidden = reduce(mul(reshape(s, s_shape), reshape(w1g, w1b)), {lead.size() + 1}, ops::ReduceMode::sum);
  hidden = relu(hidden);
  Shape h_shape = lead;
  h_shape.push_back(1);
  h_shape.push_back(cr);
  Shape w2b = w1_shape;
  w2b.push_back(c);
  w2b.push_back(cr);
  return reduce(mul(reshape(hidden, h_shape), reshape(w2g, w2b)), {lead.size() + 1}, ops::ReduceMode::sum);
}

void check_bottleneck(const Shape& w1, const Shape& w2, std::size_t hk, std::size_t c) {
  GATT_CHECK(w1.size() == 3 && w2.size() == 3, "channel attention weights must be rank 3");
  GATT_CHECK(w1[0] == hk && w2[0] == hk, "channel attention weights need " + std::to_string(hk) + " kernel slices");
  GATT_CHECK(w1[2] == c && w2[1] == c && w1[1] == w2[2] && w1[1] >= 1 && c % w1[1] == 0,
             "channel attention weights " + shape_string(w1) + " / " + shape_string(w2) +
                 " do not form a C -> C/r -> C bottleneck with r dividing C = " + std::to_string(c));
}

}  // namespace

template <class T>
Var<T> gate(const Var<T>& z, bool residual_branch) {
  Var<T> s = sigmoid(z);
  return residual_branch ? one_minus(s) : s;
}

template <class T>
std::pair<Var<T>, Var<T>> channel_stats(const Var<T>& ft, bool pool_out_channels) {
  GATT_CHECK(ft.rank() == 7, "responses must be [N,O,C,H,H_in,Y,X]");
  const std::vector<std::size_t> axes = pool_out_channels ? std::vector<std::size_t>{1, 5, 6}
                                                          : std::vector<std::size_t>{5, 6};
  const Shape& s = ft.shape();
  const Shape out{s[0], pool_out_channels ? 1 : s[1], s[2], s[3], s[4]};
  return {reshape(reduce(ft, axes, ops::ReduceMode::mean, true), out),
          reshape(reduce(ft, axes, ops::ReduceMode::max, true), out)};
}

template <class T>
Var<T> channel_attention(const FiniteGroup& grp, const Var<T>& s_avg, const Var<T>& s_max, const Var<T>& w1,
                         const Var<T>& w2, const AttentionOptions& options) {
  GATT_CHECK(s_avg.rank() == 5 && s_avg.shape() == s_max.shape(), "channel statistics must be [N,O',C,H,H_in]");
  const Shape& s = s_avg.shape();
  const std::size_t n = s[0], op = s[1], c = s[2], n_h = s[3], hin = s[4];
  GATT_CHECK(n_h == grp.order(), "channel statistics group axis does not match the group");
  check_bottleneck(w1.shape(), w2.shape(), hin, c);
  const std::size_t cr = w1.extent(1);
  const auto table = kernel_index_table(grp, hin, options.indexing);
  const std::size_t pairs = n_h * hin;
  auto i1 = std::make_shared<std::vector<std::size_t>>(pairs * cr * c);
  auto i2 = std::make_shared<std::vector<std::size_t>>(pairs * c * cr);
  for (std::size_t p = 0; p < pairs; ++p)
    for (std::size_t e = 0; e < cr * c; ++e) {
      (*i1)[p * cr * c + e] = table[p] * cr * c + e;
      (*i2)[p * cr * c + e] = table[p] * cr * c + e;
    }
  Var<T> w1g = gather(w1, Idx(i1), Shape{pairs, cr, c});
  Var<T> w2g = gather(w2, Idx(i2), Shape{pairs, c, cr});
  const Shape lead{n, op, pairs};
  auto branch = [&](const Var<T>& st) {
    Var<T> sp = reshape(permute(st, {0, 1, 3, 4, 2}), Shape{n, op, pairs, c});
    return bottleneck(sp, w1g, w2g, lead, c, cr);
  };
  Var<T> z = add(branch(s_avg), branch(s_max));  // [N, O', H*H_in, C]
  Var<T> alpha = gate(reshape(z, Shape{n, op, n_h, hin, c}), options.residual_branch);
  return permute(alpha, {0, 1, 4, 2, 3});
}

template <class T>
Var<T> spatial_stats(const Var<T>& ft, bool pool_out_channels) {
  GATT_CHECK(ft.rank() == 7, "responses must be [N,O,C,H,H_in,Y,X]");
  const std::vector<std::size_t> axes = pool_out_channels ? std::vector<std::size_t>{1, 2}
                                                          : std::vector<std::size_t>{2};
  const Shape& s = ft.shape();
  const Shape out{s[0], pool_out_channels ? 1 : s[1], 1, s[3], s[4], s[5], s[6]};
  Var<T> avg = reshape(reduce(ft, axes, ops::ReduceMode::mean, true), out);
  Var<T> mx = reshape(reduce(ft, axes, ops::ReduceMode::max, true), out);
  return concat(std::vector<Var<T>>{avg, mx}, 2);
}

template <class T>
Var<T> spatial_attention(const FiniteGroup& grp, const Var<T>& s_x, const Var<T>& psi_x,
                         const AttentionOptions& options) {
  GATT_CHECK(s_x.rank() == 7 && s_x.extent(2) == 2, "spatial statistics must be [N,O',2,H,H_in,Y,X]");
  const Shape& s = s_x.shape();
  const std::size_t n = s[0], op = s[1], n_h = s[3], hin = s[4], ny = s[5], nx = s[6];
  GATT_CHECK(n_h == grp.order(), "spatial statistics group axis does not match the group");
  GATT_CHECK(psi_x.rank() == 5 && psi_x.extent(0) == 1 && psi_x.extent(1) == 2 && psi_x.extent(2) == hin &&
                 psi_x.extent(3) == psi_x.extent(4) && psi_x.extent(3) % 2 == 1,
             "spatial attention filter must be [1,2,H_in,k,k] with odd k, got " + shape_string(psi_x.shape()));
  const std::size_t k = psi_x.extent(3), kk = k * k;
  const auto table = kernel_index_table(grp, hin, options.indexing);
  const std::size_t planes = 2 * n_h * hin;
  auto idx = std::make_shared<std::vector<std::size_t>>(planes * kk);
  for (std::size_t h = 0; h < n_h; ++h) {
    const auto rot = action_indices(grp, h, Shape{k, k}, {}, true);
    for (std::size_t st = 0; st < 2; ++st)
      for (std::size_t ht = 0; ht < hin; ++ht) {
        const std::size_t p = (st * n_h + h) * hin + ht;
        const std::size_t src = (st * hin + table[h * hin + ht]) * kk;
        for (std::size_t e = 0; e < kk; ++e) (*idx)[p * kk + e] = src + rot[e];
      }
  }
  Var<T> bank = gather(psi_x, Idx(idx), Shape{1, planes, k, k});
  Var<T> z = conv2d_planes(reshape(s_x, Shape{n * op, planes, ny, nx}), bank);
  z = reduce(reshape(z, Shape{n, op, 2, n_h, hin, ny, nx}), {2}, ops::ReduceMode::sum);
  return gate(z, options.residual_branch);
}

template <class T>
AttentionOutput<T> attentive_gconv(const FiniteGroup& grp, const Var<T>& f, const AttentionWeights<T>& w,
                                   Variant variant, const AttentionOptions& options, ops::ConvOptions conv) {
  GATT_CHECK(variant != Variant::input, "input attention is applied before a group convolution, not inside it");
  AttentionOutput<T> result;
  Var<T> ft = intermediate_responses(grp, f, w.psi, conv, options.cap_bytes);
  const Shape s = ft.shape();
  const std::size_t op = options.pool_out_channels ? 1 : s[1];
  if (uses_channel(variant)) {
    GATT_CHECK(w.w1.defined() && w.w2.defined(), "channel attention weights are missing");
    auto [avg, mx] = channel_stats(ft, options.pool_out_channels);
    result.alpha_c = options.unit_maps ? ones_like<T>(avg.shape())
                                       : channel_attention(grp, avg, mx, w.w1, w.w2, options);
    ft = mul(ft, reshape(result.alpha_c, Shape{s[0], op, s[2], s[3], s[4], 1, 1}));
  }
  if (uses_spatial(variant)) {
    GATT_CHECK(w.psi_x.defined(), "spatial attention filter is missing");
    Var<T> sx = spatial_stats(ft, options.pool_out_channels);
    result.alpha_x = options.unit_maps ? ones_like<T>(Shape{s[0], op, s[3], s[4], s[5], s[6]})
                                       : spatial_attention(grp, sx, w.psi_x, options);
    ft = mul(ft, reshape(result.alpha_x, Shape{s[0], op, 1, s[3], s[4], s[5], s[6]}));
  }
  result.out = reduce(ft, {2, 4}, ops::ReduceMode::sum);
  if (w.bias.defined()) result.out = add_channel_bias(result.out, w.bias);
  return result;
}

template <class T>
AttentionOutput<T> input_attention(const FiniteGroup& grp, const Var<T>& f, const Var<T>& w1, const Var<T>& w2,
                                   const Var<T>& psi_x, const AttentionOptions& options) {
  GATT_CHECK(f.rank() == 5, "input attention needs [N,C,H,Y,X], got " + shape_string(f.shape()));
  const Shape& s = f.shape();
  const std::size_t n = s[0], c = s[1], hf = s[2], ny = s[3], nx = s[4];
  GATT_CHECK(hf == 1 || hf == grp.order(), "feature group axis must be 1 or |H|");
  check_bottleneck(w1.shape(), w2.shape(), hf, c);
  const std::size_t cr = w1.extent(1);
  AttentionOutput<T> result;

  // Channel map: a group convolution over H with matrix-valued kernels.
  const auto table = kernel_index_table(grp.order() == hf ? grp : FiniteGroup(), hf, options.indexing);
  auto i1 = std::make_shared<std::vector<std::size_t>>(hf * cr * hf * c);
  auto i2 = std::make_shared<std::vector<std::size_t>>(hf * c * hf * cr);
  for (std::size_t a = 0; a < hf; ++a)
    for (std::size_t b = 0; b < hf; ++b) {
      const std::size_t kx = table[a * hf + b];
      for (std::size_t j = 0; j < cr; ++j)
        for (std::size_t ch = 0; ch < c; ++ch) {
          (*i1)[((a * cr + j) * hf + b) * c + ch] = (kx * cr + j) * c + ch;
          (*i2)[((a * c + ch) * hf + b) * cr + j] = (kx * c + ch) * cr + j;
        }
    }
  Var<T> w1g = reshape(gather(w1, Idx(i1), Shape{hf, cr, hf, c}), Shape{1, hf, cr, hf, c});
  Var<T> w2g = reshape(gather(w2, Idx(i2), Shape{hf, c, hf, cr}), Shape{1, hf, c, hf, cr});
  auto branch = [&](const Var<T>& st) {  // st [N, C, H_f]
    Var<T> sp = reshape(permute(st, {0, 2, 1}), Shape{n, 1, 1, hf, c});
    Var<T> hidden = relu(reduce(mul(sp, w1g), {3, 4}, ops::ReduceMode::sum));  // [N, H_f, C/r]
    return reduce(mul(reshape(hidden, Shape{n, 1, 1, hf, cr}), w2g), {3, 4}, ops::ReduceMode::sum);
  };
  Var<T> avg = reduce(f, {3, 4}, ops::ReduceMode::mean);
  Var<T> mx = reduce(f, {3, 4}, ops::ReduceMode::max);
  Var<T> alpha_c = options.unit_maps ? ones_like<T>(Shape{n, c, hf})
                                     : permute(gate(add(branch(avg), branch(mx)), options.residual_branch), {0, 2, 1});
  result.alpha_c = alpha_c;
  Var<T> fm = mul(f, reshape(alpha_c, Shape{n, c, hf, 1, 1}));

  // Spatial map: group convolution of the (mean, max) channel statistics.
  Var<T> sx = concat(std::vector<Var<T>>{reduce(fm, {1}, ops::ReduceMode::mean, true),
                                         reduce(fm, {1}, ops::ReduceMode::max, true)},
                     1);
  GATT_CHECK(psi_x.rank() == 5 && psi_x.extent(0) == 1 && psi_x.extent(1) == 2 && psi_x.extent(2) == hf,
             "input attention spatial filter must be [1,2,H_f,k,k], got " + shape_string(psi_x.shape()));
  Var<T> z = gconv(grp, sx, psi_x, Var<T>());
  if (hf == 1 && grp.order() > 1) z = reduce(z, {2}, ops::ReduceMode::mean, true);
  result.alpha_x = options.unit_maps ? ones_like<T>(Shape{n, 1, hf, ny, nx}) : gate(z, options.residual_branch);
  result.out = mul(fm, result.alpha_x);
  return result;
}

}  // namespace ad

template <class T>
Tensor<T> residual_gate(const Tensor<T>& z) {
  return ad::gate(ad::Var<T>(z), true).value();
}

template <class T>
Tensor<T> attentive_group_conv(const Tensor<T>& f, const GConvLayer<T>& layer, const ChannelAttentionParams<T>& ch,
                               const SpatialAttentionParams<T>& sp, Variant variant, const AttentionOptions& options,
                               AttentionMaps<T>* maps) {
  ad::AttentionWeights<T> w;
  w.psi = ad::Var<T>(layer.filter);
  if (!layer.bias.empty()) w.bias = ad::Var<T>(layer.bias);
  if (!ch.w1.empty()) w.w1 = ad::Var<T>(ch.w1);
  if (!ch.w2.empty()) w.w2 = ad::Var<T>(ch.w2);
  if (!sp.psi.empty()) w.psi_x = ad::Var<T>(sp.psi);
  auto r = ad::attentive_gconv(layer.group, ad::Var<T>(f), w, variant, options, layer.conv);
  if (maps) {
    maps->channel = r.alpha_c.defined() ? r.alpha_c.value() : Tensor<T>();
    maps->spatial = r.alpha_x.defined() ? r.alpha_x.value() : Tensor<T>();
  }
  return r.out.value();
}

template <class T>
Tensor<T> input_attention(const FiniteGroup& grp, const Tensor<T>& f, const ChannelAttentionParams<T>& ch,
                          const SpatialAttentionParams<T>& sp, const AttentionOptions& options,
                          AttentionMaps<T>* maps) {
  auto r = ad::input_attention(grp, ad::Var<T>(f), ad::Var<T>(ch.w1), ad::Var<T>(ch.w2), ad::Var<T>(sp.psi), options);
  if (maps) {
    maps->channel = r.alpha_c.value();
    maps->spatial = r.alpha_x.value();
  }
  return r.out.value();
}

#define GATT_INSTANTIATE_ATTENTION(T)                                                                          \
  template ad::Var<T> ad::gate(const ad::Var<T>&, bool);                                                       \
  template std::pair<ad::Var<T>, ad::Var<T>> ad::channel_stats(const ad::Var<T>&, bool);                       \
  template ad::Var<T> ad::channel_attention(const FiniteGroup&, const ad::Var<T>&, const ad::Var<T>&,          \
                                            const ad::Var<T>&, const ad::Var<T>&, const AttentionOptions&);    \
  template ad::Var<T> ad::spatial_stats(const ad::Var<T>&, bool);                                              \
  template ad::Var<T> ad::spatial_attention(const FiniteGroup&, const ad::Var<T>&, const ad::Var<T>&,          \
                                            const AttentionOptions&);                                          \
  template ad::AttentionOutput<T> ad::attentive_gconv(const FiniteGroup&, const ad::Var<T>&,                   \
                                                      const ad::AttentionWeights<T>&, Variant,                 \
                                                      const AttentionOptions&, ops::ConvOptions);              \
  template ad::AttentionOutput<T> ad::input_attention(const FiniteGroup&, const ad::Var<T>&, const ad::Var<T>&, \
                                                      const ad::Var<T>&, const ad::Var<T>&,                    \
                                                      const AttentionOptions&);                                \
  template Tensor<T> residual_gate(const Tensor<T>&);                                                          \
  template Tensor<T> attentive_group_conv(const Tensor<T>&, const GConvLayer<T>&,                              \
                                          const ChannelAttentionParams<T>&, const SpatialAttentionParams<T>&,  \
                                          Variant, const AttentionOptions&, AttentionMaps<T>*);                \
  template Tensor<T> input_attention(const FiniteGroup&, const Tensor<T>&, const ChannelAttentionParams<T>&,   \
                                     const SpatialAttentionParams<T>&, const AttentionOptions&,                \
                                     AttentionMaps<T>*);

GATT_INSTANTIATE_ATTENTION(float)
GATT_INSTANTIATE_ATTENTION(double)

}  // namespace gatt
