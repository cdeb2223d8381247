#pragma once

#include <cstddef>
#include <string>

#include "gatt/autodiff.hpp"
#include "gatt/gconv.hpp"

// Attention maps over intermediate group-convolution responses.
//
// Layouts (O' = 1 when statistics pool over output channels, else O):
//   responses  [N, O, C, H, H_in, Y, X]
//   alpha_C    [N, O', C, H, H_in]
//   alpha_X    [N, O', H, H_in, Y, X]
//   W1         [H_k, C/r, C],  W2 [H_k, C, C/r]   with H_k = H_in
//   psi_X      [1, 2, H_in, k, k]
namespace gatt {

enum class Variant { plain, full, channel, spatial, input };

Variant parse_variant(const std::string& text);
std::string to_string(Variant v);
inline bool uses_channel(Variant v) { return v == Variant::full || v == Variant::channel || v == Variant::input; }
inline bool uses_spatial(Variant v) { return v == Variant::full || v == Variant::spatial || v == Variant::input; }

/// How W is selected for the pair (h, h~): by h^-1 h~ (correct) or by h~ alone.
enum class KernelIndexing { relative, absolute };

struct AttentionOptions {
  bool residual_branch = true;    // gate = 1 - sigmoid(z); otherwise sigmoid(z)
  bool pool_out_channels = true;  // share one map across output channels
  KernelIndexing indexing = KernelIndexing::relative;
  bool unit_maps = false;         // replace every map by ones (the layer then reduces to a group conv)
  std::size_t cap_bytes = kDefaultResponseCap;
};

/// Matrix index k(h, h~) for every pair, flattened [H, H_in].
std::vector<std::size_t> kernel_index_table(const FiniteGroup& grp, std::size_t h_in, KernelIndexing indexing);

namespace ad {

template <class T>
struct AttentionWeights {
  Var<T> psi;    // [O, C, H_in, k, k]
  Var<T> bias;   // [O] (optional)
  Var<T> w1;     // channel attention
  Var<T> w2;
  Var<T> psi_x;  // spatial attention
};

template <class T>
struct AttentionOutput {
  Var<T> out;      // [N, O, H, Y', X']
  Var<T> alpha_c;  // undefined when the variant has no channel map
  Var<T> alpha_x;  // undefined when the variant has no spatial map
};

/// 1 - sigmoid(z) with the residual branch, sigmoid(z) without.
template <class T>
Var<T> gate(const Var<T>& z, bool residual_branch);

/// Mean and max over (Y, X) and, when pooled, over O: each [N, O', C, H, H_in].
template <class T>
std::pair<Var<T>, Var<T>> channel_stats(const Var<T>& responses, bool pool_out_channels);

template <class T>
Var<T> channel_attention(const FiniteGroup& grp, const Var<T>& s_avg, const Var<T>& s_max, const Var<T>& w1,
                         const Var<T>& w2, const AttentionOptions& options);

/// Mean and max over (O when pooled, C): [N, O', 2, H, H_in, Y, X].
template <class T>
Var<T> spatial_stats(const Var<T>& responses, bool pool_out_channels);

template <class T>
Var<T> spatial_attention(const FiniteGroup& grp, const Var<T>& s_x, const Var<T>& psi_x,
                         const AttentionOptions& options);

/// Attentive group convolution: responses, channel map, spatial map from the
/// channel-modulated responses, then the (c, h~) sum and bias.
template <class T>
AttentionOutput<T> attentive_gconv(const FiniteGroup& grp, const Var<T>& f, const AttentionWeights<T>& w,
                                   Variant variant, const AttentionOptions& options, ops::ConvOptions conv = {});

/// Input attention on a feature map [N, C, H_f, Y, X] with W1 [H_f, C/r, C],
/// W2 [H_f, C, C/r], psi_X [1, 2, H_f, k, k]. Returns alpha_X * alpha_C * f and
/// the maps (alpha_C [N, C, H_f], alpha_X [N, 1, H_f, Y, X]).
template <class T>
AttentionOutput<T> input_attention(const FiniteGroup& grp, const Var<T>& f, const Var<T>& w1, const Var<T>& w2,
                                   const Var<T>& psi_x, const AttentionOptions& options);

}  // namespace ad

template <class T>
struct ChannelAttentionParams {
  Tensor<T> w1, w2;
};

template <class T>
struct SpatialAttentionParams {
  Tensor<T> psi;
};

template <class T>
struct AttentionMaps {
  Tensor<T> channel;  // empty when absent
  Tensor<T> spatial;
};

template <class T>
Tensor<T> residual_gate(const Tensor<T>& z);

/// Plain-tensor front ends.
template <class T>
Tensor<T> attentive_group_conv(const Tensor<T>& f, const GConvLayer<T>& layer, const ChannelAttentionParams<T>& ch,
                               const SpatialAttentionParams<T>& sp, Variant variant,
                               const AttentionOptions& options = {}, AttentionMaps<T>* maps = nullptr);

template <class T>
Tensor<T> input_attention(const FiniteGroup& grp, const Tensor<T>& f, const ChannelAttentionParams<T>& ch,
                          const SpatialAttentionParams<T>& sp, const AttentionOptions& options = {},
                          AttentionMaps<T>* maps = nullptr);

}  // namespace gatt
