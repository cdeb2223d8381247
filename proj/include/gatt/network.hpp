#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gatt/attention.hpp"
#include "gatt/autodiff.hpp"
#include "gatt/config.hpp"
#include "gatt/gconv.hpp"
#include "gatt/random.hpp"

namespace gatt {

enum class LayerKind { conv, relu, max_pool, batch_norm, dropout, group_pool, spatial_pool, linear };

std::string to_string(LayerKind kind);

/// One layer of a sequential network. Feature maps are [N, C, H_f, Y, X] until a
/// spatial pool flattens them to [N, C * H_f].
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t channels = 0;            // conv / linear outputs
  Variant variant = Variant::plain;    // conv only
  std::size_t kernel = 3;              // conv only
  ops::ConvOptions conv;               // conv only
  bool bias = true;                    // conv / linear
  bool bias_per_h = false;             // conv: one bias per (o, h), breaks equivariance
  std::size_t window = 0;              // max_pool: 0 picks 2 for even extents, 3 (stride 2) for odd
  PoolMode pool = PoolMode::max;       // group_pool / spatial_pool
  double rate = 0.0;                   // dropout
};

struct NetworkSpec {
  GroupName group = GroupName::C4;
  std::size_t in_channels = 1;
  std::size_t in_size = 16;
  std::size_t reduction_ratio = 2;
  std::size_t attention_kernel = 7;
  AttentionOptions attention;
  std::vector<LayerSpec> layers;

  std::string describe() const;
};

/// Small classifier: `cfg.layers` conv blocks of `cfg.channels` channels (the
/// first lifts), each followed by batch norm (optional) and ReLU, a parity
/// matched max pool after the first block, then max over H, spatial mean,
/// dropout and a linear head.
NetworkSpec classifier_spec(const RunConfig& cfg, std::size_t in_channels, std::size_t in_size,
                            std::size_t classes);

/// Random-weight stack of `depth` conv layers with ReLU in between and no
/// spatial resampling; used by the equivariance verifiers.
NetworkSpec verification_stack(GroupName group, Variant variant, std::size_t depth, std::size_t channels,
                               std::size_t in_size, std::size_t kernel = 3);

template <class T>
struct LayerTrace {
  Tensor<T> output;
  Tensor<T> alpha_c;  // empty unless the layer computed a channel map
  Tensor<T> alpha_x;  // empty unless the layer computed a spatial map
};

template <class T>
class Model {
 public:
  using V = ad::Var<T>;

  explicit Model(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const FiniteGroup& group() const { return group_; }
  ad::ParameterSet<T>& params() { return params_; }
  const ad::ParameterSet<T>& params() const { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(true); }
  /// Feature shape (without batch) after every layer.
  const std::vector<Shape>& layer_shapes() const { return shapes_; }

  /// He-uniform weights and zero biases drawn from `seed`; with `random_bias`
  /// biases and normalisation parameters are drawn uniformly as well.
  void initialize(std::uint64_t seed, bool random_bias = false);

  /// Input [N, C, Y, X] or [N, C, 1, Y, X]. `dropout_rng` enables dropout;
  /// `training` selects batch statistics in batch norm.
  V forward(ad::Tape<T>* tape, const Tensor<T>& input, bool training, Rng* dropout_rng = nullptr,
            std::vector<LayerTrace<T>>* trace = nullptr);

 private:
  struct Slots {
    std::size_t psi = npos, bias = npos, w1 = npos, w2 = npos, psi_x = npos;
    std::size_t gamma = npos, beta = npos, mean = npos, var = npos, weight = npos;
  };
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  V slot(ad::Tape<T>* tape, std::size_t index);

  NetworkSpec spec_;
  FiniteGroup group_;
  ad::ParameterSet<T> params_;
  std::vector<Slots> slots_;
  std::vector<Shape> shapes_;
};

}  // namespace gatt
