#include "gatt/network.hpp"

#include <sstream>

namespace gatt {
namespace {

ops::ReduceMode reduce_mode(PoolMode mode) { return mode == PoolMode::max ? ops::ReduceMode::max : ops::ReduceMode::mean; }

LayerSpec layer(LayerKind kind) {
  LayerSpec l;
  l.kind = kind;
  return l;
}

LayerSpec pooling(LayerKind kind, PoolMode mode) {
  LayerSpec l = layer(kind);
  l.pool = mode;
  return l;
}

std::size_t pool_window(const LayerSpec& l, std::size_t extent) {
  if (l.window != 0) return l.window;
  return extent % 2 == 0 ? 2 : 3;
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::max_pool: return "max_pool";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::dropout: return "dropout";
    case LayerKind::group_pool: return "group_pool";
    case LayerKind::spatial_pool: return "spatial_pool";
    case LayerKind::linear: return "linear";
  }
  return "?";
}

std::string NetworkSpec::describe() const {
  std::ostringstream out;
  out << "group=" << to_string(group) << " in_channels=" << in_channels << " in_size=" << in_size << "\n";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    out << "layer" << i << "=" << to_string(l.kind);
    if (l.kind == LayerKind::conv)
      out << " channels=" << l.channels << " variant=" << to_string(l.variant) << " kernel=" << l.kernel
          << " stride=" << l.conv.stride << (l.bias_per_h ? " bias=per_h" : "");
    if (l.kind == LayerKind::linear) out << " outputs=" << l.channels;
    if (l.kind == LayerKind::max_pool) out << " window=" << (l.window == 0 ? std::string("parity") : std::to_string(l.window));
    if (l.kind == LayerKind::dropout) out << " rate=" << l.rate;
    if (l.kind == LayerKind::group_pool || l.kind == LayerKind::spatial_pool)
      out << " mode=" << (l.pool == PoolMode::max ? "max" : "mean");
    out << "\n";
  }
  return out.str();
}

NetworkSpec classifier_spec(const RunConfig& cfg, std::size_t in_channels, std::size_t in_size, std::size_t classes) {
  GATT_CHECK(cfg.layers >= 1, "a classifier needs at least one conv layer");
  NetworkSpec s;
  s.group = cfg.group;
  s.in_channels = in_channels;
  s.in_size = in_size;
  s.reduction_ratio = cfg.reduction_ratio;
  s.attention_kernel = cfg.attention_kernel;
  s.attention.residual_branch = cfg.residual_branch;
  s.attention.pool_out_channels = cfg.pool_out_channels;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    LayerSpec conv;
    conv.kind = LayerKind::conv;
    conv.channels = cfg.channels;
    conv.variant = cfg.variant;
    conv.kernel = cfg.filter_size;
    conv.bias = !cfg.batch_norm;
    s.layers.push_back(conv);
    if (cfg.batch_norm) s.layers.push_back(layer(LayerKind::batch_norm));
    s.layers.push_back(layer(LayerKind::relu));
    if (l == 0 && cfg.layers > 1) s.layers.push_back(layer(LayerKind::max_pool));
  }
  s.layers.push_back(pooling(LayerKind::group_pool, PoolMode::max));
  s.layers.push_back(pooling(LayerKind::spatial_pool, PoolMode::mean));
  if (cfg.dropout > 0) {
    LayerSpec drop = layer(LayerKind::dropout);
    drop.rate = cfg.dropout;
    s.layers.push_back(drop);
  }
  LayerSpec head = layer(LayerKind::linear);
  head.channels = classes;
  s.layers.push_back(head);
  return s;
}

NetworkSpec verification_stack(GroupName group, Variant variant, std::size_t depth, std::size_t channels,
                               std::size_t in_size, std::size_t kernel) {
  NetworkSpec s;
  s.group = group;
  s.in_channels = channels;
  s.in_size = in_size;
  s.attention_kernel = 5;
  for (std::size_t l = 0; l < depth; ++l) {
    if (l > 0) s.layers.push_back(layer(LayerKind::relu));
    LayerSpec conv = layer(LayerKind::conv);
    conv.channels = channels;
    conv.variant = variant;
    conv.kernel = kernel;
    s.layers.push_back(conv);
  }
  return s;
}

template <class T>
Model<T>::Model(NetworkSpec spec) : spec_(std::move(spec)), group_(spec_.group) {
  std::size_t c = spec_.in_channels, hf = 1, y = spec_.in_size, x = spec_.in_size;
  bool flat = false;
  auto add = [&](std::size_t i, const std::string& what, Shape shape, bool decay = true, bool trainable = true) {
    params_.add("layer" + std::to_string(i) + "." + what, Tensor<T>(std::move(shape)), decay, trainable);
    return params_.size() - 1;
  };
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    Slots s;
    const std::string at = "layer " + std::to_string(i) + " (" + to_string(l.kind) + "): ";
    GATT_CHECK(!flat || l.kind == LayerKind::linear || l.kind == LayerKind::relu || l.kind == LayerKind::dropout,
               at + "needs a spatial feature map but the features were already flattened");
    switch (l.kind) {
      case LayerKind::conv: {
        GATT_CHECK(l.channels > 0 && l.kernel % 2 == 1, at + "needs output channels and an odd kernel");
        const std::size_t hin = hf, n_h = group_.order();
        s.psi = add(i, "psi", {l.channels, c, hin, l.kernel, l.kernel});
        if (l.bias) s.bias = add(i, "bias", l.bias_per_h ? Shape{l.channels, n_h} : Shape{l.channels}, false);
        if (uses_channel(l.variant)) {
          GATT_CHECK(spec_.reduction_ratio >= 1, at + "reduction ratio must be at least 1");
          const std::size_t hidden = std::max<std::size_t>(1, c / spec_.reduction_ratio);
          s.w1 = add(i, "w1", {hin, hidden, c});
          s.w2 = add(i, "w2", {hin, c, hidden});
        }
        if (uses_spatial(l.variant)) {
          GATT_CHECK(spec_.attention_kernel % 2 == 1, at + "attention kernel must be odd");
          s.psi_x = add(i, "psi_x", {1, 2, hin, spec_.attention_kernel, spec_.attention_kernel});
        }
        const auto g = ops::conv_geometry(y, x, l.kernel, l.kernel, l.conv);
        c = l.channels, hf = n_h, y = g.out_y, x = g.out_x;
        break;
      }
      case LayerKind::relu:
      case LayerKind::dropout:
        break;
      case LayerKind::max_pool: {
        const std::size_t w = pool_window(l, y);
        GATT_CHECK(y >= w && x >= w, at + "feature map smaller than the pooling window");
        y = (y - w) / 2 + 1, x = (x - w) / 2 + 1;
        break;
      }
      case LayerKind::batch_norm: {
        s.gamma = add(i, "gamma", {c}, false);
        s.beta = add(i, "beta", {c}, false);
        s.mean = add(i, "running_mean", {c}, false, false);
        s.var = add(i, "running_var", {c}, false, false);
        params_[s.gamma].value.fill(T(1));
        params_[s.var].value.fill(T(1));
        break;
      }
      case LayerKind::group_pool:
        hf = 1;
        break;
      case LayerKind::spatial_pool:
        flat = true;
        c = c * hf, hf = 1, y = 1, x = 1;
        break;
      case LayerKind::linear:
        GATT_CHECK(flat, at + "needs flattened features; add a spatial_pool first");
        GATT_CHECK(l.channels > 0, at + "needs outputs");
        s.weight = add(i, "weight", {c, l.channels});
        if (l.bias) s.bias = add(i, "bias", {1, l.channels}, false);
        c = l.channels;
        break;
    }
    slots_.push_back(s);
    shapes_.push_back(flat ? Shape{c} : Shape{c, hf, y, x});
  }
}

template <class T>
void Model<T>::initialize(std::uint64_t seed, bool random_bias) {
  Rng rng(seed);
  auto he = [&](std::size_t slot, std::size_t fan_in) {
    if (slot == npos) return;
    Tensor<T>& v = params_[slot].value;
    v = he_uniform<T>(v.shape(), fan_in, rng);
  };
  auto fill = [&](std::size_t slot, double base) {
    if (slot == npos) return;
    Tensor<T>& v = params_[slot].value;
    v = random_bias ? random_uniform<T>(v.shape(), rng, base - 0.5, base + 0.5) : Tensor<T>(v.shape(), T(base));
  };
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const Slots& s = slots_[i];
    if (s.psi != npos) {
      const Tensor<T>& psi = params_[s.psi].value;
      he(s.psi, psi.size() / psi.extent(0));
    }
    if (s.w1 != npos) he(s.w1, params_[s.w1].value.extent(2));
    if (s.w2 != npos) he(s.w2, params_[s.w2].value.extent(2));
    if (s.psi_x != npos) he(s.psi_x, params_[s.psi_x].value.size());
    if (s.weight != npos) he(s.weight, params_[s.weight].value.extent(0));
    fill(s.bias, 0.0);
    fill(s.gamma, 1.0);
    fill(s.beta, 0.0);
    if (s.mean != npos) params_[s.mean].value.fill(T(0));
    if (s.var != npos) params_[s.var].value.fill(T(1));
  }
}

template <class T>
typename Model<T>::V Model<T>::slot(ad::Tape<T>* tape, std::size_t index) {
  if (index == npos) return V();
  return ad::param(tape, params_[index]);
}

template <class T>
typename Model<T>::V Model<T>::forward(ad::Tape<T>* tape, const Tensor<T>& input, bool training, Rng* dropout_rng,
                                       std::vector<LayerTrace<T>>* trace) {
  Tensor<T> x = input;
  if (x.rank() == 4) x.reshape({x.extent(0), x.extent(1), 1, x.extent(2), x.extent(3)});
  GATT_CHECK(x.rank() == 5 && x.extent(1) == spec_.in_channels && x.extent(2) == 1,
             "network input must be [N," + std::to_string(spec_.in_channels) + ",Y,X], got " + shape_string(input.shape()));
  V f = tape ? tape->input(std::move(x)) : V(std::move(x));
  if (trace) trace->clear();
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    const Slots& s = slots_[i];
    LayerTrace<T> t;
    switch (l.kind) {
      case LayerKind::conv: {
        const V psi = slot(tape, s.psi), bias = slot(tape, s.bias);
        if (l.variant == Variant::plain) {
          f = ad::gconv(group_, f, psi, bias, l.conv);
        } else if (l.variant == Variant::input) {
          const auto a = ad::input_attention(group_, f, slot(tape, s.w1), slot(tape, s.w2), slot(tape, s.psi_x),
                                             spec_.attention);
          if (trace) t.alpha_c = a.alpha_c.value(), t.alpha_x = a.alpha_x.value();
          f = ad::gconv(group_, a.out, psi, bias, l.conv);
        } else {
          ad::AttentionWeights<T> w{psi, bias, slot(tape, s.w1), slot(tape, s.w2), slot(tape, s.psi_x)};
          const auto a = ad::attentive_gconv(group_, f, w, l.variant, spec_.attention, l.conv);
          if (trace) {
            if (a.alpha_c.defined()) t.alpha_c = a.alpha_c.value();
            if (a.alpha_x.defined()) t.alpha_x = a.alpha_x.value();
          }
          f = a.out;
        }
        break;
      }
      case LayerKind::relu:
        f = ad::relu(f);
        break;
      case LayerKind::max_pool: {
        const std::size_t w = pool_window(l, f.extent(3));
        f = ad::max_pool2d(f, w, 2);
        break;
      }
      case LayerKind::batch_norm:
        f = ad::batch_norm(f, slot(tape, s.gamma), slot(tape, s.beta), params_[s.mean], params_[s.var], training);
        break;
      case LayerKind::dropout:
        if (dropout_rng && l.rate > 0) f = ad::dropout(f, l.rate, *dropout_rng, true);
        break;
      case LayerKind::group_pool:
        f = ad::reduce(f, {2}, reduce_mode(l.pool), true);
        break;
      case LayerKind::spatial_pool: {
        f = ad::reduce(f, {3, 4}, reduce_mode(l.pool));
        f = ad::reshape(f, Shape{f.extent(0), f.extent(1) * f.extent(2)});
        break;
      }
      case LayerKind::linear: {
        f = ad::matmul(f, slot(tape, s.weight));
        if (s.bias != npos) f = ad::add(f, slot(tape, s.bias));
        break;
      }
    }
    if (trace) {
      t.output = f.value();
      trace->push_back(std::move(t));
    }
  }
  return f;
}

template class Model<float>;
template class Model<double>;

}  // namespace gatt
