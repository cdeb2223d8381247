#include "gatt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gatt::ad {
namespace {

template <class T>
Tape<T>* tape_of(std::initializer_list<const Var<T>*> vars) {
  Tape<T>* tape = nullptr;
  for (const Var<T>* v : vars) {
    if (!v->tracked()) continue;
    GATT_CHECK(tape == nullptr || tape == v->tape, "operands recorded on different tapes");
    tape = v->tape;
  }
  return tape;
}

template <class T>
Var<T> make(Tape<T>* tape, Tensor<T> value, typename Tape<T>::Backward backward) {
  if (!tape) return Var<T>(std::move(value));
  return tape->record(std::move(value), std::move(backward));
}

template <class T>
void send(const Var<T>& v, Tensor<T> grad) {
  if (v.tracked()) v.tape->accumulate(v.id, std::move(grad));
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}
void add_into(std::span<float> dst, std::span<const float> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

// ---- parameters ------------------------------------------------------------

template <class T>
Parameter<T>& ParameterSet<T>::add(std::string name, Tensor<T> value, bool decay, bool trainable) {
  GATT_CHECK(find(name) == nullptr, "duplicate parameter name '" + name + "'");
  Parameter<T> p;
  p.name = std::move(name);
  p.grad = Tensor<T>(value.shape());
  p.value = std::move(value);
  p.decay = decay;
  p.trainable = trainable;
  items_.push_back(std::move(p));
  return items_.back();
}

template <class T>
Parameter<T>* ParameterSet<T>::find(const std::string& name) {
  for (auto& p : items_)
    if (p.name == name) return &p;
  return nullptr;
}

template <class T>
const Parameter<T>* ParameterSet<T>::find(const std::string& name) const {
  for (const auto& p : items_)
    if (p.name == name) return &p;
  return nullptr;
}

template <class T>
Parameter<T>& ParameterSet<T>::at(const std::string& name) {
  Parameter<T>* p = find(name);
  GATT_CHECK(p != nullptr, "no parameter named '" + name + "'");
  return *p;
}

template <class T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : items_) {
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor<T>(p.value.shape());
    else p.grad.fill(T(0));
  }
}

template <class T>
std::size_t ParameterSet<T>::scalar_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& p : items_)
    if (p.trainable || !trainable_only) n += p.value.size();
  return n;
}

// ---- tape ------------------------------------------------------------------

template <class T>
Var<T> Tape<T>::leaf(Parameter<T>& p) {
  Var<T> v;
  v.ptr = std::make_shared<const Tensor<T>>(p.value);
  v.tape = this;
  v.id = nodes_.size();
  nodes_.push_back({v.ptr, Tensor<T>(), nullptr, &p});
  return v;
}

template <class T>
Var<T> Tape<T>::input(Tensor<T> value) {
  return record(std::move(value), nullptr);
}

template <class T>
Var<T> Tape<T>::record(Tensor<T> value, Backward backward) {
  Var<T> v;
  v.ptr = std::make_shared<const Tensor<T>>(std::move(value));
  v.tape = this;
  v.id = nodes_.size();
  nodes_.push_back({v.ptr, Tensor<T>(), std::move(backward), nullptr});
  return v;
}

template <class T>
void Tape<T>::accumulate(std::size_t id, Tensor<T> grad) {
  Node& node = nodes_.at(id);
  GATT_CHECK(grad.shape() == node.value->shape(),
             "gradient shape " + shape_string(grad.shape()) + " does not match value " +
                 shape_string(node.value->shape()));
  if (node.grad.empty()) node.grad = std::move(grad);
  else add_into(node.grad.data(), std::span<const T>(grad.data()));
}

template <class T>
void Tape<T>::backward(const Var<T>& loss) {
  GATT_CHECK(loss.tape == this, "loss was not recorded on this tape");
  GATT_CHECK(loss.value().size() == 1,
             "backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  accumulate(loss.id, Tensor<T>(loss.shape(), T(1)));
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty()) continue;
    if (node.backward) {
      Tensor<T> g = std::move(node.grad);
      node.grad = Tensor<T>();
      node.backward(g);
    } else if (node.param) {
      Parameter<T>& p = *node.param;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor<T>(p.value.shape());
      add_into(p.grad.data(), std::span<const T>(node.grad.data()));
    }
  }
}

template <class T>
Tensor<T> Tape<T>::grad(const Var<T>& v) const {
  GATT_CHECK(v.tape == this, "variable was not recorded on this tape");
  const Node& node = nodes_.at(v.id);
  if (node.grad.empty()) return Tensor<T>(node.value->shape());
  return node.grad;
}

template <class T>
Var<T> param(Tape<T>* tape, Parameter<T>& p) {
  if (tape) return tape->leaf(p);
  return Var<T>(p.value);
}

// ---- elementwise -----------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return make(tape_of({&a, &b}), ops::add(a.value(), b.value()), [a, b](const Tensor<T>& g) {
    if (a.tracked()) send(a, ops::sum_to_shape(g, a.shape()));
    if (b.tracked()) send(b, ops::sum_to_shape(g, b.shape()));
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return make(tape_of({&a, &b}), ops::sub(a.value(), b.value()), [a, b](const Tensor<T>& g) {
    if (a.tracked()) send(a, ops::sum_to_shape(g, a.shape()));
    if (b.tracked()) send(b, ops::scale(ops::sum_to_shape(g, b.shape()), T(-1)));
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return make(tape_of({&a, &b}), ops::mul(a.value(), b.value()), [a, b](const Tensor<T>& g) {
    if (a.tracked()) send(a, ops::sum_to_shape(ops::mul(g, b.value()), a.shape()));
    if (b.tracked()) send(b, ops::sum_to_shape(ops::mul(g, a.value()), b.shape()));
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T factor) {
  return make(tape_of({&a}), ops::scale(a.value(), factor),
              [a, factor](const Tensor<T>& g) { send(a, ops::scale(g, factor)); });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T value) {
  return make(tape_of({&a}), ops::add_scalar(a.value(), value), [a](const Tensor<T>& g) { send(a, g); });
}

template <class T>
Var<T> one_minus(const Var<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) - a.value()[i];
  return make(tape_of({&a}), std::move(out), [a](const Tensor<T>& g) { send(a, ops::scale(g, T(-1))); });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  return make(tape_of({&a}), ops::relu(a.value()), [a](const Tensor<T>& g) {
    Tensor<T> d(g.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.value()[i] > T(0) ? g[i] : T(0);
    send(a, std::move(d));
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  auto out = std::make_shared<const Tensor<T>>(ops::sigmoid(a.value()));
  Tape<T>* tape = tape_of({&a});
  if (!tape) return Var<T>(*out);
  return tape->record(*out, [a, out](const Tensor<T>& g) {
    Tensor<T> d(g.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * (*out)[i] * (T(1) - (*out)[i]);
    send(a, std::move(d));
  });
}

// ---- reductions ------------------------------------------------------------

template <class T>
Var<T> reduce(const Var<T>& a, const std::vector<std::size_t>& axes, ops::ReduceMode mode, bool keep_dims) {
  Tape<T>* tape = tape_of({&a});
  Tensor<T> out = ops::reduce(a.value(), axes, mode, keep_dims);
  if (!tape) return Var<T>(std::move(out));
  std::vector<std::size_t> arg;
  if (mode == ops::ReduceMode::max) arg = ops::reduce_argmax(a.value(), axes);
  return tape->record(std::move(out), [a, axes, mode, arg = std::move(arg)](const Tensor<T>& g) {
    send(a, ops::reduce_backward(g, a.shape(), axes, mode, arg));
  });
}

template <class T>
Var<T> sum_all(const Var<T>& a) {
  std::vector<std::size_t> axes(a.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  return reshape(reduce(a, axes, ops::ReduceMode::sum, true), Shape{1});
}

// ---- convolution -----------------------------------------------------------

template <class T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, ops::ConvOptions options) {
  return make(tape_of({&input, &weight}), ops::conv2d(input.value(), weight.value(), options),
              [input, weight, options](const Tensor<T>& g) {
                if (input.tracked())
                  send(input, ops::conv2d_grad_input(g, weight.value(), input.shape(), options));
                if (weight.tracked())
                  send(weight, ops::conv2d_grad_weight(g, input.value(), weight.shape(), options));
              });
}

template <class T>
Var<T> conv2d_planes(const Var<T>& input, const Var<T>& weight, ops::ConvOptions options) {
  return make(tape_of({&input, &weight}), ops::conv2d_planes(input.value(), weight.value(), options),
              [input, weight, options](const Tensor<T>& g) {
                if (input.tracked())
                  send(input, ops::conv2d_planes_grad_input(g, weight.value(), input.shape(), options));
                if (weight.tracked())
                  send(weight, ops::conv2d_planes_grad_weight(g, input.value(), weight.shape(), options));
              });
}

// ---- spatial ---------------------------------------------------------------

template <class T>
Var<T> max_pool2d(const Var<T>& input, std::size_t window, std::size_t stride) {
  Tape<T>* tape = tape_of({&input});
  auto arg = std::make_shared<std::vector<std::size_t>>();
  Tensor<T> out = ops::max_pool2d(input.value(), window, stride, tape ? arg.get() : nullptr);
  return make(tape, std::move(out), [input, arg](const Tensor<T>& g) {
    send(input, ops::scatter_add(g, *arg, input.shape()));
  });
}

template <class T>
Var<T> upsample_nearest(const Var<T>& input, std::size_t factor) {
  return make(tape_of({&input}), ops::upsample_nearest(input.value(), factor),
              [input, factor](const Tensor<T>& g) { send(input, ops::upsample_nearest_backward(g, factor)); });
}

template <class T>
Var<T> pad_zero(const Var<T>& input, std::size_t amount) {
  return make(tape_of({&input}), ops::pad_zero(input.value(), amount),
              [input, amount](const Tensor<T>& g) { send(input, ops::crop(g, amount)); });
}

template <class T>
Var<T> crop(const Var<T>& input, std::size_t margin) {
  return make(tape_of({&input}), ops::crop(input.value(), margin),
              [input, margin](const Tensor<T>& g) { send(input, ops::pad_zero(g, margin)); });
}

// ---- indexing --------------------------------------------------------------

template <class T>
Var<T> gather(const Var<T>& input, std::shared_ptr<const std::vector<std::size_t>> indices, Shape out_shape) {
  Tensor<T> out = ops::gather(input.value(), *indices, std::move(out_shape));
  return make(tape_of({&input}), std::move(out), [input, indices](const Tensor<T>& g) {
    send(input, ops::scatter_add(g, *indices, input.shape()));
  });
}

template <class T>
Var<T> permute(const Var<T>& input, const std::vector<std::size_t>& axes) {
  auto indices = std::make_shared<const std::vector<std::size_t>>(ops::permute_indices(input.shape(), axes));
  return gather(input, indices, ops::permuted_shape(input.shape(), axes));
}

template <class T>
Var<T> reshape(const Var<T>& input, Shape shape) {
  return make(tape_of({&input}), input.value().reshaped(std::move(shape)),
              [input](const Tensor<T>& g) { send(input, g.reshaped(input.shape())); });
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  std::vector<const Tensor<T>*> values;
  Tape<T>* tape = nullptr;
  for (const auto& p : parts) {
    values.push_back(&p.value());
    if (p.tracked()) {
      GATT_CHECK(tape == nullptr || tape == p.tape, "operands recorded on different tapes");
      tape = p.tape;
    }
  }
  return make(tape, ops::concat(values, axis), [parts, axis](const Tensor<T>& g) {
    std::size_t begin = 0;
    for (const auto& p : parts) {
      const std::size_t end = begin + p.extent(axis);
      if (p.tracked()) send(p, ops::slice(g, axis, begin, end));
      begin = end;
    }
  });
}

template <class T>
Var<T> slice(const Var<T>& input, std::size_t axis, std::size_t begin, std::size_t end) {
  return make(tape_of({&input}), ops::slice(input.value(), axis, begin, end),
              [input, axis, begin, end](const Tensor<T>& g) {
                const Shape& shape = input.shape();
                std::size_t outer = 1, inner = 1;
                for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
                for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
                Tensor<T> d(shape);
                const std::size_t run = (end - begin) * inner, full = shape[axis] * inner;
                for (std::size_t o = 0; o < outer; ++o)
                  std::copy_n(g.data().data() + o * run, run, d.data().data() + o * full + begin * inner);
                send(input, std::move(d));
              });
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool ta, bool tb) {
  return make(tape_of({&a, &b}), ops::matmul(a.value(), b.value(), ta, tb), [a, b, ta, tb](const Tensor<T>& g) {
    if (a.tracked())
      send(a, ta ? ops::matmul(b.value(), g, tb, true) : ops::matmul(g, b.value(), false, !tb));
    if (b.tracked())
      send(b, tb ? ops::matmul(g, a.value(), true, ta) : ops::matmul(a.value(), g, !ta, false));
  });
}

// ---- losses and regularisers ------------------------------------------------

template <class T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<std::size_t>& labels) {
  GATT_CHECK(logits.rank() == 2, "cross-entropy needs logits [N,K]");
  const std::size_t n = logits.extent(0), k = logits.extent(1);
  GATT_CHECK(labels.size() == n, "label count does not match batch");
  const Tensor<T>& z = logits.value();
  auto probs = std::make_shared<Tensor<T>>(Shape{n, k});
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    GATT_CHECK(labels[i] < k, "label out of range");
    T mx = z[i * k];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z[i * k + j]);
    double total = 0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(z[i * k + j] - mx));
    for (std::size_t j = 0; j < k; ++j)
      (*probs)[i * k + j] = static_cast<T>(std::exp(static_cast<double>(z[i * k + j] - mx)) / total);
    loss += std::log(total) + static_cast<double>(mx) - static_cast<double>(z[i * k + labels[i]]);
  }
  Tensor<T> out(Shape{1}, static_cast<T>(loss / static_cast<double>(n)));
  return make(tape_of({&logits}), std::move(out), [logits, labels, probs, n, k](const Tensor<T>& g) {
    Tensor<T> d(Shape{n, k});
    const T factor = g[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j)
        d[i * k + j] = factor * ((*probs)[i * k + j] - (j == labels[i] ? T(1) : T(0)));
    send(logits, std::move(d));
  });
}

template <class T>
Var<T> dropout(const Var<T>& input, double rate, Rng& rng, bool training) {
  GATT_CHECK(rate >= 0.0 && rate < 1.0, "dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return input;
  auto mask = std::make_shared<Tensor<T>>(input.shape());
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask->data()) m = rng.uniform() >= rate ? keep : T(0);
  return make(tape_of({&input}), ops::mul(input.value(), *mask),
              [input, mask](const Tensor<T>& g) { send(input, ops::mul(g, *mask)); });
}

template <class T>
Var<T> batch_norm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, Parameter<T>& running_mean,
                  Parameter<T>& running_var, bool training, double momentum, double eps) {
  GATT_CHECK(input.rank() >= 2, "batch_norm needs [N,C,...]");
  const Shape& shape = input.shape();
  const std::size_t n = shape[0], c = shape[1];
  const std::size_t inner = shape_size(shape) / (n * c);
  GATT_CHECK(gamma.value().size() == c && beta.value().size() == c, "batch_norm scale/shift must have C entries");
  GATT_CHECK(running_mean.value.size() == c && running_var.value.size() == c, "batch_norm buffers must have C entries");
  const std::size_t count = n * inner;
  const Tensor<T>& x = input.value();

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (training) {
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < inner; ++i) mean[ch] += x[(b * c + ch) * inner + i];
    for (auto& m : mean) m /= static_cast<double>(count);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < inner; ++i) {
          const double d = x[(b * c + ch) * inner + i] - mean[ch];
          var[ch] += d * d;
        }
    for (auto& v : var) v /= static_cast<double>(count);
    const double unbias = count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      running_mean.value[ch] = static_cast<T>((1 - momentum) * running_mean.value[ch] + momentum * mean[ch]);
      running_var.value[ch] = static_cast<T>((1 - momentum) * running_var.value[ch] + momentum * var[ch] * unbias);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean.value[ch];
      var[ch] = running_var.value[ch];
    }
  }
  auto inv_std = std::make_shared<std::vector<double>>(c);
  for (std::size_t ch = 0; ch < c; ++ch) (*inv_std)[ch] = 1.0 / std::sqrt(var[ch] + eps);
  auto xhat = std::make_shared<Tensor<T>>(shape);
  Tensor<T> out(shape);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t j = (b * c + ch) * inner + i;
        (*xhat)[j] = static_cast<T>((x[j] - mean[ch]) * (*inv_std)[ch]);
        out[j] = gamma.value()[ch] * (*xhat)[j] + beta.value()[ch];
      }
  return make(tape_of({&input, &gamma, &beta}), std::move(out),
              [input, gamma, beta, xhat, inv_std, training, n, c, inner, count](const Tensor<T>& g) {
                std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
                for (std::size_t b = 0; b < n; ++b)
                  for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t i = 0; i < inner; ++i) {
                      const std::size_t j = (b * c + ch) * inner + i;
                      sum_g[ch] += g[j];
                      sum_gx[ch] += g[j] * (*xhat)[j];
                    }
                if (gamma.tracked()) {
                  Tensor<T> d(gamma.shape());
                  for (std::size_t ch = 0; ch < c; ++ch) d[ch] = static_cast<T>(sum_gx[ch]);
                  send(gamma, std::move(d));
                }
                if (beta.tracked()) {
                  Tensor<T> d(beta.shape());
                  for (std::size_t ch = 0; ch < c; ++ch) d[ch] = static_cast<T>(sum_g[ch]);
                  send(beta, std::move(d));
                }
                if (!input.tracked()) return;
                Tensor<T> d(input.shape());
                const double cnt = static_cast<double>(count);
                for (std::size_t b = 0; b < n; ++b)
                  for (std::size_t ch = 0; ch < c; ++ch) {
                    const double k = gamma.value()[ch] * (*inv_std)[ch];
                    for (std::size_t i = 0; i < inner; ++i) {
                      const std::size_t j = (b * c + ch) * inner + i;
                      d[j] = training ? static_cast<T>(k * (g[j] - sum_g[ch] / cnt - (*xhat)[j] * sum_gx[ch] / cnt))
                                      : static_cast<T>(k * g[j]);
                    }
                  }
                send(input, std::move(d));
              });
}

// ---- verification ----------------------------------------------------------

std::vector<Tensor<double>> finite_diff_grad(const std::function<double()>& loss,
                                             const std::vector<Parameter<double>*>& params, double step) {
  std::vector<Tensor<double>> grads;
  for (Parameter<double>* p : params) {
    Tensor<double> g(p->value.shape());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + step;
      const double up = loss();
      p->value[i] = orig - step;
      const double down = loss();
      p->value[i] = orig;
      g[i] = (up - down) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double max_relative_error(const Tensor<double>& a, const Tensor<double>& b) {
  GATT_CHECK(a.shape() == b.shape(), "max_relative_error shape mismatch");
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// ---- optimisers ------------------------------------------------------------

template <class T>
void Optimizer<T>::step(ParameterSet<T>& params) {
  if (first_.size() != params.size()) {
    first_.clear();
    second_.clear();
    for (const auto& p : params) {
      first_.emplace_back(p.value.shape());
      second_.emplace_back(p.value.shape());
    }
  }
  ++steps_;
  const OptimizerConfig& c = config_;
  const double t = static_cast<double>(steps_);
  const double corr1 = 1.0 - std::pow(c.beta1, t), corr2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter<T>& p = params[k];
    if (!p.trainable) continue;
    GATT_CHECK(p.grad.shape() == p.value.shape(), "parameter '" + p.name + "' has no gradient buffer");
    Tensor<T>& m = first_[k];
    Tensor<T>& v = second_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      if (p.decay) g += c.weight_decay * static_cast<double>(p.value[i]);
      if (c.kind == OptimizerKind::adam) {
        m[i] = static_cast<T>(c.beta1 * m[i] + (1.0 - c.beta1) * g);
        v[i] = static_cast<T>(c.beta2 * v[i] + (1.0 - c.beta2) * g * g);
        const double mhat = m[i] / corr1, vhat = v[i] / corr2;
        p.value[i] = static_cast<T>(p.value[i] - c.lr * mhat / (std::sqrt(vhat) + c.eps));
      } else {
        m[i] = static_cast<T>(c.momentum * m[i] + g);
        p.value[i] = static_cast<T>(p.value[i] - c.lr * m[i]);
      }
    }
  }
}

double step_decay(double base_lr, std::size_t epoch, std::size_t every, double factor) {
  if (every == 0) return base_lr;
  return base_lr * std::pow(factor, static_cast<double>(epoch / every));
}

#define GATT_INSTANTIATE_AD(T)                                                                           \
  template class ParameterSet<T>;                                                                        \
  template class Tape<T>;                                                                                \
  template class Optimizer<T>;                                                                           \
  template Var<T> param(Tape<T>*, Parameter<T>&);                                                        \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                     \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                     \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                     \
  template Var<T> scale(const Var<T>&, T);                                                               \
  template Var<T> add_scalar(const Var<T>&, T);                                                          \
  template Var<T> one_minus(const Var<T>&);                                                              \
  template Var<T> relu(const Var<T>&);                                                                   \
  template Var<T> sigmoid(const Var<T>&);                                                                \
  template Var<T> reduce(const Var<T>&, const std::vector<std::size_t>&, ops::ReduceMode, bool);         \
  template Var<T> sum_all(const Var<T>&);                                                                \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, ops::ConvOptions);                                \
  template Var<T> conv2d_planes(const Var<T>&, const Var<T>&, ops::ConvOptions);                         \
  template Var<T> max_pool2d(const Var<T>&, std::size_t, std::size_t);                                   \
  template Var<T> upsample_nearest(const Var<T>&, std::size_t);                                          \
  template Var<T> pad_zero(const Var<T>&, std::size_t);                                                  \
  template Var<T> crop(const Var<T>&, std::size_t);                                                      \
  template Var<T> gather(const Var<T>&, std::shared_ptr<const std::vector<std::size_t>>, Shape);         \
  template Var<T> permute(const Var<T>&, const std::vector<std::size_t>&);                               \
  template Var<T> reshape(const Var<T>&, Shape);                                                         \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                                       \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);                           \
  template Var<T> matmul(const Var<T>&, const Var<T>&, bool, bool);                                      \
  template Var<T> softmax_cross_entropy(const Var<T>&, const std::vector<std::size_t>&);                 \
  template Var<T> dropout(const Var<T>&, double, Rng&, bool);                                            \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, Parameter<T>&, Parameter<T>&,  \
                             bool, double, double);

GATT_INSTANTIATE_AD(float)
GATT_INSTANTIATE_AD(double)

}  // namespace gatt::ad
