#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gatt/ops.hpp"
#include "gatt/random.hpp"
#include "gatt/tensor.hpp"

// Reverse-mode differentiation on an append-only tape.
namespace gatt::ad {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool decay = true;      // receives L2 weight decay
  bool trainable = true;  // false for buffers such as running statistics
};

/// Stable-address parameter store; iteration order is insertion order.
template <class T>
class ParameterSet {
 public:
  Parameter<T>& add(std::string name, Tensor<T> value, bool decay = true, bool trainable = true);
  Parameter<T>* find(const std::string& name);
  const Parameter<T>* find(const std::string& name) const;
  Parameter<T>& at(const std::string& name);

  void zero_grad();
  std::size_t scalar_count(bool trainable_only = true) const;

  std::size_t size() const { return items_.size(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  Parameter<T>& operator[](std::size_t i) { return items_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return items_[i]; }

 private:
  std::deque<Parameter<T>> items_;
};

template <class T>
class Tape;

/// Handle to a tensor value. Without a tape it is a constant and nothing is recorded.
template <class T>
struct Var {
  std::shared_ptr<const Tensor<T>> ptr;
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  Var() = default;
  explicit Var(Tensor<T> value) : ptr(std::make_shared<const Tensor<T>>(std::move(value))) {}

  const Tensor<T>& value() const { return *ptr; }
  const Shape& shape() const { return ptr->shape(); }
  std::size_t extent(std::size_t axis) const { return ptr->extent(axis); }
  std::size_t rank() const { return ptr->rank(); }
  bool tracked() const { return tape != nullptr; }
  bool defined() const { return ptr != nullptr; }
};

template <class T>
class Tape {
 public:
  using Backward = std::function<void(const Tensor<T>& grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf node bound to a parameter; backward adds into p.grad.
  Var<T> leaf(Parameter<T>& p);
  /// Leaf node for a free tensor whose gradient can be read with grad().
  Var<T> input(Tensor<T> value);
  Var<T> record(Tensor<T> value, Backward backward);

  void accumulate(std::size_t id, Tensor<T> grad);
  /// Runs backward from a scalar loss, visiting nodes in reverse execution order.
  void backward(const Var<T>& loss);
  /// Gradient accumulated at a node (zeros if it received none).
  Tensor<T> grad(const Var<T>& v) const;

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::shared_ptr<const Tensor<T>> value;
    Tensor<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
  };
  std::vector<Node> nodes_;
};

/// Parameter as a Var: tracked when a tape is given, constant otherwise.
template <class T>
Var<T> param(Tape<T>* tape, Parameter<T>& p);

// ---- differentiable operations ---------------------------------------------

template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& a, T factor);
template <class T> Var<T> add_scalar(const Var<T>& a, T value);
/// 1 - a.
template <class T> Var<T> one_minus(const Var<T>& a);
template <class T> Var<T> relu(const Var<T>& a);
template <class T> Var<T> sigmoid(const Var<T>& a);

template <class T>
Var<T> reduce(const Var<T>& a, const std::vector<std::size_t>& axes, ops::ReduceMode mode,
              bool keep_dims = false);
/// Sum of every entry, shape [1].
template <class T> Var<T> sum_all(const Var<T>& a);

template <class T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, ops::ConvOptions options = {});
template <class T>
Var<T> conv2d_planes(const Var<T>& input, const Var<T>& weight, ops::ConvOptions options = {});

template <class T>
Var<T> max_pool2d(const Var<T>& input, std::size_t window = 2, std::size_t stride = 2);
template <class T> Var<T> upsample_nearest(const Var<T>& input, std::size_t factor);
template <class T> Var<T> pad_zero(const Var<T>& input, std::size_t amount);
template <class T> Var<T> crop(const Var<T>& input, std::size_t margin);

template <class T>
Var<T> gather(const Var<T>& input, std::shared_ptr<const std::vector<std::size_t>> indices, Shape out_shape);
template <class T> Var<T> permute(const Var<T>& input, const std::vector<std::size_t>& axes);
template <class T> Var<T> reshape(const Var<T>& input, Shape shape);
template <class T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <class T> Var<T> slice(const Var<T>& input, std::size_t axis, std::size_t begin, std::size_t end);
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_a = false, bool transpose_b = false);

/// Mean softmax cross-entropy of logits [N, K] against integer labels; shape [1].
template <class T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<std::size_t>& labels);

/// Inverted dropout; identity when not training or rate == 0.
template <class T>
Var<T> dropout(const Var<T>& input, double rate, Rng& rng, bool training);

/// Batch normalisation with one statistic per axis-1 channel, pooled over every
/// other axis (including a group axis). Running statistics live in the two
/// buffer parameters and are updated in training mode.
template <class T>
Var<T> batch_norm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, Parameter<T>& running_mean,
                  Parameter<T>& running_var, bool training, double momentum = 0.1, double eps = 2e-5);

// ---- verification ----------------------------------------------------------

/// Central differences of `loss` with respect to every entry of the given parameters.
std::vector<Tensor<double>> finite_diff_grad(const std::function<double()>& loss,
                                             const std::vector<Parameter<double>*>& params, double step = 1e-5);

/// max |a - b| / max(1, |a|, |b|).
double max_relative_error(const Tensor<double>& a, const Tensor<double>& b);

// ---- optimisers ------------------------------------------------------------

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double momentum = 0.0;  // sgd only
};

template <class T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

  /// One update of every trainable parameter from its accumulated gradient.
  void step(ParameterSet<T>& params);

  OptimizerConfig& config() { return config_; }
  const OptimizerConfig& config() const { return config_; }
  std::size_t steps() const { return steps_; }
  void set_steps(std::size_t n) { steps_ = n; }
  /// First and second moment (Adam) or velocity (SGD, in `first`) per parameter.
  std::vector<Tensor<T>>& first() { return first_; }
  std::vector<Tensor<T>>& second() { return second_; }
  const std::vector<Tensor<T>>& first() const { return first_; }
  const std::vector<Tensor<T>>& second() const { return second_; }

 private:
  OptimizerConfig config_;
  std::size_t steps_ = 0;
  std::vector<Tensor<T>> first_;
  std::vector<Tensor<T>> second_;
};

/// lr * factor^(epoch / every).
double step_decay(double base_lr, std::size_t epoch, std::size_t every, double factor = 0.1);

}  // namespace gatt::ad
