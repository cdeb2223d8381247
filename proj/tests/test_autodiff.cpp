#include <gtest/gtest.h>

#include <functional>

#include "gatt/attention.hpp"
#include "gatt/autodiff.hpp"
#include "gatt/random.hpp"

using namespace gatt;
using namespace gatt::ad;
using V = Var<double>;
using P = Parameter<double>;

namespace {

using Build = std::function<V(Tape<double>*)>;

// Backward vs central differences for loss = sum(out * R) with a fixed random R.
double gradcheck(const std::vector<P*>& params, const Build& build, std::uint64_t seed = 99) {
  Tensor<double> weights;
  auto loss_of = [&](Tape<double>* tape) {
    V out = build(tape);
    if (weights.shape() != out.shape()) {
      Rng rng(seed);
      weights = random_uniform<double>(out.shape(), rng);
    }
    return sum_all(mul(out, V(weights)));
  };
  for (P* p : params) p->grad = Tensor<double>(p->value.shape());
  Tape<double> tape;
  tape.backward(loss_of(&tape));
  auto numeric = finite_diff_grad([&] { return loss_of(nullptr).value()[0]; }, params);
  double worst = 0;
  for (std::size_t i = 0; i < params.size(); ++i)
    worst = std::max(worst, max_relative_error(params[i]->grad, numeric[i]));
  return worst;
}

P make(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  P p;
  p.name = "p";
  p.value = random_uniform<double>(std::move(shape), rng, lo, hi);
  return p;
}

constexpr double kTol = 1e-4;

}  // namespace

TEST(Backward, LinearLossGivesInput) {
  Rng rng(1);
  P w = make({3}, rng);
  auto x = random_uniform<double>({3}, rng);
  w.grad = Tensor<double>({3});
  Tape<double> tape;
  tape.backward(sum_all(mul(tape.leaf(w), V(x))));
  EXPECT_EQ(w.grad, x);
}

TEST(Backward, SigmoidSlopeAtZero) {
  Tape<double> tape;
  V z = tape.input(Tensor<double>({1}, 0.0));
  tape.backward(sigmoid(z));
  EXPECT_EQ(tape.grad(z)[0], 0.25);
}

TEST(Backward, RejectsNonScalar) {
  Tape<double> tape;
  V z = tape.input(Tensor<double>({2}, 1.0));
  EXPECT_THROW(tape.backward(relu(z)), Error);
}

TEST(Backward, ReluAtZeroAndMaxTies) {
  Tape<double> tape;
  V z = tape.input(Tensor<double>({3}, 0.0));
  tape.backward(sum_all(relu(z)));
  EXPECT_EQ(tape.grad(z).storage(), (std::vector<double>{0, 0, 0}));
  Tape<double> t2;
  V m = t2.input(Tensor<double>({3}, 2.0));
  t2.backward(reduce(m, {0}, ops::ReduceMode::max, true));
  EXPECT_EQ(t2.grad(m).storage(), (std::vector<double>{1, 0, 0}));
}

TEST(FiniteDiff, QuadraticAndConstant) {
  Rng rng(2);
  P x = make({5}, rng);
  auto g = finite_diff_grad(
      [&] {
        double s = 0;
        for (double v : x.value.data()) s += 0.5 * v * v;
        return s;
      },
      {&x});
  EXPECT_LE(max_abs_diff(g[0], x.value), 1e-9);
  auto c = finite_diff_grad([] { return 3.0; }, {&x});
  EXPECT_EQ(c[0], Tensor<double>({5}));
}

TEST(GradCheck, Elementwise) {
  Rng rng(3);
  P a = make({2, 3}, rng), b = make({1, 3}, rng), c = make({2, 1}, rng);
  EXPECT_LE(gradcheck({&a, &b}, [&](Tape<double>* t) { return add(param(t, a), param(t, b)); }), kTol);
  EXPECT_LE(gradcheck({&a, &c}, [&](Tape<double>* t) { return sub(param(t, a), param(t, c)); }), kTol);
  EXPECT_LE(gradcheck({&b, &c}, [&](Tape<double>* t) { return mul(param(t, b), param(t, c)); }), kTol);
  EXPECT_LE(gradcheck({&a}, [&](Tape<double>* t) { return scale(add_scalar(param(t, a), 0.3), -2.0); }), kTol);
  EXPECT_LE(gradcheck({&a}, [&](Tape<double>* t) { return relu(param(t, a)); }), kTol);
  EXPECT_LE(gradcheck({&a}, [&](Tape<double>* t) { return one_minus(sigmoid(param(t, a))); }), kTol);
}

TEST(GradCheck, Reductions) {
  Rng rng(4);
  P a = make({3, 4, 5}, rng);
  for (auto mode : {ops::ReduceMode::sum, ops::ReduceMode::mean, ops::ReduceMode::max}) {
    EXPECT_LE(gradcheck({&a}, [&](Tape<double>* t) { return reduce(param(t, a), {0, 2}, mode); }), kTol);
    EXPECT_LE(gradcheck({&a}, [&](Tape<double>* t) { return reduce(param(t, a), {1}, mode, true); }), kTol);
  }
}

TEST(GradCheck, Convolutions) {
  Rng rng(5);
  P x = make({2, 3, 7, 6}, rng), w = make({2, 3, 3, 3}, rng), w5 = make({2, 3, 5, 5}, rng);
  for (std::size_t stride : {1u, 2u}) {
    for (auto pad : {ops::Padding::same, ops::Padding::valid}) {
      ops::ConvOptions o{pad, stride};
      EXPECT_LE(gradcheck({&x, &w}, [&](Tape<double>* t) { return conv2d(param(t, x), param(t, w), o); }), kTol);
      EXPECT_LE(gradcheck({&x, &w5}, [&](Tape<double>* t) { return conv2d_planes(param(t, x), param(t, w5), o); }),
                kTol);
    }
  }
}

TEST(GradCheck, Spatial) {
  Rng rng(6);
  P x = make({2, 2, 6, 6}, rng);
  EXPECT_LE(gradcheck({&x}, [&](Tape<double>* t) { return max_pool2d(param(t, x)); }), kTol);
  EXPECT_LE(gradcheck({&x}, [&](Tape<double>* t) { return max_pool2d(param(t, x), 3, 2); }), kTol);
  EXPECT_LE(gradcheck({&x}, [&](Tape<double>* t) { return upsample_nearest(param(t, x), 2); }), kTol);
  EXPECT_LE(gradcheck({&x}, [&](Tape<double>* t) { return pad_zero(param(t, x), 2); }), kTol);
  EXPECT_LE(gradcheck({&x}, [&](Tape<double>* t) { return crop(param(t, x), 1); }), kTol);
}

TEST(GradCheck, Indexing) {
  Rng rng(7);
  P a = make({2, 3, 4}, rng), b = make({2, 2, 4}, rng);
  EXPECT_LE(gradcheck({&a}, [&](Tape<double>* t) { return permute(param(t, a), {2, 0, 1}); }), kTol);
  EXPECT_LE(gradcheck({&a}, [&](Tape<double>* t) { return reshape(param(t, a), {6, 4}); }), kTol);
  EXPECT_LE(gradcheck({&a, &b}, [&](Tape<double>* t) { return concat<double>({param(t, a), param(t, b)}, 1); }), kTol);
  EXPECT_LE(gradcheck({&a}, [&](Tape<double>* t) { return slice(param(t, a), 2, 1, 3); }), kTol);
  auto idx = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{0, 5, 5, 23, 7});
  EXPECT_LE(gradcheck({&a}, [&](Tape<double>* t) { return gather(param(t, a), idx, {5}); }), kTol);
}

TEST(GradCheck, Matmul) {
  Rng rng(8);
  P a = make({3, 4}, rng), b = make({4, 2}, rng), at = make({4, 3}, rng), bt = make({2, 4}, rng);
  EXPECT_LE(gradcheck({&a, &b}, [&](Tape<double>* t) { return matmul(param(t, a), param(t, b)); }), kTol);
  EXPECT_LE(gradcheck({&at, &b}, [&](Tape<double>* t) { return matmul(param(t, at), param(t, b), true); }), kTol);
  EXPECT_LE(gradcheck({&a, &bt}, [&](Tape<double>* t) { return matmul(param(t, a), param(t, bt), false, true); }),
            kTol);
  EXPECT_LE(gradcheck({&at, &bt}, [&](Tape<double>* t) { return matmul(param(t, at), param(t, bt), true, true); }),
            kTol);
}

TEST(GradCheck, LossDropoutBatchNorm) {
  Rng rng(9);
  P z = make({4, 3}, rng);
  const std::vector<std::size_t> labels{0, 2, 1, 2};
  EXPECT_LE(gradcheck({&z}, [&](Tape<double>* t) { return softmax_cross_entropy(param(t, z), labels); }), kTol);
  EXPECT_LE(gradcheck({&z},
                      [&](Tape<double>* t) {
                        Rng local(17);
                        return dropout(param(t, z), 0.3, local, true);
                      }),
            kTol);
  P x = make({3, 2, 2, 3, 3}, rng), gamma = make({2}, rng, 0.5, 1.5), beta = make({2}, rng);
  P rm{"rm", Tensor<double>({2}), {}, false, false}, rv{"rv", Tensor<double>({2}, 1.0), {}, false, false};
  for (bool training : {true, false})
    EXPECT_LE(gradcheck({&x, &gamma, &beta},
                        [&](Tape<double>* t) {
                          return batch_norm(param(t, x), param(t, gamma), param(t, beta), rm, rv, training);
                        }),
              kTol);
}

TEST(GradCheck, AttentiveGroupConvFullStack) {
  Rng rng(10);
  const FiniteGroup g(GroupName::C4);
  P x = make({1, 1, 1, 4, 4}, rng);
  P psi1 = make({2, 1, 1, 3, 3}, rng), b1 = make({2}, rng);
  P w1a = make({1, 1, 1}, rng), w2a = make({1, 1, 1}, rng), px1 = make({1, 2, 1, 3, 3}, rng);
  P psi2 = make({2, 2, 4, 3, 3}, rng), b2 = make({2}, rng);
  P w1b = make({4, 1, 2}, rng), w2b = make({4, 2, 1}, rng), px2 = make({1, 2, 4, 3, 3}, rng);
  P w1c = make({4, 1, 2}, rng), w2c = make({4, 2, 1}, rng), px3 = make({1, 2, 4, 3, 3}, rng);
  P psi3 = make({1, 2, 4, 3, 3}, rng);
  for (bool pool : {true, false}) {
    AttentionOptions opt;
    opt.pool_out_channels = pool;
    auto build = [&](Tape<double>* t) {
      AttentionWeights<double> l1{param(t, psi1), param(t, b1), param(t, w1a), param(t, w2a), param(t, px1)};
      V y = relu(attentive_gconv(g, param(t, x), l1, Variant::full, opt).out);
      AttentionWeights<double> l2{param(t, psi2), param(t, b2), param(t, w1b), param(t, w2b), param(t, px2)};
      y = attentive_gconv(g, y, l2, Variant::full, opt).out;
      y = input_attention(g, y, param(t, w1c), param(t, w2c), param(t, px3), opt).out;
      y = gconv(g, y, param(t, psi3), V());
      return reduce(y, {2}, ops::ReduceMode::max);
    };
    EXPECT_LE(gradcheck({&x, &psi1, &b1, &w1a, &w2a, &px1, &psi2, &b2, &w1b, &w2b, &px2, &w1c, &w2c, &px3, &psi3},
                        build),
              kTol);
  }
}

TEST(Optimizer, SgdZeroGradientKeepsParams) {
  Rng rng(11);
  ParameterSet<double> ps;
  auto& p = ps.add("w", random_uniform<double>({4}, rng));
  const auto before = p.value;
  ps.zero_grad();
  Optimizer<double> opt({OptimizerKind::sgd, 0.1, 0.9, 0.999, 1e-8, 0.0, 0.0});
  opt.step(ps);
  EXPECT_EQ(p.value, before);
}

TEST(Optimizer, AdamFirstStepMovesByLr) {
  ParameterSet<double> ps;
  auto& p = ps.add("w", Tensor<double>({3}, std::vector<double>{1, 1, 1}), false);
  p.grad = Tensor<double>({3}, std::vector<double>{0.5, -2, 1e-3});
  Optimizer<double> opt;
  opt.step(ps);
  EXPECT_NEAR(p.value[0], 1 - 1e-3, 1e-8);
  EXPECT_NEAR(p.value[1], 1 + 1e-3, 1e-8);
  EXPECT_NEAR(p.value[2], 1 - 1e-3, 1e-7);
}

TEST(Optimizer, SgdConvergesOnQuadratic) {
  ParameterSet<double> ps;
  auto& p = ps.add("x", Tensor<double>({1}, 0.0), false);
  Optimizer<double> opt({OptimizerKind::sgd, 0.1, 0.9, 0.999, 1e-8, 0.0, 0.0});
  for (int i = 0; i < 100; ++i) {
    p.grad[0] = 2 * (p.value[0] - 3.0);
    opt.step(ps);
  }
  EXPECT_NEAR(p.value[0], 3.0, 1e-3);
}

TEST(Optimizer, WeightDecayAddsL2) {
  ParameterSet<double> ps;
  auto& p = ps.add("w", Tensor<double>({1}, 2.0));
  ps.zero_grad();
  Optimizer<double> opt({OptimizerKind::sgd, 1.0, 0.9, 0.999, 1e-8, 0.25, 0.0});
  opt.step(ps);
  EXPECT_DOUBLE_EQ(p.value[0], 1.5);
  EXPECT_DOUBLE_EQ(step_decay(1e-3, 25, 10), 1e-5);
}

TEST(Dropout, IdentityCasesAndMean) {
  Rng rng(12);
  V x(random_uniform<double>({100}, rng, 0.5, 1.5));
  EXPECT_EQ(dropout(x, 0.0, rng, true).value(), x.value());
  EXPECT_EQ(dropout(x, 0.3, rng, false).value(), x.value());
  EXPECT_THROW(dropout(x, 1.0, rng, true), Error);
  double total = 0, base = 0;
  for (double v : x.value().data()) base += v;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const V y = dropout(x, 0.3, rng, true);
    for (double v : y.value().data()) total += v;
  }
  EXPECT_NEAR(total / trials / base, 1.0, 0.02);
}
