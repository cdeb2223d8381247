#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <iostream>

#include "gatt/gconv.hpp"
#include "gatt/random.hpp"
#include "gatt/transform.hpp"
#include "oracles.hpp"

using namespace gatt;

namespace {

GConvLayer<double> random_layer(GroupName name, std::size_t o, std::size_t c, std::size_t hin, std::size_t k, Rng& rng,
                                bool with_bias = true) {
  GConvLayer<double> layer;
  layer.group = FiniteGroup(name);
  layer.filter = random_uniform<double>({o, c, hin, k, k}, rng);
  if (with_bias) layer.bias = random_uniform<double>({o}, rng);
  return layer;
}

Tensor<double> apply(const Tensor<double>& f, const GConvLayer<double>& layer) {
  return f.extent(2) == 1 ? lift_conv(f, layer) : group_conv(f, layer);
}

}  // namespace

TEST(GConv, TrivialGroupIsConv2d) {
  Rng rng(1);
  auto layer = random_layer(GroupName::C1, 3, 2, 1, 3, rng, false);
  auto f = random_uniform<double>({2, 2, 1, 6, 5}, rng);
  auto out = lift_conv(f, layer);
  auto want = ops::conv2d(f.reshaped({2, 2, 6, 5}), layer.filter.reshaped({3, 2, 3, 3}));
  EXPECT_EQ(out.reshaped({2, 3, 6, 5}), want);
  EXPECT_EQ(group_conv(f, layer), out);
}

TEST(GConv, DeltaResponseIsReflectedTransformedFilter) {
  Rng rng(2);
  const FiniteGroup g(GroupName::C4);
  auto layer = random_layer(GroupName::C4, 1, 1, 1, 3, rng, false);
  Tensor<double> f({1, 1, 1, 7, 7});
  f(0, 0, 0, 3, 3) = 1;
  auto out = lift_conv(f, layer);
  for (std::size_t h = 0; h < 4; ++h) {
    auto psi_h = transform_filter(g, h, layer.filter);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b)
        EXPECT_EQ(out(0, 0, h, 2 + a, 2 + b), psi_h(0, 0, 0, 2 - a, 2 - b));
  }
}

TEST(GConv, RotationEquivariance) {
  Rng rng(3);
  for (GroupName name : {GroupName::C2, GroupName::C4, GroupName::D4}) {
    const FiniteGroup g(name);
    for (std::size_t n : {8u, 9u}) {
      auto lift = random_layer(name, 3, 2, 1, 3, rng);
      auto gc = random_layer(name, 2, 3, g.order(), 5, rng);
      auto f = random_uniform<double>({2, 2, 1, n, n}, rng);
      for (std::size_t h = 0; h < g.order(); ++h) {
        auto a = group_conv(lift_conv(transform_feature(g, h, f), lift), gc);
        auto b = transform_feature(g, h, group_conv(lift_conv(f, lift), gc));
        EXPECT_LE(max_abs_diff(a, b), 1e-10) << to_string(name) << " h=" << h;
      }
    }
  }
}

TEST(GConv, TranslationEquivarianceInterior) {
  Rng rng(4);
  const FiniteGroup g(GroupName::D4);
  auto lift = random_layer(GroupName::D4, 2, 1, 1, 3, rng);
  auto gc = random_layer(GroupName::D4, 2, 2, 8, 3, rng);
  Tensor<double> f({1, 1, 1, 14, 14});
  auto inner = random_uniform<double>({1, 1, 1, 6, 6}, rng);
  f = ops::pad_zero(inner, 4);
  for (auto [dy, dx] : std::vector<std::pair<long, long>>{{1, 0}, {0, -2}, {-3, 2}}) {
    auto a = group_conv(lift_conv(translate(f, dy, dx), lift), gc);
    auto b = translate(group_conv(lift_conv(f, lift), gc), dy, dx);
    EXPECT_LE(max_abs_diff(ops::crop(a, 4), ops::crop(b, 4)), 1e-12);
  }
}

TEST(GConv, MatchesDirectGroupSum) {
  Rng rng(5);
  for (GroupName name : {GroupName::C4, GroupName::D4}) {
    const FiniteGroup g(name);
    for (std::size_t n : {3u, 4u, 5u, 6u})
      for (std::size_t c : {1u, 2u})
        for (std::size_t hin : {std::size_t{1}, g.order()}) {
          auto layer = random_layer(name, 2, c, hin, 3, rng, false);
          auto f = random_uniform<double>({1, c, hin, n, n}, rng);
          EXPECT_LE(max_abs_diff(apply(f, layer), oracle::group_conv_direct(g, f, layer.filter)), 1e-12)
              << to_string(name) << " n=" << n << " c=" << c << " hin=" << hin;
        }
  }
}

TEST(GConv, ResponsesSumToGroupConvBitwise) {
  Rng rng(6);
  for (GroupName name : {GroupName::C1, GroupName::C4, GroupName::D4}) {
    const FiniteGroup g(name);
    auto layer = random_layer(name, 3, 2, g.order(), 3, rng, false);
    auto f = random_uniform<double>({2, 2, g.order(), 6, 6}, rng);
    auto ft = intermediate_responses(f, layer);
    ASSERT_EQ(ft.shape(), (Shape{2, 3, 2, g.order(), g.order(), 6, 6}));
    EXPECT_EQ(ops::reduce(ft, {2, 4}, ops::ReduceMode::sum), group_conv(f, layer));
  }
}

TEST(GConv, ResponsesTrivialGroupMatchConv2d) {
  Rng rng(7);
  auto layer = random_layer(GroupName::C1, 1, 1, 1, 3, rng, false);
  auto f = random_uniform<double>({1, 1, 1, 5, 5}, rng);
  auto ft = intermediate_responses(f, layer);
  EXPECT_EQ(ft.rank(), 7u);
  EXPECT_EQ(ft.reshaped({1, 1, 5, 5}), ops::conv2d(f.reshaped({1, 1, 5, 5}), layer.filter.reshaped({1, 1, 3, 3})));
}

TEST(GConv, ResponsesPermuteJointlyUnderRotation) {
  Rng rng(8);
  for (GroupName name : {GroupName::C4, GroupName::D4}) {
    const FiniteGroup g(name);
    auto layer = random_layer(name, 2, 2, g.order(), 3, rng, false);
    auto f = random_uniform<double>({1, 2, g.order(), 6, 6}, rng);
    auto ft = intermediate_responses(f, layer);
    for (std::size_t h = 0; h < g.order(); ++h) {
      auto got = intermediate_responses(transform_feature(g, h, f), layer);
      EXPECT_LE(max_abs_diff(got, oracle::relabel(g, h, ft, {3, 4}, true)), 1e-12);
    }
  }
}

TEST(GConv, ResponseMemoryCap) {
  Rng rng(9);
  auto layer = random_layer(GroupName::C4, 4, 4, 4, 3, rng, false);
  auto f = random_uniform<double>({1, 4, 4, 8, 8}, rng);
  try {
    intermediate_responses(f, layer, 1000);
    FAIL() << "expected the memory cap to trigger";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("memory"), std::string::npos);
  }
}

TEST(GConv, GroupPool) {
  Rng rng(10);
  const FiniteGroup g(GroupName::C4);
  auto f = random_uniform<double>({1, 2, 4, 6, 6}, rng);
  auto pooled = group_pool(f, PoolMode::max);
  ASSERT_EQ(pooled.shape(), (Shape{1, 2, 6, 6}));
  auto rotated = group_pool(transform_feature(g, 1, f), PoolMode::max);
  auto expect = transform_feature(g, 1, pooled.reshaped({1, 2, 1, 6, 6})).reshaped({1, 2, 6, 6});
  EXPECT_EQ(rotated, expect);
  Tensor<double> constant({1, 1, 4, 3, 3}, 0.75);
  EXPECT_EQ(group_pool(constant, PoolMode::mean), Tensor<double>({1, 1, 3, 3}, 0.75));
  auto planar = random_uniform<double>({1, 2, 1, 3, 3}, rng);
  EXPECT_EQ(group_pool(planar, PoolMode::max), planar.reshaped({1, 2, 3, 3}));
  EXPECT_EQ(spatial_gpool(f).shape(), (Shape{1, 2, 4}));
}

TEST(GConv, PerPoseBiasBreaksEquivariance) {
  Rng rng(11);
  const FiniteGroup g(GroupName::C4);
  auto layer = random_layer(GroupName::C4, 2, 1, 1, 3, rng);
  layer.bias = random_uniform<double>({2, 4}, rng);
  auto f = random_uniform<double>({1, 1, 1, 6, 6}, rng);
  auto a = lift_conv(transform_feature(g, 1, f), layer);
  auto b = transform_feature(g, 1, lift_conv(f, layer));
  EXPECT_GT(max_abs_diff(a, b), 1e-3);
}

TEST(GConv, Errors) {
  Rng rng(12);
  auto layer = random_layer(GroupName::C4, 2, 1, 4, 3, rng);
  EXPECT_THROW(group_conv(random_uniform<double>({1, 1, 2, 5, 5}, rng), layer), Error);
  EXPECT_THROW(lift_conv(random_uniform<double>({1, 1, 4, 5, 5}, rng), layer), Error);
}

TEST(GConv, CostScalesWithGroupOrder) {
  using clock = std::chrono::steady_clock;
  auto median_seconds = [](auto&& fn) {
    std::vector<double> t;
    for (int rep = 0; rep < 5; ++rep) {
      const auto start = clock::now();
      fn();
      t.push_back(std::chrono::duration<double>(clock::now() - start).count());
    }
    std::sort(t.begin(), t.end());
    return t[2];
  };
  for (GroupName name : {GroupName::C4, GroupName::D4}) {
    Rng rng(12);
    const std::size_t order = FiniteGroup(name).order();
    auto layer = random_layer(name, 8, 8, order, 3, rng, false);
    const auto f = random_uniform<double>({2, 8, order, 24, 24}, rng);
    const auto planar = f.reshaped({2, 8 * order, 24, 24});
    const auto single = layer.filter.reshaped({8, 8 * order, 3, 3});
    const double g = median_seconds([&] { return group_conv(f, layer); });
    const double c = median_seconds([&] { return ops::conv2d(planar, single); });
    const double ratio = g / c;
    std::cout << to_string(name) << " group_conv / conv2d time ratio " << ratio << " (|H| = " << order << ")\n";
    EXPECT_GE(ratio, 0.5 * double(order));
    EXPECT_LE(ratio, 2.0 * double(order));
  }
}
