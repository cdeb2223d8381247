#include <gtest/gtest.h>

#include "gatt/group.hpp"
#include "gatt/ops.hpp"
#include "gatt/random.hpp"
#include "gatt/transform.hpp"
#include "oracles.hpp"

using namespace gatt;

namespace {

const GroupName kAll[] = {GroupName::C1, GroupName::C2, GroupName::C4, GroupName::D4};

}  // namespace

TEST(FiniteGroup, TableAxioms) {
  for (GroupName name : kAll) {
    const FiniteGroup g(name);
    const std::size_t n = g.order();
    for (std::size_t h = 0; h < n; ++h) {
      EXPECT_EQ(g.product(0, h), h);
      EXPECT_EQ(g.product(h, 0), h);
      EXPECT_EQ(g.product(h, g.inverse(h)), 0u);
      EXPECT_EQ(std::abs(g.action(h).det()), 1);
      EXPECT_EQ(g.is_reflection(h), g.action(h).det() < 0);
    }
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) {
        EXPECT_EQ(g.action(g.product(a, b)), g.action(a) * g.action(b));
        for (std::size_t c = 0; c < n; ++c)
          EXPECT_EQ(g.product(g.product(a, b), c), g.product(a, g.product(b, c)));
      }
  }
}

TEST(FiniteGroup, Orders) {
  EXPECT_EQ(make_group(GroupName::C1).order(), 1u);
  EXPECT_EQ(make_group(GroupName::C2).order(), 2u);
  EXPECT_EQ(make_group(GroupName::C4).order(), 4u);
  EXPECT_EQ(make_group(GroupName::D4).order(), 8u);
  EXPECT_EQ(make_group(GroupName::C4).product(1, 1), 2u);
}

TEST(FiniteGroup, MirrorProductsAreRotations) {
  const FiniteGroup g(GroupName::D4);
  for (std::size_t a = 4; a < 8; ++a) {
    EXPECT_TRUE(g.is_reflection(a));
    EXPECT_EQ(g.product(a, a), 0u);
    for (std::size_t b = 4; b < 8; ++b) EXPECT_FALSE(g.is_reflection(g.product(a, b)));
  }
}

TEST(FiniteGroup, ParseNames) {
  EXPECT_EQ(parse_group_name("p4"), GroupName::C4);
  EXPECT_EQ(parse_group_name("P4M"), GroupName::D4);
  EXPECT_EQ(parse_group_name("z2"), GroupName::C1);
  EXPECT_THROW(parse_group_name("c8"), ConfigError);
}

TEST(AffineGroup, ComposeExamples) {
  const FiniteGroup g(GroupName::C4);
  const AffineElement a{{1, 0}, 1}, b{{0, 1}, 1};
  EXPECT_EQ(compose_affine(g, a, b), (AffineElement{{0, 0}, 2}));
  EXPECT_EQ(invert_affine(g, a), (AffineElement{{0, 1}, 3}));
  EXPECT_EQ(compose_affine(g, AffineElement{}, a), a);
}

TEST(AffineGroup, InverseAxiomRandom) {
  Rng rng(3);
  for (GroupName name : kAll) {
    const FiniteGroup g(name);
    for (int t = 0; t < 50; ++t) {
      const AffineElement e{{long(rng.below(21)) - 10, long(rng.below(21)) - 10}, rng.below(g.order())};
      EXPECT_EQ(compose_affine(g, e, invert_affine(g, e)), AffineElement{});
      EXPECT_EQ(compose_affine(g, invert_affine(g, e), e), AffineElement{});
    }
  }
}

TEST(Transform, RotatesTwoByTwo) {
  const FiniteGroup g(GroupName::C4);
  Tensor<double> f({1, 1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  auto r = transform_feature(g, 1, f);
  EXPECT_EQ(r.storage(), (std::vector<double>{2, 4, 1, 3}));
}

TEST(Transform, FilterCornerMovesToBottomLeft) {
  const FiniteGroup g(GroupName::C4);
  Tensor<double> psi({1, 1, 1, 3, 3});
  psi(0, 0, 0, 0, 0) = 1;
  auto r = transform_filter(g, 1, psi);
  EXPECT_EQ(r(0, 0, 0, 2, 0), 1.0);
  EXPECT_EQ(ops::reduce(r, {0, 1, 2, 3, 4}, ops::ReduceMode::sum)[0], 1.0);
}

TEST(Transform, EvenFilterRejected) {
  const FiniteGroup g(GroupName::C4);
  EXPECT_THROW(transform_filter(g, 1, Tensor<double>({1, 1, 1, 4, 4})), Error);
  EXPECT_THROW(transform_feature(g, 1, Tensor<double>({1, 1, 1, 4, 5})), Error);
}

TEST(Transform, SymmetrisedFilterIsInvariant) {
  const FiniteGroup g(GroupName::C4);
  Rng rng(11);
  auto psi = random_uniform<double>({1, 1, 1, 5, 5}, rng);
  Tensor<double> sym({1, 1, 1, 5, 5});
  for (std::size_t h = 0; h < 4; ++h) sym = ops::add(sym, transform_filter(g, h, psi));
  for (std::size_t h = 0; h < 4; ++h) EXPECT_LE(max_abs_diff(transform_filter(g, h, sym), sym), 1e-15);
}

TEST(Transform, RepresentationPropertyBitwise) {
  Rng rng(5);
  for (GroupName name : kAll) {
    const FiniteGroup g(name);
    for (std::size_t n : {4u, 5u}) {
      auto f = random_uniform<double>({2, 3, g.order(), n, n}, rng);
      for (std::size_t a = 0; a < g.order(); ++a)
        for (std::size_t b = 0; b < g.order(); ++b)
          EXPECT_EQ(transform_feature(g, a, transform_feature(g, b, f)), transform_feature(g, g.product(a, b), f));
      for (std::size_t a = 0; a < g.order(); ++a) {
        auto t = transform_feature(g, a, f);
        auto x = t.storage(), y = f.storage();
        std::sort(x.begin(), x.end());
        std::sort(y.begin(), y.end());
        EXPECT_EQ(x, y);
        EXPECT_EQ(transform_feature(g, g.inverse(a), t), f);
      }
    }
  }
}

TEST(Transform, MatchesRealRotationOracle) {
  Rng rng(9);
  for (GroupName name : kAll) {
    const FiniteGroup g(name);
    for (std::size_t n : {2u, 3u, 6u, 7u}) {
      auto f = random_uniform<double>({1, 1, 1, n, n}, rng);
      for (std::size_t h = 0; h < g.order(); ++h) {
        auto got = transform_feature(g, h, f);
        auto want = oracle::rotate_plane(name, h, f.storage(), n);
        EXPECT_EQ(got.storage(), want) << to_string(name) << " h=" << h << " n=" << n;
      }
    }
  }
}

TEST(Transform, TranslateShiftsWithZeroFill) {
  Tensor<double> t({1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto s = translate(t, 1, -1);
  EXPECT_EQ(s.storage(), (std::vector<double>{0, 0, 0, 2, 3, 0, 5, 6, 0}));
}
