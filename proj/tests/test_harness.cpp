#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "gatt/harness.hpp"
#include "gatt/io.hpp"
#include "gatt/network.hpp"
#include "gatt/transform.hpp"

using namespace gatt;
namespace fs = std::filesystem;

namespace {

RunConfig small_check(GroupName g, Variant v) {
  RunConfig c;
  c.group = g;
  c.variant = v;
  c.channels = 2;
  c.input_size = 17;
  c.trials = 1;
  c.depth = 2;
  return c;
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(GATT_BINARY) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Network, ClassifierShapesAndParameterCount) {
  RunConfig cfg;
  cfg.channels = 4;
  cfg.layers = 2;
  cfg.batch_norm = false;
  cfg.dropout = 0;
  Model<double> m(classifier_spec(cfg, 1, 16, 4));
  const auto& s = m.layer_shapes();
  EXPECT_EQ(s.front(), (Shape{4, 4, 16, 16}));
  EXPECT_EQ(s[2], (Shape{4, 4, 8, 8}));
  EXPECT_EQ(s.back(), (Shape{4}));
  // lift 4*1*1*9 + 4, gconv 4*4*4*9 + 4, head 4*4 + 4
  EXPECT_EQ(m.parameter_count(), 36u + 4 + 576 + 4 + 16 + 4);
}

TEST(Network, AttentionParameterShapes) {
  RunConfig cfg;
  cfg.channels = 4;
  cfg.variant = Variant::full;
  cfg.reduction_ratio = 2;
  Model<double> m(classifier_spec(cfg, 1, 16, 4));
  EXPECT_EQ(m.params().at("layer4.w1").value.shape(), (Shape{4, 2, 4}));
  EXPECT_EQ(m.params().at("layer4.w2").value.shape(), (Shape{4, 4, 2}));
  EXPECT_EQ(m.params().at("layer4.psi_x").value.shape(), (Shape{1, 2, 4, 7, 7}));
  EXPECT_EQ(m.params().at("layer0.w1").value.shape(), (Shape{1, 1, 1}));
  EXPECT_FALSE(m.params().at("layer1.running_mean").trainable);
}

TEST(Network, RejectsMalformedStacks) {
  NetworkSpec s;
  LayerSpec head;
  head.kind = LayerKind::linear;
  head.channels = 3;
  s.layers = {head};
  EXPECT_THROW(Model<double>{s}, Error);
  LayerSpec conv;
  conv.kind = LayerKind::conv;
  conv.channels = 2;
  conv.kernel = 4;
  s.layers = {conv};
  EXPECT_THROW(Model<double>{s}, Error);
}

TEST(Network, LogitsInvariantUnderInputTransforms) {
  for (GroupName g : {GroupName::C4, GroupName::D4})
    for (Variant v : {Variant::plain, Variant::channel, Variant::spatial, Variant::full, Variant::input}) {
      RunConfig cfg;
      cfg.group = g;
      cfg.variant = v;
      cfg.channels = 3;
      cfg.layers = 3;
      Model<double> m(classifier_spec(cfg, 1, 12, 4));
      m.initialize(5, true);
      Rng rng(8);
      const auto x = random_uniform<double>({2, 1, 1, 12, 12}, rng);
      const FiniteGroup grp(g);
      const auto y = m.forward(nullptr, x, false).value();
      for (std::size_t h = 0; h < grp.order(); ++h) {
        const auto yh = m.forward(nullptr, transform_feature(grp, h, x), false).value();
        EXPECT_LE(max_abs_diff(y, yh), 1e-8) << to_string(g) << " " << to_string(v) << " h=" << h;
      }
    }
}

TEST(Network, StridedAttentionMapsLoseExactness) {
  NetworkSpec s;
  s.group = GroupName::C4;
  s.in_size = 32;
  LayerSpec conv;
  conv.kind = LayerKind::conv;
  conv.channels = 3;
  conv.variant = Variant::full;
  conv.conv.stride = 2;
  s.layers = {conv};
  Model<double> m(s);
  m.initialize(3, true);
  Rng rng(4);
  const auto x = random_uniform<double>({1, 1, 1, 32, 32}, rng);
  const FiniteGroup grp(GroupName::C4);
  std::vector<LayerTrace<double>> a, b;
  m.forward(nullptr, x, false, nullptr, &a);
  m.forward(nullptr, transform_feature(grp, 1, x), false, nullptr, &b);
  const auto expect = apply_action(grp, 1, a[0].alpha_x, {2, 3}, true);
  EXPECT_GT(max_abs_diff(b[0].alpha_x, expect), 1e-3);
}

TEST(Harness, TrivialGroupIsExact) {
  auto c = small_check(GroupName::C1, Variant::full);
  c.tolerance = 1e-12;
  EXPECT_TRUE(harness::check_equivariance(c).pass);
}

TEST(Harness, EquivarianceOfAttentiveStacks) {
  for (GroupName g : {GroupName::C2, GroupName::C4, GroupName::D4})
    for (Variant v : {Variant::plain, Variant::full, Variant::input}) {
      const auto rep = harness::check_equivariance(small_check(g, v));
      EXPECT_TRUE(rep.pass) << rep.to_report().text();
      EXPECT_EQ(rep.max_error.size(), FiniteGroup(g).order());
    }
}

TEST(Harness, BreakersAreDetected) {
  const auto c = small_check(GroupName::C4, Variant::full);
  EXPECT_FALSE(harness::check_equivariance(c, harness::Breaker::per_h_bias).pass);
  EXPECT_FALSE(harness::check_equivariance(c, harness::Breaker::absolute_w_index).pass);
  EXPECT_TRUE(harness::thm1_oracle(c).pass());
  EXPECT_FALSE(harness::thm1_oracle(c, harness::Breaker::per_h_bias).pass());
  EXPECT_FALSE(harness::thm1_oracle(c, harness::Breaker::absolute_w_index).pass());
  EXPECT_TRUE(harness::negative_control(c).pass());
}

TEST(Harness, ParityDemo) {
  RunConfig c;
  c.dtype = DType::f32;
  c.input_size = 32;
  const auto even = harness::parity_demo(c);
  EXPECT_TRUE(even.pass()) << even.text();
  EXPECT_GE(even.number("error_stride2"), 100 * even.number("error_stride1_pool"));
  c.input_size = 33;
  const auto odd = harness::parity_demo(c);
  EXPECT_TRUE(odd.pass()) << odd.text();
  EXPECT_LE(odd.number("error_stride2"), 1e-6);
}

TEST(Harness, Gradcheck) {
  RunConfig c;
  c.group = GroupName::D4;
  const auto r = harness::gradcheck(c);
  EXPECT_TRUE(r.pass()) << r.text();
}

TEST(Harness, TrainingIsDeterministic) {
  RunConfig c;
  c.variant = Variant::input;
  c.dtype = DType::f32;
  c.channels = 4;
  c.n_train = 64;
  c.n_val = 0;
  c.n_test = 32;
  c.epochs = 2;
  c.batch = 16;
  const auto a = harness::train(c), b = harness::train(c);
  EXPECT_EQ(a.final_loss, b.final_loss);
  EXPECT_EQ(a.report.get("final_train_loss"), b.report.get("final_train_loss"));
  c.seed = 1;
  EXPECT_NE(harness::train(c).final_loss, a.final_loss);
}

TEST(Harness, ZeroLearningRateStaysAtChance) {
  RunConfig c;
  c.variant = Variant::input;
  c.dtype = DType::f32;
  c.channels = 4;
  c.lr = 0;
  c.weight_decay = 0;
  c.n_train = 128;
  c.n_val = 0;
  c.n_test = 400;
  c.epochs = 1;
  c.batch = 32;
  const auto r = harness::train(c);
  EXPECT_NEAR(r.test_accuracy, 0.25, 0.05);
}

TEST(Harness, AttendOnUntrainedConstantImage) {
  const fs::path dir = fs::temp_directory_path() / "gatt_test_attend";
  fs::create_directories(dir);
  RunConfig c;
  c.variant = Variant::input;
  c.dtype = DType::f32;
  Model<float> m(classifier_spec(c, 1, 16, 4));
  m.initialize(2);
  io::save_checkpoint(io::make_checkpoint<float>(config_text(c), m.params(), nullptr), (dir / "m.gatt").string());
  io::write_pgm(Tensor<double>({16, 16}, 0.6), (dir / "flat.pgm").string());
  const auto r = harness::attend((dir / "m.gatt").string(), (dir / "flat.pgm").string(), 0, (dir / "maps").string());
  EXPECT_TRUE(r.pass()) << r.text();
  EXPECT_TRUE(fs::exists(dir / "maps" / "attend_layer0_h3.pgm"));

  std::vector<LayerTrace<float>> trace;
  m.forward(nullptr, Tensor<float>({1, 1, 16, 16}, 0.6f), false, nullptr, &trace);
  const Tensor<float> inner = ops::crop(trace[0].alpha_x, 4);
  const auto [lo, hi] = std::minmax_element(inner.data().begin(), inner.data().end());
  EXPECT_LE(*hi - *lo, 1e-6f);

  c.variant = Variant::plain;
  Model<float> p(classifier_spec(c, 1, 16, 4));
  io::save_checkpoint(io::make_checkpoint<float>(config_text(c), p.params(), nullptr), (dir / "p.gatt").string());
  EXPECT_THROW(harness::attend((dir / "p.gatt").string(), "", 0, ""), ConfigError);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("gradcheck --group c2"), 0);
  EXPECT_EQ(run_cli("check-equivariance --set input_size=17 channels=2 trials=1 depth=1 --break per_h_bias"), 1);
  EXPECT_EQ(run_cli("check-equivariance --group p6"), 2);
  EXPECT_EQ(run_cli("check-equivariance --set bogus=1"), 2);
  EXPECT_EQ(run_cli("no-such-command"), 2);
  EXPECT_EQ(run_cli("check-equivariance --config /nonexistent.cfg"), 2);
  EXPECT_EQ(run_cli("attend --checkpoint /nonexistent.gatt"), 2);
}
