#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "gatt/harness.hpp"

using namespace gatt;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string dtype, group, variant, out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key=value configuration file");
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--dtype", c.dtype, "f32 or f64");
  cmd->add_option("--group", c.group, "c1, c2, p4 or p4m");
  cmd->add_option("--variant", c.variant, "plain, full, channel, spatial or input");
  cmd->add_option("--out", c.out, "directory for reports and emitted files");
  cmd->add_option("--set", c.overrides, "extra key=value overrides")->take_all();
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.dtype.empty()) set_config_value(cfg, "dtype", c.dtype);
  if (!c.group.empty()) set_config_value(cfg, "group", c.group);
  if (!c.variant.empty()) set_config_value(cfg, "variant", c.variant);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

harness::Breaker parse_breaker(const std::string& s) {
  if (s == "none") return harness::Breaker::none;
  if (s == "per_h_bias") return harness::Breaker::per_h_bias;
  if (s == "absolute_w_index") return harness::Breaker::absolute_w_index;
  throw ConfigError("unknown breaker '" + s + "' (none, per_h_bias, absolute_w_index)");
}

int finish(const harness::Report& r, const std::string& out) {
  std::cout << r.text();
  r.write(out);
  return r.pass() ? harness::kPass : harness::kPropertyFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attentive group equivariant convolutions: verification and training harness"};
  app.require_subcommand(1);
  Common common;
  std::string breaker = "none";
  double min_accuracy = 0.0, tolerance = 1e-4;
  std::string checkpoint, image;
  std::size_t layer = 0;

  auto* eq = app.add_subcommand("check-equivariance", "rotation and translation equivariance of random stacks");
  auto* thm1 = app.add_subcommand("thm1-oracle", "attention maps of f and L_g f under the relabelling law");
  auto* parity = app.add_subcommand("parity-demo", "stride-2 versus stride-1 + max-pool equivariance error");
  auto* grad = app.add_subcommand("gradcheck", "backward versus central differences on micro-nets");
  auto* train = app.add_subcommand("train", "train a classifier and write a log and checkpoint");
  auto* attend = app.add_subcommand("attend", "dump attention maps of a checkpoint for rotated inputs");
  auto* negative = app.add_subcommand("negative-control", "confirm the verifiers catch known breakers");
  for (auto* cmd : {eq, thm1, parity, grad, train, attend, negative}) add_common(cmd, common);
  for (auto* cmd : {eq, thm1}) cmd->add_option("--break", breaker, "none, per_h_bias or absolute_w_index");
  train->add_option("--min-accuracy", min_accuracy, "test accuracy required to pass");
  attend->add_option("--checkpoint", checkpoint, "checkpoint written by train")->required();
  attend->add_option("--image", image, "P5 image (default: a synthetic shape)");
  attend->add_option("--layer", layer, "conv layer index, counting from 0");
  attend->add_option("--tolerance", tolerance, "allowed map discrepancy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : harness::kUsageError;
  }

  try {
    if (attend->parsed()) return finish(harness::attend(checkpoint, image, layer, common.out, tolerance), "");
    const RunConfig cfg = resolve(common);
    if (eq->parsed()) return finish(harness::check_equivariance(cfg, parse_breaker(breaker)).to_report(), common.out);
    if (thm1->parsed()) return finish(harness::thm1_oracle(cfg, parse_breaker(breaker)), common.out);
    if (parity->parsed()) return finish(harness::parity_demo(cfg, common.out), common.out);
    if (grad->parsed()) return finish(harness::gradcheck(cfg), common.out);
    if (negative->parsed()) return finish(harness::negative_control(cfg), common.out);
    if (train->parsed()) return finish(harness::train(cfg, common.out, min_accuracy, true).report, common.out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return harness::kUsageError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return harness::kUsageError;
  }
  return harness::kUsageError;
}
