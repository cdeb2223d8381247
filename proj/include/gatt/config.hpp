#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gatt/attention.hpp"
#include "gatt/group.hpp"
#include "gatt/tensor.hpp"

namespace gatt {

/// Run configuration read from key=value text. Defaults follow the reference
/// training regime; every key below may appear at most once per file.
struct RunConfig {
  GroupName group = GroupName::C4;
  Variant variant = Variant::plain;
  std::size_t filter_size = 3;
  std::size_t attention_kernel = 7;
  std::size_t reduction_ratio = 2;
  double lr = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch = 128;
  std::uint64_t seed = 0;
  DType dtype = DType::f64;
  bool residual_branch = true;
  bool pool_out_channels = true;

  std::string optimizer = "adam";
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double dropout = 0.3;
  std::size_t lr_decay_every = 0;
  double lr_decay_factor = 0.1;
  bool batch_norm = true;
  std::size_t channels = 8;
  std::size_t layers = 2;

  std::string dataset = "synth_shapes";
  std::size_t n_train = 10000;
  std::size_t n_val = 2000;
  std::size_t n_test = 50000;
  bool normalize = false;

  std::size_t depth = 3;
  std::size_t trials = 5;
  double tolerance = 1e-10;
  std::size_t input_size = 32;
  std::size_t crop = 4;
};

/// Keys accepted by parse_config, in documentation order.
const std::vector<std::string>& config_keys();

/// '#' starts a comment; blank lines are ignored. Unknown or repeated keys and
/// malformed values raise ConfigError naming `origin` and the line number.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::string& path);
/// Applies a single key=value assignment (as from the command line).
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
/// Text that parse_config maps back to `cfg`.
std::string config_text(const RunConfig& cfg);

}  // namespace gatt
