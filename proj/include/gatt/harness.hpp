#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gatt/config.hpp"

// Verification and training commands behind the `gatt` executable. Every
// command is a deterministic function of its configuration and returns a
// line-oriented key=value report.
namespace gatt::harness {

enum ExitCode { kPass = 0, kPropertyFailure = 1, kUsageError = 2 };

class Report {
 public:
  explicit Report(std::string command) : command_(std::move(command)) {}

  template <class V>
  void set(const std::string& key, const V& value) {
    entries_.emplace_back(key, format(value));
  }
  void fail() { pass_ = false; }
  void require(bool ok) { pass_ = pass_ && ok; }

  bool pass() const { return pass_; }
  const std::string& command() const { return command_; }
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  /// Value of the last entry with this key.
  std::optional<std::string> get(const std::string& key) const;
  double number(const std::string& key) const;

  std::string text() const;
  /// Writes text() to DIR/<command>.txt.
  void write(const std::string& dir) const;

 private:
  static std::string format(const std::string& v) { return v; }
  static std::string format(const char* v) { return v; }
  static std::string format(bool v) { return v ? "true" : "false"; }
  static std::string format(double v);
  template <class V>
  static std::string format(const V& v) {
    return std::to_string(v);
  }

  std::string command_;
  bool pass_ = true;
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Deliberate equivariance breakers used as negative controls.
enum class Breaker { none, per_h_bias, absolute_w_index };
std::string to_string(Breaker b);

struct EquivarianceReport {
  std::vector<double> max_error;   // per group element, rotations
  std::vector<double> mean_error;  // per group element, rotations
  double translation_error = 0;    // worst over the translation set
  std::size_t crop = 0;
  DType dtype = DType::f64;
  double tolerance = 0;
  bool pass = false;

  Report to_report() const;
};

/// Random-weight stacks (cfg.depth conv layers of cfg.variant, cfg.trials seeds)
/// compared under every h in H and a fixed set of integer translations.
EquivarianceReport check_equivariance(const RunConfig& cfg, Breaker breaker = Breaker::none);

/// Attention maps of f and L_g f compared under the relabelling
/// (h, h~, x) -> (hb^-1 h, hb^-1 h~, hb^-1 (x - xb)) at every layer.
Report thm1_oracle(const RunConfig& cfg, Breaker breaker = Breaker::none);

/// Stride-2 versus stride-1 + max-pool C4 nets on cfg.input_size inputs;
/// emits maps to `out_dir` when non-empty.
Report parity_demo(const RunConfig& cfg, const std::string& out_dir = "");

/// Backward versus central differences on micro-nets covering every layer kind.
Report gradcheck(const RunConfig& cfg);

struct TrainResult {
  Report report{"train"};
  std::vector<std::string> log;
  double final_loss = 0;
  double test_accuracy = 0;
  std::size_t parameters = 0;
  double seconds = 0;
};

/// Trains the classifier of classifier_spec on cfg.dataset. Writes train.log and
/// model.gatt to `out_dir` when non-empty. `min_accuracy` sets the pass bar.
TrainResult train(const RunConfig& cfg, const std::string& out_dir = "", double min_accuracy = 0.0,
                  bool verbose = false);

/// Attention maps of a checkpointed net for an image and its transforms under H.
/// `image_path` may be empty (a synthetic shape is used); `conv_index` counts
/// conv layers from zero.
Report attend(const std::string& checkpoint_path, const std::string& image_path, std::size_t conv_index,
              const std::string& out_dir, double tolerance = 1e-4);

/// Runs every breaker against the verifiers; passes iff each one is caught.
Report negative_control(const RunConfig& cfg);

}  // namespace gatt::harness
