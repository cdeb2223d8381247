#include "gatt/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace gatt {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("invalid value '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("invalid boolean '" + v + "' for " + key);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class N>
Field size_field(std::string key, N RunConfig::*member) {
  return {key, [key, member](RunConfig& c, const std::string& v) { c.*member = parse_number<N>(key, v); },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field real_field(std::string key, double RunConfig::*member) {
  return {key, [key, member](RunConfig& c, const std::string& v) { c.*member = parse_number<double>(key, v); },
          [member](const RunConfig& c) { return fmt_double(c.*member); }};
}

Field bool_field(std::string key, bool RunConfig::*member) {
  return {key, [key, member](RunConfig& c, const std::string& v) { c.*member = parse_bool(key, v); },
          [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"group",
       [](RunConfig& c, const std::string& v) {
         try {
           c.group = parse_group_name(v);
         } catch (const Error& e) {
           throw ConfigError(e.what());
         }
       },
       [](const RunConfig& c) { return to_string(c.group); }},
      {"variant",
       [](RunConfig& c, const std::string& v) {
         try {
           c.variant = parse_variant(v);
         } catch (const Error& e) {
           throw ConfigError(e.what());
         }
       },
       [](const RunConfig& c) { return to_string(c.variant); }},
      size_field("filter_size", &RunConfig::filter_size),
      size_field("reduction_ratio", &RunConfig::reduction_ratio),
      real_field("lr", &RunConfig::lr),
      size_field("epochs", &RunConfig::epochs),
      size_field("batch", &RunConfig::batch),
      size_field("seed", &RunConfig::seed),
      {"dtype",
       [](RunConfig& c, const std::string& v) {
         try {
           c.dtype = parse_dtype(v);
         } catch (const Error& e) {
           throw ConfigError(e.what());
         }
       },
       [](const RunConfig& c) { return to_string(c.dtype); }},
      bool_field("residual_branch", &RunConfig::residual_branch),
      bool_field("pool_out_channels", &RunConfig::pool_out_channels),
      size_field("attention_kernel", &RunConfig::attention_kernel),
      {"optimizer",
       [](RunConfig& c, const std::string& v) {
         if (v != "adam" && v != "sgd") throw ConfigError("optimizer must be adam or sgd, got '" + v + "'");
         c.optimizer = v;
       },
       [](const RunConfig& c) { return c.optimizer; }},
      real_field("momentum", &RunConfig::momentum),
      real_field("weight_decay", &RunConfig::weight_decay),
      real_field("dropout", &RunConfig::dropout),
      size_field("lr_decay_every", &RunConfig::lr_decay_every),
      real_field("lr_decay_factor", &RunConfig::lr_decay_factor),
      bool_field("batch_norm", &RunConfig::batch_norm),
      size_field("channels", &RunConfig::channels),
      size_field("layers", &RunConfig::layers),
      {"dataset",
       [](RunConfig& c, const std::string& v) {
         if (v != "synth_shapes" && v != "rotmnist")
           throw ConfigError("dataset must be synth_shapes or rotmnist, got '" + v + "'");
         c.dataset = v;
       },
       [](const RunConfig& c) { return c.dataset; }},
      size_field("n_train", &RunConfig::n_train),
      size_field("n_val", &RunConfig::n_val),
      size_field("n_test", &RunConfig::n_test),
      bool_field("normalize", &RunConfig::normalize),
      size_field("depth", &RunConfig::depth),
      size_field("trials", &RunConfig::trials),
      real_field("tolerance", &RunConfig::tolerance),
      size_field("input_size", &RunConfig::input_size),
      size_field("crop", &RunConfig::crop),
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return &f;
  return nullptr;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown key '" + key + "'");
  f->set(cfg, value);
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const std::string where = origin + ":" + std::to_string(number) + ": ";
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(where + "expected key=value");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(cfg) + "\n";
  return out;
}

}  // namespace gatt
