#include "gatt/harness.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gatt/datasets.hpp"
#include "gatt/io.hpp"
#include "gatt/network.hpp"
#include "gatt/transform.hpp"

namespace gatt::harness {
namespace fs = std::filesystem;

std::string Report::format(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::optional<std::string> Report::get(const std::string& key) const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
    if (it->first == key) return it->second;
  return std::nullopt;
}

double Report::number(const std::string& key) const {
  const auto v = get(key);
  GATT_CHECK(v.has_value(), "report '" + command_ + "' has no key '" + key + "'");
  return std::stod(*v);
}

std::string Report::text() const {
  std::string out = "command=" + command_ + "\n";
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  out += std::string("result=") + (pass_ ? "pass" : "fail") + "\n";
  return out;
}

void Report::write(const std::string& dir) const {
  if (dir.empty()) return;
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / (command_ + ".txt"));
  if (!out) throw Error("cannot write report to '" + dir + "'");
  out << text();
}

std::string to_string(Breaker b) {
  switch (b) {
    case Breaker::none: return "none";
    case Breaker::per_h_bias: return "per_h_bias";
    case Breaker::absolute_w_index: return "absolute_w_index";
  }
  return "?";
}

Report EquivarianceReport::to_report() const {
  Report r("check-equivariance");
  double worst = 0;
  for (std::size_t h = 0; h < max_error.size(); ++h) {
    r.set("max_error_h" + std::to_string(h), max_error[h]);
    r.set("mean_error_h" + std::to_string(h), mean_error[h]);
    worst = std::max(worst, max_error[h]);
  }
  r.set("max_error", worst);
  r.set("translation_max_error", translation_error);
  r.set("crop", crop);
  r.set("dtype", to_string(dtype));
  r.set("tolerance", tolerance);
  r.require(pass);
  return r;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct DiffStats {
  double max = 0, sum = 0;
  std::size_t count = 0;

  void add(double d) {
    max = std::max(max, d);
    sum += d;
    ++count;
  }
  double mean() const { return count ? sum / double(count) : 0.0; }
};

template <class T>
void accumulate_diff(DiffStats& s, const Tensor<T>& a, const Tensor<T>& b, std::size_t crop) {
  GATT_CHECK(a.shape() == b.shape(), "compared tensors differ in shape: " + shape_string(a.shape()) + " vs " +
                                         shape_string(b.shape()));
  const Tensor<T> ca = crop > 0 ? ops::crop(a, crop) : a;
  const Tensor<T> cb = crop > 0 ? ops::crop(b, crop) : b;
  for (std::size_t i = 0; i < ca.size(); ++i) s.add(std::abs(double(ca[i]) - double(cb[i])));
}

/// Uniform [-1, 1] content with a zero border of width `margin`, [N, C, 1, S, S].
template <class T>
Tensor<T> random_input(Rng& rng, std::size_t n, std::size_t c, std::size_t size, std::size_t margin) {
  GATT_CHECK(size > 2 * margin, "input size " + std::to_string(size) + " leaves no interior for margin " +
                                    std::to_string(margin));
  Tensor<T> x({n, c, 1, size, size});
  for (std::size_t b = 0; b < n * c; ++b)
    for (std::size_t i = margin; i < size - margin; ++i)
      for (std::size_t j = margin; j < size - margin; ++j) x[(b * size + i) * size + j] = T(rng.uniform(-1.0, 1.0));
  return x;
}

template <class T>
Tensor<T> shift(const Tensor<T>& t, const Vec2i& x) {
  const auto rc = translation_rows_cols(x);
  return translate(t, rc[0], rc[1]);
}

/// L_(x, h) on an attention map; rank tells which layout it has.
template <class T>
Tensor<T> map_action(const FiniteGroup& grp, std::size_t h, const Vec2i& x, const Tensor<T>& alpha, bool spatial) {
  std::vector<std::size_t> axes;
  if (spatial) {
    axes = alpha.rank() == 6 ? std::vector<std::size_t>{2, 3} : std::vector<std::size_t>{2};
  } else {
    axes = alpha.rank() == 5 ? std::vector<std::size_t>{3, 4} : std::vector<std::size_t>{2};
  }
  Tensor<T> out = apply_action(grp, h, alpha, axes, spatial);
  if (spatial && (x[0] != 0 || x[1] != 0)) out = shift(out, x);
  return out;
}

const std::vector<Vec2i>& translation_set() {
  static const std::vector<Vec2i> set = {{1, 0}, {0, 2}, {-1, -1}, {2, -3}};
  return set;
}

std::size_t max_shift() {
  long m = 0;
  for (const auto& t : translation_set()) m = std::max({m, std::abs(t[0]), std::abs(t[1])});
  return std::size_t(m);
}

NetworkSpec broken(NetworkSpec spec, Breaker breaker) {
  if (breaker == Breaker::absolute_w_index) spec.attention.indexing = KernelIndexing::absolute;
  if (breaker == Breaker::per_h_bias)
    for (auto& l : spec.layers)
      if (l.kind == LayerKind::conv) {
        l.bias_per_h = true;
        break;
      }
  return spec;
}

template <class T>
EquivarianceReport check_equivariance_t(const RunConfig& cfg, Breaker breaker) {
  const FiniteGroup grp(cfg.group);
  EquivarianceReport rep;
  rep.max_error.assign(grp.order(), 0.0);
  rep.mean_error.assign(grp.order(), 0.0);
  rep.crop = cfg.crop;
  rep.dtype = cfg.dtype;
  rep.tolerance = cfg.tolerance;
  std::vector<DiffStats> per_h(grp.order());
  DiffStats trans;
  const std::size_t channels = std::max<std::size_t>(1, cfg.channels);
  const std::size_t margin = max_shift() + cfg.depth * (cfg.filter_size / 2) + 1;
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    NetworkSpec spec =
        broken(verification_stack(cfg.group, cfg.variant, cfg.depth, channels, cfg.input_size, cfg.filter_size), breaker);
    spec.reduction_ratio = cfg.reduction_ratio;
    spec.attention.residual_branch = cfg.residual_branch;
    spec.attention.pool_out_channels = cfg.pool_out_channels;
    Model<T> model(spec);
    Rng rng(cfg.seed * 1000003 + trial);
    model.initialize(rng.next_u64(), true);
    const Tensor<T> x = random_input<T>(rng, 2, channels, cfg.input_size, 0);
    const Tensor<T> y = model.forward(nullptr, x, false).value();
    for (std::size_t h = 0; h < grp.order(); ++h) {
      const Tensor<T> lhs = model.forward(nullptr, transform_feature(grp, h, x), false).value();
      accumulate_diff(per_h[h], lhs, transform_feature(grp, h, y), cfg.crop);
    }
    // Translations: zero biases and zero-bordered inputs keep every support inside the frame.
    model.initialize(rng.next_u64(), false);
    const Tensor<T> xt = random_input<T>(rng, 2, channels, cfg.input_size, margin);
    const Tensor<T> yt = model.forward(nullptr, xt, false).value();
    for (const Vec2i& t : translation_set()) {
      const Tensor<T> lhs = model.forward(nullptr, shift(xt, t), false).value();
      accumulate_diff(trans, lhs, shift(yt, t), cfg.crop);
    }
  }
  rep.pass = true;
  for (std::size_t h = 0; h < grp.order(); ++h) {
    rep.max_error[h] = per_h[h].max;
    rep.mean_error[h] = per_h[h].mean();
    rep.pass = rep.pass && per_h[h].max <= cfg.tolerance;
  }
  rep.translation_error = trans.max;
  rep.pass = rep.pass && trans.max <= cfg.tolerance;
  return rep;
}

template <class T>
Report thm1_oracle_t(const RunConfig& cfg, Breaker breaker) {
  const FiniteGroup grp(cfg.group);
  Report r("thm1-oracle");
  r.set("group", to_string(cfg.group));
  r.set("breaker", to_string(breaker));
  std::vector<Variant> variants;
  if (cfg.variant == Variant::plain)
    variants = {Variant::full, Variant::input};
  else
    variants = {cfg.variant};
  const std::size_t channels = std::max<std::size_t>(2, cfg.channels);
  const std::size_t depth = std::max<std::size_t>(2, cfg.depth);
  const std::size_t margin = max_shift() + depth * (cfg.filter_size / 2) + 1;
  double worst = 0;
  std::size_t maps = 0;
  for (Variant v : variants) {
    DiffStats ch, sp;
    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
      NetworkSpec spec =
          broken(verification_stack(cfg.group, v, depth, channels, cfg.input_size, cfg.filter_size), breaker);
      spec.reduction_ratio = cfg.reduction_ratio;
      spec.attention.residual_branch = cfg.residual_branch;
      spec.attention.pool_out_channels = cfg.pool_out_channels;
      Model<T> model(spec);
      Rng rng(cfg.seed * 1000003 + trial);
      for (int pass = 0; pass < 2; ++pass) {
        const bool translated = pass == 1;
        model.initialize(rng.next_u64(), !translated);
        const Tensor<T> x = random_input<T>(rng, 1, channels, cfg.input_size, translated ? margin : 0);
        std::vector<LayerTrace<T>> base, moved;
        model.forward(nullptr, x, false, nullptr, &base);
        const std::vector<Vec2i> shifts = translated ? translation_set() : std::vector<Vec2i>{{0, 0}};
        for (const Vec2i& t : shifts)
          for (std::size_t hb = 0; hb < grp.order(); ++hb) {
            const Tensor<T> xg = shift(transform_feature(grp, hb, x), t);
            model.forward(nullptr, xg, false, nullptr, &moved);
            for (std::size_t l = 0; l < base.size(); ++l) {
              if (!base[l].alpha_c.empty()) {
                accumulate_diff(ch, moved[l].alpha_c, map_action(grp, hb, t, base[l].alpha_c, false), 0);
                ++maps;
              }
              if (!base[l].alpha_x.empty()) {
                accumulate_diff(sp, moved[l].alpha_x, map_action(grp, hb, t, base[l].alpha_x, true),
                                translated ? max_shift() : 0);
                ++maps;
              }
            }
          }
      }
    }
    r.set("alpha_c_max_error_" + to_string(v), ch.max);
    r.set("alpha_x_max_error_" + to_string(v), sp.max);
    worst = std::max({worst, ch.max, sp.max});
  }
  r.set("maps_compared", maps);
  r.set("translation_crop", max_shift());
  r.set("max_error", worst);
  r.set("tolerance", cfg.tolerance);
  r.set("dtype", to_string(cfg.dtype));
  r.require(maps > 0 && worst <= cfg.tolerance);
  return r;
}

/// Planes side by side with one-pixel gaps, each min-max normalised.
Tensor<double> tile_planes(const std::vector<Tensor<double>>& planes) {
  std::size_t height = 0, width = 0;
  for (const auto& p : planes) height = std::max(height, p.extent(0)), width += p.extent(1) + 1;
  Tensor<double> out({height, width - 1});
  std::size_t x0 = 0;
  for (const auto& p : planes) {
    double lo = p[0], hi = p[0];
    for (double v : p.data()) lo = std::min(lo, v), hi = std::max(hi, v);
    for (std::size_t i = 0; i < p.extent(0); ++i)
      for (std::size_t j = 0; j < p.extent(1); ++j) out(i, x0 + j) = hi > lo ? (p(i, j) - lo) / (hi - lo) : 0.0;
    x0 += p.extent(1) + 1;
  }
  return out;
}

template <class T>
Tensor<double> plane_of(const Tensor<T>& f, std::size_t c, std::size_t h) {
  const std::size_t y = f.extent(3), x = f.extent(4);
  Tensor<double> p({y, x});
  for (std::size_t i = 0; i < y; ++i)
    for (std::size_t j = 0; j < x; ++j) p(i, j) = double(f(0, c, h, i, j));
  return p;
}

template <class T>
Report parity_demo_t(const RunConfig& cfg, const std::string& out_dir) {
  const FiniteGroup grp(cfg.group);
  GATT_CHECK(grp.order() >= 4, "the parity demo needs a group containing r90");
  const std::size_t size = cfg.input_size;
  const std::size_t channels = std::max<std::size_t>(1, cfg.channels);
  auto conv = [&](std::size_t stride) {
    LayerSpec l;
    l.kind = LayerKind::conv;
    l.channels = channels;
    l.kernel = cfg.filter_size;
    l.conv.stride = stride;
    return l;
  };
  LayerSpec relu, pool;
  relu.kind = LayerKind::relu;
  pool.kind = LayerKind::max_pool;
  NetworkSpec strided, pooled;
  strided.group = pooled.group = cfg.group;
  strided.in_size = pooled.in_size = size;
  strided.layers = {conv(2), relu, conv(2)};
  pooled.layers = {conv(1), relu, pool, conv(1), pool};

  Report r("parity-demo");
  r.set("input_size", size);
  r.set("dtype", to_string(cfg.dtype));
  Rng rng(cfg.seed);
  const Tensor<T> x = random_input<T>(rng, 1, 1, size, 0);
  const std::size_t r90 = 1;
  const Tensor<T> xr = transform_feature(grp, r90, x);
  double err[2] = {0, 0};
  const char* names[2] = {"stride2", "stride1_pool"};
  const std::uint64_t weights_seed = rng.next_u64();
  for (int k = 0; k < 2; ++k) {
    Model<T> model(k == 0 ? strided : pooled);
    model.initialize(weights_seed, true);
    const Tensor<T> y = model.forward(nullptr, x, false).value();
    const Tensor<T> lhs = model.forward(nullptr, xr, false).value();
    const Tensor<T> rhs = transform_feature(grp, r90, y);
    DiffStats d;
    accumulate_diff(d, lhs, rhs, 0);
    double scale = 0;
    for (T v : y.data()) scale = std::max(scale, std::abs(double(v)));
    err[k] = d.max / std::max(scale, 1e-300);
    r.set(std::string("output_size_") + names[k], y.extent(3));
    r.set(std::string("abs_error_") + names[k], d.max);
    r.set(std::string("error_") + names[k], err[k]);
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      std::vector<Tensor<double>> planes;
      for (std::size_t h = 0; h < grp.order(); ++h) planes.push_back(plane_of(lhs, 0, h));
      for (std::size_t h = 0; h < grp.order(); ++h) planes.push_back(plane_of(rhs, 0, h));
      const std::string file = "parity_" + std::to_string(size) + "_" + names[k] + ".pgm";
      io::write_pgm(tile_planes(planes), (fs::path(out_dir) / file).string());
      r.set(std::string("map_") + names[k], file);
    }
  }
  const double ratio = err[0] / std::max(err[1], 1e-300);
  r.set("ratio", err[1] == 0 ? std::string("inf") : num(ratio));
  const double exact_tol = 1e-6;
  r.set("exact_tolerance", exact_tol);
  r.set("min_ratio", 100.0);
  if (size % 2 == 0) {
    r.require(err[1] <= exact_tol && err[0] >= 100.0 * err[1] && err[0] > exact_tol);
  } else {
    r.require(err[0] <= exact_tol && err[1] <= exact_tol);
  }
  return r;
}


Report gradcheck_impl(const RunConfig& cfg) {
  Report r("gradcheck");
  r.set("group", to_string(cfg.group));
  const double tolerance = 1e-4;
  double worst = 0;
  struct Case {
    Variant variant;
    bool residual, pooled;
  };
  const std::vector<Case> cases = {{Variant::plain, true, true},   {Variant::channel, true, true},
                                   {Variant::spatial, true, true}, {Variant::full, true, true},
                                   {Variant::full, false, false},  {Variant::input, true, true}};
  for (const Case& c : cases) {
    NetworkSpec spec;
    spec.group = cfg.group;
    spec.in_channels = 1;
    spec.in_size = 6;
    spec.reduction_ratio = 2;
    spec.attention_kernel = 3;
    spec.attention.residual_branch = c.residual;
    spec.attention.pool_out_channels = c.pooled;
    auto conv = [&](std::size_t stride) {
      LayerSpec l;
      l.kind = LayerKind::conv;
      l.channels = 2;
      l.variant = c.variant;
      l.conv.stride = stride;
      return l;
    };
    auto plain = [](LayerKind k) {
      LayerSpec l;
      l.kind = k;
      return l;
    };
    LayerSpec gpool = plain(LayerKind::group_pool), spool = plain(LayerKind::spatial_pool);
    gpool.pool = c.pooled ? PoolMode::mean : PoolMode::max;
    spool.pool = c.pooled ? PoolMode::max : PoolMode::mean;
    LayerSpec drop = plain(LayerKind::dropout), head = plain(LayerKind::linear);
    drop.rate = 0.25;
    head.channels = 3;
    spec.layers = {conv(1), plain(LayerKind::batch_norm), plain(LayerKind::relu), plain(LayerKind::max_pool),
                   conv(2), gpool, spool, drop, head};
    Model<double> model(spec);
    model.initialize(cfg.seed + 17, true);
    Rng rng(cfg.seed + 29);
    const Tensor<double> x = random_uniform<double>({2, 1, 6, 6}, rng);
    const std::vector<std::size_t> labels = {0, 2};
    const std::uint64_t drop_seed = rng.next_u64();
    auto loss_value = [&]() {
      Rng dr(drop_seed);
      const auto logits = model.forward(nullptr, x, true, &dr);
      return ad::softmax_cross_entropy(logits, labels).value()[0];
    };
    std::vector<ad::Parameter<double>*> trainable;
    for (auto& p : model.params())
      if (p.trainable) trainable.push_back(&p);
    const auto numeric = ad::finite_diff_grad(loss_value, trainable);
    model.params().zero_grad();
    {
      ad::Tape<double> tape;
      Rng dr(drop_seed);
      const auto logits = model.forward(&tape, x, true, &dr);
      tape.backward(ad::softmax_cross_entropy(logits, labels));
    }
    double err = 0;
    for (std::size_t i = 0; i < trainable.size(); ++i)
      err = std::max(err, ad::max_relative_error(numeric[i], trainable[i]->grad));
    const std::string tag = to_string(c.variant) + (c.residual ? "" : "_sigmoid_unpooled");
    r.set("max_relative_error_" + tag, err);
    r.set("parameters_" + tag, model.parameter_count());
    worst = std::max(worst, err);
  }
  r.set("max_relative_error", worst);
  r.set("tolerance", tolerance);
  r.require(worst <= tolerance);
  return r;
}

struct Splits {
  data::LabeledImageSet train, val, test;
};

Splits load_data(const RunConfig& cfg) {
  Splits s;
  if (cfg.dataset == "synth_shapes") {
    Rng rng(cfg.seed);
    s.train = data::synth_shapes(cfg.n_train, rng.next_u64(), "train");
    if (cfg.n_val > 0) s.val = data::synth_shapes(cfg.n_val, rng.next_u64(), "val");
    s.test = data::synth_shapes(cfg.n_test, rng.next_u64(), "test");
  } else {
    const char* dir = std::getenv("GATT_DATA_DIR");
    if (!dir) throw ConfigError("dataset=rotmnist needs GATT_DATA_DIR pointing at the MNIST IDX files");
    auto d = data::make_rotmnist(dir, cfg.n_train, cfg.n_test, cfg.seed, cfg.n_val);
    s.train = std::move(d.train), s.val = std::move(d.val), s.test = std::move(d.test);
  }
  if (cfg.normalize) {
    std::vector<data::LabeledImageSet*> all = {&s.train, &s.test};
    if (s.val.size() > 0) all.push_back(&s.val);
    data::subtract_mean(data::LabeledImageSet(s.train), all);
  }
  return s;
}

template <class T>
double evaluate(Model<T>& model, const data::LabeledImageSet& set, std::size_t batch) {
  if (set.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < set.size(); b += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = b; i < std::min(set.size(), b + batch); ++i) idx.push_back(i);
    const Tensor<T> logits = model.forward(nullptr, data::batch_images<T>(set, idx), false).value();
    const std::size_t k = logits.extent(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (logits(i, j) > logits(i, best)) best = j;
      correct += best == set.labels[idx[i]];
    }
  }
  return double(correct) / double(set.size());
}

template <class T>
TrainResult train_t(const RunConfig& cfg, const std::string& out_dir, double min_accuracy, bool verbose) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  TrainResult res;
  if (cfg.batch == 0 || cfg.n_train == 0 || cfg.n_test == 0) throw ConfigError("batch, n_train and n_test must be positive");
  if (cfg.dropout < 0 || cfg.dropout >= 1) throw ConfigError("dropout must lie in [0, 1)");
  const Splits d = load_data(cfg);
  Model<T> model(classifier_spec(cfg, d.train.images.extent(1), d.train.images.extent(2), d.train.classes));
  model.initialize(cfg.seed);
  res.parameters = model.parameter_count();

  ad::OptimizerConfig oc;
  oc.kind = cfg.optimizer == "sgd" ? ad::OptimizerKind::sgd : ad::OptimizerKind::adam;
  oc.lr = cfg.lr;
  oc.weight_decay = cfg.weight_decay;
  oc.momentum = cfg.momentum;
  ad::Optimizer<T> opt(oc);

  auto emit = [&](const std::string& line) {
    res.log.push_back(line);
    if (verbose) std::cout << line << std::endl;
  };
  emit("parameters=" + std::to_string(res.parameters) + " train=" + std::to_string(d.train.size()) +
       " val=" + std::to_string(d.val.size()) + " test=" + std::to_string(d.test.size()));

  Rng order_rng(cfg.seed ^ 0x0DDBA11ULL), drop_rng(cfg.seed ^ 0xD50BULL);
  std::vector<std::size_t> order(d.train.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.config().lr = cfg.lr_decay_every ? ad::step_decay(cfg.lr, epoch, cfg.lr_decay_every, cfg.lr_decay_factor) : cfg.lr;
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
      const std::vector<std::size_t> idx(order.begin() + long(b), order.begin() + long(std::min(order.size(), b + cfg.batch)));
      const auto labels = data::batch_labels(d.train, idx);
      model.params().zero_grad();
      ad::Tape<T> tape;
      const auto logits = model.forward(&tape, data::batch_images<T>(d.train, idx), true, &drop_rng);
      const auto loss = ad::softmax_cross_entropy(logits, labels);
      tape.backward(loss);
      opt.step(model.params());
      loss_sum += double(loss.value()[0]) * double(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.extent(1); ++j)
          if (logits.value()(i, j) > logits.value()(i, best)) best = j;
        correct += best == labels[i];
      }
    }
    res.final_loss = loss_sum / double(order.size());
    const double val_acc = evaluate(model, d.val, 256);
    const double secs = std::chrono::duration<double>(clock::now() - start).count();
    emit("epoch=" + std::to_string(epoch + 1) + " lr=" + num(opt.config().lr) + " train_loss=" + num(res.final_loss) +
         " train_error=" + num(1.0 - double(correct) / double(order.size())) +
         (d.val.size() ? " val_error=" + num(1.0 - val_acc) : std::string()) + " seconds=" + num(secs));
  }
  res.test_accuracy = evaluate(model, d.test, 256);
  res.seconds = std::chrono::duration<double>(clock::now() - start).count();
  emit("test_error=" + num(1.0 - res.test_accuracy));

  Report& r = res.report;
  r.set("dataset", cfg.dataset);
  r.set("group", to_string(cfg.group));
  r.set("variant", to_string(cfg.variant));
  r.set("dtype", to_string(cfg.dtype));
  r.set("parameters", res.parameters);
  r.set("epochs", cfg.epochs);
  char loss_buf[40];
  std::snprintf(loss_buf, sizeof loss_buf, "%.17g", res.final_loss);
  r.set("final_train_loss", std::string(loss_buf));
  r.set("test_accuracy", res.test_accuracy);
  r.set("test_error", 1.0 - res.test_accuracy);
  r.set("seconds", res.seconds);
  r.set("min_accuracy", min_accuracy);
  r.require(res.test_accuracy >= min_accuracy);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream log(fs::path(out_dir) / "train.log");
    for (const auto& l : res.log) log << l << "\n";
    io::save_checkpoint(io::make_checkpoint(config_text(cfg), model.params(), &opt),
                        (fs::path(out_dir) / "model.gatt").string());
    r.set("checkpoint", (fs::path(out_dir) / "model.gatt").string());
  }
  return res;
}

template <class T>
Report attend_t(const io::Checkpoint& ckpt, const RunConfig& cfg, const std::string& image_path, std::size_t conv_index,
                const std::string& out_dir, double tolerance) {
  Tensor<double> image;
  if (image_path.empty()) {
    image = data::synth_shapes(1, cfg.seed + 99).images.reshaped({data::kShapeSize, data::kShapeSize});
  } else {
    image = io::read_pgm(image_path);
  }
  GATT_CHECK(image.extent(0) == image.extent(1), "attention maps need a square image");
  const std::size_t size = image.extent(0);
  Model<T> model(classifier_spec(cfg, 1, size, cfg.dataset == "rotmnist" ? 10 : 4));
  io::restore_checkpoint<T>(ckpt, model.params(), nullptr);

  std::size_t layer = 0, seen = 0;
  bool found = false;
  for (std::size_t i = 0; i < model.spec().layers.size(); ++i)
    if (model.spec().layers[i].kind == LayerKind::conv && seen++ == conv_index) {
      layer = i;
      found = true;
      break;
    }
  if (!found) throw ConfigError("conv layer " + std::to_string(conv_index) + " does not exist");
  if (!uses_spatial(model.spec().layers[layer].variant))
    throw ConfigError("conv layer " + std::to_string(conv_index) + " has no spatial attention (variant " +
                      to_string(model.spec().layers[layer].variant) + ")");

  const FiniteGroup& grp = model.group();
  const Tensor<T> x = image.cast<T>().reshaped({1, 1, 1, size, size});
  std::vector<LayerTrace<T>> base, moved;
  model.forward(nullptr, x, false, nullptr, &base);
  Report r("attend");
  r.set("layer", conv_index);
  r.set("group", to_string(grp.name()));
  double worst = 0, lo = 1e300, hi = -1e300;
  for (T v : base[layer].alpha_x.data()) lo = std::min(lo, double(v)), hi = std::max(hi, double(v));
  r.set("map_min", lo);
  r.set("map_max", hi);
  for (std::size_t h = 0; h < grp.order(); ++h) {
    const Tensor<T> xh = transform_feature(grp, h, x);
    model.forward(nullptr, xh, false, nullptr, &moved);
    const Tensor<T>& a = moved[layer].alpha_x;
    DiffStats d;
    accumulate_diff(d, a, map_action(grp, h, {0, 0}, base[layer].alpha_x, true), 0);
    r.set("max_error_h" + std::to_string(h), d.max);
    worst = std::max(worst, d.max);
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      const std::size_t my = a.extent(a.rank() - 2), mx = a.extent(a.rank() - 1);
      const Tensor<double> planes = a.template cast<double>().reshaped({a.size() / (my * mx), my, mx});
      const std::string file = "attend_layer" + std::to_string(conv_index) + "_h" + std::to_string(h) + ".pgm";
      io::write_attention_montage(planes, xh.template cast<double>().reshaped({size, size}),
                                  (fs::path(out_dir) / file).string());
    }
  }
  r.set("max_error", worst);
  r.set("tolerance", tolerance);
  r.require(worst <= tolerance);
  return r;
}

}  // namespace

EquivarianceReport check_equivariance(const RunConfig& cfg, Breaker breaker) {
  return cfg.dtype == DType::f32 ? check_equivariance_t<float>(cfg, breaker) : check_equivariance_t<double>(cfg, breaker);
}

Report thm1_oracle(const RunConfig& cfg, Breaker breaker) {
  return cfg.dtype == DType::f32 ? thm1_oracle_t<float>(cfg, breaker) : thm1_oracle_t<double>(cfg, breaker);
}

Report parity_demo(const RunConfig& cfg, const std::string& out_dir) {
  return cfg.dtype == DType::f32 ? parity_demo_t<float>(cfg, out_dir) : parity_demo_t<double>(cfg, out_dir);
}

Report gradcheck(const RunConfig& cfg) { return gradcheck_impl(cfg); }

TrainResult train(const RunConfig& cfg, const std::string& out_dir, double min_accuracy, bool verbose) {
  return cfg.dtype == DType::f32 ? train_t<float>(cfg, out_dir, min_accuracy, verbose)
                                 : train_t<double>(cfg, out_dir, min_accuracy, verbose);
}

Report attend(const std::string& checkpoint_path, const std::string& image_path, std::size_t conv_index,
              const std::string& out_dir, double tolerance) {
  const io::Checkpoint ckpt = io::load_checkpoint(checkpoint_path);
  const RunConfig cfg = parse_config(ckpt.config, checkpoint_path + " (embedded config)");
  GATT_CHECK(!ckpt.params.empty(), "checkpoint holds no parameters");
  const Report r = ckpt.params.front().dtype == DType::f32
                       ? attend_t<float>(ckpt, cfg, image_path, conv_index, out_dir, tolerance)
                       : attend_t<double>(ckpt, cfg, image_path, conv_index, out_dir, tolerance);
  r.write(out_dir);
  return r;
}

Report negative_control(const RunConfig& cfg) {
  Report r("negative-control");
  RunConfig attentive = cfg;
  if (!uses_channel(attentive.variant) || attentive.variant == Variant::input) attentive.variant = Variant::full;
  const bool bias_eq = !check_equivariance(cfg, Breaker::per_h_bias).pass;
  const bool w_eq = !check_equivariance(attentive, Breaker::absolute_w_index).pass;
  const bool bias_thm1 = !thm1_oracle(cfg, Breaker::per_h_bias).pass();
  const bool w_thm1 = !thm1_oracle(cfg, Breaker::absolute_w_index).pass();
  r.set("equivariance_detects_per_h_bias", bias_eq);
  r.set("equivariance_detects_absolute_w_index", w_eq);
  r.set("thm1_detects_per_h_bias", bias_thm1);
  r.set("thm1_detects_absolute_w_index", w_thm1);
  r.require(bias_eq && w_eq && bias_thm1 && w_thm1);
  return r;
}

}  // namespace gatt::harness
