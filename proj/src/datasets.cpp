#include "gatt/datasets.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

#include "gatt/group.hpp"
#include "gatt/io.hpp"
#include "gatt/random.hpp"
#include "gatt/transform.hpp"

namespace gatt::data {
namespace {

template <class V>
void shuffle(std::vector<V>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

LabeledImageSet gather_rotated(const Tensor<double>& pool, const std::vector<std::size_t>& labels,
                               const std::vector<std::size_t>& order, std::size_t begin, std::size_t count,
                               Rng& rng, std::string split) {
  const std::size_t y = pool.extent(1), x = pool.extent(2);
  LabeledImageSet set;
  set.images = Tensor<double>({count, 1, y, x});
  set.split = std::move(split);
  set.classes = 10;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t src = order[begin + i];
    Tensor<double> img({y, x});
    std::copy_n(pool.data().begin() + long(src * y * x), y * x, img.data().begin());
    const Tensor<double> rot = rotate_bilinear(img, rng.uniform(0.0, 360.0));
    std::copy(rot.data().begin(), rot.data().end(), set.images.data().begin() + long(i * y * x));
    set.labels.push_back(labels[src]);
  }
  return set;
}

}  // namespace

Tensor<double> rotate_bilinear(const Tensor<double>& img, double degrees) {
  GATT_CHECK(img.rank() >= 2, "rotate_bilinear needs at least a plane");
  const std::size_t n = img.extent(img.rank() - 1);
  GATT_CHECK(img.extent(img.rank() - 2) == n, "rotate_bilinear needs a square plane, got " + shape_string(img.shape()));
  const double turns = degrees / 90.0;
  if (turns == std::round(turns)) {
    const long k = ((long(std::round(turns)) % 4) + 4) % 4;
    return apply_action(FiniteGroup(GroupName::C4), std::size_t(k), img, {}, true);
  }
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double c = (double(n) - 1.0) / 2.0;
  const std::size_t plane = n * n;
  const std::size_t planes = img.size() / plane;
  Tensor<double> out(img.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double u = double(j) - c, v = c - double(i);
      const double su = cs * u + sn * v, sv = -sn * u + cs * v;
      const double col = su + c, row = c - sv;
      const double r0 = std::floor(row), c0 = std::floor(col);
      const double fr = row - r0, fc = col - c0;
      for (std::size_t p = 0; p < planes; ++p) {
        const double* src = img.data().data() + p * plane;
        auto at = [&](double r, double cc) {
          if (r < 0 || cc < 0 || r > double(n - 1) || cc > double(n - 1)) return 0.0;
          return src[std::size_t(r) * n + std::size_t(cc)];
        };
        out[p * plane + i * n + j] = (1 - fr) * ((1 - fc) * at(r0, c0) + fc * at(r0, c0 + 1)) +
                                     fr * ((1 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1));
      }
    }
  return out;
}

DatasetSplits make_rotmnist(const std::string& dir, std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                            std::size_t n_val) {
  namespace fs = std::filesystem;
  for (const char* name : kMnistFiles)
    if (!fs::exists(fs::path(dir) / name))
      throw Error("missing MNIST file '" + (fs::path(dir) / name).string() + "' (set GATT_DATA_DIR)");
  const Tensor<double> train_img = io::read_idx((fs::path(dir) / kMnistFiles[0]).string());
  const auto train_lab = io::read_idx_labels((fs::path(dir) / kMnistFiles[1]).string());
  const Tensor<double> test_img = io::read_idx((fs::path(dir) / kMnistFiles[2]).string());
  const auto test_lab = io::read_idx_labels((fs::path(dir) / kMnistFiles[3]).string());
  GATT_CHECK(train_img.rank() == 3 && test_img.rank() == 3 && train_img.extent(1) == test_img.extent(1) &&
                 train_img.extent(2) == test_img.extent(2),
             "MNIST image files have inconsistent shapes");
  GATT_CHECK(train_img.extent(0) == train_lab.size() && test_img.extent(0) == test_lab.size(),
             "MNIST image and label counts differ");
  const std::size_t total = train_lab.size() + test_lab.size();
  GATT_CHECK(n_train + n_val + n_test <= total, "requested " + std::to_string(n_train + n_val + n_test) +
                                                    " digits but only " + std::to_string(total) + " exist");

  Tensor<double> pool({total, train_img.extent(1), train_img.extent(2)});
  std::copy(train_img.data().begin(), train_img.data().end(), pool.data().begin());
  std::copy(test_img.data().begin(), test_img.data().end(), pool.data().begin() + long(train_img.size()));
  std::vector<std::size_t> labels = train_lab;
  labels.insert(labels.end(), test_lab.begin(), test_lab.end());

  Rng rng(seed);
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  DatasetSplits s;
  s.train = gather_rotated(pool, labels, order, 0, n_train, rng, "train");
  if (n_val > 0) s.val = gather_rotated(pool, labels, order, n_train, n_val, rng, "val");
  s.test = gather_rotated(pool, labels, order, n_train + n_val, n_test, rng, "test");
  return s;
}

std::string to_string(ShapeClass c) {
  switch (c) {
    case ShapeClass::bar: return "bar";
    case ShapeClass::corner: return "corner";
    case ShapeClass::tee: return "T";
    case ShapeClass::ell: return "L";
  }
  return "?";
}

std::vector<std::array<long, 2>> shape_cells(ShapeClass c) {
  std::vector<std::array<long, 2>> cells;
  switch (c) {
    case ShapeClass::bar:
      for (long j = 0; j < 7; ++j) cells.push_back({0, j});
      break;
    case ShapeClass::corner:
      for (long i = 0; i < 3; ++i) cells.push_back({i, 0});
      for (long j = 1; j < 3; ++j) cells.push_back({2, j});
      break;
    case ShapeClass::tee:
      for (long j = 0; j < 7; ++j) cells.push_back({0, j});
      for (long i = 1; i < 4; ++i) cells.push_back({i, 3});
      break;
    case ShapeClass::ell:
      for (long i = 0; i < 7; ++i) cells.push_back({i, 0});
      for (long j = 1; j < 4; ++j) cells.push_back({6, j});
      break;
  }
  return cells;
}

LabeledImageSet synth_shapes(std::size_t n, std::uint64_t seed, std::string split) {
  GATT_CHECK(n > 0, "synth_shapes needs at least one sample");
  constexpr long size = long(kShapeSize);
  Rng rng(seed);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % 4;
  shuffle(labels, rng);

  LabeledImageSet set;
  set.images = Tensor<double>({n, 1, kShapeSize, kShapeSize});
  set.labels = labels;
  set.split = std::move(split);
  set.classes = 4;
  for (std::size_t s = 0; s < n; ++s) {
    auto cells = shape_cells(ShapeClass(labels[s]));
    const std::size_t turns = rng.below(4);
    for (auto& [r, c] : cells)
      for (std::size_t t = 0; t < turns; ++t) std::tie(r, c) = std::pair{-c, r};
    long rmin = cells[0][0], rmax = rmin, cmin = cells[0][1], cmax = cmin;
    for (auto [r, c] : cells) {
      rmin = std::min(rmin, r), rmax = std::max(rmax, r);
      cmin = std::min(cmin, c), cmax = std::max(cmax, c);
    }
    const long dr = 1 + long(rng.below(std::uint64_t(size - 2 - (rmax - rmin)))) - rmin;
    const long dc = 1 + long(rng.below(std::uint64_t(size - 2 - (cmax - cmin)))) - cmin;
    for (auto [r, c] : cells) set.images(s, 0, r + dr, c + dc) = 1.0;
  }
  return set;
}

template <class T>
Tensor<T> batch_images(const LabeledImageSet& set, const std::vector<std::size_t>& indices) {
  Shape shape = set.images.shape();
  const std::size_t per = set.images.size() / shape[0];
  shape[0] = indices.size();
  Tensor<T> out(shape);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    GATT_CHECK(indices[b] < set.size(), "sample index out of range");
    const auto src = set.images.data().subspan(indices[b] * per, per);
    std::transform(src.begin(), src.end(), out.data().begin() + long(b * per), [](double v) { return T(v); });
  }
  return out;
}

std::vector<std::size_t> batch_labels(const LabeledImageSet& set, const std::vector<std::size_t>& indices) {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(set.labels.at(i));
  return out;
}

void subtract_mean(const LabeledImageSet& reference, std::vector<LabeledImageSet*> sets) {
  const std::size_t channels = reference.images.extent(1);
  const std::size_t plane = reference.images.extent(2) * reference.images.extent(3);
  std::vector<double> mean(channels, 0.0);
  for (std::size_t n = 0; n < reference.size(); ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) mean[c] += reference.images[(n * channels + c) * plane + p];
  for (double& m : mean) m /= double(reference.size() * plane);
  for (LabeledImageSet* s : sets)
    for (std::size_t i = 0; i < s->images.size(); ++i) s->images[i] -= mean[(i / plane) % channels];
}

template Tensor<float> batch_images(const LabeledImageSet&, const std::vector<std::size_t>&);
template Tensor<double> batch_images(const LabeledImageSet&, const std::vector<std::size_t>&);

}  // namespace gatt::data
