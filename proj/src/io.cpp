#include "gatt/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace gatt::io {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw Error("write failed for '" + path + "'");
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) | (std::uint32_t(b[at + 2]) << 8) |
         std::uint32_t(b[at + 3]);
}

class Writer {
 public:
  template <class U>
  void put(U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out_.append(buf, sizeof(U));
  }
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void text(const std::string& s) {
    put<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  void tensor(const CheckpointTensor& t) {
    put<std::uint32_t>(std::uint32_t(t.name.size()));
    bytes(t.name.data(), t.name.size());
    put<std::uint8_t>(t.dtype == DType::f32 ? 0 : 1);
    put<std::uint8_t>(std::uint8_t((t.decay ? 1 : 0) | (t.trainable ? 2 : 0)));
    put<std::uint32_t>(std::uint32_t(t.shape.size()));
    for (std::size_t d : t.shape) put<std::uint64_t>(d);
    bytes(t.raw.data(), t.raw.size());
  }
  const std::string& str() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::vector<unsigned char> data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}
  template <class U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, data_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string chars(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string text() { return chars(get<std::uint64_t>()); }
  CheckpointTensor tensor() {
    CheckpointTensor t;
    t.name = chars(get<std::uint32_t>());
    const auto dt = get<std::uint8_t>();
    if (dt > 1) fail("unknown dtype tag");
    t.dtype = dt == 0 ? DType::f32 : DType::f64;
    const auto flags = get<std::uint8_t>();
    t.decay = flags & 1;
    t.trainable = flags & 2;
    const auto rank = get<std::uint32_t>();
    if (rank > 16) fail("implausible tensor rank");
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = get<std::uint64_t>();
      if (d == 0 || count > (std::numeric_limits<std::size_t>::max() >> 4) / d) fail("bad tensor extent");
      count *= d;
      t.shape.push_back(d);
    }
    const std::size_t n = count * (t.dtype == DType::f32 ? 4 : 8);
    need(n);
    t.raw.assign(data_.begin() + long(pos_), data_.begin() + long(pos_ + n));
    pos_ += n;
    return t;
  }
  bool done() const { return pos_ == data_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw Error("checkpoint '" + path_ + "': " + what + " at byte " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail("truncated file");
  }
  std::vector<unsigned char> data_;
  std::string path_;
  std::size_t pos_ = 0;
};

void write_binary_image(const std::string& path, const char* magic, std::size_t width, std::size_t height,
                        const std::vector<std::uint8_t>& pixels) {
  std::ostringstream header;
  header << magic << "\n" << width << " " << height << "\n255\n";
  std::string bytes = header.str();
  bytes.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  spit(path, bytes);
}

std::pair<double, double> min_max(std::span<const double> v) {
  double lo = v[0], hi = v[0];
  for (double x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  return {lo, hi};
}

double normalized(double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; }

}  // namespace

IdxFile read_idx_raw(const std::string& path) {
  const auto b = slurp(path);
  if (b.size() < 4) throw Error("IDX file '" + path + "' is truncated");
  IdxFile f;
  f.magic = be32(b, 0);
  if (f.magic != kIdxImages && f.magic != kIdxLabels)
    throw Error("IDX file '" + path + "' has unsupported magic number");
  const std::size_t rank = f.magic & 0xff;
  if (b.size() < 4 + 4 * rank) throw Error("IDX file '" + path + "' is truncated in its header");
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t d = be32(b, 4 + 4 * i);
    if (d == 0) throw Error("IDX file '" + path + "' has a zero dimension");
    if (count > (std::size_t{1} << 40) / d) throw Error("IDX file '" + path + "' dimensions overflow");
    count *= d;
    f.dims.push_back(d);
  }
  const std::size_t offset = 4 + 4 * rank;
  if (b.size() - offset < count) throw Error("IDX file '" + path + "' is truncated: expected " +
                                             std::to_string(count) + " data bytes");
  if (b.size() - offset > count) throw Error("IDX file '" + path + "' has trailing bytes");
  f.bytes.assign(b.begin() + long(offset), b.end());
  return f;
}

Tensor<double> read_idx(const std::string& path) {
  IdxFile f = read_idx_raw(path);
  Tensor<double> t(Shape(f.dims.begin(), f.dims.end()));
  const double s = f.magic == kIdxImages ? 1.0 / 255.0 : 1.0;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = f.bytes[i] * s;
  return t;
}

std::vector<std::size_t> read_idx_labels(const std::string& path) {
  IdxFile f = read_idx_raw(path);
  if (f.magic != kIdxLabels) throw Error("'" + path + "' is not an IDX label file");
  return std::vector<std::size_t>(f.bytes.begin(), f.bytes.end());
}

std::uint8_t quantize(double v) {
  const double x = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::ceil(x - 0.5));
}

void write_pgm(const Tensor<double>& plane, const std::string& path, bool normalize) {
  GATT_CHECK(plane.rank() == 2, "write_pgm needs a plane [Y,X], got " + shape_string(plane.shape()));
  auto [lo, hi] = min_max(plane.data());
  std::vector<std::uint8_t> px(plane.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = quantize(normalize ? normalized(plane[i], lo, hi) : plane[i]);
  write_binary_image(path, "P5", plane.extent(1), plane.extent(0), px);
}

void write_ppm(const Tensor<double>& rgb, const std::string& path, bool normalize) {
  GATT_CHECK(rgb.rank() == 3 && rgb.extent(0) == 3, "write_ppm needs [3,Y,X], got " + shape_string(rgb.shape()));
  auto [lo, hi] = min_max(rgb.data());
  const std::size_t plane = rgb.extent(1) * rgb.extent(2);
  std::vector<std::uint8_t> px(rgb.size());
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = rgb[c * plane + p];
      px[p * 3 + c] = quantize(normalize ? normalized(v, lo, hi) : v);
    }
  write_binary_image(path, "P6", rgb.extent(2), rgb.extent(1), px);
}

Tensor<double> read_pgm(const std::string& path) {
  const auto b = slurp(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < b.size()) {
      if (b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else if (std::isspace(b[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < b.size() && !std::isspace(b[pos])) t += char(b[pos++]);
    return t;
  };
  if (token() != "P5") throw Error("'" + path + "' is not a binary PGM (P5) file");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw Error("'" + path + "' has a malformed PGM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) throw Error("'" + path + "' has unsupported PGM dimensions");
  ++pos;
  if (b.size() < pos + w * h) throw Error("'" + path + "' is truncated");
  Tensor<double> t({h, w});
  for (std::size_t i = 0; i < w * h; ++i) t[i] = double(b[pos + i]) / double(maxval);
  return t;
}

Tensor<double> attention_montage(const Tensor<double>& maps, const Tensor<double>& input, std::size_t scale) {
  GATT_CHECK(maps.rank() == 3 && input.rank() == 2, "montage needs maps [K,Y,X] and an input plane [Y,X]");
  const std::size_t ty = input.extent(0), tx = input.extent(1);
  GATT_CHECK(maps.extent(1) * scale >= 1 && ty % maps.extent(1) == 0 && tx % maps.extent(2) == 0,
             "map resolution must divide the input resolution");
  const std::size_t fy = ty / maps.extent(1);
  const std::size_t k = maps.extent(0);
  const std::size_t tile_y = ty * scale, tile_x = tx * scale;
  Tensor<double> out({tile_y, (k + 1) * tile_x + k});
  auto paint = [&](std::size_t slot, auto value_at) {
    const std::size_t x0 = slot * (tile_x + 1);
    for (std::size_t y = 0; y < tile_y; ++y)
      for (std::size_t x = 0; x < tile_x; ++x) out(y, x0 + x) = value_at(y / scale, x / scale);
  };
  auto [ilo, ihi] = min_max(input.data());
  paint(0, [&](std::size_t y, std::size_t x) { return normalized(input(y, x), ilo, ihi); });
  const std::size_t plane = maps.extent(1) * maps.extent(2);
  for (std::size_t m = 0; m < k; ++m) {
    auto [lo, hi] = min_max(maps.data().subspan(m * plane, plane));
    paint(m + 1, [&](std::size_t y, std::size_t x) { return normalized(maps(m, y / fy, x / fy), lo, hi); });
  }
  return out;
}

void write_attention_montage(const Tensor<double>& maps, const Tensor<double>& input, const std::string& path,
                             std::size_t scale) {
  write_pgm(attention_montage(maps, input, scale), path, false);
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  Writer w;
  w.bytes("GATT", 4);
  w.put<std::uint32_t>(c.version);
  w.text(c.config);
  w.put<std::uint32_t>(std::uint32_t(c.params.size()));
  for (const auto& t : c.params) w.tensor(t);
  const auto& o = c.optimizer;
  w.put<std::uint8_t>(o.kind);
  w.put<std::uint64_t>(o.steps);
  for (double v : {o.lr, o.beta1, o.beta2, o.eps, o.weight_decay, o.momentum}) w.put<double>(v);
  GATT_CHECK(o.first.size() == o.second.size(), "optimiser moment buffers differ in count");
  w.put<std::uint32_t>(std::uint32_t(o.first.size()));
  for (const auto& t : o.first) w.tensor(t);
  for (const auto& t : o.second) w.tensor(t);
  spit(path, w.str());
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(slurp(path), path);
  Checkpoint c;
  if (r.chars(4) != "GATT") r.fail("bad magic");
  c.version = r.get<std::uint32_t>();
  if (c.version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(c.version));
  c.config = r.text();
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) c.params.push_back(r.tensor());
  auto& o = c.optimizer;
  o.kind = r.get<std::uint8_t>();
  o.steps = r.get<std::uint64_t>();
  o.lr = r.get<double>();
  o.beta1 = r.get<double>();
  o.beta2 = r.get<double>();
  o.eps = r.get<double>();
  o.weight_decay = r.get<double>();
  o.momentum = r.get<double>();
  const auto m = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < m; ++i) o.first.push_back(r.tensor());
  for (std::uint32_t i = 0; i < m; ++i) o.second.push_back(r.tensor());
  if (!r.done()) r.fail("trailing bytes");
  return c;
}

template <class T>
CheckpointTensor pack_tensor(const std::string& name, const Tensor<T>& t, bool decay, bool trainable) {
  CheckpointTensor c;
  c.name = name;
  c.dtype = dtype_of<T>();
  c.decay = decay;
  c.trainable = trainable;
  c.shape = t.shape();
  c.raw.resize(t.size() * sizeof(T));
  std::memcpy(c.raw.data(), t.data().data(), c.raw.size());
  return c;
}

template <class T>
Tensor<T> unpack_tensor(const CheckpointTensor& c) {
  GATT_CHECK(c.dtype == dtype_of<T>(), "tensor '" + c.name + "' is stored as " + to_string(c.dtype));
  Tensor<T> t(c.shape);
  GATT_CHECK(c.raw.size() == t.size() * sizeof(T), "tensor '" + c.name + "' has the wrong byte count");
  std::memcpy(t.data().data(), c.raw.data(), c.raw.size());
  return t;
}

template <class T>
Checkpoint make_checkpoint(const std::string& config, const ad::ParameterSet<T>& params,
                           const ad::Optimizer<T>* optimizer) {
  Checkpoint c;
  c.config = config;
  for (const auto& p : params) c.params.push_back(pack_tensor(p.name, p.value, p.decay, p.trainable));
  if (optimizer) {
    const auto& cfg = optimizer->config();
    auto& o = c.optimizer;
    o.kind = cfg.kind == ad::OptimizerKind::adam ? 0 : 1;
    o.steps = optimizer->steps();
    o.lr = cfg.lr;
    o.beta1 = cfg.beta1;
    o.beta2 = cfg.beta2;
    o.eps = cfg.eps;
    o.weight_decay = cfg.weight_decay;
    o.momentum = cfg.momentum;
    for (std::size_t i = 0; i < optimizer->first().size(); ++i) {
      o.first.push_back(pack_tensor(params[i].name, optimizer->first()[i]));
      o.second.push_back(pack_tensor(params[i].name, optimizer->second()[i]));
    }
  }
  return c;
}

template <class T>
void restore_checkpoint(const Checkpoint& c, ad::ParameterSet<T>& params, ad::Optimizer<T>* optimizer) {
  for (const auto& t : c.params) {
    auto* p = params.find(t.name);
    GATT_CHECK(p != nullptr, "checkpoint parameter '" + t.name + "' does not exist in the model");
    GATT_CHECK(p->value.shape() == t.shape, "checkpoint parameter '" + t.name + "' has shape " +
                                                shape_string(t.shape) + ", model expects " +
                                                shape_string(p->value.shape()));
    p->value = unpack_tensor<T>(t);
    p->decay = t.decay;
    p->trainable = t.trainable;
  }
  GATT_CHECK(c.params.size() == params.size(), "checkpoint and model have different parameter counts");
  if (!optimizer) return;
  auto& cfg = optimizer->config();
  const auto& o = c.optimizer;
  cfg.kind = o.kind == 0 ? ad::OptimizerKind::adam : ad::OptimizerKind::sgd;
  cfg.lr = o.lr;
  cfg.beta1 = o.beta1;
  cfg.beta2 = o.beta2;
  cfg.eps = o.eps;
  cfg.weight_decay = o.weight_decay;
  cfg.momentum = o.momentum;
  optimizer->set_steps(o.steps);
  optimizer->first().clear();
  optimizer->second().clear();
  for (std::size_t i = 0; i < o.first.size(); ++i) {
    optimizer->first().push_back(unpack_tensor<T>(o.first[i]));
    optimizer->second().push_back(unpack_tensor<T>(o.second[i]));
  }
}

#define GATT_INSTANTIATE_IO(T)                                                                             \
  template CheckpointTensor pack_tensor(const std::string&, const Tensor<T>&, bool, bool);                 \
  template Tensor<T> unpack_tensor(const CheckpointTensor&);                                               \
  template Checkpoint make_checkpoint(const std::string&, const ad::ParameterSet<T>&, const ad::Optimizer<T>*); \
  template void restore_checkpoint(const Checkpoint&, ad::ParameterSet<T>&, ad::Optimizer<T>*);

GATT_INSTANTIATE_IO(float)
GATT_INSTANTIATE_IO(double)

}  // namespace gatt::io
