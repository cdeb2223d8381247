#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gatt/autodiff.hpp"
#include "gatt/tensor.hpp"

namespace gatt::io {

// ---- IDX (big-endian) -------------------------------------------------------

inline constexpr std::uint32_t kIdxImages = 0x00000803;
inline constexpr std::uint32_t kIdxLabels = 0x00000801;

/// Raw unsigned-byte IDX payload.
struct IdxFile {
  std::uint32_t magic = 0;
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> bytes;
};

IdxFile read_idx_raw(const std::string& path);
/// Images [N, Y, X] scaled to [0, 1], or labels [N] as their integer values.
Tensor<double> read_idx(const std::string& path);
std::vector<std::size_t> read_idx_labels(const std::string& path);

// ---- PGM / PPM ---------------------------------------------------------------

/// Intensity in [0, 1] to a byte: v * 255 rounded to nearest with ties going down,
/// clamped. So 0.5 -> 127 and 1 -> 255.
std::uint8_t quantize(double v);

/// Plane [Y, X]. With `normalize`, values are min-max scaled to [0, 1] first.
void write_pgm(const Tensor<double>& plane, const std::string& path, bool normalize = false);
/// Colour image [3, Y, X].
void write_ppm(const Tensor<double>& rgb, const std::string& path, bool normalize = false);
/// Binary P5 reader; returns [Y, X] in [0, 1].
Tensor<double> read_pgm(const std::string& path);

/// Input plane beside one tile per map plane, each nearest-upsampled by `scale`
/// and min-max normalised, separated by one-pixel gaps. `maps` is [K, Y', X'].
Tensor<double> attention_montage(const Tensor<double>& maps, const Tensor<double>& input, std::size_t scale);
void write_attention_montage(const Tensor<double>& maps, const Tensor<double>& input, const std::string& path,
                             std::size_t scale = 4);

// ---- checkpoints ---------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  DType dtype = DType::f64;
  bool decay = true;
  bool trainable = true;
  Shape shape;
  std::vector<unsigned char> raw;  // little-endian values

  bool operator==(const CheckpointTensor&) const = default;
};

struct CheckpointOptimizer {
  std::uint8_t kind = 0;  // 0 adam, 1 sgd
  std::uint64_t steps = 0;
  double lr = 0, beta1 = 0, beta2 = 0, eps = 0, weight_decay = 0, momentum = 0;
  std::vector<CheckpointTensor> first, second;

  bool operator==(const CheckpointOptimizer&) const = default;
};

/// File layout (little-endian): "GATT", u32 version, u64 + bytes config text,
/// u32 parameter count and per-tensor records (u32 + bytes name, u8 dtype,
/// u8 flags, u32 rank, u64 dims, raw values), then the optimiser block
/// (u8 kind, u64 steps, six f64 hyperparameters, u32 count, first and second
/// moment tensor records).
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config;
  std::vector<CheckpointTensor> params;
  CheckpointOptimizer optimizer;

  bool operator==(const Checkpoint&) const = default;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

template <class T>
CheckpointTensor pack_tensor(const std::string& name, const Tensor<T>& t, bool decay = true, bool trainable = true);
template <class T>
Tensor<T> unpack_tensor(const CheckpointTensor& t);

template <class T>
Checkpoint make_checkpoint(const std::string& config, const ad::ParameterSet<T>& params,
                           const ad::Optimizer<T>* optimizer);
/// Copies stored values into same-named parameters (shapes and dtype must match)
/// and restores the optimiser when given.
template <class T>
void restore_checkpoint(const Checkpoint& ckpt, ad::ParameterSet<T>& params, ad::Optimizer<T>* optimizer);

}  // namespace gatt::io
