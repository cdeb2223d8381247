#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gatt/tensor.hpp"

namespace gatt::data {

struct LabeledImageSet {
  Tensor<double> images;  // [N, C, Y, X] in [0, 1]
  std::vector<std::size_t> labels;
  std::string split;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
};

struct DatasetSplits {
  LabeledImageSet train, val, test;
};

/// Counterclockwise rotation about the plane centre of a square [Y, X] or
/// [..., Y, X] array. Bilinear with zero fill; multiples of 90 degrees take the
/// exact permutation path.
Tensor<double> rotate_bilinear(const Tensor<double>& img, double degrees);

/// Standard MNIST file names expected in the source directory.
inline const char* const kMnistFiles[4] = {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                                           "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"};

/// Rotated MNIST: the 70k pooled digits are shuffled under `seed`, split into
/// train / validation / test, and each image is rotated by an angle drawn
/// uniformly from [0, 360).
DatasetSplits make_rotmnist(const std::string& mnist_dir, std::size_t n_train, std::size_t n_test,
                            std::uint64_t seed, std::size_t n_val = 2000);

inline constexpr std::size_t kShapeSize = 16;
enum class ShapeClass : std::size_t { bar, corner, tee, ell };
std::string to_string(ShapeClass c);

/// Pixel cells (row, col) of a class template in its canonical orientation.
std::vector<std::array<long, 2>> shape_cells(ShapeClass c);

/// Balanced four-class set of 16x16 binary images. Each holds one template,
/// rotated by a uniformly drawn multiple of 90 degrees and placed at a random
/// offset with a one-pixel border.
LabeledImageSet synth_shapes(std::size_t n, std::uint64_t seed, std::string split = "train");

/// Images of the listed samples, [B, C, Y, X], and their labels.
template <class T>
Tensor<T> batch_images(const LabeledImageSet& set, const std::vector<std::size_t>& indices);
std::vector<std::size_t> batch_labels(const LabeledImageSet& set, const std::vector<std::size_t>& indices);

/// Subtracts the per-channel mean of `reference` from every set.
void subtract_mean(const LabeledImageSet& reference, std::vector<LabeledImageSet*> sets);

}  // namespace gatt::data
