#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lfp/tensor.hpp"

namespace lfp {

struct Dataset {
  Tensor inputs;            // [N x sample shape]
  std::vector<int> labels;  // each in [0, class_count)
  int class_count = 0;

  int size() const { return inputs.rank() > 0 ? inputs.dim(0) : 0; }
};

// Two isotropic Gaussian clusters at [1,1] and [2,2], std 0.2, classes
// interleaved so any contiguous split stays balanced.
Dataset make_blobs(int n, std::uint64_t seed, double std_dev = 0.2);

// Outer unit circle vs. inner circle scaled by `factor`, Gaussian noise
// added per coordinate.
Dataset make_circles(int n, std::uint64_t seed, double noise = 0.2,
                     double factor = 0.05);

// Three interleaved Archimedean spiral arms offset by 2*pi/3, Gaussian
// radial noise.
Dataset make_swirl(int n, double turns, std::uint64_t seed, double noise = 0.05);

// Contiguous sub-range [from, from+count).
Dataset subset(const Dataset& ds, int from, int count);

// Reshape every sample to `sample_shape` (e.g. {784} or {1, 28, 28}).
Dataset reshape_samples(Dataset ds, std::vector<int> sample_shape);

struct IdxHeader {
  std::int32_t magic = 0;  // 2051 images, 2049 labels
  std::vector<int> dims;   // big-endian 32-bit sizes in the file
};

struct IdxData {
  IdxHeader header;
  std::vector<unsigned char> payload;  // row-major
};

IdxData read_idx(const std::string& path);
void write_idx(const std::string& path, const IdxData& data);

// Parses an images/labels file pair; pixel values scaled to [0,1] by /255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Loads the four canonical MNIST files from a directory.
Dataset load_mnist(const std::string& dir, bool train);

// x1,x2,label rows for the 2-d toy datasets.
void export_csv(const Dataset& ds, const std::string& path);

Tensor one_hot(const std::vector<int>& labels, int class_count);

struct Batch {
  Tensor x;
  Tensor y;  // one-hot
  std::vector<int> labels;
};

// Seeded permutation each epoch; the last partial batch is kept.
class Batches {
 public:
  Batches(const Dataset& ds, int batch_size, std::uint64_t shuffle_seed);
  bool next(Batch& out);
  int count() const;

 private:
  const Dataset* ds_;
  int batch_size_;
  std::vector<int> order_;
  size_t pos_ = 0;
};

}  // namespace lfp
