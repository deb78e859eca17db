#include "lfp/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "lfp/rng.hpp"

namespace lfp {

Dataset make_blobs(int n, std::uint64_t seed, double std_dev) {
  check(n >= 2, "make_blobs: need at least two samples");
  const double centers[2][2] = {{1.0, 1.0}, {2.0, 2.0}};
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, std_dev);
  Dataset ds;
  ds.class_count = 2;
  ds.inputs = Tensor::zeros({n, 2});
  ds.labels.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int cls = i % 2;
    ds.labels[static_cast<size_t>(i)] = cls;
    ds.inputs.at2(i, 0) = centers[cls][0] + g(rng);
    ds.inputs.at2(i, 1) = centers[cls][1] + g(rng);
  }
  return ds;
}

Dataset make_circles(int n, std::uint64_t seed, double noise, double factor) {
  check(n >= 2, "make_circles: need at least two samples");
  Rng rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset ds;
  ds.class_count = 2;
  ds.inputs = Tensor::zeros({n, 2});
  ds.labels.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int cls = i % 2;  // 0 outer, 1 inner
    double radius = cls == 0 ? 1.0 : factor;
    double a = angle(rng);
    ds.labels[static_cast<size_t>(i)] = cls;
    ds.inputs.at2(i, 0) = radius * std::cos(a) + noise * g(rng);
    ds.inputs.at2(i, 1) = radius * std::sin(a) + noise * g(rng);
  }
  return ds;
}

Dataset make_swirl(int n, double turns, std::uint64_t seed, double noise) {
  check(n >= 3, "make_swirl: need at least three samples");
  check(turns > 0.0, "make_swirl: turns must be positive");
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset ds;
  ds.class_count = 3;
  ds.inputs = Tensor::zeros({n, 2});
  ds.labels.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int arm = i % 3;
    double t = u(rng);
    double angle = 2.0 * M_PI * turns * t + 2.0 * M_PI * arm / 3.0;
    double radius = t + noise * g(rng);
    ds.labels[static_cast<size_t>(i)] = arm;
    ds.inputs.at2(i, 0) = radius * std::cos(angle);
    ds.inputs.at2(i, 1) = radius * std::sin(angle);
  }
  return ds;
}

Dataset subset(const Dataset& ds, int from, int count) {
  check(from >= 0 && count >= 0 && from + count <= ds.size(),
        "subset: range out of bounds");
  std::vector<int> sample_shape(ds.inputs.shape.begin() + 1, ds.inputs.shape.end());
  std::int64_t stride = Tensor::numel_of(sample_shape);
  Dataset out;
  out.class_count = ds.class_count;
  std::vector<int> shape = ds.inputs.shape;
  shape[0] = count;
  out.inputs = Tensor::zeros(shape);
  std::memcpy(out.inputs.data.data(),
              ds.inputs.data.data() + static_cast<size_t>(from) * stride,
              static_cast<size_t>(count) * stride * sizeof(double));
  out.labels.assign(ds.labels.begin() + from, ds.labels.begin() + from + count);
  return out;
}

Dataset reshape_samples(Dataset ds, std::vector<int> sample_shape) {
  std::vector<int> shape;
  shape.push_back(ds.size());
  for (int d : sample_shape) shape.push_back(d);
  ds.inputs = ds.inputs.reshaped(std::move(shape));
  return ds;
}

namespace {

std::uint32_t read_be32(std::ifstream& f, const std::string& path) {
  unsigned char buf[4];
  f.read(reinterpret_cast<char*>(buf), 4);
  check(f.gcount() == 4, "idx: truncated header in " + path);
  return (static_cast<std::uint32_t>(buf[0]) << 24) |
         (static_cast<std::uint32_t>(buf[1]) << 16) |
         (static_cast<std::uint32_t>(buf[2]) << 8) | buf[3];
}

void write_be32(std::ofstream& f, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<char*>(buf), 4);
}

}  // namespace

IdxData read_idx(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "idx: cannot open " + path);
  IdxData out;
  std::uint32_t magic = read_be32(f, path);
  check(magic == 2051 || magic == 2049, "idx: bad magic in " + path);
  out.header.magic = static_cast<std::int32_t>(magic);
  int ndims = magic == 2051 ? 3 : 1;
  std::int64_t total = 1;
  for (int i = 0; i < ndims; ++i) {
    std::uint32_t d = read_be32(f, path);
    out.header.dims.push_back(static_cast<int>(d));
    total *= d;
  }
  out.payload.resize(static_cast<size_t>(total));
  f.read(reinterpret_cast<char*>(out.payload.data()), total);
  check(f.gcount() == total, "idx: truncated payload in " + path);
  return out;
}

void write_idx(const std::string& path, const IdxData& data) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "idx: cannot write " + path);
  write_be32(f, static_cast<std::uint32_t>(data.header.magic));
  std::int64_t total = 1;
  for (int d : data.header.dims) {
    write_be32(f, static_cast<std::uint32_t>(d));
    total *= d;
  }
  check(total == static_cast<std::int64_t>(data.payload.size()),
        "idx: payload does not match dims");
  f.write(reinterpret_cast<const char*>(data.payload.data()),
          static_cast<std::streamsize>(data.payload.size()));
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  IdxData images = read_idx(images_path);
  IdxData labels = read_idx(labels_path);
  check(images.header.magic == 2051, "idx: " + images_path + " is not an image file");
  check(labels.header.magic == 2049, "idx: " + labels_path + " is not a label file");
  check(images.header.dims.size() == 3, "idx: image file must have 3 dims");
  int n = images.header.dims[0], h = images.header.dims[1], w = images.header.dims[2];
  check(labels.header.dims[0] == n, "idx: image/label count mismatch");

  Dataset ds;
  ds.inputs = Tensor::zeros({n, h, w});
  for (size_t i = 0; i < images.payload.size(); ++i)
    ds.inputs.data[i] = images.payload[i] / 255.0;
  ds.labels.resize(static_cast<size_t>(n));
  int max_label = 0;
  for (int i = 0; i < n; ++i) {
    ds.labels[static_cast<size_t>(i)] = labels.payload[static_cast<size_t>(i)];
    max_label = std::max(max_label, ds.labels[static_cast<size_t>(i)]);
  }
  ds.class_count = max_label + 1;
  return ds;
}

Dataset load_mnist(const std::string& dir, bool train) {
  std::string stem = train ? "train" : "t10k";
  Dataset ds = load_idx(dir + "/" + stem + "-images-idx3-ubyte",
                        dir + "/" + stem + "-labels-idx1-ubyte");
  ds.class_count = 10;
  return ds;
}

void export_csv(const Dataset& ds, const std::string& path) {
  check(ds.inputs.rank() == 2 && ds.inputs.dim(1) == 2,
        "export_csv: expected 2-d samples");
  std::ofstream f(path);
  check(f.good(), "export_csv: cannot write " + path);
  f << "x1,x2,label\n";
  char buf[96];
  for (int i = 0; i < ds.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d\n", ds.inputs.at2(i, 0),
                  ds.inputs.at2(i, 1), ds.labels[static_cast<size_t>(i)]);
    f << buf;
  }
}

Tensor one_hot(const std::vector<int>& labels, int class_count) {
  Tensor y = Tensor::zeros({static_cast<int>(labels.size()), class_count});
  for (size_t i = 0; i < labels.size(); ++i) {
    check(labels[i] >= 0 && labels[i] < class_count, "one_hot: label out of range");
    y.at2(static_cast<int>(i), labels[i]) = 1.0;
  }
  return y;
}

Batches::Batches(const Dataset& ds, int batch_size, std::uint64_t shuffle_seed)
    : ds_(&ds), batch_size_(batch_size) {
  check(batch_size >= 1, "batches: batch_size must be >= 1");
  order_.resize(static_cast<size_t>(ds.size()));
  std::iota(order_.begin(), order_.end(), 0);
  Rng rng(shuffle_seed);
  std::shuffle(order_.begin(), order_.end(), rng);
}

int Batches::count() const {
  return (ds_->size() + batch_size_ - 1) / batch_size_;
}

bool Batches::next(Batch& out) {
  if (pos_ >= order_.size()) return false;
  size_t take = std::min(static_cast<size_t>(batch_size_), order_.size() - pos_);
  std::vector<int> sample_shape(ds_->inputs.shape.begin() + 1, ds_->inputs.shape.end());
  std::int64_t stride = Tensor::numel_of(sample_shape);
  std::vector<int> shape = ds_->inputs.shape;
  shape[0] = static_cast<int>(take);
  out.x = Tensor::zeros(shape);
  out.labels.resize(take);
  for (size_t i = 0; i < take; ++i) {
    int src = order_[pos_ + i];
    std::memcpy(out.x.data.data() + i * stride,
                ds_->inputs.data.data() + static_cast<size_t>(src) * stride,
                static_cast<size_t>(stride) * sizeof(double));
    out.labels[i] = ds_->labels[static_cast<size_t>(src)];
  }
  out.y = one_hot(out.labels, ds_->class_count);
  pos_ += take;
  return true;
}

}  // namespace lfp
