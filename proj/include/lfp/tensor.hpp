#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lfp {

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

// Dense n-dimensional array of 64-bit reals, row-major.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    check(numel_of(shape) == static_cast<std::int64_t>(data.size()),
          "tensor: shape does not match data length");
  }

  static Tensor zeros(std::vector<int> s) {
    std::int64_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
  }
  static Tensor full(std::vector<int> s, double v) {
    std::int64_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), v));
  }
  // Convenience for 2-d literals in tests and small constructions.
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
      check(d >= 0, "tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }
  int rank() const { return static_cast<int>(shape.size()); }

  double& operator[](std::int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](std::int64_t i) const { return data[static_cast<size_t>(i)]; }

  double& at2(int i, int j) { return data[static_cast<size_t>(i) * dim(1) + j]; }
  double at2(int i, int j) const { return data[static_cast<size_t>(i) * dim(1) + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  Tensor reshaped(std::vector<int> s) const;
};

// Winning input cell per pooling-window output, as flat row-major offsets
// into the input plane the window was taken from.
struct PoolIndex {
  std::vector<int> shape;  // matches the pooled output
  std::vector<std::int64_t> index;
};

// Standard matrix product, [m x k] * [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);
// a^T * b, with a [k x m], b [k x n] -> [m x n].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// a * b^T, with a [m x k], b [n x k] -> [m x n].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// 2-d cross-correlation (no kernel flip). input [C_in x H x W],
// kernels [C_out x C_in x k x k]; H' = floor((H + 2 pad - k) / stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int pad);

// Per-window maximum with argmax recording; ties go to the first cell in
// row-major scan order so reward routing is deterministic.
std::pair<Tensor, PoolIndex> maxpool2d(const Tensor& input, int k, int stride);

// NaN/Inf anywhere is an error state, not a value.
void ensure_finite(const Tensor& t, const std::string& where);

void set_compute_threads(int n);

}  // namespace lfp
