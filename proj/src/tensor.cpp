#include "lfp/tensor.hpp"

#include <cblas.h>

#include <cmath>

extern "C" void openblas_set_num_threads(int);

namespace lfp {

void set_compute_threads(int n) {
  if (n < 1) n = 1;
  openblas_set_num_threads(n);
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  check(!rows.empty(), "from_rows: empty");
  int m = static_cast<int>(rows.size());
  int n = static_cast<int>(rows[0].size());
  Tensor t = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    check(static_cast<int>(rows[static_cast<size_t>(i)].size()) == n,
          "from_rows: ragged rows");
    for (int j = 0; j < n; ++j) t.at2(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  }
  return t;
}

Tensor Tensor::reshaped(std::vector<int> s) const {
  check(numel_of(s) == numel(), "reshape: element count mismatch");
  Tensor t;
  t.shape = std::move(s);
  t.data = data;
  return t;
}

namespace {

void dgemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a,
           int lda, const double* b, int ldb, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0, a, lda, b, ldb,
              0.0, c, ldc);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2, "matmul: operands must be 2-d");
  check(a.dim(1) == b.dim(0), "matmul: inner dimensions disagree");
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c = Tensor::zeros({m, n});
  if (m && n && k) dgemm(false, false, m, n, k, a.data.data(), k, b.data.data(), n, c.data.data(), n);
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2, "matmul_tn: operands must be 2-d");
  check(a.dim(0) == b.dim(0), "matmul_tn: leading dimensions disagree");
  int k = a.dim(0), m = a.dim(1), n = b.dim(1);
  Tensor c = Tensor::zeros({m, n});
  if (m && n && k) dgemm(true, false, m, n, k, a.data.data(), m, b.data.data(), n, c.data.data(), n);
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2, "matmul_nt: operands must be 2-d");
  check(a.dim(1) == b.dim(1), "matmul_nt: trailing dimensions disagree");
  int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor c = Tensor::zeros({m, n});
  if (m && n && k) dgemm(false, true, m, n, k, a.data.data(), k, b.data.data(), k, c.data.data(), n);
  return c;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int pad) {
  check(input.rank() == 3, "conv2d: input must be [C_in x H x W]");
  check(kernels.rank() == 4, "conv2d: kernels must be [C_out x C_in x k x k]");
  check(stride >= 1, "conv2d: stride must be >= 1");
  check(pad >= 0, "conv2d: pad must be >= 0");
  int c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  int c_out = kernels.dim(0), k = kernels.dim(2);
  check(kernels.dim(1) == c_in, "conv2d: channel mismatch");
  check(kernels.dim(3) == k, "conv2d: kernels must be square");
  check(k <= h + 2 * pad && k <= w + 2 * pad, "conv2d: kernel larger than padded input");

  int h_out = (h + 2 * pad - k) / stride + 1;
  int w_out = (w + 2 * pad - k) / stride + 1;
  Tensor out = Tensor::zeros({c_out, h_out, w_out});

  const double* in = input.data.data();
  const double* ker = kernels.data.data();
  double* o = out.data.data();
  for (int co = 0; co < c_out; ++co) {
    for (int oy = 0; oy < h_out; ++oy) {
      for (int ox = 0; ox < w_out; ++ox) {
        double acc = 0.0;
        int iy0 = oy * stride - pad;
        int ix0 = ox * stride - pad;
        for (int ci = 0; ci < c_in; ++ci) {
          const double* in_plane = in + static_cast<size_t>(ci) * h * w;
          const double* k_plane =
              ker + ((static_cast<size_t>(co) * c_in + ci) * k) * k;
          for (int ky = 0; ky < k; ++ky) {
            int iy = iy0 + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              int ix = ix0 + kx;
              if (ix < 0 || ix >= w) continue;
              acc += in_plane[static_cast<size_t>(iy) * w + ix] *
                     k_plane[static_cast<size_t>(ky) * k + kx];
            }
          }
        }
        o[(static_cast<size_t>(co) * h_out + oy) * w_out + ox] = acc;
      }
    }
  }
  return out;
}

std::pair<Tensor, PoolIndex> maxpool2d(const Tensor& input, int k, int stride) {
  check(input.rank() == 3, "maxpool2d: input must be [C x H x W]");
  check(k >= 1 && stride >= 1, "maxpool2d: k and stride must be >= 1");
  int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  check(k <= h && k <= w, "maxpool2d: window exceeds input");
  int h_out = (h - k) / stride + 1;
  int w_out = (w - k) / stride + 1;
  Tensor out = Tensor::zeros({c, h_out, w_out});
  PoolIndex idx;
  idx.shape = out.shape;
  idx.index.resize(static_cast<size_t>(out.numel()));

  const double* in = input.data.data();
  for (int ci = 0; ci < c; ++ci) {
    const double* plane = in + static_cast<size_t>(ci) * h * w;
    for (int oy = 0; oy < h_out; ++oy) {
      for (int ox = 0; ox < w_out; ++ox) {
        double best = plane[static_cast<size_t>(oy) * stride * w + ox * stride];
        std::int64_t best_at = static_cast<std::int64_t>(oy) * stride * w + ox * stride;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            std::int64_t p = (static_cast<std::int64_t>(oy) * stride + ky) * w +
                             ox * stride + kx;
            if (plane[p] > best) {
              best = plane[p];
              best_at = p;
            }
          }
        }
        size_t o = (static_cast<size_t>(ci) * h_out + oy) * w_out + ox;
        out.data[o] = best;
        idx.index[o] = best_at;  // offset within channel plane
      }
    }
  }
  return {out, idx};
}

void ensure_finite(const Tensor& t, const std::string& where) {
  for (double v : t.data)
    if (!std::isfinite(v)) throw std::runtime_error(where + ": non-finite value");
}

}  // namespace lfp
