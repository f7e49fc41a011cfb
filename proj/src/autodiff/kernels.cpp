#include "imagine/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace imagine::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = std::size_t{1} << 15;

void check_gemm(std::size_t m, std::size_t k1, std::size_t k2, std::size_t n, MatrixView c) {
  if (k1 != k2 || c.rows != m || c.cols != n) {
    throw DimensionError("gemm: incompatible operand shapes");
  }
}

inline double clamped_sigmoid(double logit, double clamp) {
  double p = 1.0 / (1.0 + std::exp(-logit));
  return std::clamp(p, clamp, 1.0 - clamp);
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

void gemm_nn(ConstMatrixView a, ConstMatrixView b, MatrixView c) {
  check_gemm(a.rows, a.cols, b.rows, b.cols, c);
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  const bool par = m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data + i * n;
    std::fill(crow, crow + n, 0.0);
    const double* arow = a.data + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b.data + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(ConstMatrixView a, ConstMatrixView b, MatrixView c) {
  check_gemm(a.rows, a.cols, b.cols, b.rows, c);
  // Transpose B once so the inner loop runs over contiguous memory.
  std::vector<double> bt(b.rows * b.cols);
  for (std::size_t i = 0; i < b.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) bt[j * b.rows + i] = b.data[i * b.cols + j];
  }
  gemm_nn(a, {bt.data(), b.cols, b.rows}, c);
}

void gemm_tn(ConstMatrixView a, ConstMatrixView b, MatrixView c) {
  check_gemm(a.cols, a.rows, b.rows, b.cols, c);
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  const bool par = m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::size_t p = 0; p < k; ++p) {
    double* crow = c.data + p * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a.data[i * k + p];
      const double* brow = b.data + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void affine(ConstMatrixView x, ConstMatrixView w, ConstMatrixView b, MatrixView y) {
  if (b.rows != 1 || b.cols != w.cols) throw DimensionError("affine: bias shape mismatch");
  gemm_nn(x, w, y);
  const std::size_t n = y.cols;
#pragma omp parallel for schedule(static) if (y.rows * n >= kParallelWork)
  for (std::size_t i = 0; i < y.rows; ++i) {
    double* yrow = y.data + i * n;
    for (std::size_t j = 0; j < n; ++j) yrow[j] += b.data[j];
  }
}

void column_sums(ConstMatrixView a, MatrixView out) {
  if (out.rows != 1 || out.cols != a.cols) throw DimensionError("column_sums: output shape");
  const std::size_t n = a.cols;
  constexpr std::size_t kBlock = 64;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  // Each block walks the rows in order, matching the serial summation order.
#pragma omp parallel for schedule(static) if (a.rows * n >= kParallelWork)
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::size_t j0 = blk * kBlock, j1 = std::min(n, j0 + kBlock);
    std::fill(out.data + j0, out.data + j1, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
      const double* arow = a.data + i * n;
      for (std::size_t j = j0; j < j1; ++j) out.data[j] += arow[j];
    }
  }
}

void elu(const double* in, double* out, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= kParallelWork)
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : std::expm1(in[i]);
}

void elu_backward(const double* in, const double* grad_out, double* grad_in, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= kParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    grad_in[i] = in[i] > 0.0 ? grad_out[i] : grad_out[i] * std::exp(in[i]);
  }
}

void bernoulli_loglik_rows(ConstMatrixView logits, ConstMatrixView targets, double clamp,
                           double* out_rows) {
  if (logits.rows != targets.rows || logits.cols != targets.cols) {
    throw DimensionError("bernoulli_loglik: logits/targets shape mismatch");
  }
  const std::size_t n = logits.cols;
#pragma omp parallel for schedule(static) if (logits.rows * n >= kParallelWork)
  for (std::size_t i = 0; i < logits.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double p = clamped_sigmoid(logits.data[i * n + j], clamp);
      const double x = targets.data[i * n + j];
      s += x * std::log(p) + (1.0 - x) * std::log1p(-p);
    }
    out_rows[i] = s;
  }
}

namespace serial {

void gemm_nn(ConstMatrixView a, ConstMatrixView b, MatrixView c) {
  check_gemm(a.rows, a.cols, b.rows, b.cols, c);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols; ++p) s += a.data[i * a.cols + p] * b.data[p * b.cols + j];
      c.data[i * c.cols + j] = s;
    }
  }
}

void gemm_nt(ConstMatrixView a, ConstMatrixView b, MatrixView c) {
  check_gemm(a.rows, a.cols, b.cols, b.rows, c);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols; ++p) s += a.data[i * a.cols + p] * b.data[j * b.cols + p];
      c.data[i * c.cols + j] = s;
    }
  }
}

void gemm_tn(ConstMatrixView a, ConstMatrixView b, MatrixView c) {
  check_gemm(a.cols, a.rows, b.rows, b.cols, c);
  for (std::size_t p = 0; p < a.cols; ++p) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < a.rows; ++i) s += a.data[i * a.cols + p] * b.data[i * b.cols + j];
      c.data[p * c.cols + j] = s;
    }
  }
}

void affine(ConstMatrixView x, ConstMatrixView w, ConstMatrixView b, MatrixView y) {
  if (b.rows != 1 || b.cols != w.cols) throw DimensionError("affine: bias shape mismatch");
  serial::gemm_nn(x, w, y);
  for (std::size_t i = 0; i < y.rows; ++i) {
    for (std::size_t j = 0; j < y.cols; ++j) y.data[i * y.cols + j] += b.data[j];
  }
}

void column_sums(ConstMatrixView a, MatrixView out) {
  if (out.rows != 1 || out.cols != a.cols) throw DimensionError("column_sums: output shape");
  for (std::size_t j = 0; j < a.cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) s += a.data[i * a.cols + j];
    out.data[j] = s;
  }
}

void elu(const double* in, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : std::expm1(in[i]);
}

void elu_backward(const double* in, const double* grad_out, double* grad_in, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    grad_in[i] = in[i] > 0.0 ? grad_out[i] : grad_out[i] * std::exp(in[i]);
  }
}

void bernoulli_loglik_rows(ConstMatrixView logits, ConstMatrixView targets, double clamp,
                           double* out_rows) {
  if (logits.rows != targets.rows || logits.cols != targets.cols) {
    throw DimensionError("bernoulli_loglik: logits/targets shape mismatch");
  }
  for (std::size_t i = 0; i < logits.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < logits.cols; ++j) {
      const double p = clamped_sigmoid(logits.data[i * logits.cols + j], clamp);
      const double x = targets.data[i * logits.cols + j];
      s += x * std::log(p) + (1.0 - x) * std::log1p(-p);
    }
    out_rows[i] = s;
  }
}

}  // namespace serial

}  // namespace imagine::kernels
