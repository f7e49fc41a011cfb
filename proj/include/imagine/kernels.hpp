#pragma once

// Dense numeric kernels behind the autodiff engine.
//
// Every kernel exists twice: an OpenMP version in `kernels` and a plain
// serial version in `kernels::serial`. Both accumulate in the same order, so
// their results agree bit-for-bit; the serial versions are the reference the
// tests compare against and the baseline the benchmark measures.

#include <cstddef>

#include "imagine/tensor.hpp"

namespace imagine::kernels {

struct ConstMatrixView {
  const double* data;
  std::size_t rows;
  std::size_t cols;
};

struct MatrixView {
  double* data;
  std::size_t rows;
  std::size_t cols;

  operator ConstMatrixView() const { return {data, rows, cols}; }
};

inline ConstMatrixView view(const Tensor& t) { return {t.data(), t.rows(), t.cols()}; }
inline MatrixView view(Tensor& t) { return {t.data(), t.rows(), t.cols()}; }

/// Number of threads the parallel kernels will use.
int max_threads();

/// C = A * B
void gemm_nn(ConstMatrixView a, ConstMatrixView b, MatrixView c);
/// C = A * B^T
void gemm_nt(ConstMatrixView a, ConstMatrixView b, MatrixView c);
/// C = A^T * B
void gemm_tn(ConstMatrixView a, ConstMatrixView b, MatrixView c);

/// Y = X * W + 1 b^T, with b a 1 x n row.
void affine(ConstMatrixView x, ConstMatrixView w, ConstMatrixView b, MatrixView y);

/// out[j] = sum_i a[i, j]
void column_sums(ConstMatrixView a, MatrixView out);

/// Elementwise exponential linear unit and its backward pass.
void elu(const double* in, double* out, std::size_t n);
void elu_backward(const double* in, const double* grad_out, double* grad_in, std::size_t n);

/// Per-row Bernoulli log-likelihood of binary targets under logits, with
/// probabilities clamped to [clamp, 1 - clamp].
void bernoulli_loglik_rows(ConstMatrixView logits, ConstMatrixView targets, double clamp,
                           double* out_rows);

namespace serial {

void gemm_nn(ConstMatrixView a, ConstMatrixView b, MatrixView c);
void gemm_nt(ConstMatrixView a, ConstMatrixView b, MatrixView c);
void gemm_tn(ConstMatrixView a, ConstMatrixView b, MatrixView c);
void affine(ConstMatrixView x, ConstMatrixView w, ConstMatrixView b, MatrixView y);
void column_sums(ConstMatrixView a, MatrixView out);
void elu(const double* in, double* out, std::size_t n);
void elu_backward(const double* in, const double* grad_out, double* grad_in, std::size_t n);
void bernoulli_loglik_rows(ConstMatrixView logits, ConstMatrixView targets, double clamp,
                           double* out_rows);

}  // namespace serial

}  // namespace imagine::kernels
