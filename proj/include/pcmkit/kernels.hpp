#pragma once

#include <cstdint>

#include "pcmkit/tensor.hpp"

// Dense kernels behind the transformer. Every kernel exists twice: a plain
// serial reference under kern::ref and an OpenMP version under kern::omp.
// Both compute each output element with the identical serial reduction
// order, so their results are bitwise equal and independent of thread count;
// the unit tests assert this. The unprefixed entry points dispatch on
// set_parallel().
namespace pcmkit::kern {

inline constexpr double kNegInf = -1e30;

void set_parallel(bool enabled);
bool parallel_enabled();
int max_threads();

namespace ref {

// C[m,n] = A[m,k] * B[k,n]
void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// C[m,n] = A[m,k] * B[n,k]^T
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// C[m,n] = A[k,m]^T * B[k,n]
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// C[m,n] += A[k,m]^T * B[k,n]
void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// In-place row-wise softmax, numerically stabilized by the row max.
void softmax_rows(double* x, int64_t rows, int64_t cols);

// y = gain .* (x - mean) / sqrt(var + eps) + bias, per row; xhat and inv_std
// are cached for the backward pass.
void layernorm_rows(const double* x, const double* gain, const double* bias, double* y,
                    double* xhat, double* inv_std, int64_t rows, int64_t cols, double eps);

void relu(const double* x, double* y, int64_t n);
void relu_backward(const double* x, const double* dy, double* dx, int64_t n);
void add_bias_rows(double* x, const double* bias, int64_t rows, int64_t cols);

}  // namespace ref

namespace omp {

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void softmax_rows(double* x, int64_t rows, int64_t cols);
void layernorm_rows(const double* x, const double* gain, const double* bias, double* y,
                    double* xhat, double* inv_std, int64_t rows, int64_t cols, double eps);
void relu(const double* x, double* y, int64_t n);
void relu_backward(const double* x, const double* dy, double* dx, int64_t n);
void add_bias_rows(double* x, const double* bias, int64_t rows, int64_t cols);

}  // namespace omp

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void softmax_rows(double* x, int64_t rows, int64_t cols);
void layernorm_rows(const double* x, const double* gain, const double* bias, double* y,
                    double* xhat, double* inv_std, int64_t rows, int64_t cols, double eps);
void relu(const double* x, double* y, int64_t n);
void relu_backward(const double* x, const double* dy, double* dx, int64_t n);
void add_bias_rows(double* x, const double* bias, int64_t rows, int64_t cols);

// Tensor wrappers around the dispatching kernels.

// y[rows,out] = x[rows,in] * W[out,in]^T + b
void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y);
// dx = dy * W; dW += dy^T * x; db += column sums of dy
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dx,
                     Tensor& dw, Tensor& db);

// LayerNorm backward given the cached normalized input and inverse stddev.
void layernorm_backward(const Tensor& xhat, const std::vector<double>& inv_std,
                        const Tensor& gain, const Tensor& dy, Tensor& dx, Tensor& dgain,
                        Tensor& dbias);

// dS for y = softmax(s) rows: dS = y .* (dY - rowsum(dY .* y))
void softmax_backward_rows(const double* y, const double* dy, double* ds, int64_t rows,
                           int64_t cols);

}  // namespace pcmkit::kern
