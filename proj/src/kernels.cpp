#include "pcmkit/kernels.hpp"

#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pcmkit::kern {

namespace {
std::atomic<bool> g_parallel{true};
}

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// ---------------------------------------------------------------------------
// serial reference
// ---------------------------------------------------------------------------

namespace ref {

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (int64_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] = s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (int64_t p = 0; p < k; ++p) {
      const double api = a[p * m + i];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double api = a[p * m + i];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

void softmax_rows(double* x, int64_t rows, int64_t cols) {
  for (int64_t i = 0; i < rows; ++i) {
    double* xi = x + i * cols;
    double mx = xi[0];
    for (int64_t j = 1; j < cols; ++j) mx = xi[j] > mx ? xi[j] : mx;
    double sum = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      xi[j] = std::exp(xi[j] - mx);
      sum += xi[j];
    }
    const double inv = 1.0 / sum;
    for (int64_t j = 0; j < cols; ++j) xi[j] *= inv;
  }
}

void layernorm_rows(const double* x, const double* gain, const double* bias, double* y,
                    double* xhat, double* inv_std, int64_t rows, int64_t cols, double eps) {
  for (int64_t i = 0; i < rows; ++i) {
    const double* xi = x + i * cols;
    double mean = 0.0;
    for (int64_t j = 0; j < cols; ++j) mean += xi[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      const double d = xi[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[i] = istd;
    double* yi = y + i * cols;
    double* hi = xhat + i * cols;
    for (int64_t j = 0; j < cols; ++j) {
      hi[j] = (xi[j] - mean) * istd;
      yi[j] = gain[j] * hi[j] + bias[j];
    }
  }
}

void relu(const double* x, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* dy, double* dx, int64_t n) {
  for (int64_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void add_bias_rows(double* x, const double* bias, int64_t rows, int64_t cols) {
  for (int64_t i = 0; i < rows; ++i) {
    double* xi = x + i * cols;
    for (int64_t j = 0; j < cols; ++j) xi[j] += bias[j];
  }
}

}  // namespace ref

// ---------------------------------------------------------------------------
// OpenMP
//
// Each output row is owned by exactly one thread and reduced in the same
// order as the reference, which keeps results bitwise equal to ref::.
// ---------------------------------------------------------------------------

namespace omp {

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (int64_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] = s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (int64_t p = 0; p < k; ++p) {
      const double api = a[p * m + i];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double api = a[p * m + i];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

void softmax_rows(double* x, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < rows; ++i) {
    double* xi = x + i * cols;
    double mx = xi[0];
    for (int64_t j = 1; j < cols; ++j) mx = xi[j] > mx ? xi[j] : mx;
    double sum = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      xi[j] = std::exp(xi[j] - mx);
      sum += xi[j];
    }
    const double inv = 1.0 / sum;
    for (int64_t j = 0; j < cols; ++j) xi[j] *= inv;
  }
}

void layernorm_rows(const double* x, const double* gain, const double* bias, double* y,
                    double* xhat, double* inv_std, int64_t rows, int64_t cols, double eps) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < rows; ++i) {
    ref::layernorm_rows(x + i * cols, gain, bias, y + i * cols, xhat + i * cols, inv_std + i,
                        1, cols, eps);
  }
}

void relu(const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* dy, double* dx, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void add_bias_rows(double* x, const double* bias, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < rows; ++i) {
    double* xi = x + i * cols;
    for (int64_t j = 0; j < cols; ++j) xi[j] += bias[j];
  }
}

}  // namespace omp

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

#define PCMKIT_DISPATCH(fn, ...)      \
  do {                                \
    if (parallel_enabled()) {         \
      omp::fn(__VA_ARGS__);           \
    } else {                          \
      ref::fn(__VA_ARGS__);           \
    }                                 \
  } while (0)

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  PCMKIT_DISPATCH(matmul_nn, a, b, c, m, k, n);
}
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  PCMKIT_DISPATCH(matmul_nt, a, b, c, m, k, n);
}
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  PCMKIT_DISPATCH(matmul_tn, a, b, c, m, k, n);
}
void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  PCMKIT_DISPATCH(matmul_tn_acc, a, b, c, m, k, n);
}
void softmax_rows(double* x, int64_t rows, int64_t cols) {
  PCMKIT_DISPATCH(softmax_rows, x, rows, cols);
}
void layernorm_rows(const double* x, const double* gain, const double* bias, double* y,
                    double* xhat, double* inv_std, int64_t rows, int64_t cols, double eps) {
  PCMKIT_DISPATCH(layernorm_rows, x, gain, bias, y, xhat, inv_std, rows, cols, eps);
}
void relu(const double* x, double* y, int64_t n) { PCMKIT_DISPATCH(relu, x, y, n); }
void relu_backward(const double* x, const double* dy, double* dx, int64_t n) {
  PCMKIT_DISPATCH(relu_backward, x, dy, dx, n);
}
void add_bias_rows(double* x, const double* bias, int64_t rows, int64_t cols) {
  PCMKIT_DISPATCH(add_bias_rows, x, bias, rows, cols);
}

#undef PCMKIT_DISPATCH

// ---------------------------------------------------------------------------
// tensor wrappers
// ---------------------------------------------------------------------------

void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
  // x[rows,in] * w[out,in]^T
  y = Tensor(x.rows, w.rows);
  matmul_nt(x.v.data(), w.v.data(), y.v.data(), x.rows, x.cols, w.rows);
  add_bias_rows(y.v.data(), b.v.data(), y.rows, y.cols);
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dx,
                     Tensor& dw, Tensor& db) {
  dx = Tensor(x.rows, x.cols);
  matmul_nn(dy.v.data(), w.v.data(), dx.v.data(), dy.rows, dy.cols, w.cols);
  // dW[out,in] += dY[rows,out]^T X[rows,in]
  matmul_tn_acc(dy.v.data(), x.v.data(), dw.v.data(), dy.cols, dy.rows, x.cols);
  for (int64_t i = 0; i < dy.rows; ++i) {
    const double* r = dy.row(i);
    for (int64_t j = 0; j < dy.cols; ++j) db.v[static_cast<size_t>(j)] += r[j];
  }
}

void layernorm_backward(const Tensor& xhat, const std::vector<double>& inv_std,
                        const Tensor& gain, const Tensor& dy, Tensor& dx, Tensor& dgain,
                        Tensor& dbias) {
  const int64_t rows = xhat.rows, cols = xhat.cols;
  dx = Tensor(rows, cols);
  // per-column reductions stay serial over rows so results do not depend on
  // thread count
  for (int64_t i = 0; i < rows; ++i) {
    const double* h = xhat.row(i);
    const double* g = dy.row(i);
    for (int64_t j = 0; j < cols; ++j) {
      dgain.v[static_cast<size_t>(j)] += g[j] * h[j];
      dbias.v[static_cast<size_t>(j)] += g[j];
    }
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel_enabled())
#endif
  for (int64_t i = 0; i < rows; ++i) {
    const double* h = xhat.row(i);
    const double* g = dy.row(i);
    double* out = dx.row(i);
    double mean_gh = 0.0, mean_g = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      const double gg = g[j] * gain.v[static_cast<size_t>(j)];
      mean_g += gg;
      mean_gh += gg * h[j];
    }
    mean_g /= static_cast<double>(cols);
    mean_gh /= static_cast<double>(cols);
    const double istd = inv_std[static_cast<size_t>(i)];
    for (int64_t j = 0; j < cols; ++j) {
      const double gg = g[j] * gain.v[static_cast<size_t>(j)];
      out[j] = (gg - mean_g - h[j] * mean_gh) * istd;
    }
  }
}

void softmax_backward_rows(const double* y, const double* dy, double* ds, int64_t rows,
                           int64_t cols) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel_enabled())
#endif
  for (int64_t i = 0; i < rows; ++i) {
    const double* yi = y + i * cols;
    const double* gi = dy + i * cols;
    double* oi = ds + i * cols;
    double dot = 0.0;
    for (int64_t j = 0; j < cols; ++j) dot += yi[j] * gi[j];
    for (int64_t j = 0; j < cols; ++j) oi[j] = yi[j] * (gi[j] - dot);
  }
}

}  // namespace pcmkit::kern
