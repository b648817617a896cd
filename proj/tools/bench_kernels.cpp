// Times the serial reference kernels against the OpenMP versions and checks
// that both produce bitwise-identical output.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "pcmkit/kernels.hpp"
#include "pcmkit/rng.hpp"

using pcmkit::Rng;
namespace kern = pcmkit::kern;

namespace {

std::vector<double> random_vec(int64_t n, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.normal();
  return v;
}

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const std::chrono::duration<double> d = std::chrono::steady_clock::now() - t0;
  return d.count() / reps;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

void report(const char* name, double t_ref, double t_omp, bool equal) {
  std::printf("%-14s ref %9.3f ms   omp %9.3f ms   speedup %5.2fx   bitwise %s\n", name,
              t_ref * 1e3, t_omp * 1e3, t_ref / t_omp, equal ? "equal" : "DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
  int64_t size = 256;
  int reps = 5;
  CLI::App app{"kernel benchmark: serial reference vs OpenMP"};
  app.add_option("--size", size, "square matrix dimension");
  app.add_option("--reps", reps, "timed repetitions per kernel");
  CLI11_PARSE(app, argc, argv);

  Rng rng(42);
  const int64_t m = size, k = size, n = size;
  const auto a = random_vec(m * k, rng);
  const auto b = random_vec(k * n, rng);
  std::vector<double> c_ref(static_cast<size_t>(m * n)), c_omp(c_ref.size());

  std::printf("size=%lld reps=%d threads=%d\n", static_cast<long long>(size), reps,
              kern::max_threads());

  {
    const double t_ref =
        time_of([&] { kern::ref::matmul_nn(a.data(), b.data(), c_ref.data(), m, k, n); }, reps);
    const double t_omp =
        time_of([&] { kern::omp::matmul_nn(a.data(), b.data(), c_omp.data(), m, k, n); }, reps);
    report("matmul_nn", t_ref, t_omp, bitwise_equal(c_ref, c_omp));
  }
  {
    const double t_ref =
        time_of([&] { kern::ref::matmul_nt(a.data(), b.data(), c_ref.data(), m, k, n); }, reps);
    const double t_omp =
        time_of([&] { kern::omp::matmul_nt(a.data(), b.data(), c_omp.data(), m, k, n); }, reps);
    report("matmul_nt", t_ref, t_omp, bitwise_equal(c_ref, c_omp));
  }
  {
    const double t_ref =
        time_of([&] { kern::ref::matmul_tn(a.data(), b.data(), c_ref.data(), m, k, n); }, reps);
    const double t_omp =
        time_of([&] { kern::omp::matmul_tn(a.data(), b.data(), c_omp.data(), m, k, n); }, reps);
    report("matmul_tn", t_ref, t_omp, bitwise_equal(c_ref, c_omp));
  }
  {
    auto x_ref = random_vec(m * n, rng);
    auto x_omp = x_ref;
    const double t_ref = time_of(
        [&, x = x_ref]() mutable { kern::ref::softmax_rows(x.data(), m, n); }, reps);
    const double t_omp = time_of(
        [&, x = x_omp]() mutable { kern::omp::softmax_rows(x.data(), m, n); }, reps);
    kern::ref::softmax_rows(x_ref.data(), m, n);
    kern::omp::softmax_rows(x_omp.data(), m, n);
    report("softmax_rows", t_ref, t_omp, bitwise_equal(x_ref, x_omp));
  }
  {
    const auto x = random_vec(m * n, rng);
    const auto gain = random_vec(n, rng);
    const auto bias = random_vec(n, rng);
    std::vector<double> y_ref(x.size()), y_omp(x.size()), xhat(x.size());
    std::vector<double> inv_std(static_cast<size_t>(m));
    const double t_ref = time_of(
        [&] {
          kern::ref::layernorm_rows(x.data(), gain.data(), bias.data(), y_ref.data(),
                                    xhat.data(), inv_std.data(), m, n, 1e-5);
        },
        reps);
    const double t_omp = time_of(
        [&] {
          kern::omp::layernorm_rows(x.data(), gain.data(), bias.data(), y_omp.data(),
                                    xhat.data(), inv_std.data(), m, n, 1e-5);
        },
        reps);
    report("layernorm", t_ref, t_omp, bitwise_equal(y_ref, y_omp));
  }
  return 0;
}
