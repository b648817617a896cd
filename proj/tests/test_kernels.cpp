#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "pcmkit/kernels.hpp"
#include "pcmkit/rng.hpp"
#include "pcmkit/tensor.hpp"

using namespace pcmkit;
using namespace pcmkit::kern;

namespace {

Tensor random_tensor(int64_t r, int64_t c, Rng& rng) {
  Tensor t(r, c);
  for (auto& x : t.v) x = rng.normal();
  return t;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("matmul variants agree with a hand-computed product") {
  // A = [[1,2,3],[4,5,6]], B = [[7,8],[9,10],[11,12]] -> AB = [[58,64],[139,154]]
  const std::vector<double> a = {1, 2, 3, 4, 5, 6};
  const std::vector<double> b = {7, 8, 9, 10, 11, 12};
  const std::vector<double> want = {58, 64, 139, 154};

  std::vector<double> c(4);
  ref::matmul_nn(a.data(), b.data(), c.data(), 2, 3, 2);
  CHECK(c == want);

  // same B stored transposed: [[7,9,11],[8,10,12]]
  const std::vector<double> bt = {7, 9, 11, 8, 10, 12};
  ref::matmul_nt(a.data(), bt.data(), c.data(), 2, 3, 2);
  CHECK(c == want);

  // same A stored transposed: [[1,4],[2,5],[3,6]]
  const std::vector<double> at = {1, 4, 2, 5, 3, 6};
  ref::matmul_tn(at.data(), b.data(), c.data(), 2, 3, 2);
  CHECK(c == want);

  std::vector<double> acc = {1, 1, 1, 1};
  ref::matmul_tn_acc(at.data(), b.data(), acc.data(), 2, 3, 2);
  CHECK(acc == std::vector<double>{59, 65, 140, 155});
}

TEST_CASE("softmax_rows normalizes with exact probabilities") {
  // exp([ln1, ln2, ln3]) = [1, 2, 3] -> [1/6, 2/6, 3/6]
  std::vector<double> x = {0.0, std::log(2.0), std::log(3.0)};
  ref::softmax_rows(x.data(), 1, 3);
  CHECK(x[0] == doctest::Approx(1.0 / 6).epsilon(1e-12));
  CHECK(x[1] == doctest::Approx(2.0 / 6).epsilon(1e-12));
  CHECK(x[2] == doctest::Approx(3.0 / 6).epsilon(1e-12));

  SUBCASE("large magnitudes stay finite") {
    std::vector<double> big = {1000.0, 1000.0, kNegInf};
    ref::softmax_rows(big.data(), 1, 3);
    CHECK(big[0] == doctest::Approx(0.5));
    CHECK(big[2] == doctest::Approx(0.0));
  }
}

TEST_CASE("layernorm_rows matches the definition") {
  const std::vector<double> x = {1, 2, 3, 4};
  const std::vector<double> gain = {1, 1, 1, 1};
  const std::vector<double> bias = {0, 0, 0, 0};
  std::vector<double> y(4), xhat(4), inv_std(1);
  const double eps = 1e-5;
  ref::layernorm_rows(x.data(), gain.data(), bias.data(), y.data(), xhat.data(),
                      inv_std.data(), 1, 4, eps);
  const double sd = std::sqrt(1.25 + eps);
  for (int i = 0; i < 4; ++i)
    CHECK(y[i] == doctest::Approx((x[i] - 2.5) / sd).epsilon(1e-12));
  CHECK(inv_std[0] == doctest::Approx(1.0 / sd).epsilon(1e-12));

  SUBCASE("gain and bias apply after normalization") {
    const std::vector<double> g2 = {2, 2, 2, 2}, b2 = {1, 1, 1, 1};
    ref::layernorm_rows(x.data(), g2.data(), b2.data(), y.data(), xhat.data(),
                        inv_std.data(), 1, 4, eps);
    CHECK(y[0] == doctest::Approx(2 * (1 - 2.5) / sd + 1).epsilon(1e-12));
  }
}

TEST_CASE("relu and its backward") {
  const std::vector<double> x = {-1, 0, 2.5};
  std::vector<double> y(3);
  ref::relu(x.data(), y.data(), 3);
  CHECK(y == std::vector<double>{0, 0, 2.5});
  const std::vector<double> dy = {5, 5, 5};
  std::vector<double> dx(3);
  ref::relu_backward(x.data(), dy.data(), dx.data(), 3);
  CHECK(dx == std::vector<double>{0, 0, 5});
}

TEST_CASE("openmp kernels are bitwise equal to the serial reference") {
  Rng rng(99);
  const int64_t m = 17, k = 23, n = 13;
  auto a = random_tensor(m, k, rng);
  auto b = random_tensor(k, n, rng);
  auto bt = random_tensor(n, k, rng);
  auto at = random_tensor(k, m, rng);

  std::vector<double> c1(m * n), c2(m * n);
  ref::matmul_nn(a.v.data(), b.v.data(), c1.data(), m, k, n);
  omp::matmul_nn(a.v.data(), b.v.data(), c2.data(), m, k, n);
  CHECK(bitwise_equal(c1, c2));

  ref::matmul_nt(a.v.data(), bt.v.data(), c1.data(), m, k, n);
  omp::matmul_nt(a.v.data(), bt.v.data(), c2.data(), m, k, n);
  CHECK(bitwise_equal(c1, c2));

  ref::matmul_tn(at.v.data(), b.v.data(), c1.data(), m, k, n);
  omp::matmul_tn(at.v.data(), b.v.data(), c2.data(), m, k, n);
  CHECK(bitwise_equal(c1, c2));

  std::fill(c1.begin(), c1.end(), 0.5);
  std::fill(c2.begin(), c2.end(), 0.5);
  ref::matmul_tn_acc(at.v.data(), b.v.data(), c1.data(), m, k, n);
  omp::matmul_tn_acc(at.v.data(), b.v.data(), c2.data(), m, k, n);
  CHECK(bitwise_equal(c1, c2));

  auto s1 = random_tensor(m, n, rng);
  auto s2 = s1;
  ref::softmax_rows(s1.v.data(), m, n);
  omp::softmax_rows(s2.v.data(), m, n);
  CHECK(bitwise_equal(s1.v, s2.v));

  auto x = random_tensor(m, n, rng);
  auto gain = random_tensor(1, n, rng);
  auto bias = random_tensor(1, n, rng);
  Tensor y1(m, n), y2(m, n), xh1(m, n), xh2(m, n);
  std::vector<double> is1(m), is2(m);
  ref::layernorm_rows(x.v.data(), gain.v.data(), bias.v.data(), y1.v.data(), xh1.v.data(),
                      is1.data(), m, n, 1e-5);
  omp::layernorm_rows(x.v.data(), gain.v.data(), bias.v.data(), y2.v.data(), xh2.v.data(),
                      is2.data(), m, n, 1e-5);
  CHECK(bitwise_equal(y1.v, y2.v));
  CHECK(bitwise_equal(xh1.v, xh2.v));
  CHECK(bitwise_equal(is1, is2));

  std::vector<double> r1(x.v.size()), r2(x.v.size());
  ref::relu(x.v.data(), r1.data(), x.size());
  omp::relu(x.v.data(), r2.data(), x.size());
  CHECK(bitwise_equal(r1, r2));

  auto ab1 = x;
  auto ab2 = x;
  ref::add_bias_rows(ab1.v.data(), bias.v.data(), m, n);
  omp::add_bias_rows(ab2.v.data(), bias.v.data(), m, n);
  CHECK(bitwise_equal(ab1.v, ab2.v));
}

TEST_CASE("dispatching entry points honor set_parallel") {
  Rng rng(4);
  auto a = random_tensor(5, 7, rng);
  auto b = random_tensor(7, 3, rng);
  std::vector<double> on(15), off(15);
  set_parallel(true);
  matmul_nn(a.v.data(), b.v.data(), on.data(), 5, 7, 3);
  set_parallel(false);
  matmul_nn(a.v.data(), b.v.data(), off.data(), 5, 7, 3);
  set_parallel(true);
  CHECK(bitwise_equal(on, off));
}

TEST_CASE("linear_forward applies W^T and bias") {
  Tensor x(1, 2);
  x.v = {1, 2};
  Tensor w(3, 2);  // [out, in]
  w.v = {1, 0, 0, 1, 1, 1};
  Tensor b(1, 3);
  b.v = {10, 20, 30};
  Tensor y(1, 3);
  linear_forward(x, w, b, y);
  CHECK(y.v == std::vector<double>{11, 22, 33});
}

TEST_CASE("linear_backward matches finite differences") {
  Rng rng(17);
  const int64_t rows = 4, in = 5, out = 3;
  auto x = random_tensor(rows, in, rng);
  auto w = random_tensor(out, in, rng);
  auto b = random_tensor(1, out, rng);
  auto wloss = random_tensor(rows, out, rng);  // L = sum(wloss .* y)

  auto loss = [&](const Tensor& xx, const Tensor& ww, const Tensor& bb) {
    Tensor y(rows, out);
    linear_forward(xx, ww, bb, y);
    double l = 0;
    for (int64_t i = 0; i < y.size(); ++i) l += wloss.v[i] * y.v[i];
    return l;
  };

  Tensor dx(rows, in), dw(out, in), db(1, out);
  linear_backward(x, w, wloss, dx, dw, db);

  const double h = 1e-6;
  auto check_grad = [&](Tensor& param, const Tensor& grad) {
    for (int64_t i = 0; i < param.size(); ++i) {
      const double keep = param.v[i];
      param.v[i] = keep + h;
      const double up = loss(x, w, b);
      param.v[i] = keep - h;
      const double down = loss(x, w, b);
      param.v[i] = keep;
      const double fd = (up - down) / (2 * h);
      CHECK(grad.v[i] == doctest::Approx(fd).epsilon(1e-5));
    }
  };
  check_grad(x, dx);
  check_grad(w, dw);
  check_grad(b, db);
}

TEST_CASE("layernorm_backward matches finite differences") {
  Rng rng(23);
  const int64_t rows = 3, cols = 6;
  auto x = random_tensor(rows, cols, rng);
  auto gain = random_tensor(1, cols, rng);
  auto bias = random_tensor(1, cols, rng);
  auto wloss = random_tensor(rows, cols, rng);
  const double eps = 1e-5;

  auto forward = [&](const Tensor& xx, const Tensor& g, const Tensor& bb, Tensor& y,
                     Tensor& xhat, std::vector<double>& inv_std) {
    ref::layernorm_rows(xx.v.data(), g.v.data(), bb.v.data(), y.v.data(), xhat.v.data(),
                        inv_std.data(), rows, cols, eps);
  };
  auto loss = [&](const Tensor& xx, const Tensor& g, const Tensor& bb) {
    Tensor y(rows, cols), xhat(rows, cols);
    std::vector<double> inv_std(rows);
    forward(xx, g, bb, y, xhat, inv_std);
    double l = 0;
    for (int64_t i = 0; i < y.size(); ++i) l += wloss.v[i] * y.v[i];
    return l;
  };

  Tensor y(rows, cols), xhat(rows, cols);
  std::vector<double> inv_std(rows);
  forward(x, gain, bias, y, xhat, inv_std);
  Tensor dx(rows, cols), dgain(1, cols), dbias(1, cols);
  layernorm_backward(xhat, inv_std, gain, wloss, dx, dgain, dbias);

  const double h = 1e-6;
  auto check_grad = [&](Tensor& param, const Tensor& grad) {
    for (int64_t i = 0; i < param.size(); ++i) {
      const double keep = param.v[i];
      param.v[i] = keep + h;
      const double up = loss(x, gain, bias);
      param.v[i] = keep - h;
      const double down = loss(x, gain, bias);
      param.v[i] = keep;
      const double fd = (up - down) / (2 * h);
      CHECK(grad.v[i] == doctest::Approx(fd).epsilon(1e-4));
    }
  };
  check_grad(x, dx);
  check_grad(gain, dgain);
  check_grad(bias, dbias);
}

TEST_CASE("softmax_backward_rows matches finite differences") {
  Rng rng(31);
  const int64_t rows = 2, cols = 5;
  auto s = random_tensor(rows, cols, rng);
  auto wloss = random_tensor(rows, cols, rng);

  auto loss = [&](const Tensor& logits) {
    auto y = logits;
    ref::softmax_rows(y.v.data(), rows, cols);
    double l = 0;
    for (int64_t i = 0; i < y.size(); ++i) l += wloss.v[i] * y.v[i];
    return l;
  };

  auto y = s;
  ref::softmax_rows(y.v.data(), rows, cols);
  std::vector<double> ds(rows * cols);
  softmax_backward_rows(y.v.data(), wloss.v.data(), ds.data(), rows, cols);

  const double h = 1e-6;
  for (int64_t i = 0; i < s.size(); ++i) {
    const double keep = s.v[i];
    s.v[i] = keep + h;
    const double up = loss(s);
    s.v[i] = keep - h;
    const double down = loss(s);
    s.v[i] = keep;
    CHECK(ds[static_cast<size_t>(i)] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4));
  }
}

TEST_CASE("param store keeps insertion order and rejects duplicates") {
  ParamStore ps;
  ps.add("enc.w", 2, 3);
  ps.add("enc.b", 1, 3);
  CHECK(ps.items[0].name == "enc.w");
  CHECK(ps.items[1].name == "enc.b");
  CHECK(ps.total_size() == 9);
  CHECK_THROWS_AS(ps.add("enc.w", 1, 1), InvalidArgument);
  CHECK_THROWS_AS(ps.get("missing"), InvalidArgument);
  auto g = ps.like();
  CHECK(g.items.size() == 2);
  CHECK(g.get("enc.w").rows == 2);
  for (double v : g.get("enc.w").v) CHECK(v == 0.0);
}
