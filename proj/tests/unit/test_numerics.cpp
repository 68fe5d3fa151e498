#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "medbert/error.hpp"
#include "medbert/numerics/gradcheck.hpp"
#include "medbert/numerics/kernels.hpp"
#include "medbert/numerics/ops.hpp"
#include "medbert/numerics/optim.hpp"
#include "medbert/numerics/tensor_io.hpp"
#include "support.hpp"

using namespace medbert;
using namespace medbert::num;
using medbert::test::TempDir;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (double& v : m.flat()) v = n(rng);
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
  return d;
}

// Switches the active kernel table for one scope.
struct IsaScope {
  kernels::Isa saved = kernels::active_isa();
  explicit IsaScope(kernels::Isa isa) { kernels::set_isa(isa); }
  ~IsaScope() { kernels::set_isa(saved); }
};

}  // namespace

TEST_CASE("matmul examples") {
  const Matrix a{{1, 2}, {3, 4}};
  CHECK(matmul(a, Matrix::identity(2)) == a);
  CHECK(matmul(Matrix{{1, 2}}, Matrix{{3}, {4}}) == Matrix{{11}});
  CHECK(transpose(a) == Matrix{{1, 3}, {2, 4}});
  CHECK_THROWS_AS(matmul(a, Matrix(3, 1)), ValidationError);
  try {
    matmul(a, Matrix(3, 1));
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("2x2") != std::string::npos);
    CHECK(std::string(e.what()).find("3x1") != std::string::npos);
  }
}

TEST_CASE("matmul associativity and transposed variants") {
  Rng rng(1);
  const Matrix a = random_matrix(5, 5, rng), b = random_matrix(5, 5, rng), c = random_matrix(5, 5, rng);
  CHECK(max_abs_diff(matmul(a, matmul(b, c)), matmul(matmul(a, b), c)) < 1e-12);
  const Matrix x = random_matrix(7, 3, rng), y = random_matrix(4, 3, rng), z = random_matrix(7, 5, rng);
  CHECK(max_abs_diff(matmul_nt(x, y), matmul(x, transpose(y))) < 1e-12);
  CHECK(max_abs_diff(matmul_tn(x, z), matmul(transpose(x), z)) < 1e-12);
  Matrix acc = matmul_tn(x, z);
  matmul_tn_acc(x, z, acc);
  Matrix twice = matmul_tn(x, z);
  scale_inplace(twice, 2.0);
  CHECK(max_abs_diff(acc, twice) < 1e-12);
}

TEST_CASE("bias helpers") {
  Matrix x{{1, 2}, {3, 4}};
  add_row_bias(x, Matrix{{10, 20}});
  CHECK(x == Matrix{{11, 22}, {13, 24}});
  Matrix db(1, 2);
  accumulate_bias_grad(x, db);
  CHECK(db == Matrix{{24, 46}});
  CHECK(add(Matrix{{1}}, Matrix{{2}}) == Matrix{{3}});
}

TEST_CASE("softmax") {
  std::vector<double> v{0, 0, 0};
  softmax_inplace(v);
  for (double p : v) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  std::vector<double> big{1000, 0, 0};
  softmax_inplace(big);
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(std::isfinite(big[1]));
  CHECK(big[1] < 1e-300);

  Rng rng(2);
  const Matrix x = random_matrix(6, 9, rng, 5.0);
  Matrix shifted = x;
  for (double& e : shifted.flat()) e += 123.25;
  const Matrix p = softmax_rows(x), q = softmax_rows(shifted);
  CHECK(max_abs_diff(p, q) < 1e-12);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0;
    for (double e : p.row(r)) s += e;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("layer_norm forward") {
  const Matrix gain(1, 4, 1.0), bias(1, 4, 0.0);
  LayerNormCache cache;
  const Matrix y = layer_norm(Matrix{{2, 2, 2, 2}}, gain, bias, kLayerNormEps, &cache);
  for (double v : y.flat()) CHECK(v == 0.0);

  Rng rng(3);
  const Matrix x = random_matrix(5, 16, rng, 3.0);
  const Matrix b2 = random_matrix(1, 16, rng);
  const Matrix z = layer_norm(x, Matrix(1, 16, 1.0), Matrix(1, 16, 0.0));
  const Matrix w = layer_norm(x, Matrix(1, 16, 1.0), b2);
  double bias_mean = 0;
  for (double v : b2.flat()) bias_mean += v / 16.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double m = 0, s = 0, wm = 0;
    for (double v : z.row(r)) m += v / 16.0;
    for (double v : z.row(r)) s += (v - m) * (v - m) / 16.0;
    for (double v : w.row(r)) wm += v / 16.0;
    CHECK(std::abs(m) < 1e-9);
    CHECK(std::abs(s - 1.0) < 1e-9);
    CHECK(std::abs(wm - bias_mean) < 1e-9);
  }
}

TEST_CASE("gelu") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(10.0) == doctest::Approx(10.0));
  CHECK(std::abs(gelu(-10.0)) < 1e-12);
  for (double x = -4; x <= 4; x += 0.37) {
    const double h = 1e-6;
    CHECK(gelu_grad(x) == doctest::Approx((gelu(x + h) - gelu(x - h)) / (2 * h)).epsilon(1e-7));
  }
}

TEST_CASE("dropout") {
  Rng rng(4);
  const Matrix x = random_matrix(10, 10, rng);
  Matrix mask;
  CHECK(dropout(x, 0.1, rng, false, &mask) == x);
  for (double m : mask.flat()) CHECK(m == 1.0);
  CHECK(dropout(x, 0.0, rng, true) == x);

  const Matrix ones(1000, 100, 1.0);
  const Matrix d = dropout(ones, 0.1, rng, true, &mask);
  double mean = 0;
  std::size_t zeros = 0;
  for (double v : d.flat()) {
    mean += v / static_cast<double>(d.size());
    if (v == 0.0) ++zeros;
    else CHECK(v == doctest::Approx(1.0 / 0.9));
  }
  CHECK(mean >= 0.99);
  CHECK(mean <= 1.01);
  CHECK(mask == d);
  CHECK(zeros > 9000);
  CHECK(zeros < 11000);

  Rng r1(9), r2(9);
  CHECK(dropout(x, 0.3, r1, true) == dropout(x, 0.3, r2, true));
}

TEST_CASE("check_finite") {
  Matrix m(2, 2);
  CHECK_NOTHROW(check_finite(m, "m"));
  m(1, 0) = std::nan("");
  CHECK_THROWS_AS(check_finite(m, "m"), NonFiniteError);
  m(1, 0) = INFINITY;
  CHECK_THROWS_AS(check_finite(m, "m"), NonFiniteError);
}

TEST_CASE("adam_step") {
  Parameter p("w", 1, 1);
  p.value(0, 0) = 0.5;
  Parameter* ps[] = {&p};
  AdamConfig cfg;
  cfg.lr = 1e-3;
  adam_step(ps, cfg);
  CHECK(p.value(0, 0) == 0.5);

  Parameter q("q", 1, 1);
  q.value(0, 0) = 0.5;
  q.grad(0, 0) = 1.0;
  Parameter* qs[] = {&q};
  adam_step(qs, cfg);
  CHECK(q.value(0, 0) == doctest::Approx(0.5 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-14));

  Parameter d("d", 1, 1);
  d.value(0, 0) = 2.0;
  Parameter* ds[] = {&d};
  cfg.weight_decay = 0.003;
  for (int i = 0; i < 3; ++i) adam_step(ds, cfg);
  CHECK(d.value(0, 0) == doctest::Approx(2.0 * std::pow(1 - 1e-3 * 0.003, 3)).epsilon(1e-14));

  Parameter nd("b", 1, 1, false);
  nd.value(0, 0) = 2.0;
  Parameter* nds[] = {&nd};
  adam_step(nds, cfg);
  CHECK(nd.value(0, 0) == 2.0);
}

TEST_CASE("finite_diff_check") {
  Parameter p("theta", 3, 2);
  Rng rng(5);
  p.value = random_matrix(3, 2, rng);
  Parameter* ps[] = {&p};
  auto loss = [&] {
    double s = 0;
    for (double v : p.value.flat()) s += 0.5 * v * v;
    return s;
  };
  auto grad = [&] {
    for (std::size_t i = 0; i < p.value.size(); ++i) p.grad.data()[i] += p.value.data()[i];
  };
  const auto r = finite_diff_check(loss, grad, ps, 6, 1);
  CHECK(r.n_checked == 6);
  CHECK(r.max_rel_error < 1e-9);

  auto wrong = [&] {
    for (std::size_t i = 0; i < p.value.size(); ++i) p.grad.data()[i] += 2.0 * p.value.data()[i];
  };
  CHECK(finite_diff_check(loss, wrong, ps, 6, 1).max_rel_error > 0.1);

  Rng noise(6);
  auto noisy = [&] { return loss() + std::uniform_real_distribution<double>(0, 1e-3)(noise); };
  CHECK_THROWS_AS(finite_diff_check(noisy, grad, ps, 6, 1), ValidationError);
}

TEST_CASE("layer_norm backward matches finite differences") {
  Rng rng(7);
  Parameter x("x", 3, 8), g("gain", 1, 8), b("bias", 1, 8);
  x.value = random_matrix(3, 8, rng);
  g.value = random_matrix(1, 8, rng);
  b.value = random_matrix(1, 8, rng);
  const Matrix w = random_matrix(3, 8, rng);
  auto loss = [&] {
    const Matrix y = layer_norm(x.value, g.value, b.value);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w.data()[i] * std::tanh(y.data()[i]);
    return s;
  };
  auto grad = [&] {
    LayerNormCache cache;
    const Matrix y = layer_norm(x.value, g.value, b.value, kLayerNormEps, &cache);
    Matrix dy(3, 8);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double t = std::tanh(y.data()[i]);
      dy.data()[i] = w.data()[i] * (1 - t * t);
    }
    add_inplace(x.grad, layer_norm_backward(dy, cache, g.value, g.grad, b.grad));
  };
  Parameter* ps[] = {&x, &g, &b};
  CHECK(finite_diff_check(loss, grad, ps, 40, 2).max_rel_error < 1e-6);
}

TEST_CASE("tensor blob round trip") {
  TempDir dir("blob");
  Rng rng(8);
  const Matrix a = random_matrix(3, 4, rng), b = random_matrix(1, 7, rng);
  const NamedTensor ts[] = {{"a", &a}, {"b", &b}};
  const auto entries = write_tensor_blob(dir / "t.bin", ts);
  REQUIRE(entries.size() == 2);
  CHECK(entries[1].offset == 12 * sizeof(double));
  CHECK(std::filesystem::file_size(dir / "t.bin") == 19 * sizeof(double));
  const auto back = read_tensor_blob(dir / "t.bin", entries);
  CHECK(back[0] == a);
  CHECK(back[1] == b);

  std::filesystem::resize_file(dir / "t.bin", 18 * sizeof(double));
  CHECK_THROWS_AS(read_tensor_blob(dir / "t.bin", entries), ValidationError);
}

TEST_CASE("vector kernels agree with the scalar reference") {
  using kernels::Isa;
  if (!kernels::isa_supported(Isa::avx2)) {
    MESSAGE("AVX2 kernels unavailable on this machine; equivalence not exercised");
    return;
  }
  const auto& s = kernels::scalar_table();
  const auto& v = kernels::table_for(Isa::avx2);
  Rng rng(10);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto vec = [&](std::size_t n) {
    std::vector<double> x(n);
    for (double& e : x) e = nd(rng);
    return x;
  };

  for (std::size_t n : {0, 1, 3, 4, 5, 7, 8, 15, 16, 17, 64, 101}) {
    const auto a = vec(n), b = vec(n);
    CHECK(std::abs(s.dot(a.data(), b.data(), n) - v.dot(a.data(), b.data(), n)) <= 1e-12 * (1.0 + n));
    auto y1 = vec(n);
    auto y2 = y1;
    s.axpy(0.7, a.data(), y1.data(), n);
    v.axpy(0.7, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) <= 1e-14);

    auto th1 = vec(n), g = vec(n), m1 = vec(n), v1 = vec(n);
    for (double& e : v1) e = std::abs(e);
    auto th2 = th1, m2 = m1, v2 = v1;
    const kernels::AdamCoeffs c{1e-3, 0.9, 0.999, 1e-8, 3e-6, 1 - 0.9 * 0.9, 1 - 0.999 * 0.999};
    s.adam_update(th1.data(), g.data(), m1.data(), v1.data(), n, c);
    v.adam_update(th2.data(), g.data(), m2.data(), v2.data(), n, c);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(th1[i] - th2[i]) <= 1e-14);
      CHECK(std::abs(m1[i] - m2[i]) <= 1e-15);
      CHECK(std::abs(v1[i] - v2[i]) <= 1e-15);
    }
  }

  for (auto [m, n, k] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1}, {3, 5, 7}, {8, 8, 8}, {13, 9, 17},
                         {1, 33, 64}, {33, 1, 2}}) {
    const auto a = vec(m * k), b = vec(k * n), bt = vec(n * k), at = vec(k * m);
    std::vector<double> c1(m * n), c2(m * n);
    s.gemm_nn(m, n, k, a.data(), k, b.data(), n, c1.data(), n);
    v.gemm_nn(m, n, k, a.data(), k, b.data(), n, c2.data(), n);
    for (std::size_t i = 0; i < c1.size(); ++i) CHECK(std::abs(c1[i] - c2[i]) <= 1e-12);
    s.gemm_nt(m, n, k, a.data(), k, bt.data(), k, c1.data(), n);
    v.gemm_nt(m, n, k, a.data(), k, bt.data(), k, c2.data(), n);
    for (std::size_t i = 0; i < c1.size(); ++i) CHECK(std::abs(c1[i] - c2[i]) <= 1e-12);
    auto d1 = vec(m * n);
    auto d2 = d1;
    s.gemm_tn_acc(m, n, k, at.data(), m, b.data(), n, d1.data(), n);
    v.gemm_tn_acc(m, n, k, at.data(), m, b.data(), n, d2.data(), n);
    for (std::size_t i = 0; i < d1.size(); ++i) CHECK(std::abs(d1[i] - d2[i]) <= 1e-12);
  }
}

TEST_CASE("ops agree across kernel tables") {
  if (!kernels::isa_supported(kernels::Isa::avx2)) return;
  Rng rng(12);
  const Matrix a = random_matrix(9, 20, rng), b = random_matrix(20, 11, rng);
  Matrix ref, vec;
  {
    IsaScope scope(kernels::Isa::scalar);
    ref = matmul(a, b);
  }
  {
    IsaScope scope(kernels::Isa::avx2);
    vec = matmul(a, b);
  }
  CHECK(max_abs_diff(ref, vec) < 1e-12);
  CHECK(kernels::isa_name(kernels::Isa::avx2) == "avx2");
}
