#include "medbert/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "medbert/error.hpp"
#include "medbert/numerics/kernels.hpp"

namespace medbert::num {

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw ValidationError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

#ifndef NDEBUG
void debug_finite(const Matrix& m, const char* what) { check_finite(m, what); }
#else
void debug_finite(const Matrix&, const char*) {}
#endif

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Matrix c(a.rows(), b.cols());
  kernels::active().gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), a.cols(), b.data(), b.cols(), c.data(), c.cols());
  debug_finite(c, "matmul");
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  Matrix c(a.rows(), b.rows());
  kernels::active().gemm_nt(a.rows(), b.rows(), a.cols(), a.data(), a.cols(), b.data(), b.cols(), c.data(), c.cols());
  debug_finite(c, "matmul_nt");
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix c(a.cols(), b.cols());
  matmul_tn_acc(a, b, c);
  return c;
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows() != b.rows()) shape_error("matmul_tn", a, b);
  if (c.rows() != a.cols() || c.cols() != b.cols()) shape_error("matmul_tn (output)", c, b);
  kernels::active().gemm_tn_acc(a.cols(), b.cols(), a.rows(), a.data(), a.cols(), b.data(), b.cols(), c.data(),
                                c.cols());
  debug_finite(c, "matmul_tn");
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  add_inplace(c, b);
  return c;
}

void add_inplace(Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_error("add", a, b);
  kernels::active().axpy(1.0, b.data(), a.data(), a.size());
}

void scale_inplace(Matrix& a, double s) {
  for (double& x : a.flat()) x *= s;
}

void add_row_bias(Matrix& x, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) shape_error("add_row_bias", x, bias);
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < x.rows(); ++r) k.axpy(1.0, bias.data(), x.row(r).data(), x.cols());
}

void accumulate_bias_grad(const Matrix& dy, Matrix& dbias) {
  if (dbias.rows() != 1 || dbias.cols() != dy.cols()) shape_error("accumulate_bias_grad", dy, dbias);
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < dy.rows(); ++r) k.axpy(1.0, dy.row(r).data(), dbias.data(), dy.cols());
}

void softmax_inplace(std::span<double> v) {
  if (v.empty()) return;
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  const double inv = 1.0 / sum;
  for (double& x : v) x *= inv;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
  return out;
}

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps, LayerNormCache* cache) {
  const std::size_t n = x.cols();
  if (n < 2) throw ValidationError("layer_norm: rows need at least 2 entries");
  if (gain.rows() != 1 || gain.cols() != n) shape_error("layer_norm (gain)", x, gain);
  if (bias.rows() != 1 || bias.cols() != n) shape_error("layer_norm (bias)", x, bias);
  Matrix out(x.rows(), n);
  if (cache) {
    cache->normalized.resize(x.rows(), n);
    cache->inv_std.resize(x.rows());
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double xh = (row[j] - mean) * inv_std;
      if (cache) cache->normalized(r, j) = xh;
      out(r, j) = gain(0, j) * xh + bias(0, j);
    }
    if (cache) cache->inv_std[r] = inv_std;
  }
  return out;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, const Matrix& gain, Matrix& dgain,
                           Matrix& dbias) {
  const std::size_t n = dy.cols();
  if (!dy.same_shape(cache.normalized)) shape_error("layer_norm_backward", dy, cache.normalized);
  Matrix dx(dy.rows(), n);
  std::vector<double> dxhat(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    double sum_d = 0.0, sum_dx = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double g = dy(r, j);
      const double xh = cache.normalized(r, j);
      dgain(0, j) += g * xh;
      dbias(0, j) += g;
      dxhat[j] = g * gain(0, j);
      sum_d += dxhat[j];
      sum_dx += dxhat[j] * xh;
    }
    const double mean_d = sum_d * inv_n, mean_dx = sum_dx * inv_n;
    for (std::size_t j = 0; j < n; ++j) {
      dx(r, j) = cache.inv_std[r] * (dxhat[j] - mean_d - cache.normalized(r, j) * mean_dx);
    }
  }
  return dx;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_grad(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

Matrix gelu(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = gelu(x.data()[i]);
  return out;
}

Matrix dropout(const Matrix& x, double p, Rng& rng, bool train, Matrix* mask) {
  if (!(p >= 0.0 && p < 1.0)) throw ValidationError("dropout: p must be in [0, 1)");
  if (!train || p == 0.0) {
    if (mask) *mask = Matrix(x.rows(), x.cols(), 1.0);
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - p);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix out(x.rows(), x.cols());
  if (mask) mask->resize(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = unit(rng) < p ? 0.0 : keep_scale;
    out.data()[i] = x.data()[i] * f;
    if (mask) mask->data()[i] = f;
  }
  return out;
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NonFiniteError(std::string("non-finite value in ") + what);
  }
}

void check_finite(const Matrix& m, const char* what) { check_finite(m.flat(), what); }

}  // namespace medbert::num
