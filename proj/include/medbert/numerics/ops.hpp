#pragma once

#include <random>
#include <span>
#include <vector>

#include "medbert/numerics/matrix.hpp"

namespace medbert::num {

using Rng = std::mt19937_64;

// Shape-checked products; dimension mismatch throws ValidationError naming both shapes.
Matrix matmul(const Matrix& a, const Matrix& b);     // a * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c);  // c += a^T * b
Matrix transpose(const Matrix& a);

Matrix add(const Matrix& a, const Matrix& b);
void add_inplace(Matrix& a, const Matrix& b);
void scale_inplace(Matrix& a, double s);
// x[r, :] += bias[0, :] for every row r.
void add_row_bias(Matrix& x, const Matrix& bias);
// dbias[0, :] += sum_r dy[r, :]
void accumulate_bias_grad(const Matrix& dy, Matrix& dbias);

void softmax_inplace(std::span<double> v);
Matrix softmax_rows(const Matrix& x);

struct LayerNormCache {
  Matrix normalized;            // (x - mean) / sqrt(var + eps), before the affine map
  std::vector<double> inv_std;  // per row
};

inline constexpr double kLayerNormEps = 1e-12;

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps = kLayerNormEps,
                  LayerNormCache* cache = nullptr);
// Returns dx; accumulates into dgain and dbias.
Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, const Matrix& gain, Matrix& dgain,
                           Matrix& dbias);

// tanh approximation
double gelu(double x);
double gelu_grad(double x);
Matrix gelu(const Matrix& x);

// Inverted dropout. In training each entry is zeroed with probability p and
// survivors are scaled by 1/(1-p); the applied factors are written to mask.
// Outside training (or p == 0) this is the identity and mask is all ones.
Matrix dropout(const Matrix& x, double p, Rng& rng, bool train, Matrix* mask = nullptr);

// Throws NonFiniteError when any entry is NaN or Inf.
void check_finite(const Matrix& m, const char* what);
void check_finite(std::span<const double> v, const char* what);

}  // namespace medbert::num
