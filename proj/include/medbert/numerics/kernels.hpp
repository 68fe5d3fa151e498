#pragma once

// Inner-loop kernels behind the matrix ops. Each kernel has a scalar
// reference implementation and, on x86-64, an AVX2/FMA variant. The active
// table is chosen once at startup from CPU support and the MEDBERT_ISA
// environment variable (scalar | avx2 | auto) and can be switched with
// set_isa(). The scalar table is the contract; vector variants agree with it
// to rounding (FMA contraction and lane-split reductions).
//
// Matrices are row-major with explicit leading dimensions.

#include <cstddef>
#include <string_view>

namespace medbert::num::kernels {

enum class Isa { scalar, avx2 };

struct AdamCoeffs {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double decay;        // lr * weight_decay, 0 for undecayed tensors
  double bias_corr1;   // 1 - beta1^t
  double bias_corr2;   // 1 - beta2^t
};

struct KernelTable {
  Isa isa;
  std::string_view name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m x n] = A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                  std::size_t ldb, double* c, std::size_t ldc);
  // C[m x n] = A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                  std::size_t ldb, double* c, std::size_t ldc);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn_acc)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                      std::size_t ldb, double* c, std::size_t ldc);
  // Decoupled weight decay followed by a bias-corrected Adam update.
  void (*adam_update)(double* theta, const double* grad, double* m, double* v, std::size_t n, const AdamCoeffs& c);
};

const KernelTable& scalar_table();
// nullptr when the variant was not compiled in.
const KernelTable* avx2_table();

bool isa_supported(Isa isa);
const KernelTable& table_for(Isa isa);  // throws if unsupported
const KernelTable& active();
Isa active_isa();
void set_isa(Isa isa);  // throws if unsupported
std::string_view isa_name(Isa isa);

}  // namespace medbert::num::kernels
