#include <atomic>
#include <cstdlib>
#include <string>

#include "medbert/error.hpp"
#include "medbert/numerics/kernels.hpp"

namespace medbert::num::kernels {

#ifndef MEDBERT_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

namespace {

bool cpu_has_avx2() {
#if defined(MEDBERT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  const char* env = std::getenv("MEDBERT_ISA");
  const std::string choice = env ? env : "auto";
  if (choice == "scalar") return &scalar_table();
  if (choice == "avx2" && !isa_supported(Isa::avx2)) {
    throw ValidationError("MEDBERT_ISA=avx2 but AVX2/FMA is not available");
  }
  if (choice != "auto" && choice != "avx2") throw ValidationError("MEDBERT_ISA must be scalar, avx2 or auto");
  return isa_supported(Isa::avx2) ? avx2_table() : &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return avx2_table() != nullptr && cpu_has_avx2();
  }
  return false;
}

const KernelTable& table_for(Isa isa) {
  if (!isa_supported(isa)) throw ValidationError("kernel ISA not supported here: " + std::string(isa_name(isa)));
  return isa == Isa::avx2 ? *avx2_table() : scalar_table();
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

Isa active_isa() { return active().isa; }

void set_isa(Isa isa) { current().store(&table_for(isa), std::memory_order_release); }

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

}  // namespace medbert::num::kernels
