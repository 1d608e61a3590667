#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "sdeflow/simd/kernels.hpp"

namespace sdeflow::simd {

#if !defined(SDEFLOW_HAVE_AVX2_TU)
namespace detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace detail
#endif

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() {
  const bool avx2_ok = isa_supported(Isa::avx2);
  if (const char* env = std::getenv("SDEFLOW_ISA")) {
    const std::string value(env);
    if (value == "scalar") return Isa::scalar;
    if (value == "avx2" && avx2_ok) return Isa::avx2;
  }
  return avx2_ok ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  if (isa == Isa::scalar) return true;
  static const bool avx2 = detail::avx2_table() != nullptr && cpu_has_avx2();
  return avx2;
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::runtime_error(std::string("ISA not supported here: ") + isa_name(isa));
  }
  return isa == Isa::avx2 ? *detail::avx2_table() : detail::scalar_table();
}

const KernelTable& kernels() { return kernels_for(active().load(std::memory_order_relaxed)); }

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::runtime_error(std::string("ISA not supported here: ") + isa_name(isa));
  }
  active().store(isa, std::memory_order_relaxed);
}

}  // namespace sdeflow::simd
