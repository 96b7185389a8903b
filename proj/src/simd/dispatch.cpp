#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "smdris/simd/kernels.hpp"

namespace smdris::simd {
namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return &scalar_kernels();
    case Isa::avx2:
      return avx2_kernels();
  }
  return nullptr;
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("SMDRIS_SIMD"); env != nullptr && *env != '\0') {
    const Isa requested = parse_isa(env);
    if (!isa_supported(requested)) {
      throw std::runtime_error(std::string("SMDRIS_SIMD requests unsupported ISA: ") + env);
    }
    return table_for(requested);
  }
  return isa_supported(Isa::avx2) ? avx2_kernels() : &scalar_kernels();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{initial_table()};
  return slot;
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return avx2_kernels() != nullptr && cpu_has_avx2_fma();
  }
  return false;
}

void set_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("ISA not supported on this host: " + std::string(isa_name(isa)));
  }
  active_slot().store(table_for(isa));
}

Isa active_isa() { return kernels().isa; }

const KernelTable& kernels() { return *active_slot().load(std::memory_order_relaxed); }

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  throw std::invalid_argument("unknown ISA name: " + std::string(name));
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

}  // namespace smdris::simd
