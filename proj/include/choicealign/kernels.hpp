#pragma once

// Dense double-precision inner-product kernels.
//
// Every variant accumulates in four interleaved lanes (element i goes to lane
// i % 4), reduces the lanes as (l0 + l1) + (l2 + l3), then adds the tail
// sequentially. Multiplies and adds are never fused. Under that contract the
// scalar reference and every SIMD variant return bit-identical results, so
// rankings and fits do not depend on which ISA the dispatcher picked.

#include <cstddef>
#include <span>
#include <string_view>

namespace choicealign::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

/// ISA used by the dispatching entry points below.
Isa active_isa();

/// True when the variant was compiled in and the CPU supports it.
bool isa_available(Isa isa);

/// Overrides dispatch (tests and benchmarks). Throws if unavailable.
void force_isa(Isa isa);

/// Restores CPU-detected dispatch.
void reset_isa();

double dot(std::span<const double> a, std::span<const double> b);

double squared_norm(std::span<const double> a);

/// out[r] = dot(query, rows[r*dim .. (r+1)*dim)) for every row.
void dot_rows(std::span<const double> query, std::span<const double> rows,
              std::span<double> out);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n) noexcept;
}

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n) noexcept;
}
#endif

#if defined(__aarch64__)
namespace neon {
double dot(const double* a, const double* b, std::size_t n) noexcept;
}
#endif

}  // namespace choicealign::kernels
