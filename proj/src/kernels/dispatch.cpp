#include <atomic>

#include "choicealign/error.hpp"
#include "choicealign/kernels.hpp"

namespace choicealign::kernels {
namespace {

using DotFn = double (*)(const double*, const double*, std::size_t) noexcept;

Isa detect() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2")) return Isa::kAvx2;
#elif defined(__aarch64__)
  return Isa::kNeon;
#endif
  return Isa::kScalar;
}

DotFn fn_for(Isa isa) {
  switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::kAvx2:
      return &avx2::dot;
#endif
#if defined(__aarch64__)
    case Isa::kNeon:
      return &neon::dot;
#endif
    default:
      return &scalar::dot;
  }
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

DotFn active_fn() { return fn_for(current().load(std::memory_order_relaxed)); }

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw_usage("kernels: operand lengths differ");
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

void force_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw_usage("kernels: ISA not available: " + std::string(isa_name(isa)));
  }
  current().store(isa, std::memory_order_relaxed);
}

void reset_isa() { current().store(detect(), std::memory_order_relaxed); }

double dot(std::span<const double> a, std::span<const double> b) {
  check_sizes(a.size(), b.size());
  return active_fn()(a.data(), b.data(), a.size());
}

double squared_norm(std::span<const double> a) {
  return active_fn()(a.data(), a.data(), a.size());
}

void dot_rows(std::span<const double> query, std::span<const double> rows,
              std::span<double> out) {
  const std::size_t dim = query.size();
  if (dim == 0 || rows.size() != dim * out.size()) {
    throw_usage("kernels: dot_rows shape mismatch");
  }
  const DotFn fn = active_fn();
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r] = fn(query.data(), rows.data() + r * dim, dim);
  }
}

}  // namespace choicealign::kernels
