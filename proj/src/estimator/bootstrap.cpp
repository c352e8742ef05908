#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "choicealign/error.hpp"
#include "choicealign/estimator.hpp"
#include "choicealign/parallel.hpp"
#include "choicealign/random.hpp"

namespace choicealign::estimator {
namespace {

// Linear interpolation between order statistics (Hyndman-Fan type 7).
double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

}  // namespace

BootstrapResult bootstrap_ci(std::span<const Observation> data, const FitOptions& options, int replicates,
                             std::uint64_t seed) {
  if (replicates < 100) throw_usage(fmt::format("bootstrap needs at least 100 replicates, got {}", replicates));
  if (data.empty()) throw_data("bootstrap on an empty dataset");

  const auto B = static_cast<std::size_t>(replicates);
  std::vector<std::optional<std::array<double, kNumCoefficients>>> draws(B);
  FitOptions inner = options;
  inner.max_threads = 1;  // parallelism lives at the replicate level

  parallel_for(
      B,
      [&](std::size_t b) {
        Rng rng(derive_seed(seed, b));
        std::vector<Observation> sample;
        sample.reserve(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) sample.push_back(data[rng.uniform_index(data.size())]);
        try {
          const auto fit = fit_structural(std::span<const Observation>(sample), inner);
          if (fit.converged) draws[b] = fit.theta_hat.flat();
        } catch (const Error&) {
          // counted as a failed replicate
        }
      },
      options.max_threads);

  BootstrapResult out;
  out.replicates = replicates;
  for (const auto& d : draws) out.failures += d ? 0 : 1;
  if (out.failures * 10 > replicates) {
    throw Error(ErrorKind::kConvergence,
                fmt::format("bootstrap: {} of {} replicates failed (limit 10%)", out.failures, replicates));
  }

  std::array<double, kNumCoefficients> lo{}, hi{};
  std::vector<double> column;
  for (std::size_t c = 0; c < kNumCoefficients; ++c) {
    column.clear();
    for (const auto& d : draws) {
      if (d) column.push_back((*d)[c]);
    }
    std::sort(column.begin(), column.end());
    lo[c] = quantile_sorted(column, 0.025);
    hi[c] = quantile_sorted(column, 0.975);
  }
  out.ci_low = ThetaMatrix::from_flat(lo);
  out.ci_high = ThetaMatrix::from_flat(hi);
  return out;
}

void attach_bootstrap(FitResult& fit, const BootstrapResult& boot) {
  fit.ci_low = boot.ci_low;
  fit.ci_high = boot.ci_high;
  fit.ci_method = fmt::format("bootstrap-percentile(B={}, failures={})", boot.replicates, boot.failures);
}

}  // namespace choicealign::estimator
