#include <bit>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "choicealign/error.hpp"
#include "choicealign/kernels.hpp"
#include "choicealign/random.hpp"

using namespace choicealign;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// Reference with the documented lane order, written independently of the library.
double lane_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double lane[4] = {0, 0, 0, 0};
  const std::size_t body = a.size() / 4 * 4;
  for (std::size_t i = 0; i < body; ++i) {
    const double p = a[i] * b[i];
    lane[i % 4] = lane[i % 4] + p;
  }
  double s = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (std::size_t i = body; i < a.size(); ++i) {
    const double p = a[i] * b[i];
    s = s + p;
  }
  return s;
}

std::vector<kernels::Isa> available() {
  std::vector<kernels::Isa> out;
  for (auto isa : {kernels::Isa::kScalar, kernels::Isa::kAvx2, kernels::Isa::kNeon}) {
    if (kernels::isa_available(isa)) out.push_back(isa);
  }
  return out;
}

}  // namespace

TEST(Kernels, ScalarMatchesLaneContract) {
  Rng rng(1);
  for (std::size_t n = 0; n < 70; ++n) {
    const auto a = random_vector(rng, n, 3.0);
    const auto b = random_vector(rng, n, 1e-3);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(kernels::scalar::dot(a.data(), b.data(), n)),
              std::bit_cast<std::uint64_t>(lane_dot(a, b)))
        << "n=" << n;
  }
}

TEST(Kernels, EveryVariantIsBitIdenticalToScalar) {
  Rng rng(2);
  for (auto isa : available()) {
    kernels::force_isa(isa);
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 11u, 16u, 33u, 256u, 1001u, 3072u}) {
      for (double scale : {1.0, 1e-300, 1e300}) {
        const auto a = random_vector(rng, n, scale);
        const auto b = random_vector(rng, n, 1.0);
        const double want = kernels::scalar::dot(a.data(), b.data(), n);
        const double got = kernels::dot(a, b);
        EXPECT_EQ(std::bit_cast<std::uint64_t>(got), std::bit_cast<std::uint64_t>(want))
            << kernels::isa_name(isa) << " n=" << n << " scale=" << scale;
      }
    }
  }
  kernels::reset_isa();
}

TEST(Kernels, CancellationHeavyInputsAgree) {
  // large terms of opposite sign make any reassociation visible
  std::vector<double> a, b;
  for (int i = 0; i < 37; ++i) {
    a.push_back(i % 2 ? 1e16 : -1e16);
    b.push_back(1.0 + i * 1e-3);
  }
  const double want = kernels::scalar::dot(a.data(), b.data(), a.size());
  for (auto isa : available()) {
    kernels::force_isa(isa);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(kernels::dot(a, b)), std::bit_cast<std::uint64_t>(want));
  }
  kernels::reset_isa();
}

TEST(Kernels, NonFinitePropagates) {
  std::vector<double> a{1, 2, std::nan(""), 4, 5}, b{1, 1, 1, 1, 1};
  for (auto isa : available()) {
    kernels::force_isa(isa);
    EXPECT_TRUE(std::isnan(kernels::dot(a, b)));
  }
  kernels::reset_isa();
}

TEST(Kernels, DotRowsMatchesRowwiseDot) {
  Rng rng(3);
  const std::size_t dim = 37, rows = 23;
  const auto q = random_vector(rng, dim, 1.0);
  const auto m = random_vector(rng, dim * rows, 1.0);
  for (auto isa : available()) {
    kernels::force_isa(isa);
    std::vector<double> out(rows);
    kernels::dot_rows(q, m, out);
    for (std::size_t r = 0; r < rows; ++r) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(out[r]),
                std::bit_cast<std::uint64_t>(kernels::scalar::dot(q.data(), m.data() + r * dim, dim)));
    }
  }
  kernels::reset_isa();
}

TEST(Kernels, ShapeMismatchThrows) {
  std::vector<double> a(4), b(5), out(2);
  EXPECT_THROW(kernels::dot(a, b), Error);
  EXPECT_THROW(kernels::dot_rows(a, b, out), Error);
}

TEST(Kernels, ForcingUnavailableIsaThrows) {
  for (auto isa : {kernels::Isa::kAvx2, kernels::Isa::kNeon}) {
    if (!kernels::isa_available(isa)) {
      EXPECT_THROW(kernels::force_isa(isa), Error);
    }
  }
  kernels::reset_isa();
  EXPECT_TRUE(kernels::isa_available(kernels::active_isa()));
}

TEST(Kernels, SquaredNorm) {
  std::vector<double> a{3, 4};
  EXPECT_EQ(kernels::squared_norm(a), 25.0);
}
