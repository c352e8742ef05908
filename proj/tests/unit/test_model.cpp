#include <cmath>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "choicealign/error.hpp"
#include "choicealign/model.hpp"
#include "fixtures.hpp"

using namespace choicealign;

namespace {

ThetaMatrix intercept_theta(double leisure, double work = 0.0, double sleep = 0.0) {
  ThetaMatrix t;
  t.set(Activity::kLeisure, Feature::kIntercept, leisure);
  t.set(Activity::kWork, Feature::kIntercept, work);
  t.set(Activity::kSleep, Feature::kIntercept, sleep);
  return t;
}

}  // namespace

TEST(Utility, ZeroThetaIsZero) {
  const auto h = Allocation::from_minutes({100, 500, 600, 240});
  EXPECT_EQ(utility(ThetaMatrix{}, FeatureVector{}, h), 0.0);
}

TEST(Utility, InterceptOnlyLeisure) {
  const auto h = Allocation::from_minutes({360, 360, 360, 360});
  EXPECT_NEAR(utility(intercept_theta(1.0), FeatureVector{}, h), 5.886104031450156, 1e-12);
}

TEST(Utility, RejectsZeroMinutes) {
  EXPECT_THROW(Allocation::from_minutes({360, 0, 720, 360}), Error);
  const std::array<double, 4> w{1, 1, 1, 1};
  const std::array<double, 4> m{360, 0, 720, 360};
  EXPECT_THROW(utility(w, m), Error);
}

TEST(PredictShares, ZeroThetaIsUniform) {
  const auto s = predict_shares(ThetaMatrix{}, FeatureVector{});
  for (auto a : kActivities) EXPECT_DOUBLE_EQ(s[a], 0.25);
}

TEST(PredictShares, LogTwoIntercept) {
  const auto s = predict_shares(intercept_theta(std::log(2.0)), FeatureVector{});
  EXPECT_NEAR(s[Activity::kLeisure], 0.4, 1e-15);
  EXPECT_NEAR(s[Activity::kWork], 0.2, 1e-15);
  EXPECT_NEAR(s[Activity::kSleep], 0.2, 1e-15);
  EXPECT_NEAR(s[Activity::kOther], 0.2, 1e-15);
}

TEST(PredictShares, SumsToOneAndPositive) {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const auto theta = fixtures::random_theta(rng, 3.0);
    const auto x = fixtures::random_features(rng);
    const auto s = predict_shares(theta, x).values();
    double sum = 0.0;
    for (double v : s) {
      EXPECT_GT(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(PredictShares, StableAtExtremeIndices) {
  const auto s = predict_shares(intercept_theta(700.0, -700.0, 650.0), FeatureVector{}).values();
  for (double v : s) EXPECT_TRUE(std::isfinite(v));
  // the three dominated shares sit at the floor
  for (std::size_t j = 1; j < 4; ++j) EXPECT_EQ(s[j], kShareFloor);
  EXPECT_NEAR(s[0], 1.0 - 3 * kShareFloor, 1e-16);
}

TEST(PredictShares, UniformOffsetOfAllFourIndicesLeavesSharesUnchanged) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto theta = fixtures::random_theta(rng);
    const auto x = fixtures::random_features(rng);
    const auto idx = linear_indices(theta, x);
    auto shifted = idx;
    const double c = 10.0 * rng.normal();
    for (double& v : shifted) v += c;
    const auto a = softmax(idx);
    const auto b = softmax(shifted);
    for (std::size_t j = 0; j < kNumActivities; ++j) EXPECT_NEAR(a[j], b[j], 1e-14);
  }
}

TEST(SharesToMinutes, Uniform) {
  const auto h = shares_to_minutes(ShareVector::from_values({0.25, 0.25, 0.25, 0.25}));
  for (auto a : kActivities) EXPECT_DOUBLE_EQ(h[a], 360.0);
}

TEST(SharesToMinutes, SurveyMeanMinutes) {
  const std::array<double, 4> minutes{266, 247, 578, 349};  // L, W, S, O
  std::array<double, 4> shares{};
  for (std::size_t j = 0; j < 4; ++j) shares[j] = minutes[j] / 1440.0;
  const auto h = shares_to_minutes(ShareVector::from_values(shares));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(h.minutes()[j], minutes[j], 1e-9);
}

TEST(SharesToMinutes, RoundTrip) {
  const auto h = Allocation::from_minutes({123.5, 456.25, 600.0, 260.25});
  const auto back = shares_to_minutes(h.shares());
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(back.minutes()[j], h.minutes()[j], 1e-9);
}

TEST(Utility, StrictlyConcaveOnSimplexInterior) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto theta = fixtures::random_theta(rng);
    const auto x = fixtures::random_features(rng);
    const auto w = utility_weights(theta, x);
    std::array<double, 4> h{};
    double rest = 1440.0;
    for (int j = 0; j < 3; ++j) {
      h[j] = rest * (0.15 + 0.3 * rng.uniform01());
      rest -= h[j];
    }
    h[3] = rest;
    // reduced utility over (L, W, S) with O taking the remainder
    auto u = [&](const Eigen::Vector3d& v) {
      const std::array<double, 4> m{v[0], v[1], v[2], 1440.0 - v.sum()};
      return utility(w, m);
    };
    const Eigen::Vector3d c(h[0], h[1], h[2]);
    const double step = 1e-2;
    Eigen::Matrix3d hess;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        Eigen::Vector3d ea = Eigen::Vector3d::Unit(a) * step, eb = Eigen::Vector3d::Unit(b) * step;
        hess(a, b) = (u(c + ea + eb) - u(c + ea - eb) - u(c - ea + eb) + u(c - ea - eb)) / (4 * step * step);
      }
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(0.5 * (hess + hess.transpose()));
    EXPECT_LT(eig.eigenvalues().maxCoeff(), 0.0);
  }
}

TEST(FeatureVector, RejectsNonBinaryDummies) {
  std::array<double, kNumFeatures> v{};
  v[0] = 1.0;
  v[index_of(Feature::kMale)] = 0.5;
  EXPECT_THROW(FeatureVector::from_values(v), Error);
  v[index_of(Feature::kMale)] = 1.0;
  v[0] = 2.0;
  EXPECT_THROW(FeatureVector::from_values(v), Error);
}

TEST(ThetaMatrix, ReferenceActivityIsFixed) {
  ThetaMatrix t;
  EXPECT_THROW(t.set(Activity::kOther, Feature::kIntercept, 1.0), Error);
  EXPECT_THROW(t.set(Activity::kWork, Feature::kIntercept, std::nan("")), Error);
  EXPECT_EQ(ThetaMatrix::from_flat(t.flat()), t);
}

TEST(LiteralRatio, SharesProportionalToIndices) {
  ThetaMatrix t = intercept_theta(2.0, 1.0, 3.0);
  const auto s = predict_shares(t, FeatureVector{}, ModelForm::kLiteralRatio);
  EXPECT_NEAR(s[Activity::kLeisure], 2.0 / 7.0, 1e-15);
  EXPECT_NEAR(s[Activity::kOther], 1.0 / 7.0, 1e-15);
  EXPECT_THROW(predict_shares(intercept_theta(-1.0, 1.0, 1.0), FeatureVector{}, ModelForm::kLiteralRatio), Error);
}
