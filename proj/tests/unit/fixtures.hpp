#pragma once

#include <array>
#include <string>

#include "choicealign/model.hpp"
#include "choicealign/random.hpp"
#include "choicealign/records.hpp"

namespace choicealign::fixtures {

inline ThetaMatrix random_theta(Rng& rng, double scale = 0.3) {
  std::array<double, kNumCoefficients> flat{};
  for (double& v : flat) v = scale * rng.normal();
  return ThetaMatrix::from_flat(flat);
}

inline FeatureVector random_features(Rng& rng) {
  std::array<double, kNumFeatures> v{};
  v[0] = 1.0;
  for (std::size_t f = 1; f < 4; ++f) v[f] = rng.normal();
  for (std::size_t f = 4; f < kNumFeatures; ++f) v[f] = rng.bernoulli(0.3) ? 1.0 : 0.0;
  return FeatureVector::from_values(v);
}

inline CleanRecord make_record(std::string id, double age, Gender g, Race r, Education e, SpouseStatus s,
                               double income) {
  CleanRecord rec;
  rec.record_id = std::move(id);
  rec.persona = {age, g, r, e, s, income};
  return rec;
}

}  // namespace choicealign::fixtures
