#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "choicealign/error.hpp"
#include "choicealign/estimator.hpp"
#include "choicealign/kernels.hpp"
#include "choicealign/parallel.hpp"
#include "choicealign/random.hpp"

namespace choicealign::estimator {
namespace {

constexpr std::size_t P = kNumCoefficients;
constexpr double kZ975 = 1.96;

// Normal-equation pieces of the linearized problem at one theta.
struct Normal {
  Eigen::MatrixXd jtj = Eigen::MatrixXd::Zero(P, P);
  Eigen::VectorXd jtr = Eigen::VectorXd::Zero(P);  // J^T (observed - predicted)
  double sse = 0.0;

  void add(const Normal& other) {
    jtj += other.jtj;
    jtr += other.jtr;
    sse += other.sse;
  }
};

std::array<double, kNumActivities> shares_at(const std::array<ThetaMatrix::Row, kNumFreeActivities>& rows,
                                             const FeatureVector& x) {
  std::array<double, kNumActivities> idx{};
  for (std::size_t k = 0; k < kNumFreeActivities; ++k) idx[k] = kernels::dot(rows[k], x.values());
  return softmax(idx);
}

std::array<ThetaMatrix::Row, kNumFreeActivities> rows_of(const ThetaMatrix& theta) {
  return {theta.row(Activity::kLeisure), theta.row(Activity::kWork), theta.row(Activity::kSleep)};
}

Normal accumulate_range(const std::array<ThetaMatrix::Row, kNumFreeActivities>& rows,
                        std::span<const Observation> data, std::size_t begin, std::size_t end) {
  Normal acc;
  Eigen::Matrix<double, kNumFeatures, 1> x;
  Eigen::Matrix<double, kNumFeatures, kNumFeatures> outer;
  for (std::size_t i = begin; i < end; ++i) {
    const auto& obs = data[i];
    const auto s = shares_at(rows, obs.x);
    for (std::size_t f = 0; f < kNumFeatures; ++f) x(f) = obs.x[f];
    outer.noalias() = x * x.transpose();

    // g(j, k) = d s_j / d index_k
    Eigen::Matrix<double, kNumActivities, kNumFreeActivities> g;
    Eigen::Matrix<double, kNumActivities, 1> r;
    for (std::size_t j = 0; j < kNumActivities; ++j) {
      r(j) = obs.shares[j] - s[j];
      for (std::size_t k = 0; k < kNumFreeActivities; ++k) {
        g(j, k) = s[j] * ((j == k ? 1.0 : 0.0) - s[k]);
      }
    }
    const Eigen::Matrix<double, kNumFreeActivities, kNumFreeActivities> G = g.transpose() * g;
    const Eigen::Matrix<double, kNumFreeActivities, 1> v = g.transpose() * r;
    for (std::size_t k = 0; k < kNumFreeActivities; ++k) {
      acc.jtr.segment<kNumFeatures>(k * kNumFeatures) += v(k) * x;
      for (std::size_t l = 0; l < kNumFreeActivities; ++l) {
        acc.jtj.block<kNumFeatures, kNumFeatures>(k * kNumFeatures, l * kNumFeatures) += G(k, l) * outer;
      }
    }
    acc.sse += r.squaredNorm();
  }
  return acc;
}

Normal accumulate(const ThetaMatrix& theta, std::span<const Observation> data, const FitOptions& opt) {
  const auto rows = rows_of(theta);
  const std::size_t chunks = std::max<std::size_t>(1, std::min(opt.chunks, data.size()));
  std::vector<Normal> parts(chunks);
  parallel_for(
      chunks,
      [&](std::size_t c) {
        const std::size_t b = c * data.size() / chunks;
        const std::size_t e = (c + 1) * data.size() / chunks;
        parts[c] = accumulate_range(rows, data, b, e);
      },
      opt.max_threads);
  Normal total;
  for (const auto& p : parts) total.add(p);  // fixed reduction order
  return total;
}

std::vector<std::size_t> active_indices(const FeatureMask& active) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < kNumFreeActivities; ++k) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      if (active[f]) idx.push_back(k * kNumFeatures + f);
    }
  }
  return idx;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<std::size_t>& idx) {
  Eigen::VectorXd out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out(i) = v(idx[i]);
  return out;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(idx.size(), idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = 0; j < idx.size(); ++j) out(i, j) = m(idx[i], idx[j]);
  }
  return out;
}

ThetaMatrix theta_from_vector(const Eigen::VectorXd& v) {
  return ThetaMatrix::from_flat(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

Eigen::VectorXd vector_from_theta(const ThetaMatrix& theta) {
  const auto flat = theta.flat();
  return Eigen::Map<const Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

struct LmOutcome {
  Eigen::VectorXd params;
  Normal normal;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

LmOutcome levenberg_marquardt(Eigen::VectorXd params, std::span<const Observation> data,
                              const FitOptions& opt, const std::vector<std::size_t>& active) {
  LmOutcome out;
  Normal cur = accumulate(theta_from_vector(params), data, opt);
  out.trace.push_back(cur.sse);
  double lambda = opt.initial_lambda;

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    out.iterations = iter + 1;
    const Eigen::VectorXd g = gather(cur.jtr, active);
    if (cur.sse == 0.0) {
      out.converged = true;
      break;
    }
    const Eigen::MatrixXd A = gather(cur.jtj, active);
    Eigen::VectorXd diag = A.diagonal().cwiseMax(1e-12 * std::max(1.0, A.diagonal().maxCoeff()));

    Eigen::MatrixXd damped = A;
    damped.diagonal() += lambda * diag;
    const Eigen::VectorXd step = damped.ldlt().solve(g);

    Eigen::VectorXd candidate = params;
    bool finite = step.allFinite();
    if (finite) {
      for (std::size_t i = 0; i < active.size(); ++i) candidate(active[i]) += step(i);
    }
    Normal next;
    if (finite) next = accumulate(theta_from_vector(candidate), data, opt);

    bool accept = false;
    if (finite && std::isfinite(next.sse)) {
      // Near the optimum the SSE change drops below its own rounding noise;
      // there the gradient decides.
      accept = next.sse < cur.sse ||
               (next.sse <= cur.sse * (1.0 + kSseNoiseFloor) && inf_norm(gather(next.jtr, active)) < inf_norm(g));
    }
    if (accept) {
      const double rel = std::max(0.0, (cur.sse - next.sse) / cur.sse);
      params = candidate;
      cur = std::move(next);
      out.trace.push_back(cur.sse);
      lambda = std::max(lambda / opt.lambda_factor, 1e-15);
      if (rel < opt.relative_sse_tol && inf_norm(gather(cur.jtr, active)) < opt.gradient_tol) {
        out.converged = true;
        break;
      }
    } else {
      lambda *= opt.lambda_factor;
      if (lambda > opt.max_lambda) {
        // no representable step lowers the SSE: stationary at machine precision
        out.converged = inf_norm(g) < opt.gradient_tol;
        break;
      }
    }
  }
  out.params = std::move(params);
  out.normal = std::move(cur);
  return out;
}

}  // namespace

std::vector<Observation> observations(const Records& records) {
  std::vector<Observation> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Observation o;
    o.x = r.features;
    o.shares = observed_shares(r);
    for (double& s : o.shares) {
      const double c = std::clamp(s, kShareClamp, 1.0 - kShareClamp);
      if (c != s) o.clamped = true;
      s = c;
    }
    if (o.clamped) {
      const double total = (o.shares[0] + o.shares[1]) + (o.shares[2] + o.shares[3]);
      for (double& s : o.shares) s /= total;
    }
    out.push_back(o);
  }
  return out;
}

double FitResult::standard_error(Activity a, Feature f) const {
  const auto i = static_cast<Eigen::Index>(flat_index(a, f));
  return std::sqrt(std::max(0.0, covariance(i, i)));
}

std::vector<Coefficient> FitResult::coefficients() const {
  std::vector<Coefficient> out;
  for (std::size_t k = 0; k < kNumFreeActivities; ++k) {
    const auto a = kActivities[k];
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const auto feat = static_cast<Feature>(f);
      out.push_back(Coefficient{a, feat, theta_hat.at(a, feat), standard_error(a, feat), ci_low.at(a, feat),
                                ci_high.at(a, feat), active[f]});
    }
  }
  return out;
}

Eigen::MatrixXd jacobian(const ThetaMatrix& theta, std::span<const Observation> data) {
  const auto rows = rows_of(theta);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kNumActivities * data.size()), P);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto s = shares_at(rows, data[i].x);
    for (std::size_t j = 0; j < kNumActivities; ++j) {
      const auto row = static_cast<Eigen::Index>(i * kNumActivities + j);
      for (std::size_t k = 0; k < kNumFreeActivities; ++k) {
        const double g = s[j] * ((j == k ? 1.0 : 0.0) - s[k]);
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
          J(row, static_cast<Eigen::Index>(k * kNumFeatures + f)) = g * data[i].x[f];
        }
      }
    }
  }
  return J;
}

double sse(const ThetaMatrix& theta, std::span<const Observation> data) {
  const auto rows = rows_of(theta);
  double total = 0.0;
  for (const auto& obs : data) {
    const auto s = shares_at(rows, obs.x);
    for (std::size_t j = 0; j < kNumActivities; ++j) {
      const double r = obs.shares[j] - s[j];
      total += r * r;
    }
  }
  return total;
}

void check_design_rank(std::span<const Observation> data, const FeatureMask& active) {
  const auto n = static_cast<Eigen::Index>(data.size());
  std::vector<std::size_t> basis;
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    if (!active[f]) continue;
    Eigen::VectorXd col(n);
    for (Eigen::Index i = 0; i < n; ++i) col(i) = data[static_cast<std::size_t>(i)].x[f];
    const double norm = col.norm();
    const auto name = feature_name(static_cast<Feature>(f));
    if (norm == 0.0) throw_data(fmt::format("rank-deficient design: column '{}' is identically zero", name));
    if (!basis.empty()) {
      Eigen::MatrixXd B(n, static_cast<Eigen::Index>(basis.size()));
      for (std::size_t b = 0; b < basis.size(); ++b) {
        for (Eigen::Index i = 0; i < n; ++i) B(i, static_cast<Eigen::Index>(b)) = data[static_cast<std::size_t>(i)].x[basis[b]];
      }
      const Eigen::VectorXd coef = B.colPivHouseholderQr().solve(col);
      const double resid = (col - B * coef).norm();
      if (resid <= 1e-9 * norm) {
        std::vector<std::string> names;
        const double scale = coef.cwiseAbs().maxCoeff();
        for (std::size_t b = 0; b < basis.size(); ++b) {
          if (std::abs(coef(static_cast<Eigen::Index>(b))) > 1e-8 * scale) {
            names.emplace_back(feature_name(static_cast<Feature>(basis[b])));
          }
        }
        names.emplace_back(name);
        throw_data(fmt::format("rank-deficient design: collinear columns {}", fmt::join(names, ", ")));
      }
    }
    basis.push_back(f);
  }
}

FitResult fit_structural(std::span<const Observation> data, const FitOptions& options) {
  const auto active = active_indices(options.active);
  const std::size_t n_active_features = active.size() / kNumFreeActivities;
  if (data.size() < 2 * n_active_features) {
    throw_data(fmt::format("structural fit needs at least {} records, got {}", 2 * n_active_features, data.size()));
  }
  check_design_rank(data, options.active);

  std::vector<Eigen::VectorXd> starts;
  Eigen::VectorXd base = options.initial ? vector_from_theta(*options.initial) : Eigen::VectorXd::Zero(P);
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    if (options.active[f]) continue;
    for (std::size_t k = 0; k < kNumFreeActivities; ++k) base(k * kNumFeatures + f) = 0.0;
  }
  starts.push_back(base);
  for (int s = 0; s < options.extra_starts; ++s) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(s)));
    Eigen::VectorXd p = base;
    for (std::size_t i : active) p(i) += options.start_scale * rng.normal();
    starts.push_back(p);
  }

  std::optional<LmOutcome> best;
  for (const auto& start : starts) {
    LmOutcome run = levenberg_marquardt(start, data, options, active);
    if (!best) {
      best = std::move(run);
      continue;
    }
    const double a = run.normal.sse;
    const double b = best->normal.sse;
    if (a < b || (a == b && run.params.norm() < best->params.norm())) best = std::move(run);
  }

  FitResult fit;
  fit.theta_hat = theta_from_vector(best->params);
  fit.sse = best->normal.sse;
  fit.n_obs = data.size();
  fit.iterations = best->iterations;
  fit.converged = best->converged;
  fit.gradient_norm = inf_norm(gather(best->normal.jtr, active));
  fit.active = options.active;
  fit.sse_trace = std::move(best->trace);
  fit.clamped_records = static_cast<std::size_t>(
      std::count_if(data.begin(), data.end(), [](const Observation& o) { return o.clamped; }));

  // Gauss-Newton covariance; three independent share residuals per record
  const double dof = 3.0 * static_cast<double>(data.size()) - static_cast<double>(active.size());
  const double sigma2 = dof > 0 ? fit.sse / dof : 0.0;
  const Eigen::MatrixXd A = gather(best->normal.jtj, active);
  Eigen::MatrixXd inv = A.ldlt().solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
  if (!inv.allFinite()) {
    inv = A.completeOrthogonalDecomposition().pseudoInverse();
  }
  Eigen::MatrixXd cov = sigma2 * inv;
  cov = 0.5 * (cov + cov.transpose()).eval();
  fit.covariance = Eigen::MatrixXd::Zero(P, P);
  for (std::size_t i = 0; i < active.size(); ++i) {
    for (std::size_t j = 0; j < active.size(); ++j) {
      fit.covariance(static_cast<Eigen::Index>(active[i]), static_cast<Eigen::Index>(active[j])) =
          cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  const auto est = fit.theta_hat.flat();
  std::array<double, P> lo{}, hi{};
  for (std::size_t i = 0; i < P; ++i) {
    const double se = std::sqrt(std::max(0.0, fit.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))));
    lo[i] = est[i] - kZ975 * se;
    hi[i] = est[i] + kZ975 * se;
  }
  fit.ci_low = ThetaMatrix::from_flat(lo);
  fit.ci_high = ThetaMatrix::from_flat(hi);
  return fit;
}

FitResult fit_structural(const Records& records, const FitOptions& options) {
  const auto data = observations(records);
  return fit_structural(std::span<const Observation>(data), options);
}

FeatureMask feature_mask_from_names(const std::vector<std::string>& excluded) {
  FeatureMask mask = kAllFeatures;
  for (const auto& name : excluded) {
    const auto f = feature_from_name(name);
    if (!f) throw_usage(fmt::format("unknown feature '{}'", name));
    if (*f == Feature::kIntercept) throw_usage("the intercept cannot be excluded");
    mask[index_of(*f)] = false;
  }
  return mask;
}

}  // namespace choicealign::estimator
