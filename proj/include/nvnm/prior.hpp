#ifndef NVNM_PRIOR_HPP
#define NVNM_PRIOR_HPP

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "nvnm/errors.hpp"

// Prior families and the constrained <-> unconstrained parameter transforms
// used by the samplers. Positive parameters sample on log scale, bounded ones
// through a scaled logit; the transform Jacobians enter the unconstrained
// log density so the posterior is invariant to the reparametrization.

namespace nvnm {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogTwoPi = 1.8378770664093454836;  // ln(2*pi)

struct Prior {
  enum class Family { Normal, HalfNormal, Uniform };
  Family family = Family::Normal;
  double mu = 0.0;
  double sigma = 1.0;
  double lo = 0.0;
  double hi = 1.0;

  static Prior normal(double mu, double sigma) { return {Family::Normal, mu, sigma, 0, 0}; }
  static Prior half_normal(double sigma) { return {Family::HalfNormal, 0, sigma, 0, 0}; }
  static Prior uniform(double lo, double hi) { return {Family::Uniform, 0, 1, lo, hi}; }

  void check() const {
    if ((family == Family::Normal || family == Family::HalfNormal) && !(sigma > 0.0))
      throw ValidationError("prior sigma must be > 0");
    if (family == Family::Uniform && !(lo < hi))
      throw ValidationError("uniform prior needs lo < hi");
  }

  double logpdf(double theta) const {
    switch (family) {
      case Family::Normal: {
        const double z = (theta - mu) / sigma;
        return -0.5 * kLogTwoPi - std::log(sigma) - 0.5 * z * z;
      }
      case Family::HalfNormal: {
        if (theta < 0.0) return kNegInf;
        const double z = theta / sigma;
        return 0.5 * std::log(2.0 / std::numbers::pi) - std::log(sigma) - 0.5 * z * z;
      }
      case Family::Uniform:
        if (theta < lo || theta > hi) return kNegInf;
        return -std::log(hi - lo);
    }
    return kNegInf;
  }

  double dlogpdf(double theta) const {
    switch (family) {
      case Family::Normal:
        return -(theta - mu) / (sigma * sigma);
      case Family::HalfNormal:
        return -theta / (sigma * sigma);
      case Family::Uniform:
        return 0.0;
    }
    return 0.0;
  }

  // Representative location/scale used for chain initialization.
  double location() const {
    switch (family) {
      case Family::Normal:
        return mu;
      case Family::HalfNormal:
        return sigma * std::sqrt(2.0 / std::numbers::pi);  // half-normal mean
      case Family::Uniform:
        return 0.5 * (lo + hi);
    }
    return 0.0;
  }
  double scale() const {
    switch (family) {
      case Family::Normal:
      case Family::HalfNormal:
        return sigma;
      case Family::Uniform:
        return (hi - lo) / std::sqrt(12.0);
    }
    return 1.0;
  }
};

struct Transform {
  enum class Kind { Identity, Log, Logit };
  Kind kind = Kind::Identity;
  double lo = 0.0;  // logit bounds
  double hi = 1.0;

  static Transform identity() { return {Kind::Identity, 0, 1}; }
  static Transform log() { return {Kind::Log, 0, 1}; }
  static Transform logit(double lo = 0.0, double hi = 1.0) { return {Kind::Logit, lo, hi}; }

  double to_constrained(double xi) const {
    switch (kind) {
      case Kind::Identity:
        return xi;
      case Kind::Log:
        return std::exp(xi);
      case Kind::Logit: {
        const double s = 1.0 / (1.0 + std::exp(-xi));
        return lo + (hi - lo) * s;
      }
    }
    return xi;
  }

  double to_unconstrained(double theta) const {
    switch (kind) {
      case Kind::Identity:
        return theta;
      case Kind::Log:
        return std::log(theta);
      case Kind::Logit: {
        const double u = (theta - lo) / (hi - lo);
        return std::log(u / (1.0 - u));
      }
    }
    return theta;
  }

  double log_jacobian(double xi) const {
    switch (kind) {
      case Kind::Identity:
        return 0.0;
      case Kind::Log:
        return xi;
      case Kind::Logit: {
        // log[(hi-lo) s (1-s)] without overflow for large |xi|.
        const double softplus_m = xi > 0 ? std::log1p(std::exp(-xi)) : -xi + std::log1p(std::exp(xi));
        const double softplus_p = xi > 0 ? xi + std::log1p(std::exp(-xi)) : std::log1p(std::exp(xi));
        return std::log(hi - lo) - softplus_m - softplus_p;
      }
    }
    return 0.0;
  }

  double dtheta_dxi(double xi) const {
    switch (kind) {
      case Kind::Identity:
        return 1.0;
      case Kind::Log:
        return std::exp(xi);
      case Kind::Logit: {
        const double s = 1.0 / (1.0 + std::exp(-xi));
        return (hi - lo) * s * (1.0 - s);
      }
    }
    return 1.0;
  }

  double dlogjac_dxi(double xi) const {
    switch (kind) {
      case Kind::Identity:
        return 0.0;
      case Kind::Log:
        return 1.0;
      case Kind::Logit: {
        const double s = 1.0 / (1.0 + std::exp(-xi));
        return 1.0 - 2.0 * s;
      }
    }
    return 0.0;
  }
};

struct ParamSpec {
  std::string name;
  Prior prior;
  Transform transform = Transform::identity();
};

using PriorSpec = std::vector<ParamSpec>;

// Prior location nudged into the interior of the transform's support, so
// chain starts stay finite for any prior/transform combination.
inline double initial_location(const ParamSpec& spec) {
  double loc = spec.prior.location();
  if (spec.transform.kind == Transform::Kind::Log && loc <= 0.0)
    loc = 0.5 * std::max(spec.prior.scale(), 1e-6);
  if (spec.transform.kind == Transform::Kind::Logit) {
    const double lo = spec.transform.lo, hi = spec.transform.hi;
    loc = std::min(std::max(loc, lo + 0.02 * (hi - lo)), hi - 0.02 * (hi - lo));
  }
  return loc;
}

// Sum of independent per-parameter log prior densities in constrained space;
// -inf outside any support. No Jacobian terms.
inline double log_prior(const Eigen::VectorXd& theta, const PriorSpec& priors) {
  if (theta.size() != static_cast<Eigen::Index>(priors.size()))
    throw ValidationError("log_prior: parameter dimension mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    total += priors[static_cast<std::size_t>(i)].prior.logpdf(theta[i]);
    if (total == kNegInf) return kNegInf;
  }
  return total;
}

// Same sum evaluated at unconstrained coordinates, including the transform
// Jacobians. This is the density the samplers target (up to the likelihood).
inline double log_prior_unconstrained(const Eigen::VectorXd& xi, const PriorSpec& priors) {
  if (xi.size() != static_cast<Eigen::Index>(priors.size()))
    throw ValidationError("log_prior_unconstrained: parameter dimension mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < xi.size(); ++i) {
    const auto& spec = priors[static_cast<std::size_t>(i)];
    const double theta = spec.transform.to_constrained(xi[i]);
    total += spec.prior.logpdf(theta) + spec.transform.log_jacobian(xi[i]);
    if (!std::isfinite(total)) return kNegInf;
  }
  return total;
}

}  // namespace nvnm

#endif  // NVNM_PRIOR_HPP
