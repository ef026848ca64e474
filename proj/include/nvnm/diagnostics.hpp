#ifndef NVNM_DIAGNOSTICS_HPP
#define NVNM_DIAGNOSTICS_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "nvnm/prior.hpp"
#include "nvnm/samplers.hpp"

// Convergence diagnostics and posterior summaries: split-chain potential
// scale reduction, autocorrelation ESS (Geyer initial monotone sequence),
// highest-posterior-density intervals and marginal medians.

namespace nvnm {

struct HpdInterval {
  double lo = 0.0;
  double hi = 0.0;
  double mass = 0.95;
};

// Shortest interval covering ceil(mass*N) sorted draws. Needs >= 100 draws.
HpdInterval hpd(Eigen::ArrayXd draws, double mass = 0.95);

// Marginal median; even counts average the central pair.
double median_of(Eigen::ArrayXd draws);

// Split-chain potential scale reduction for one dimension; needs >= 2 chains.
double rhat(const PosteriorSamples& samples, int dim);

// Effective sample size for one dimension, in (0, C*N].
double ess(const PosteriorSamples& samples, int dim);

// Marginal posterior median of one dimension.
double point_estimate(const PosteriorSamples& samples, int dim);

struct ParamSummary {
  std::string name;
  double median = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  HpdInterval interval;
  double rhat = 0.0;  // 0 when undefined (single chain)
  double ess = 0.0;
  std::optional<Prior> prior;
};

// One row per parameter: median (the point estimate), mean, sd, HPD, rhat,
// ess, and the prior when available.
std::vector<ParamSummary> summarize(const PosteriorSamples& samples,
                                    const PriorSpec* priors = nullptr, double hpd_mass = 0.95);

// Summary row for an externally derived draw array (stacked chains).
ParamSummary summarize_draws(const std::string& name, const PosteriorSamples& shape,
                             const Eigen::ArrayXd& stacked, double hpd_mass = 0.95);

}  // namespace nvnm

#endif  // NVNM_DIAGNOSTICS_HPP
