#ifndef NVNM_FIT_HPP
#define NVNM_FIT_HPP

#include <Eigen/Dense>
#include <functional>
#include <utility>
#include <vector>

#include "nvnm/diagnostics.hpp"
#include "nvnm/prob_model.hpp"
#include "nvnm/samplers.hpp"

// End-to-end fitting pipelines: transform -> sample -> diagnostics ->
// marginals -> medians -> HPD -> posterior predictive.

namespace nvnm {

struct FitConfig {
  MhConfig mh;
  bool use_hmc = false;
  HmcConfig hmc;
  bool force = false;       // summarize even when rhat > 1.1
  double hpd_mass = 0.95;
  double rhat_limit = 1.1;
};

struct FitResult {
  PosteriorSamples samples;
  std::vector<ParamSummary> summaries;        // one per sampled parameter
  std::vector<ParamSummary> derived;          // e.g. t2_star for the decay fit
  std::vector<Eigen::ArrayXd> derived_draws;  // stacked, parallel to `derived`
};

// Fit the single-trace decay model to the magnitude channel of `data`.
// Derived output: t2_star = 1/sqrt(a2).
FitResult fit_fid(const CoherenceTrace& data, PriorSpec priors, const FitConfig& config);

// Fit the joint angle-response model to coherence traces and telescoped
// measure points.
FitResult fit_nm(const std::vector<std::pair<double, CoherenceTrace>>& coh_sets,
                 const std::vector<std::pair<double, double>>& nm_points, PriorSpec priors,
                 const FitConfig& config, double horizon = -1.0);

struct PredictivePoint {
  double mean = 0.0;
  double sd_param = 0.0;  // spread of the model expectation across draws
  double sd_total = 0.0;  // sqrt(var of means + mean observation variance)
};

// Per input: evaluate the model expectation under each retained (thinned)
// draw. noise_sd_fn supplies the per-draw observation noise entering
// sd_total; pass nullptr for expectation-only predictions (sd_total ==
// sd_param).
std::vector<PredictivePoint> posterior_predictive(
    const PosteriorSamples& samples,
    const std::function<double(const Eigen::VectorXd&, double)>& expectation_fn,
    const std::function<double(const Eigen::VectorXd&)>& noise_sd_fn,
    const std::vector<double>& inputs, int thin = 1);

// Closures over the joint-model layout for N'(phi) predictions.
std::function<double(const Eigen::VectorXd&, double)> nm_prime_expectation(double horizon);
std::function<double(const Eigen::VectorXd&)> nm_observation_sd();

}  // namespace nvnm

#endif  // NVNM_FIT_HPP
