#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nvnm/fit.hpp"
#include "nvnm/nonmarkov.hpp"
#include "nvnm/rng.hpp"

using namespace nvnm;

namespace {

Eigen::ArrayXd fid_grid() {
  Eigen::ArrayXd times(60);
  for (int i = 0; i < 30; ++i) times[i] = 0.05 * i;
  for (int i = 0; i < 30; ++i) times[30 + i] = 1.5 + (30.0 - 1.5) * i / 29.0;
  return times;
}

FidModelParams reference_fid(double sigma) {
  FidModelParams params;
  params.envelope = DephasingEnvelope::gaussian(22.262);
  params.p = 0.972;
  params.phi = 0.191;
  params.coupling.a_par = angular_mhz(2.143);
  params.sigma = sigma;
  return params;
}

NmModelParams table_params() {
  NmModelParams params;
  params.contrast = {0.046, 1.030, 0.261};
  params.population = {0.034, 1.738, 0.102, -0.528};
  params.coupling.a_par = angular_mhz(2.169);
  params.sigma_coh = 0.018;
  params.sigma_nm = 0.06;
  return params;
}

PosteriorSamples degenerate_samples(const Eigen::VectorXd& theta,
                                    const std::vector<std::string>& names, int rows) {
  PosteriorSamples samples;
  samples.names = names;
  Eigen::MatrixXd chain(rows, theta.size());
  chain.rowwise() = theta.transpose();
  samples.chains.push_back(chain);
  return samples;
}

}  // namespace

TEST_CASE("posterior_predictive on a degenerate posterior") {
  const Eigen::VectorXd theta = nm_vector_from_params(table_params());
  const PosteriorSamples samples = degenerate_samples(theta, nm_param_names(), 120);

  const std::vector<double> inputs{0.0, 1.0, 2.5};
  const auto curve = posterior_predictive(samples, nm_prime_expectation(1.226), nullptr, inputs);
  REQUIRE(curve.size() == 3);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    CHECK(curve[i].sd_param < 1e-14);  // identical draws, std vanishes
    CHECK(curve[i].sd_total < 1e-14);
    CHECK(curve[i].mean ==
          doctest::Approx(measure_modified(table_params(), inputs[i], 1.226).value)
              .epsilon(1e-14));
  }

  // With the observation-noise hook the band is exactly sigma_nm.
  const auto noisy =
      posterior_predictive(samples, nm_prime_expectation(1.226), nm_observation_sd(), inputs);
  for (const auto& point : noisy) CHECK(point.sd_total == doctest::Approx(0.06).epsilon(1e-12));
}

TEST_CASE("posterior_predictive interpolates smoothly between angles") {
  // Draws jittered around the table values produce a smooth mean curve.
  const Eigen::VectorXd center = nm_vector_from_params(table_params());
  PosteriorSamples samples;
  samples.names = nm_param_names();
  Philox rng(660, 0);
  Eigen::MatrixXd chain(400, center.size());
  for (Eigen::Index i = 0; i < chain.rows(); ++i) {
    for (Eigen::Index d = 0; d < center.size(); ++d)
      chain(i, d) = center[d] * (1.0 + 0.002 * rng.normal());
  }
  samples.chains.push_back(chain);

  std::vector<double> grid;
  for (int i = 0; i < 60; ++i) grid.push_back(kTwoPi * i / 59.0);
  const auto curve = posterior_predictive(samples, nm_prime_expectation(1.226), nullptr, grid, 1);
  const double h = grid[1] - grid[0];
  for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
    const double second =
        curve[i + 1].mean - 2.0 * curve[i].mean + curve[i - 1].mean;
    CHECK(std::abs(second) < 0.5 * h * h + 0.01);
  }
  CHECK_THROWS_AS(
      posterior_predictive(samples, nm_prime_expectation(1.226), nullptr, grid, 0),
      ValidationError);
}

TEST_CASE("fit_fid pipeline on a short synthetic record") {
  const FidModelParams truth = reference_fid(0.018);
  const CoherenceTrace data = simulate_ramsey(truth, fid_grid(), 42);

  FitConfig config;
  config.mh.chains = 2;
  config.mh.iters = 12000;
  config.mh.seed = 2024;
  const FitResult result = fit_fid(data, default_fid_priors(30.0), config);

  REQUIRE(result.summaries.size() == static_cast<std::size_t>(kFidDim));
  REQUIRE(result.derived.size() == 1);
  CHECK(result.derived[0].name == "t2_star");
  // Short chains: only sanity, the acceptance suite runs the full budget.
  CHECK(result.derived[0].median > 15.0);
  CHECK(result.derived[0].median < 30.0);
  for (const auto& row : result.summaries) {
    CHECK(row.interval.lo <= row.median);
    CHECK(row.median <= row.interval.hi);
  }
}

TEST_CASE("posterior concentrates as the generator noise shrinks") {
  const double sigmas[3] = {0.05, 0.01, 0.002};
  double widths[3] = {0, 0, 0};
  for (int k = 0; k < 3; ++k) {
    const FidModelParams truth = reference_fid(sigmas[k]);
    const CoherenceTrace data = simulate_ramsey(truth, fid_grid(), 91);
    FitConfig config;
    config.mh.chains = 2;
    config.mh.iters = 16000;
    config.mh.seed = 5150;
    config.force = true;  // width monotonicity is the point, not diagnostics
    const FitResult result = fit_fid(data, default_fid_priors(30.0), config);
    widths[k] = result.derived[0].interval.hi - result.derived[0].interval.lo;
  }
  CHECK(widths[0] > widths[1]);
  CHECK(widths[1] > widths[2]);
}

TEST_CASE("fit_fid runs end to end on the hamiltonian sampler") {
  const FidModelParams truth = reference_fid(0.018);
  const CoherenceTrace data = simulate_ramsey(truth, fid_grid(), 3);

  FitConfig config;
  config.use_hmc = true;
  config.hmc.chains = 2;
  config.hmc.iters = 1200;
  config.hmc.step_size = 0.02;
  config.hmc.leapfrog_steps = 15;
  config.hmc.seed = 64;
  config.force = true;  // short chains, diagnostics not the point
  const FitResult result = fit_fid(data, default_fid_priors(30.0), config);
  REQUIRE(result.summaries.size() == static_cast<std::size_t>(kFidDim));
  CHECK(result.samples.divergence_rate.size() == 2);
  CHECK(result.derived[0].median > 15.0);
  CHECK(result.derived[0].median < 30.0);
}

TEST_CASE("fit refuses to summarize stuck chains unless forced") {
  const FidModelParams truth = reference_fid(0.018);
  const CoherenceTrace data = simulate_ramsey(truth, fid_grid(), 7);

  FitConfig config;
  config.mh.chains = 2;
  config.mh.iters = 320;
  config.mh.warmup = 120;
  config.mh.seed = 11;
  config.mh.init_jitter = 4.0;
  CHECK_THROWS_AS(fit_fid(data, default_fid_priors(30.0), config), SamplingError);

  config.force = true;
  const FitResult forced = fit_fid(data, default_fid_priors(30.0), config);
  CHECK(forced.summaries.size() == static_cast<std::size_t>(kFidDim));
}

TEST_CASE("fit_nm pipeline recovers the angle-response shape") {
  const NmModelParams truth = table_params();
  const Eigen::ArrayXd times = Eigen::ArrayXd::LinSpaced(41, 0.0, 1.226);
  std::vector<std::pair<double, CoherenceTrace>> coh_sets;
  std::vector<std::pair<double, double>> nm_points;
  Philox noise(4321, 0);
  for (int k = 0; k < 14; ++k) {
    const double phi = kTwoPi * k / 13.0;
    coh_sets.emplace_back(phi, simulate_ramsey(truth, phi, times, 100 + static_cast<unsigned>(k)));
    nm_points.emplace_back(phi, measure_modified(truth, phi, 1.226).value +
                                    truth.sigma_nm * noise.normal());
  }

  FitConfig config;
  config.mh.chains = 2;
  config.mh.iters = 16000;
  config.mh.seed = 3033;
  const FitResult result = fit_nm(coh_sets, nm_points, default_nm_priors(), config);

  REQUIRE(result.summaries.size() == static_cast<std::size_t>(kNmDim));
  // Contrast offset and coupling are tightly identified even by short chains.
  CHECK(std::abs(result.summaries[2].median - truth.contrast.offset) <
        0.05 * truth.contrast.offset);
  CHECK(std::abs(result.summaries[7].median - truth.coupling.a_par) <
        0.05 * truth.coupling.a_par);
  REQUIRE(result.derived.size() == 1);
  CHECK(result.derived[0].name == "p_at_0");
  CHECK(result.derived[0].median > 0.85);
  CHECK(result.derived[0].median < 0.97);
}
