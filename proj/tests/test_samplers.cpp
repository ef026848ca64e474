#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "nvnm/diagnostics.hpp"
#include "nvnm/prob_model.hpp"
#include "nvnm/rng.hpp"
#include "nvnm/samplers.hpp"

using namespace nvnm;

namespace {

bool same_draws(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

// Target: product of independent standard normals (prior only, flat lik).
ProbModel standard_normal_model(int dim) {
  ProbModel model;
  for (int i = 0; i < dim; ++i)
    model.priors.push_back({"x" + std::to_string(i), Prior::normal(0.0, 1.0),
                            Transform::identity()});
  model.log_likelihood = [](const Eigen::VectorXd&) { return 0.0; };
  return model;
}

struct ConjugateCase {
  ProbModel model;
  double posterior_mean = 0.0;
  double posterior_var = 0.0;
};

// Normal likelihood with known sigma and a normal prior on the mean.
ConjugateCase conjugate_normal_case() {
  const double prior_mu = 1.0, prior_tau = 2.0, sigma = 1.5, true_mu = 1.3;
  const int n = 25;
  auto data = std::make_shared<Eigen::ArrayXd>(n);
  Philox rng(555, 9);
  for (int i = 0; i < n; ++i) (*data)[i] = true_mu + sigma * rng.normal();

  ConjugateCase out;
  out.model.priors.push_back({"mu", Prior::normal(prior_mu, prior_tau), Transform::identity()});
  out.model.log_likelihood = [data, sigma](const Eigen::VectorXd& theta) {
    const double mu = theta[0];
    return -0.5 * ((*data - mu) / sigma).square().sum();
  };
  const double precision = 1.0 / (prior_tau * prior_tau) + n / (sigma * sigma);
  out.posterior_var = 1.0 / precision;
  out.posterior_mean = out.posterior_var *
                       (prior_mu / (prior_tau * prior_tau) + data->sum() / (sigma * sigma));
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  const ProbModel model = standard_normal_model(1);
  MhConfig bad;
  bad.iters = 100;
  bad.warmup = 100;
  CHECK_THROWS_AS(sample_mh(model, bad), std::invalid_argument);

  HmcConfig zero_leapfrog;
  zero_leapfrog.leapfrog_steps = 0;
  CHECK_THROWS_AS(sample_hmc(model, zero_leapfrog), std::invalid_argument);

  HmcConfig bad_step;
  bad_step.step_size = 0.0;
  CHECK_THROWS_AS(sample_hmc(model, bad_step), std::invalid_argument);
}

TEST_CASE("mh recovers a 2-d standard normal") {
  const ProbModel model = standard_normal_model(2);
  MhConfig config;
  config.chains = 4;
  config.iters = 50000;
  config.seed = 31;
  const PosteriorSamples samples = sample_mh(model, config);

  CHECK(samples.draws_per_chain() == 25000);
  const Eigen::MatrixXd merged = samples.merged();
  const Eigen::RowVectorXd mean = merged.colwise().mean();
  CHECK(std::abs(mean[0]) < 0.02);
  CHECK(std::abs(mean[1]) < 0.02);
  const Eigen::MatrixXd centered = merged.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.adjoint() * centered / (merged.rows() - 1.0);
  CHECK(std::abs(cov(0, 0) - 1.0) < 0.05);
  CHECK(std::abs(cov(1, 1) - 1.0) < 0.05);
  CHECK(std::abs(cov(0, 1)) < 0.05);

  // Post-warmup acceptance sits near the adaptation target.
  for (const double rate : samples.accept_rate) CHECK(std::abs(rate - 0.3) < 0.1);
}

TEST_CASE("mh matches the conjugate posterior") {
  const ConjugateCase conj = conjugate_normal_case();
  MhConfig config;
  config.chains = 4;
  config.iters = 50000;
  config.seed = 77;
  const PosteriorSamples samples = sample_mh(conj.model, config);

  const Eigen::ArrayXd draws = samples.dim_draws(0);
  const double mean = draws.mean();
  const double var = (draws - mean).square().sum() / (draws.size() - 1.0);
  const double n_eff = ess(samples, 0);
  const double mcse_mean = std::sqrt(var / n_eff);
  const double mcse_var = var * std::sqrt(2.0 / n_eff);
  CHECK(std::abs(mean - conj.posterior_mean) < 3.0 * mcse_mean);
  CHECK(std::abs(var - conj.posterior_var) < 3.0 * mcse_var);
  CHECK(rhat(samples, 0) < 1.01);
}

TEST_CASE("identical configs give bit-identical chains") {
  const ProbModel model = standard_normal_model(3);
  MhConfig config;
  config.chains = 2;
  config.iters = 4000;
  config.seed = 99;
  const PosteriorSamples a = sample_mh(model, config);
  const PosteriorSamples b = sample_mh(model, config);
  REQUIRE(a.chains.size() == b.chains.size());
  for (std::size_t c = 0; c < a.chains.size(); ++c) CHECK(same_draws(a.chains[c], b.chains[c]));

  MhConfig other = config;
  other.seed = 100;
  const PosteriorSamples d = sample_mh(model, other);
  CHECK_FALSE(same_draws(a.chains[0], d.chains[0]));
}

TEST_CASE("posterior is invariant to likelihood constants") {
  ProbModel base = standard_normal_model(2);
  ProbModel shifted = standard_normal_model(2);
  shifted.log_likelihood = [](const Eigen::VectorXd&) { return 1234.5; };
  MhConfig config;
  config.chains = 2;
  config.iters = 6000;
  config.seed = 7;
  const PosteriorSamples a = sample_mh(base, config);
  const PosteriorSamples b = sample_mh(shifted, config);
  for (std::size_t c = 0; c < a.chains.size(); ++c) CHECK(same_draws(a.chains[c], b.chains[c]));
}

TEST_CASE("sampler errors on an impossible start") {
  ProbModel model = standard_normal_model(1);
  model.log_likelihood = [](const Eigen::VectorXd&) { return kNegInf; };
  MhConfig config;
  config.chains = 1;
  config.iters = 100;
  config.warmup = 10;
  CHECK_THROWS_AS(sample_mh(model, config), SamplingError);
}

TEST_CASE("sampling through a log transform matches rejection sampling") {
  // Half-normal(1) prior on a positive location, normal likelihood around
  // 0.8; the chain samples log(theta) with the Jacobian, the oracle rejects
  // directly in constrained space.
  const double obs = 0.8, lik_sd = 0.5;
  ProbModel model;
  model.priors.push_back({"theta", Prior::half_normal(1.0), Transform::log()});
  model.log_likelihood = [obs, lik_sd](const Eigen::VectorXd& theta) {
    const double z = (obs - theta[0]) / lik_sd;
    return -0.5 * z * z;
  };
  MhConfig config;
  config.chains = 4;
  config.iters = 40000;
  config.seed = 13;
  const PosteriorSamples samples = sample_mh(model, config);
  const Eigen::ArrayXd draws = samples.dim_draws(0);
  const double mcmc_mean = draws.mean();

  Philox rng(4242, 0);
  double sum = 0.0, sumsq = 0.0;
  long accepted = 0;
  while (accepted < 400000) {
    const double theta = std::abs(rng.normal());  // half-normal(1) draw
    const double z = (obs - theta) / lik_sd;
    if (rng.uniform() < std::exp(-0.5 * z * z)) {
      sum += theta;
      sumsq += theta * theta;
      ++accepted;
    }
  }
  const double oracle_mean = sum / accepted;
  const double oracle_var = sumsq / accepted - oracle_mean * oracle_mean;
  const double n_eff = ess(samples, 0);
  const double tol = 3.0 * std::sqrt(oracle_var / n_eff + oracle_var / accepted);
  CHECK(std::abs(mcmc_mean - oracle_mean) < tol);
}

TEST_CASE("hmc samples a standard normal with healthy acceptance") {
  const ProbModel model = standard_normal_model(2);
  HmcConfig config;
  config.chains = 2;
  config.iters = 3000;
  config.step_size = 0.2;
  config.leapfrog_steps = 12;
  config.seed = 5;
  const PosteriorSamples samples = sample_hmc(model, config);
  for (const double rate : samples.accept_rate) CHECK(rate > 0.6);
  for (const double rate : samples.divergence_rate) CHECK(rate == 0.0);
  const Eigen::ArrayXd draws = samples.dim_draws(0);
  CHECK(std::abs(draws.mean()) < 0.06);
  CHECK(std::abs((draws - draws.mean()).square().sum() / (draws.size() - 1.0) - 1.0) < 0.15);
  CHECK(samples.energies.size() == 2);
}

TEST_CASE("hmc aborts when most trajectories diverge") {
  // A hard-edged target: log density jumps to -inf outside (-1, 1), so large
  // steps almost always leave the support.
  ProbModel model;
  model.priors.push_back({"x", Prior::uniform(-1.0, 1.0), Transform::identity()});
  model.log_likelihood = [](const Eigen::VectorXd&) { return 0.0; };
  HmcConfig config;
  config.chains = 1;
  config.iters = 300;
  config.warmup = 50;
  config.step_size = 50.0;
  config.leapfrog_steps = 5;
  config.adapt_step_size = false;
  config.seed = 3;
  config.init_jitter = 0.0;
  CHECK_THROWS_AS(sample_hmc(model, config), SamplingError);
}

TEST_CASE("finite-difference gradient matches the analytic fid gradient") {
  FidModelParams truth;
  truth.envelope = DephasingEnvelope::gaussian(22.262);
  truth.p = 0.972;
  truth.phi = 0.191;
  truth.coupling.a_par = angular_mhz(2.143);
  truth.sigma = 0.018;
  Eigen::ArrayXd times(60);
  for (int i = 0; i < 30; ++i) times[i] = 0.05 * i;
  for (int i = 0; i < 30; ++i) times[30 + i] = 1.5 + (30.0 - 1.5) * i / 29.0;
  const CoherenceTrace data = simulate_ramsey(truth, times, 8);
  const ProbModel model = make_fid_model(data, default_fid_priors(30.0));
  REQUIRE(model.has_gradient());

  const Eigen::VectorXd center = model.to_unconstrained(fid_vector_from_params(truth));
  Philox rng(4100, 0);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd xi = center;
    for (int d = 0; d < model.dim(); ++d) xi[d] += 0.1 * rng.normal();
    const Eigen::VectorXd analytic = model.grad_unconstrained(xi);
    const Eigen::VectorXd fd = model.grad_unconstrained_fd(xi);
    for (int d = 0; d < model.dim(); ++d) {
      const double rel = std::abs(analytic[d] - fd[d]) / std::max(1e-6, std::abs(analytic[d]));
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst < 1e-5);
}
