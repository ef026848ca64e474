#ifndef NVNM_SAMPLERS_HPP
#define NVNM_SAMPLERS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "nvnm/prob_model.hpp"

// MCMC samplers over ProbModel posteriors. Both run one independent Philox
// stream per chain keyed by (seed, chain index), so results are bit-identical
// for identical (model, config, seed) regardless of how chains are scheduled.

namespace nvnm {

struct MhConfig {
  int chains = 4;
  int iters = 50000;
  int warmup = -1;  // < 0: iters / 2
  double target_accept = 0.3;
  std::uint64_t seed = 0;
  enum class Proposal { Full, Diag };
  // Full: joint Gaussian proposal with the covariance adapted in doubling
  // warmup windows (per-dimension scales = its diagonal). Diag adapts the
  // per-dimension variances only.
  Proposal proposal = Proposal::Full;
  Eigen::VectorXd init;      // unconstrained start; empty = prior locations
  double init_jitter = 1.0;  // per-chain start spread, 0 disables

  int resolved_warmup() const { return warmup < 0 ? iters / 2 : warmup; }
  void check() const;
};

struct HmcConfig {
  int chains = 4;
  int iters = 2000;
  int warmup = -1;
  double step_size = 0.1;
  int leapfrog_steps = 20;
  double target_accept = 0.8;
  bool adapt_step_size = true;
  std::uint64_t seed = 0;
  Eigen::VectorXd init;
  double init_jitter = 1.0;

  int resolved_warmup() const { return warmup < 0 ? iters / 2 : warmup; }
  void check() const;
};

struct PosteriorSamples {
  std::vector<Eigen::MatrixXd> chains;  // per chain: kept draws x dim, constrained
  std::vector<std::string> names;
  std::uint64_t seed = 0;
  int warmup = 0;
  std::vector<double> accept_rate;      // post-warmup, per chain
  std::vector<double> divergence_rate;  // per chain (HMC only)
  std::vector<Eigen::ArrayXd> energies; // per chain Hamiltonian trace (HMC only)

  int num_chains() const { return static_cast<int>(chains.size()); }
  Eigen::Index draws_per_chain() const { return chains.empty() ? 0 : chains[0].rows(); }
  int dim() const { return chains.empty() ? 0 : static_cast<int>(chains[0].cols()); }

  // All chains stacked in chain order.
  Eigen::MatrixXd merged() const;
  Eigen::ArrayXd dim_draws(int d) const;
};

PosteriorSamples sample_mh(const ProbModel& model, const MhConfig& config);
PosteriorSamples sample_hmc(const ProbModel& model, const HmcConfig& config);

}  // namespace nvnm

#endif  // NVNM_SAMPLERS_HPP
