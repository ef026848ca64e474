#include "nvnm/samplers.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>

#include "nvnm/errors.hpp"
#include "nvnm/rng.hpp"

namespace nvnm {

void MhConfig::check() const {
  if (chains < 1) throw std::invalid_argument("sample_mh: chains must be >= 1");
  const int w = resolved_warmup();
  if (!(iters > w && w >= 0)) throw std::invalid_argument("sample_mh: need iters > warmup >= 0");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("sample_mh: target_accept must lie in (0, 1)");
}

void HmcConfig::check() const {
  if (chains < 1) throw std::invalid_argument("sample_hmc: chains must be >= 1");
  const int w = resolved_warmup();
  if (!(iters > w && w >= 0)) throw std::invalid_argument("sample_hmc: need iters > warmup >= 0");
  if (leapfrog_steps < 1) throw std::invalid_argument("sample_hmc: leapfrog_steps must be >= 1");
  if (!(step_size > 0.0)) throw std::invalid_argument("sample_hmc: step_size must be > 0");
}

Eigen::MatrixXd PosteriorSamples::merged() const {
  const Eigen::Index n = draws_per_chain();
  Eigen::MatrixXd out(n * num_chains(), dim());
  for (int c = 0; c < num_chains(); ++c) out.middleRows(c * n, n) = chains[static_cast<std::size_t>(c)];
  return out;
}

Eigen::ArrayXd PosteriorSamples::dim_draws(int d) const {
  const Eigen::Index n = draws_per_chain();
  Eigen::ArrayXd out(n * num_chains());
  for (int c = 0; c < num_chains(); ++c)
    out.segment(c * n, n) = chains[static_cast<std::size_t>(c)].col(d).array();
  return out;
}

namespace {

// Spread of the unconstrained coordinate implied by the prior; used for the
// initial proposal scales and the chain start jitter.
double unconstrained_scale(const ParamSpec& spec) {
  switch (spec.transform.kind) {
    case Transform::Kind::Identity:
      return spec.prior.scale();
    case Transform::Kind::Log:
      return 0.5;
    case Transform::Kind::Logit:
      return 1.0;
  }
  return 1.0;
}

Eigen::VectorXd default_init(const ProbModel& model) {
  Eigen::VectorXd xi(model.dim());
  for (int i = 0; i < model.dim(); ++i) {
    const auto& spec = model.priors[static_cast<std::size_t>(i)];
    xi[i] = spec.transform.to_unconstrained(initial_location(spec));
  }
  return xi;
}

// Per-chain start: supplied/default point plus seeded jitter, shrunk until
// the log posterior is finite.
Eigen::VectorXd chain_start(const ProbModel& model, const Eigen::VectorXd& base, double jitter,
                            Philox& rng, double& logpost) {
  Eigen::VectorXd scales(model.dim());
  for (int i = 0; i < model.dim(); ++i)
    scales[i] = unconstrained_scale(model.priors[static_cast<std::size_t>(i)]);
  double spread = 0.5 * jitter;
  for (int attempt = 0; attempt < 100; ++attempt) {
    Eigen::VectorXd xi = base;
    if (spread > 0.0)
      for (int i = 0; i < model.dim(); ++i) xi[i] += spread * scales[i] * rng.normal();
    logpost = model.log_posterior_unconstrained(xi);
    if (std::isfinite(logpost)) return xi;
    spread *= 0.5;
  }
  logpost = model.log_posterior_unconstrained(base);
  if (!std::isfinite(logpost))
    throw SamplingError("non-finite log-posterior at the initial point");
  return base;
}

// Doubling adaptation windows covering [0, warmup).
std::vector<int> window_edges(int warmup) {
  std::vector<int> edges;
  int width = 100;
  int pos = 0;
  while (pos < warmup) {
    pos = std::min(warmup, pos + width);
    edges.push_back(pos);
    width *= 2;
  }
  return edges;
}

// Chains own disjoint output slots and RNG streams, so they run in parallel
// with results independent of scheduling.
void run_chains_concurrently(int chains, const std::function<void(int)>& run_chain) {
  if (chains == 1) {
    run_chain(0);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chains));
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(chains));
  for (int chain = 0; chain < chains; ++chain) {
    workers.emplace_back([&errors, &run_chain, chain] {
      try {
        run_chain(chain);
      } catch (...) {
        errors[static_cast<std::size_t>(chain)] = std::current_exception();
      }
    });
  }
  for (auto& worker : workers) worker.join();
  for (const auto& error : errors)
    if (error) std::rethrow_exception(error);
}

}  // namespace

PosteriorSamples sample_mh(const ProbModel& model, const MhConfig& config) {
  config.check();
  const int dim = model.dim();
  const int warmup = config.resolved_warmup();
  const int kept = config.iters - warmup;
  if (config.init.size() > 0 && config.init.size() != dim)
    throw std::invalid_argument("sample_mh: init has wrong dimension");
  const Eigen::VectorXd base =
      config.init.size() > 0 ? config.init : default_init(model);
  const std::vector<int> edges = window_edges(warmup);

  PosteriorSamples samples;
  samples.names = model.names();
  samples.seed = config.seed;
  samples.warmup = warmup;
  samples.chains.resize(static_cast<std::size_t>(config.chains));
  samples.accept_rate.resize(static_cast<std::size_t>(config.chains));

  const auto run_chain = [&](int chain) {
    Philox rng(config.seed, static_cast<std::uint64_t>(chain) + 1);
    double logpost = 0.0;
    Eigen::VectorXd xi = chain_start(model, base, config.init_jitter, rng, logpost);

    // Proposal = lambda * chol(C) z. C starts from the prior scales and is
    // re-estimated from each warmup window; lambda tracks target_accept.
    Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < dim; ++i)
      chol(i, i) = unconstrained_scale(model.priors[static_cast<std::size_t>(i)]);
    double log_lambda = std::log(0.3 * 2.38 / std::sqrt(static_cast<double>(dim)));

    Eigen::MatrixXd window_draws(edges.empty() ? 0 : warmup, dim);
    int window_count = 0;
    std::size_t window_idx = 0;

    Eigen::MatrixXd draws(kept, dim);
    Eigen::VectorXd proposal(dim), z(dim);
    long accepted_post = 0;

    for (int iter = 0; iter < config.iters; ++iter) {
      for (int i = 0; i < dim; ++i) z[i] = rng.normal();
      proposal = xi + std::exp(log_lambda) * (chol * z);
      const double logpost_new = model.log_posterior_unconstrained(proposal);
      const double log_ratio = logpost_new - logpost;
      const bool accepted = std::log(rng.uniform()) < log_ratio;
      if (accepted) {
        xi = proposal;
        logpost = logpost_new;
        if (iter >= warmup) ++accepted_post;
      }

      if (iter < warmup) {
        // Robbins-Monro on the acceptance indicator: runs that make the same
        // accept/reject decisions stay bit-identical (the posterior is then
        // invariant to constants added to the log likelihood). The step
        // restarts at every covariance window so lambda can re-equilibrate.
        const double gamma = 1.0 / std::pow(10.0 + window_count, 0.6);
        log_lambda += gamma * ((accepted ? 1.0 : 0.0) - config.target_accept);
        window_draws.row(window_count++) = xi;
        if (window_idx < edges.size() && iter + 1 == edges[window_idx]) {
          if (window_count >= 2 * dim) {
            const auto block = window_draws.topRows(window_count);
            const Eigen::RowVectorXd mean = block.colwise().mean();
            const Eigen::MatrixXd centered = block.rowwise() - mean;
            Eigen::MatrixXd cov =
                (centered.adjoint() * centered) / static_cast<double>(window_count - 1);
            const double ridge = 1e-10 + 1e-8 * cov.diagonal().mean();
            cov.diagonal().array() += ridge;
            if (config.proposal == MhConfig::Proposal::Diag)
              chol = cov.diagonal().cwiseSqrt().asDiagonal();
            else
              chol = Eigen::LLT<Eigen::MatrixXd>(cov).matrixL();
          }
          window_count = 0;
          ++window_idx;
        }
      } else {
        draws.row(iter - warmup) = model.to_constrained(xi);
      }
    }
    samples.chains[static_cast<std::size_t>(chain)] = std::move(draws);
    samples.accept_rate[static_cast<std::size_t>(chain)] =
        static_cast<double>(accepted_post) / kept;
  };
  run_chains_concurrently(config.chains, run_chain);
  return samples;
}

PosteriorSamples sample_hmc(const ProbModel& model, const HmcConfig& config) {
  config.check();
  const int dim = model.dim();
  const int warmup = config.resolved_warmup();
  const int kept = config.iters - warmup;
  if (config.init.size() > 0 && config.init.size() != dim)
    throw std::invalid_argument("sample_hmc: init has wrong dimension");
  const Eigen::VectorXd base =
      config.init.size() > 0 ? config.init : default_init(model);

  PosteriorSamples samples;
  samples.names = model.names();
  samples.seed = config.seed;
  samples.warmup = warmup;
  samples.chains.resize(static_cast<std::size_t>(config.chains));
  samples.accept_rate.resize(static_cast<std::size_t>(config.chains));
  samples.divergence_rate.resize(static_cast<std::size_t>(config.chains));
  samples.energies.resize(static_cast<std::size_t>(config.chains));

  const auto run_chain = [&](int chain) {
    Philox rng(config.seed, static_cast<std::uint64_t>(chain) + 1);
    double logpost = 0.0;
    Eigen::VectorXd xi = chain_start(model, base, config.init_jitter, rng, logpost);
    Eigen::VectorXd grad = model.grad_unconstrained(xi);

    double log_eps = std::log(config.step_size);
    Eigen::MatrixXd draws(kept, dim);
    Eigen::ArrayXd energies(kept);
    long accepted_post = 0, divergent_post = 0;

    for (int iter = 0; iter < config.iters; ++iter) {
      Eigen::VectorXd momentum(dim);
      for (int i = 0; i < dim; ++i) momentum[i] = rng.normal();
      const double h0 = -logpost + 0.5 * momentum.squaredNorm();

      const double eps = std::exp(log_eps);
      Eigen::VectorXd q = xi;
      Eigen::VectorXd g = grad;
      Eigen::VectorXd p = momentum + 0.5 * eps * g;
      bool ok = true;
      for (int step = 0; step < config.leapfrog_steps; ++step) {
        q += eps * p;
        const double lp = model.log_posterior_unconstrained(q);
        if (!std::isfinite(lp)) {
          ok = false;
          break;
        }
        g = model.grad_unconstrained(q);
        p += (step + 1 < config.leapfrog_steps ? eps : 0.5 * eps) * g;
      }

      double alpha = 0.0;
      bool divergent = !ok;
      double h1 = std::numeric_limits<double>::infinity();
      if (ok) {
        const double lp1 = model.log_posterior_unconstrained(q);
        h1 = -lp1 + 0.5 * p.squaredNorm();
        const double dh = h0 - h1;
        if (!std::isfinite(dh) || dh < -1000.0) {
          divergent = true;
        } else {
          alpha = std::min(1.0, std::exp(dh));
          if (std::log(rng.uniform()) < dh) {
            xi = q;
            grad = g;
            logpost = lp1;
            if (iter >= warmup) ++accepted_post;
          }
        }
      }

      if (iter < warmup && config.adapt_step_size) {
        const double gamma = 1.0 / std::pow(10.0 + iter, 0.6);
        log_eps += gamma * (alpha - config.target_accept);
      }
      if (iter >= warmup) {
        if (divergent) ++divergent_post;
        draws.row(iter - warmup) = model.to_constrained(xi);
        energies[iter - warmup] = std::isfinite(h1) ? h1 : h0;
      }
    }
    const double div_rate = static_cast<double>(divergent_post) / kept;
    if (div_rate > 0.5)
      throw SamplingError("sample_hmc: divergent trajectory rate " + std::to_string(div_rate) +
                          " exceeds 0.5 on chain " + std::to_string(chain) +
                          "; reduce step_size");
    samples.chains[static_cast<std::size_t>(chain)] = std::move(draws);
    samples.accept_rate[static_cast<std::size_t>(chain)] =
        static_cast<double>(accepted_post) / kept;
    samples.divergence_rate[static_cast<std::size_t>(chain)] = div_rate;
    samples.energies[static_cast<std::size_t>(chain)] = std::move(energies);
  };
  run_chains_concurrently(config.chains, run_chain);
  return samples;
}

}  // namespace nvnm
