#include "nvnm/prob_model.hpp"

#include <cmath>
#include <memory>

#include "nvnm/errors.hpp"

namespace nvnm {

Eigen::VectorXd ProbModel::to_constrained(const Eigen::VectorXd& xi) const {
  Eigen::VectorXd theta(xi.size());
  for (Eigen::Index i = 0; i < xi.size(); ++i)
    theta[i] = priors[static_cast<std::size_t>(i)].transform.to_constrained(xi[i]);
  return theta;
}

Eigen::VectorXd ProbModel::to_unconstrained(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd xi(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    xi[i] = priors[static_cast<std::size_t>(i)].transform.to_unconstrained(theta[i]);
  return xi;
}

double ProbModel::log_posterior_unconstrained(const Eigen::VectorXd& xi) const {
  const double prior = log_prior_unconstrained(xi, priors);
  if (!std::isfinite(prior)) return kNegInf;
  const double lik = log_likelihood(to_constrained(xi));
  if (!std::isfinite(lik)) return kNegInf;
  return prior + lik;
}

Eigen::VectorXd ProbModel::grad_unconstrained(const Eigen::VectorXd& xi) const {
  if (!has_gradient()) return grad_unconstrained_fd(xi);
  const Eigen::VectorXd theta = to_constrained(xi);
  const Eigen::VectorXd lik_grad = log_likelihood_grad(theta);
  Eigen::VectorXd grad(xi.size());
  for (Eigen::Index i = 0; i < xi.size(); ++i) {
    const auto& spec = priors[static_cast<std::size_t>(i)];
    grad[i] = (spec.prior.dlogpdf(theta[i]) + lik_grad[i]) * spec.transform.dtheta_dxi(xi[i]) +
              spec.transform.dlogjac_dxi(xi[i]);
  }
  return grad;
}

Eigen::VectorXd ProbModel::grad_unconstrained_fd(const Eigen::VectorXd& xi) const {
  Eigen::VectorXd grad(xi.size());
  Eigen::VectorXd probe = xi;
  for (Eigen::Index i = 0; i < xi.size(); ++i) {
    const double h = 6e-6 * (1.0 + std::abs(xi[i]));
    probe[i] = xi[i] + h;
    const double fp = log_posterior_unconstrained(probe);
    probe[i] = xi[i] - h;
    const double fm = log_posterior_unconstrained(probe);
    probe[i] = xi[i];
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

std::vector<std::string> ProbModel::names() const {
  std::vector<std::string> out;
  out.reserve(priors.size());
  for (const auto& p : priors) out.push_back(p.name);
  return out;
}

// --------------------------------------------------------------------------
// Single-trace decay model
// --------------------------------------------------------------------------

std::vector<std::string> fid_param_names() {
  return {"a0", "a1", "a2", "a3", "a4", "a5", "p", "phi", "a_par", "d", "sigma"};
}

FidModelParams fid_params_from_vector(const Eigen::VectorXd& theta) {
  if (theta.size() != kFidDim) throw ValidationError("fid parameter vector has wrong size");
  FidModelParams params;
  Eigen::Array<double, 6, 1> coeffs;
  for (int i = 0; i < 6; ++i) coeffs[i] = theta[i];
  params.envelope = DephasingEnvelope::polynomial(coeffs);
  params.p = theta[6];
  params.phi = theta[7];
  params.coupling.a_par = theta[8];
  params.bias_d = theta[9];
  params.sigma = theta[10];
  return params;
}

Eigen::VectorXd fid_vector_from_params(const FidModelParams& params) {
  Eigen::VectorXd theta(kFidDim);
  for (int i = 0; i < 6; ++i) theta[i] = params.envelope.coeffs[i];
  theta[6] = params.p;
  theta[7] = params.phi;
  theta[8] = params.coupling.a_par;
  theta[9] = params.bias_d;
  theta[10] = params.sigma;
  return theta;
}

double log_likelihood_fid(const FidModelParams& params, const CoherenceTrace& data) {
  if (data.size() == 0) throw ValidationError("log_likelihood_fid: empty trace");
  if (!(params.sigma > 0.0)) throw std::domain_error("log_likelihood_fid: sigma must be > 0");
  const NitrogenState state = nitrogen_populations(params.p, params.phi);
  const Eigen::ArrayXd r = bloch_length(state, params.coupling, params.envelope, data.times);
  const Eigen::ArrayXd resid = data.magnitude - (r + params.bias_d);
  const auto n = static_cast<double>(data.size());
  return -0.5 * n * kLogTwoPi - n * std::log(params.sigma) -
         0.5 * (resid / params.sigma).square().sum();
}

Eigen::VectorXd log_likelihood_fid_grad(const Eigen::VectorXd& theta,
                                        const CoherenceTrace& data) {
  const FidModelParams params = fid_params_from_vector(theta);
  const double p = params.p, phi = params.phi, a = params.coupling.a_par;
  const double sigma = params.sigma, inv_s2 = 1.0 / (sigma * sigma);
  const NitrogenState st = nitrogen_populations(p, phi);
  const double c2h = std::cos(phi / 2) * std::cos(phi / 2);
  const double s2h = std::sin(phi / 2) * std::sin(phi / 2);

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(kFidDim);
  for (Eigen::Index j = 0; j < data.size(); ++j) {
    const double t = data.times[j];
    const double c1 = std::cos(a * t), c2 = std::cos(2 * a * t);
    const double s1 = std::sin(a * t), s2 = std::sin(2 * a * t);
    double bracket = st.p0 * st.p0 + st.p1 * st.p1 + st.pm1 * st.pm1 +
                     2 * st.p0 * (st.p1 + st.pm1) * c1 + 2 * st.p1 * st.pm1 * c2;
    bracket = std::max(bracket, 1e-300);
    const double root = std::sqrt(bracket);
    const double envelope = std::exp(-envelope_exponent_t<double>(params.envelope, t));
    const double r = root * envelope;
    const double resid = (data.magnitude[j] - (r + params.bias_d)) * inv_s2;

    // d mu / d a_i = -t^i r
    double tpow = 1.0;
    for (int i = 0; i < 6; ++i) {
      grad[i] += resid * (-tpow * r);
      tpow *= t;
    }
    const double dB_dp1 = 2 * st.p1 + 2 * st.p0 * c1 + 2 * st.pm1 * c2;
    const double dB_dp0 = 2 * st.p0 + 2 * (st.p1 + st.pm1) * c1;
    const double dB_dpm1 = 2 * st.pm1 + 2 * st.p0 * c1 + 2 * st.p1 * c2;
    const double dB_dp = dB_dp1 * c2h + dB_dp0 * s2h - dB_dpm1;
    const double dB_dphi = 0.5 * p * std::sin(phi) * (dB_dp0 - dB_dp1);
    const double dB_da = -2 * st.p0 * (st.p1 + st.pm1) * t * s1 - 4 * st.p1 * st.pm1 * t * s2;
    const double half_env_over_root = envelope / (2 * root);
    grad[6] += resid * dB_dp * half_env_over_root;
    grad[7] += resid * dB_dphi * half_env_over_root;
    grad[8] += resid * dB_da * half_env_over_root;
    grad[9] += resid;
    grad[10] += -1.0 / sigma + resid * resid * sigma;  // resid^2 sigma = (x-mu)^2/sigma^3
  }
  return grad;
}

PriorSpec default_fid_priors(double time_span_us) {
  const double span = std::max(time_span_us, 1e-6);
  // a2 is the gaussian-decay channel and gets a physics-based scale (1 sigma
  // at T2* = 10 us); the other degrees are small shape corrections, each
  // allowed ~0.1 in the exponent at the end of the record. a0 normalizes the
  // measured contrast.
  PriorSpec priors;
  for (int i = 0; i < 6; ++i) {
    const double scale = i == 0 ? 0.5 : (i == 2 ? 0.01 : 0.1 / std::pow(span, i));
    priors.push_back({"a" + std::to_string(i), Prior::half_normal(scale), Transform::log()});
  }
  priors.push_back({"p", Prior::uniform(0.0, 1.0), Transform::logit(0.0, 1.0)});
  // r(t) is even in phi, so the sign of the mixing angle is unobservable in
  // a decay record; sampling the canonical phi >= 0 branch keeps the
  // marginal single-lobed.
  priors.push_back({"phi", Prior::half_normal(0.5), Transform::log()});
  priors.push_back({"a_par", Prior::normal(angular_mhz(2.14), kTwoPi * 0.05), Transform::identity()});
  priors.push_back({"d", Prior::normal(0.0, 0.1), Transform::identity()});
  priors.push_back({"sigma", Prior::half_normal(0.1), Transform::log()});
  return priors;
}

Eigen::VectorXd fid_default_init(const PriorSpec& priors) {
  Eigen::VectorXd theta(kFidDim);
  for (int i = 0; i < 6; ++i)
    theta[i] = std::max(1e-12, 0.3 * priors[static_cast<std::size_t>(i)].prior.scale());
  theta[6] = 0.9;                        // p: polarized branch
  theta[7] = initial_location(priors[7]);  // phi
  theta[8] = initial_location(priors[8]);  // a_par
  theta[9] = 0.0;                        // d
  theta[10] = std::max(1e-6, priors[10].prior.scale());  // sigma
  Eigen::VectorXd xi(kFidDim);
  for (int i = 0; i < kFidDim; ++i)
    xi[i] = priors[static_cast<std::size_t>(i)].transform.to_unconstrained(theta[i]);
  return xi;
}

ProbModel make_fid_model(CoherenceTrace data, PriorSpec priors) {
  data.validate();
  if (data.magnitude.size() == 0) throw ValidationError("fid model needs a magnitude channel");
  if (priors.size() != static_cast<std::size_t>(kFidDim))
    throw ValidationError("fid model needs exactly " + std::to_string(kFidDim) + " priors");
  for (const auto& p : priors) p.prior.check();
  ProbModel model;
  model.priors = std::move(priors);
  auto shared = std::make_shared<CoherenceTrace>(std::move(data));
  model.log_likelihood = [shared](const Eigen::VectorXd& theta) {
    return log_likelihood_fid(fid_params_from_vector(theta), *shared);
  };
  model.log_likelihood_grad = [shared](const Eigen::VectorXd& theta) {
    return log_likelihood_fid_grad(theta, *shared);
  };
  return model;
}

// --------------------------------------------------------------------------
// Joint angle-response model
// --------------------------------------------------------------------------

std::vector<std::string> nm_param_names() {
  return {"c_amp", "c_freq", "c_off", "p_amp", "p_freq", "p_off", "p_phase",
          "a_par", "sigma_coh", "sigma_nm"};
}

NmModelParams nm_params_from_vector(const Eigen::VectorXd& theta) {
  if (theta.size() != kNmDim) throw ValidationError("nm parameter vector has wrong size");
  NmModelParams params;
  params.contrast = {theta[0], theta[1], theta[2]};
  params.population = {theta[3], theta[4], theta[5], theta[6]};
  params.coupling.a_par = theta[7];
  params.sigma_coh = theta[8];
  params.sigma_nm = theta[9];
  return params;
}

Eigen::VectorXd nm_vector_from_params(const NmModelParams& params) {
  Eigen::VectorXd theta(kNmDim);
  theta << params.contrast.amplitude, params.contrast.frequency, params.contrast.offset,
      params.population.amplitude, params.population.frequency, params.population.offset,
      params.population.phase, params.coupling.a_par, params.sigma_coh, params.sigma_nm;
  return theta;
}

namespace {

double resolve_horizon(const std::vector<std::pair<double, CoherenceTrace>>& coh_sets,
                       double horizon) {
  if (horizon > 0.0) return horizon;
  if (coh_sets.empty())
    throw ValidationError("log_likelihood_nm: horizon required when no traces are bound");
  const double t_end = coh_sets.front().second.times[coh_sets.front().second.size() - 1];
  for (const auto& [phi, trace] : coh_sets) {
    const double end = trace.times[trace.size() - 1];
    if (std::abs(end - t_end) > 1e-9)
      throw ValidationError("log_likelihood_nm: traces end at different times; pass horizon");
  }
  return t_end;
}

}  // namespace

double log_likelihood_nm(const NmModelParams& params,
                         const std::vector<std::pair<double, CoherenceTrace>>& coh_sets,
                         const std::vector<std::pair<double, double>>& nm_points,
                         double horizon) {
  if (coh_sets.empty() && nm_points.empty())
    throw ValidationError("log_likelihood_nm: at least one dataset required");
  if (!(params.sigma_coh > 0.0))
    throw std::domain_error("log_likelihood_nm: sigma_coh must be > 0");
  if (!(params.sigma_nm > 0.0))
    throw std::domain_error("log_likelihood_nm: sigma_nm must be > 0");
  const double t_end = nm_points.empty() && horizon <= 0.0
                           ? 0.0
                           : resolve_horizon(coh_sets, horizon);

  double total = 0.0;
  for (const auto& [phi, trace] : coh_sets) {
    const double p = population_eval(params.population, phi);
    if (!(p >= 0.0 && p <= 1.0)) return kNegInf;
    const double contrast = contrast_eval(params.contrast, phi);
    if (contrast < 0.0) return kNegInf;
    const Eigen::ArrayXd r = bloch_length_phi(p, phi, params.coupling, trace.times);
    const Eigen::ArrayXd resid = trace.magnitude - contrast * r;
    const auto n = static_cast<double>(trace.size());
    total += -0.5 * n * kLogTwoPi - n * std::log(params.sigma_coh) -
             0.5 * (resid / params.sigma_coh).square().sum();
  }
  for (const auto& [phi, value] : nm_points) {
    const double p = population_eval(params.population, phi);
    if (!(p >= 0.0 && p <= 1.0)) return kNegInf;
    const double contrast = contrast_eval(params.contrast, phi);
    if (contrast < 0.0) return kNegInf;
    const double nprime = contrast * (bloch_length_phi(p, phi, params.coupling, t_end) - 1.0);
    const double z = (value - nprime) / params.sigma_nm;
    total += -0.5 * kLogTwoPi - std::log(params.sigma_nm) - 0.5 * z * z;
  }
  return total;
}

PriorSpec default_nm_priors() {
  PriorSpec priors;
  priors.push_back({"c_amp", Prior::normal(1.0, 0.1), Transform::identity()});
  priors.push_back({"c_freq", Prior::normal(0.3, 0.1), Transform::identity()});
  priors.push_back({"c_off", Prior::normal(1.0, 0.1), Transform::identity()});
  priors.push_back({"p_amp", Prior::normal(0.02, 0.01), Transform::identity()});
  priors.push_back({"p_freq", Prior::normal(1.5, 0.1), Transform::identity()});
  priors.push_back({"p_off", Prior::normal(0.02, 0.01), Transform::identity()});
  priors.push_back({"p_phase", Prior::normal(0.0, 0.3), Transform::identity()});
  priors.push_back({"a_par", Prior::normal(4.2 * std::numbers::pi, 0.5), Transform::identity()});
  // A std must be positive: the table's (0, 1) row is read as half-normal(1),
  // and the per-curve std gets the same weakly informative scale as the
  // single-trace model.
  priors.push_back({"sigma_coh", Prior::half_normal(0.1), Transform::log()});
  priors.push_back({"sigma_nm", Prior::half_normal(1.0), Transform::log()});
  return priors;
}

Eigen::VectorXd nm_default_init(const PriorSpec& priors,
                                const std::vector<std::pair<double, CoherenceTrace>>& coh_sets) {
  Eigen::VectorXd theta(kNmDim);
  for (int i = 0; i < kNmDim; ++i) theta[i] = initial_location(priors[static_cast<std::size_t>(i)]);

  if (!coh_sets.empty()) {
    const auto n = static_cast<Eigen::Index>(coh_sets.size());
    Eigen::ArrayXd phis(n), first(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      phis[i] = coh_sets[static_cast<std::size_t>(i)].first;
      first[i] = coh_sets[static_cast<std::size_t>(i)].second.magnitude[0];
    }
    // C(phi) read off the t = 0 samples; scan the modulation frequency and
    // solve amplitude/offset by least squares at each candidate.
    double best_freq = theta[1], best_amp = 0.02, best_off = first.mean(), best_rss = 1e300;
    for (double freq = 0.1; freq <= 3.0; freq += 0.025) {
      const Eigen::ArrayXd basis = (freq * phis).cos();
      Eigen::Matrix2d gram;
      gram << (basis * basis).sum(), basis.sum(), basis.sum(), static_cast<double>(n);
      const Eigen::Vector2d rhs((basis * first).sum(), first.sum());
      const Eigen::Vector2d solution = gram.ldlt().solve(rhs);
      const double rss = (first - solution[0] * basis - solution[1]).square().sum();
      if (rss < best_rss) {
        best_rss = rss;
        best_freq = freq;
        best_amp = solution[0];
        best_off = solution[1];
      }
    }
    theta[0] = std::max(0.005, std::abs(best_amp));
    theta[1] = best_freq;
    theta[2] = std::max(0.05, best_off);

    // Per-point noise from first differences (oscillation filtered poorly,
    // but the scale is right).
    double acc = 0.0;
    for (const auto& [phi, trace] : coh_sets) {
      const auto m = trace.magnitude;
      const Eigen::ArrayXd diffs = m.tail(m.size() - 1) - m.head(m.size() - 1);
      acc += std::sqrt(diffs.square().sum() / (2.0 * static_cast<double>(diffs.size())));
    }
    theta[8] = std::max(1e-3, acc / static_cast<double>(coh_sets.size()));
  }

  Eigen::VectorXd xi(kNmDim);
  for (int i = 0; i < kNmDim; ++i)
    xi[i] = priors[static_cast<std::size_t>(i)].transform.to_unconstrained(theta[i]);
  return xi;
}

ProbModel make_nm_model(std::vector<std::pair<double, CoherenceTrace>> coh_sets,
                        std::vector<std::pair<double, double>> nm_points, PriorSpec priors,
                        double horizon) {
  for (auto& [phi, trace] : coh_sets) trace.validate();
  if (priors.size() != static_cast<std::size_t>(kNmDim))
    throw ValidationError("nm model needs exactly " + std::to_string(kNmDim) + " priors");
  for (const auto& p : priors) p.prior.check();
  if (!coh_sets.empty() || horizon > 0.0)
    resolve_horizon(coh_sets, horizon);  // fail fast on inconsistent records
  ProbModel model;
  model.priors = std::move(priors);
  auto coh = std::make_shared<std::vector<std::pair<double, CoherenceTrace>>>(std::move(coh_sets));
  auto nm = std::make_shared<std::vector<std::pair<double, double>>>(std::move(nm_points));
  model.log_likelihood = [coh, nm, horizon](const Eigen::VectorXd& theta) {
    return log_likelihood_nm(nm_params_from_vector(theta), *coh, *nm, horizon);
  };
  return model;
}

}  // namespace nvnm
