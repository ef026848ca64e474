#include "nvnm/fit.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "nvnm/errors.hpp"
#include "nvnm/nonmarkov.hpp"

namespace nvnm {

namespace {

PosteriorSamples run_sampler(const ProbModel& model, const FitConfig& config) {
  return config.use_hmc ? sample_hmc(model, config.hmc) : sample_mh(model, config.mh);
}

void check_convergence(const std::vector<ParamSummary>& summaries, const FitConfig& config) {
  if (config.force) return;
  std::string offenders;
  for (const auto& row : summaries)
    if (row.rhat > config.rhat_limit) offenders += (offenders.empty() ? "" : ", ") + row.name;
  if (!offenders.empty())
    throw SamplingError("chains did not converge (rhat > " +
                        std::to_string(config.rhat_limit) + "): " + offenders +
                        "; rerun with more iterations or force summaries");
}

}  // namespace

FitResult fit_fid(const CoherenceTrace& data, PriorSpec priors, const FitConfig& config) {
  const ProbModel model = make_fid_model(data, std::move(priors));
  FitConfig run = config;
  if (run.mh.init.size() == 0) run.mh.init = fid_default_init(model.priors);
  if (run.hmc.init.size() == 0) run.hmc.init = fid_default_init(model.priors);
  FitResult result;
  result.samples = run_sampler(model, run);
  result.summaries = summarize(result.samples, &model.priors, config.hpd_mass);
  check_convergence(result.summaries, config);

  // Characteristic Gaussian time from the quadratic envelope coefficient.
  const Eigen::ArrayXd a2 = result.samples.dim_draws(2);
  Eigen::ArrayXd t2(a2.size());
  for (Eigen::Index i = 0; i < a2.size(); ++i)
    t2[i] = a2[i] > 0.0 ? 1.0 / std::sqrt(a2[i]) : std::numeric_limits<double>::infinity();
  result.derived.push_back(summarize_draws("t2_star", result.samples, t2, config.hpd_mass));
  result.derived_draws.push_back(std::move(t2));
  return result;
}

FitResult fit_nm(const std::vector<std::pair<double, CoherenceTrace>>& coh_sets,
                 const std::vector<std::pair<double, double>>& nm_points, PriorSpec priors,
                 const FitConfig& config, double horizon) {
  const ProbModel model = make_nm_model(coh_sets, nm_points, std::move(priors), horizon);
  FitConfig run = config;
  if (run.mh.init.size() == 0) run.mh.init = nm_default_init(model.priors, coh_sets);
  if (run.hmc.init.size() == 0) run.hmc.init = nm_default_init(model.priors, coh_sets);
  FitResult result;
  result.samples = run_sampler(model, run);
  result.summaries = summarize(result.samples, &model.priors, config.hpd_mass);
  check_convergence(result.summaries, config);

  // Prepared-subspace population at phi = 0: diagnostic of the polarization.
  Eigen::ArrayXd p0(result.samples.draws_per_chain() * result.samples.num_chains());
  const Eigen::MatrixXd merged = result.samples.merged();
  for (Eigen::Index i = 0; i < merged.rows(); ++i) {
    const NmModelParams params = nm_params_from_vector(merged.row(i));
    p0[i] = population_eval(params.population, 0.0);
  }
  result.derived.push_back(summarize_draws("p_at_0", result.samples, p0, config.hpd_mass));
  result.derived_draws.push_back(std::move(p0));
  return result;
}

std::vector<PredictivePoint> posterior_predictive(
    const PosteriorSamples& samples,
    const std::function<double(const Eigen::VectorXd&, double)>& expectation_fn,
    const std::function<double(const Eigen::VectorXd&)>& noise_sd_fn,
    const std::vector<double>& inputs, int thin) {
  if (samples.num_chains() == 0 || samples.draws_per_chain() == 0)
    throw ValidationError("posterior_predictive: empty sample");
  if (thin < 1) throw ValidationError("posterior_predictive: thin must be >= 1");

  const Eigen::MatrixXd merged = samples.merged();
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < merged.rows(); i += thin) rows.push_back(i);
  const auto n = static_cast<double>(rows.size());

  double mean_noise_var = 0.0;
  if (noise_sd_fn) {
    for (const Eigen::Index i : rows) {
      const double sd = noise_sd_fn(merged.row(i));
      mean_noise_var += sd * sd;
    }
    mean_noise_var /= n;
  }

  std::vector<PredictivePoint> out;
  out.reserve(inputs.size());
  Eigen::ArrayXd values(static_cast<Eigen::Index>(rows.size()));
  for (const double input : inputs) {
    for (std::size_t k = 0; k < rows.size(); ++k)
      values[static_cast<Eigen::Index>(k)] = expectation_fn(merged.row(rows[k]), input);
    PredictivePoint point;
    point.mean = values.mean();
    const double var_param =
        rows.size() > 1 ? (values - point.mean).square().sum() / (n - 1.0) : 0.0;
    point.sd_param = std::sqrt(var_param);
    point.sd_total = std::sqrt(var_param + mean_noise_var);
    out.push_back(point);
  }
  return out;
}

std::function<double(const Eigen::VectorXd&, double)> nm_prime_expectation(double horizon) {
  return [horizon](const Eigen::VectorXd& theta, double phi) {
    return measure_modified(nm_params_from_vector(theta), phi, horizon).value;
  };
}

std::function<double(const Eigen::VectorXd&)> nm_observation_sd() {
  return [](const Eigen::VectorXd& theta) { return theta[9]; };  // sigma_nm
}

}  // namespace nvnm
