#ifndef NVNM_PROB_MODEL_HPP
#define NVNM_PROB_MODEL_HPP

#include <Eigen/Dense>
#include <functional>
#include <utility>
#include <vector>

#include "nvnm/prior.hpp"
#include "nvnm/quantum_oracle.hpp"
#include "nvnm/spin_model.hpp"

// Probabilistic models binding priors and datasets to a log-posterior.
// Samplers work in unconstrained coordinates; the model owns the transform
// bookkeeping and returns -inf outside the support (proposal rejection).

namespace nvnm {

class ProbModel {
 public:
  PriorSpec priors;
  std::function<double(const Eigen::VectorXd&)> log_likelihood;  // constrained theta
  // Optional analytic likelihood gradient in constrained space.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> log_likelihood_grad;

  int dim() const { return static_cast<int>(priors.size()); }
  bool has_gradient() const { return static_cast<bool>(log_likelihood_grad); }

  Eigen::VectorXd to_constrained(const Eigen::VectorXd& xi) const;
  Eigen::VectorXd to_unconstrained(const Eigen::VectorXd& theta) const;

  double log_posterior_unconstrained(const Eigen::VectorXd& xi) const;

  // Gradient of the unconstrained log posterior: analytic when a likelihood
  // gradient is registered, otherwise central finite differences.
  Eigen::VectorXd grad_unconstrained(const Eigen::VectorXd& xi) const;
  Eigen::VectorXd grad_unconstrained_fd(const Eigen::VectorXd& xi) const;

  std::vector<std::string> names() const;
};

// --------------------------------------------------------------------------
// Single-trace decay model (envelope + residual nitrogen oscillations)
// --------------------------------------------------------------------------

// Parameter vector layout: [a0..a5, p, phi, a_par, d, sigma].
inline constexpr int kFidDim = 11;
std::vector<std::string> fid_param_names();
FidModelParams fid_params_from_vector(const Eigen::VectorXd& theta);
Eigen::VectorXd fid_vector_from_params(const FidModelParams& params);

// Gaussian likelihood on the magnitude channel, mean r(t) + d.
double log_likelihood_fid(const FidModelParams& params, const CoherenceTrace& data);
Eigen::VectorXd log_likelihood_fid_grad(const Eigen::VectorXd& theta,
                                        const CoherenceTrace& data);

// Weakly informative defaults; the half-normal scales of a_i shrink with the
// polynomial degree so each term contributes O(1) to the exponent at the end
// of the record.
PriorSpec default_fid_priors(double time_span_us);

// Unconstrained chain start in the polarized branch (p high, phi near 0).
// The +1/-1 population swap mirrors every (p, phi) mode to a second one at
// low p; the model keeps the physical branch by starting there (random-walk
// chains do not cross the inter-mode valley).
Eigen::VectorXd fid_default_init(const PriorSpec& priors);

ProbModel make_fid_model(CoherenceTrace data, PriorSpec priors);

// --------------------------------------------------------------------------
// Joint angle-response model (coherence curves + telescoped measure points)
// --------------------------------------------------------------------------

// Layout: [c_amp, c_freq, c_off, p_amp, p_freq, p_off, p_phase, a_par,
//          sigma_coh, sigma_nm].
inline constexpr int kNmDim = 10;
std::vector<std::string> nm_param_names();
NmModelParams nm_params_from_vector(const Eigen::VectorXd& theta);
Eigen::VectorXd nm_vector_from_params(const NmModelParams& params);

// Factorized likelihood: per-trace Gaussian terms with mean C(phi) r(t, phi)
// and std sigma_coh, plus per-point Gaussian terms with mean N'(phi) and std
// sigma_nm. Returns -inf when a realized p(phi) leaves [0, 1] or C(phi) < 0.
// The record end time T enters N'; it is read off the common final trace time
// unless horizon > 0 overrides it.
double log_likelihood_nm(const NmModelParams& params,
                         const std::vector<std::pair<double, CoherenceTrace>>& coh_sets,
                         const std::vector<std::pair<double, double>>& nm_points,
                         double horizon = -1.0);

// Reference prior set for the joint model.
PriorSpec default_nm_priors();

// Moment-based unconstrained chain start: the contrast model is seeded by a
// least-squares scan over the first sample of every trace (which reads C(phi)
// directly), the noise scale from first differences, the rest from the prior
// locations. Deterministic in the data.
Eigen::VectorXd nm_default_init(const PriorSpec& priors,
                                const std::vector<std::pair<double, CoherenceTrace>>& coh_sets);

ProbModel make_nm_model(std::vector<std::pair<double, CoherenceTrace>> coh_sets,
                        std::vector<std::pair<double, double>> nm_points, PriorSpec priors,
                        double horizon = -1.0);

}  // namespace nvnm

#endif  // NVNM_PROB_MODEL_HPP
