#include "nvnm/quantum_oracle.hpp"

#include <Eigen/Eigenvalues>

#include "nvnm/errors.hpp"
#include "nvnm/rng.hpp"

namespace nvnm {

NuclearDensityMatrix NuclearDensityMatrix::diagonal(const NitrogenState& n) {
  NuclearDensityMatrix out;
  out.rho.setZero();
  out.rho(0, 0) = n.p1;
  out.rho(1, 1) = n.p0;
  out.rho(2, 2) = n.pm1;
  return out;
}

void NuclearDensityMatrix::validate(double herm_tol, double trace_tol, double psd_tol) const {
  if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > herm_tol)
    throw std::domain_error("density matrix is not Hermitian");
  if (std::abs(rho.trace() - std::complex<double>(1.0, 0.0)) > trace_tol)
    throw std::domain_error("density matrix trace differs from 1");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> solver(rho);
  if (solver.eigenvalues().minCoeff() < -psd_tol)
    throw std::domain_error("density matrix has a negative eigenvalue");
}

Eigen::Matrix3cd conditional_propagator(const HyperfineCoupling& coupling, double t,
                                        ElectronBranch branch) {
  if (!(t >= 0.0)) throw std::domain_error("conditional_propagator: t must be >= 0");
  Eigen::Matrix3cd u = Eigen::Matrix3cd::Identity();
  if (branch == ElectronBranch::msm1) {
    // <-1|S_z|-1> = -1, so the nitrogen evolves under -A I_z.
    const std::complex<double> phase(0.0, coupling.a_par * t);
    u(0, 0) = std::exp(phase);
    u(2, 2) = std::exp(-phase);
  }
  return u;
}

std::complex<double> coherence_trace(const NuclearDensityMatrix& rho_n,
                                     const HyperfineCoupling& coupling,
                                     const DephasingEnvelope& env, double t) {
  rho_n.validate();
  const Eigen::Matrix3cd u = conditional_propagator(coupling, t, ElectronBranch::msm1);
  const std::complex<double> trace = (rho_n.rho * u.adjoint()).trace();
  return envelope_eval(env, t) * trace;
}

void CoherenceTrace::validate() const {
  if (times.size() < 1) throw ValidationError("trace is empty");
  for (Eigen::Index i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw ValidationError("trace times must be strictly increasing (row " +
                            std::to_string(i) + ")");
  if (x.size() != 0 && x.size() != times.size())
    throw ValidationError("x channel length differs from times");
  if (y.size() != x.size()) throw ValidationError("x and y channel lengths differ");
  if (magnitude.size() != times.size())
    throw ValidationError("magnitude channel length differs from times");
}

namespace {

CoherenceTrace simulate_impl(const NitrogenState& state, const HyperfineCoupling& coupling,
                             const DephasingEnvelope& env, double scale, double bias,
                             double sigma, const Eigen::Ref<const Eigen::ArrayXd>& times,
                             std::uint64_t seed, NoiseChannel channel) {
  if (sigma < 0.0) throw std::domain_error("simulate_ramsey: sigma must be >= 0");
  const Eigen::Index n = times.size();
  CoherenceTrace trace;
  trace.times = times;
  trace.seed = seed;
  Philox rng(seed, 0);

  const NuclearDensityMatrix rho = NuclearDensityMatrix::diagonal(state);
  if (channel == NoiseChannel::Quadrature) {
    trace.x.resize(n);
    trace.y.resize(n);
    trace.magnitude.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::complex<double> coh = coherence_trace(rho, coupling, env, times[i]);
      trace.x[i] = scale * coh.real() + sigma * rng.normal();
      trace.y[i] = scale * coh.imag() + sigma * rng.normal();
      trace.magnitude[i] = std::hypot(trace.x[i], trace.y[i]) + bias;
    }
  } else {
    trace.magnitude.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::complex<double> coh = coherence_trace(rho, coupling, env, times[i]);
      trace.magnitude[i] = scale * std::abs(coh) + bias + sigma * rng.normal();
    }
  }
  trace.validate();
  return trace;
}

}  // namespace

CoherenceTrace simulate_ramsey(const FidModelParams& params,
                               const Eigen::Ref<const Eigen::ArrayXd>& times,
                               std::uint64_t seed, NoiseChannel channel) {
  const NitrogenState state = nitrogen_populations(params.p, params.phi);
  CoherenceTrace trace = simulate_impl(state, params.coupling, params.envelope, 1.0,
                                       params.bias_d, params.sigma, times, seed, channel);
  trace.phi = params.phi;
  return trace;
}

CoherenceTrace simulate_ramsey(const NmModelParams& params, double phi,
                               const Eigen::Ref<const Eigen::ArrayXd>& times,
                               std::uint64_t seed, NoiseChannel channel) {
  const double p = population_eval(params.population, phi);
  if (!(p >= 0.0 && p <= 1.0))
    throw std::domain_error("simulate_ramsey: population model gives p outside [0, 1]");
  const double contrast = contrast_eval(params.contrast, phi);
  if (contrast < 0.0)
    throw std::domain_error("simulate_ramsey: contrast model is negative at phi");
  const NitrogenState state = nitrogen_populations(p, phi);
  CoherenceTrace trace = simulate_impl(state, params.coupling, DephasingEnvelope::unit(),
                                       contrast, 0.0, params.sigma_coh, times, seed, channel);
  trace.phi = phi;
  trace.norm_scale = contrast;
  return trace;
}

}  // namespace nvnm
