#ifndef NVNM_QUANTUM_ORACLE_HPP
#define NVNM_QUANTUM_ORACLE_HPP

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <optional>

#include "nvnm/spin_model.hpp"

// Brute-force counterpart of the closed-form model: explicit conditional
// 3x3 propagators of the nitrogen spin and the coherence as a trace over
// the nuclear density matrix, plus a seeded synthetic Ramsey generator.

namespace nvnm {

// Nuclear density matrix in the {|m_I=+1>, |0>, |-1>} basis.
struct NuclearDensityMatrix {
  Eigen::Matrix3cd rho = Eigen::Matrix3cd::Identity() / 3.0;

  static NuclearDensityMatrix diagonal(const NitrogenState& n);

  // Hermiticity/trace to 1e-12, eigenvalues >= -1e-10. Throws std::domain_error.
  void validate(double herm_tol = 1e-12, double trace_tol = 1e-12,
                double psd_tol = 1e-10) const;
};

enum class ElectronBranch { ms0, msm1 };

// Propagator of the nitrogen spin conditioned on the electron state.
// The ms0 branch is free (identity); the msm1 branch rotates under -A I_z,
// i.e. diag(e^{+iAt}, 1, e^{-iAt}).
Eigen::Matrix3cd conditional_propagator(const HyperfineCoupling& coupling, double t,
                                        ElectronBranch branch);

// Electron coherence L(t) * Tr[rho U_msm1(t)^dagger]; |result| <= 1 for a
// valid density matrix and envelope.
std::complex<double> coherence_trace(const NuclearDensityMatrix& rho_n,
                                     const HyperfineCoupling& coupling,
                                     const DephasingEnvelope& env, double t);

// Time series of readout values for one preparation angle.
struct CoherenceTrace {
  Eigen::ArrayXd times;      // us, strictly increasing
  Eigen::ArrayXd x, y;       // quadrature channels (may be empty)
  Eigen::ArrayXd magnitude;  // |x + iy| (or directly recorded)
  double norm_scale = 1.0;   // opaque affine map from raw counts
  double norm_offset = 0.0;
  std::optional<double> phi;
  std::optional<std::uint64_t> seed;

  Eigen::Index size() const { return times.size(); }
  void validate() const;  // throws ValidationError
};

enum class NoiseChannel {
  Quadrature,  // noise on x/y, magnitude = |x + iy|
  Magnitude,   // noise drawn directly on the magnitude channel
};

// Synthetic Ramsey record at the model parameters. Quadrature mode perturbs
// the cos/sin quadratures of the complex coherence with independent
// N(0, sigma^2) noise per channel per time; the recorded magnitude is
// |x + iy| plus the readout bias d. Deterministic given the seed.
CoherenceTrace simulate_ramsey(const FidModelParams& params,
                               const Eigen::Ref<const Eigen::ArrayXd>& times,
                               std::uint64_t seed,
                               NoiseChannel channel = NoiseChannel::Quadrature);

// Angle-response variant: coherence scaled by the readout contrast C(phi),
// populations taken from the population model at phi, unit envelope.
CoherenceTrace simulate_ramsey(const NmModelParams& params, double phi,
                               const Eigen::Ref<const Eigen::ArrayXd>& times,
                               std::uint64_t seed,
                               NoiseChannel channel = NoiseChannel::Quadrature);

}  // namespace nvnm

#endif  // NVNM_QUANTUM_ORACLE_HPP
