#ifndef NVNM_SPIN_MODEL_HPP
#define NVNM_SPIN_MODEL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "nvnm/errors.hpp"

// Closed-form model of an electron spin dephasing against its host nitrogen
// nuclear spin. Time is in microseconds throughout; couplings are angular
// frequencies in rad/us (convert MHz values with angular_mhz). All functions
// here are pure and safe to call concurrently.

namespace nvnm {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// 2*pi * f[MHz] -> rad/us.
inline constexpr double angular_mhz(double f_mhz) { return kTwoPi * f_mhz; }

// Longitudinal electron-nitrogen coupling, stored as angular frequency.
struct HyperfineCoupling {
  double a_par = angular_mhz(2.14);  // rad/us
  bool valid() const { return a_par > 0.0; }
};

// Nuclear populations in the {m_I=+1, 0, -1} basis.
template <class Scalar>
struct NitrogenStateT {
  Scalar p1{}, p0{}, pm1{};
  bool valid(Scalar tol = Scalar(1e-12)) const {
    const Scalar lo = -tol, hi = Scalar(1) + tol;
    return p1 >= lo && p1 <= hi && p0 >= lo && p0 <= hi && pm1 >= lo && pm1 <= hi &&
           std::abs(p1 + p0 + pm1 - Scalar(1)) <= tol;
  }
};
using NitrogenState = NitrogenStateT<double>;

// Mixing-angle parametrization of the populations: p is the weight of the
// {m_I=0,+1} subspace, phi the preparation rotation angle.
template <class Scalar>
NitrogenStateT<Scalar> nitrogen_populations_t(Scalar p, Scalar phi) {
  if (!(p >= Scalar(0) && p <= Scalar(1)))
    throw std::domain_error("nitrogen_populations: p must lie in [0, 1]");
  const Scalar c = std::cos(phi / 2), s = std::sin(phi / 2);
  return {p * c * c, p * s * s, Scalar(1) - p};
}
inline NitrogenState nitrogen_populations(double p, double phi) {
  return nitrogen_populations_t<double>(p, phi);
}

// Bath decay factor |L(t)| = exp(-sum_i a_i t^i), degree fixed at 5.
// The Gaussian envelope exp[-(t/T2*)^2] is the special case a2 = 1/T2*^2.
struct DephasingEnvelope {
  enum class Kind { PolynomialExponent, Gaussian };
  Eigen::Array<double, 6, 1> coeffs = Eigen::Array<double, 6, 1>::Zero();  // a_i in us^-i
  Kind kind = Kind::PolynomialExponent;

  static DephasingEnvelope polynomial(const Eigen::Array<double, 6, 1>& a) {
    DephasingEnvelope env;
    env.coeffs = a;
    return env;
  }
  static DephasingEnvelope gaussian(double t2_star_us) {
    if (!(t2_star_us > 0.0)) throw std::domain_error("gaussian envelope: T2* must be > 0");
    DephasingEnvelope env;
    env.coeffs[2] = 1.0 / (t2_star_us * t2_star_us);
    env.kind = Kind::Gaussian;
    return env;
  }
  static DephasingEnvelope unit() { return DephasingEnvelope{}; }

  bool valid() const { return (coeffs >= 0.0).all(); }
  double t2_star() const { return coeffs[2] > 0.0 ? 1.0 / std::sqrt(coeffs[2]) : 0.0; }
};

template <class Scalar>
Scalar envelope_exponent_t(const DephasingEnvelope& env, Scalar t) {
  // Horner on a0 + a1 t + ... + a5 t^5.
  Scalar acc = Scalar(env.coeffs[5]);
  for (int i = 4; i >= 0; --i) acc = acc * t + Scalar(env.coeffs[i]);
  return acc;
}

inline double envelope_eval(const DephasingEnvelope& env, double t) {
  return std::exp(-envelope_exponent_t<double>(env, t));
}

inline Eigen::ArrayXd envelope_eval(const DephasingEnvelope& env,
                                    const Eigen::Ref<const Eigen::ArrayXd>& t) {
  Eigen::ArrayXd acc = Eigen::ArrayXd::Constant(t.size(), env.coeffs[5]);
  for (int i = 4; i >= 0; --i) acc = acc * t + env.coeffs[i];
  return (-acc).exp();
}

// Length of the electron Bloch vector for given nuclear populations:
//   r(t) = sqrt(p0^2 + p1^2 + pm1^2 + 2 p0 (p1+pm1) cos(At) + 2 p1 pm1 cos(2At)) * |L(t)|
template <class Scalar>
Scalar bloch_length_t(const NitrogenStateT<Scalar>& n, const HyperfineCoupling& coupling,
                      const DephasingEnvelope& env, Scalar t) {
  const Scalar a = Scalar(coupling.a_par);
  const Scalar c1 = std::cos(a * t), c2 = std::cos(2 * a * t);
  Scalar bracket = n.p0 * n.p0 + n.p1 * n.p1 + n.pm1 * n.pm1 +
                   2 * n.p0 * (n.p1 + n.pm1) * c1 + 2 * n.p1 * n.pm1 * c2;
  if (bracket < Scalar(0)) bracket = Scalar(0);  // guard rounding at exact zeros
  return std::sqrt(bracket) * std::exp(-envelope_exponent_t<Scalar>(env, t));
}

inline double bloch_length(const NitrogenState& n, const HyperfineCoupling& coupling,
                           const DephasingEnvelope& env, double t) {
  return bloch_length_t<double>(n, coupling, env, t);
}

inline Eigen::ArrayXd bloch_length(const NitrogenState& n, const HyperfineCoupling& coupling,
                                   const DephasingEnvelope& env,
                                   const Eigen::Ref<const Eigen::ArrayXd>& t) {
  const Eigen::ArrayXd at = coupling.a_par * t;
  const Eigen::ArrayXd bracket = (n.p0 * n.p0 + n.p1 * n.p1 + n.pm1 * n.pm1) +
                                 2.0 * n.p0 * (n.p1 + n.pm1) * at.cos() +
                                 2.0 * n.p1 * n.pm1 * (2.0 * at).cos();
  return bracket.max(0.0).sqrt() * envelope_eval(env, t);
}

// r(t, phi) in the mixing-angle parametrization with unit envelope, written
// out as the expanded trigonometric form. Identical to composing
// bloch_length with nitrogen_populations.
template <class Scalar>
Scalar bloch_length_phi_t(Scalar p, Scalar phi, const HyperfineCoupling& coupling, Scalar t) {
  if (!(p >= Scalar(0) && p <= Scalar(1)))
    throw std::domain_error("bloch_length_phi: p must lie in [0, 1]");
  const Scalar at = Scalar(coupling.a_par) * t;
  const Scalar half = phi / 2;
  const Scalar c2h = std::cos(half) * std::cos(half);
  const Scalar s2h = std::sin(half) * std::sin(half);
  Scalar bracket = 2 * (Scalar(1) - p) * p * std::cos(2 * at) * c2h +
                   (Scalar(4) - p * (Scalar(8) - Scalar(7) * p) + p * p * std::cos(2 * phi)) / 4 +
                   p * std::cos(at) * (Scalar(2) - p + p * std::cos(phi)) * s2h;
  if (bracket < Scalar(0)) bracket = Scalar(0);
  return std::sqrt(bracket);
}
inline double bloch_length_phi(double p, double phi, const HyperfineCoupling& coupling, double t) {
  return bloch_length_phi_t<double>(p, phi, coupling, t);
}

inline Eigen::ArrayXd bloch_length_phi(double p, double phi, const HyperfineCoupling& coupling,
                                       const Eigen::Ref<const Eigen::ArrayXd>& t) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::domain_error("bloch_length_phi: p must lie in [0, 1]");
  const double c2h = std::cos(phi / 2) * std::cos(phi / 2);
  const double s2h = std::sin(phi / 2) * std::sin(phi / 2);
  const Eigen::ArrayXd at = coupling.a_par * t;
  const Eigen::ArrayXd bracket =
      2.0 * (1.0 - p) * p * (2.0 * at).cos() * c2h +
      (4.0 - p * (8.0 - 7.0 * p) + p * p * std::cos(2.0 * phi)) / 4.0 +
      p * at.cos() * (2.0 - p + p * std::cos(phi)) * s2h;
  return bracket.max(0.0).sqrt();
}

// Angle response of the measured readout contrast, C(phi) = a cos(f phi) + b.
struct ContrastModel {
  double amplitude = 0.0;
  double frequency = 1.0;  // per radian of phi
  double offset = 1.0;
  bool valid() const { return offset - std::abs(amplitude) >= 0.0; }
};
inline double contrast_eval(const ContrastModel& m, double phi) {
  return m.amplitude * std::cos(m.frequency * phi) + m.offset;
}

// Angle response of the prepared subspace population,
// p(phi) = 1 - [offset + amplitude sin(frequency phi + phase)].
struct PopulationModel {
  double amplitude = 0.0;
  double frequency = 1.0;
  double offset = 0.0;
  double phase = 0.0;
  bool valid() const {
    // |amplitude| <= offset <= 1-|amplitude| keeps p(phi) in [0, 1] for every phi.
    return std::abs(amplitude) <= offset && offset + std::abs(amplitude) <= 1.0;
  }
};
inline double population_eval(const PopulationModel& m, double phi) {
  return 1.0 - (m.offset + m.amplitude * std::sin(m.frequency * phi + m.phase));
}

// Times t_k = k*2pi/A at which electron and nitrogen fully decorrelate and
// the coherence returns to the envelope value; all k >= 1 with t_k <= T.
inline std::vector<double> revival_times(const HyperfineCoupling& coupling, double horizon) {
  if (!(horizon > 0.0)) throw std::domain_error("revival_times: horizon must be > 0");
  const double period = kTwoPi / coupling.a_par;
  std::vector<double> out;
  for (int k = 1; k * period <= horizon; ++k) out.push_back(k * period);
  return out;
}

// Parameter bundle of the single-trace decay model: populations, envelope,
// coupling, additive readout bias d and per-point noise std sigma.
struct FidModelParams {
  DephasingEnvelope envelope;
  double p = 1.0;
  double phi = 0.0;
  HyperfineCoupling coupling;
  double bias_d = 0.0;
  double sigma = 0.018;
  bool valid() const { return sigma > 0.0 && p >= 0.0 && p <= 1.0; }
};

// Parameter bundle of the joint angle-response model.
struct NmModelParams {
  ContrastModel contrast;
  PopulationModel population;
  HyperfineCoupling coupling;
  double sigma_coh = 0.018;
  double sigma_nm = 0.06;
  bool valid() const { return sigma_coh > 0.0 && sigma_nm > 0.0; }
};

}  // namespace nvnm

#endif  // NVNM_SPIN_MODEL_HPP
