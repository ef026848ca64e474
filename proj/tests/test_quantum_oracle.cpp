#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "nvnm/quantum_oracle.hpp"
#include "nvnm/rng.hpp"
#include "oracles.hpp"

using namespace nvnm;
using std::complex;

TEST_CASE("conditional propagators") {
  const HyperfineCoupling coupling{kTwoPi};

  CHECK(conditional_propagator(coupling, 0.0, ElectronBranch::ms0)
            .isApprox(Eigen::Matrix3cd::Identity(), 1e-15));
  CHECK(conditional_propagator(coupling, 0.0, ElectronBranch::msm1)
            .isApprox(Eigen::Matrix3cd::Identity(), 1e-15));
  CHECK(conditional_propagator(coupling, 1.37, ElectronBranch::ms0)
            .isApprox(Eigen::Matrix3cd::Identity(), 1e-15));

  // A = 2pi rad/us at t = 0.25 us puts +/- pi/2 on the outer phases.
  const Eigen::Matrix3cd u = conditional_propagator(coupling, 0.25, ElectronBranch::msm1);
  CHECK(std::abs(u(0, 0) - complex<double>(0.0, 1.0)) < 1e-12);
  CHECK(std::abs(u(1, 1) - complex<double>(1.0, 0.0)) < 1e-15);
  CHECK(std::abs(u(2, 2) - complex<double>(0.0, -1.0)) < 1e-12);

  CHECK_THROWS_AS(conditional_propagator(coupling, -0.5, ElectronBranch::ms0),
                  std::domain_error);
}

TEST_CASE("msm1 propagator equals the numerically exponentiated generator") {
  Philox rng(2001, 0);
  for (int i = 0; i < 20; ++i) {
    const HyperfineCoupling coupling{kTwoPi * rng.uniform(0.5, 5.0)};
    const double t = rng.uniform(0.0, 2.0);
    // H_N = -A I_z on the msm1 branch; U = exp(-i t H_N).
    Eigen::Matrix3cd generator = Eigen::Matrix3cd::Zero();
    generator(0, 0) = complex<double>(0.0, coupling.a_par * t);
    generator(2, 2) = complex<double>(0.0, -coupling.a_par * t);
    const Eigen::Matrix3cd expected = oracles::expm(generator);
    const Eigen::Matrix3cd actual = conditional_propagator(coupling, t, ElectronBranch::msm1);
    CHECK((actual - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("propagators are unitary") {
  Philox rng(2002, 0);
  for (int i = 0; i < 100; ++i) {
    const HyperfineCoupling coupling{kTwoPi * rng.uniform(0.5, 5.0)};
    const double t = rng.uniform(0.0, 3.0);
    for (const auto branch : {ElectronBranch::ms0, ElectronBranch::msm1}) {
      const Eigen::Matrix3cd u = conditional_propagator(coupling, t, branch);
      CHECK((u.adjoint() * u - Eigen::Matrix3cd::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("density matrix validation") {
  auto rho = NuclearDensityMatrix::diagonal(nitrogen_populations(0.8, 1.0));
  CHECK_NOTHROW(rho.validate());

  auto bad_trace = rho;
  bad_trace.rho(0, 0) += 0.1;
  CHECK_THROWS_AS(bad_trace.validate(), std::domain_error);

  auto not_hermitian = rho;
  not_hermitian.rho(0, 1) = complex<double>(0.1, 0.0);
  CHECK_THROWS_AS(not_hermitian.validate(), std::domain_error);

  auto negative = rho;
  negative.rho(0, 0) = -0.05;
  negative.rho(1, 1) = rho.rho(1, 1) + 0.05 + rho.rho(0, 0).real();
  CHECK_THROWS_AS(negative.validate(), std::domain_error);
}

TEST_CASE("coherence_trace basics") {
  const HyperfineCoupling coupling{angular_mhz(2.143)};
  Eigen::Array<double, 6, 1> coeffs = Eigen::Array<double, 6, 1>::Zero();
  coeffs[0] = 0.05;
  const auto env = DephasingEnvelope::polynomial(coeffs);

  const auto rho = NuclearDensityMatrix::diagonal(nitrogen_populations(0.9, 0.7));
  const auto at_zero = coherence_trace(rho, coupling, env, 0.0);
  CHECK(at_zero.real() == doctest::Approx(std::exp(-0.05)).epsilon(1e-14));
  CHECK(std::abs(at_zero.imag()) < 1e-15);

  Philox rng(2003, 0);
  for (int i = 0; i < 50; ++i) {
    const auto state = nitrogen_populations(rng.uniform(), rng.uniform(0.0, kTwoPi));
    const double t = rng.uniform(0.0, 3.0);
    CHECK(std::abs(coherence_trace(NuclearDensityMatrix::diagonal(state), coupling,
                                   DephasingEnvelope::unit(), t)) <= 1.0 + 1e-12);
  }
}

TEST_CASE("nuclear coherences do not enter the trace") {
  const HyperfineCoupling coupling{angular_mhz(2.143)};
  const NitrogenState state = nitrogen_populations(0.9, 2.0);
  const auto diag = NuclearDensityMatrix::diagonal(state);

  auto with_coherences = diag;
  const double eps01 = 0.5 * std::sqrt(state.p1 * state.p0);
  const double eps12 = 0.4 * std::sqrt(state.p0 * state.pm1);
  with_coherences.rho(0, 1) = complex<double>(eps01, 0.2 * eps01);
  with_coherences.rho(1, 0) = std::conj(with_coherences.rho(0, 1));
  with_coherences.rho(1, 2) = complex<double>(-eps12, 0.1 * eps12);
  with_coherences.rho(2, 1) = std::conj(with_coherences.rho(1, 2));
  CHECK_NOTHROW(with_coherences.validate());

  for (double t : {0.0, 0.11, 0.47, 1.226}) {
    const double a = std::abs(coherence_trace(diag, coupling, DephasingEnvelope::unit(), t));
    const double b =
        std::abs(coherence_trace(with_coherences, coupling, DephasingEnvelope::unit(), t));
    CHECK(std::abs(a - b) < 1e-12);
  }
}

TEST_CASE("oracle equivalence over random diagonal states") {
  Philox rng(2004, 0);
  Eigen::Array<double, 6, 1> coeffs = Eigen::Array<double, 6, 1>::Zero();
  for (int i = 0; i < 1000; ++i) {
    coeffs[2] = rng.uniform(0.0, 0.01);
    const auto env = DephasingEnvelope::polynomial(coeffs);
    const auto state = nitrogen_populations(rng.uniform(), rng.uniform(0.0, kTwoPi));
    const HyperfineCoupling coupling{kTwoPi * rng.uniform(0.5, 5.0)};
    const double t = rng.uniform(0.0, 3.0);
    const double traced =
        std::abs(coherence_trace(NuclearDensityMatrix::diagonal(state), coupling, env, t));
    const double analytic = bloch_length(state, coupling, env, t);
    CHECK(std::abs(traced - analytic) < 1e-10);
  }
}

TEST_CASE("simulate_ramsey is exact at zero noise") {
  FidModelParams params;
  params.envelope = DephasingEnvelope::gaussian(22.262);
  params.p = 0.972;
  params.phi = 0.191;
  params.coupling.a_par = angular_mhz(2.143);
  params.sigma = 0.0;

  const Eigen::ArrayXd times = Eigen::ArrayXd::LinSpaced(60, 0.0, 30.0);
  const CoherenceTrace trace = simulate_ramsey(params, times, 9, NoiseChannel::Quadrature);
  const NitrogenState state = nitrogen_populations(params.p, params.phi);
  for (Eigen::Index i = 0; i < trace.size(); ++i)
    CHECK(trace.magnitude[i] ==
          doctest::Approx(bloch_length(state, params.coupling, params.envelope, times[i]))
              .epsilon(1e-12));
  CHECK(trace.phi.has_value());
  CHECK(*trace.seed == 9);
}

TEST_CASE("simulate_ramsey determinism") {
  FidModelParams params;
  params.envelope = DephasingEnvelope::gaussian(22.262);
  params.p = 0.9;
  params.phi = 0.4;
  params.sigma = 0.018;
  const Eigen::ArrayXd times = Eigen::ArrayXd::LinSpaced(40, 0.0, 10.0);

  const CoherenceTrace a = simulate_ramsey(params, times, 1234);
  const CoherenceTrace b = simulate_ramsey(params, times, 1234);
  const CoherenceTrace c = simulate_ramsey(params, times, 1235);
  CHECK((a.x == b.x).all());
  CHECK((a.y == b.y).all());
  CHECK((a.magnitude == b.magnitude).all());
  CHECK_FALSE((a.x == c.x).all());
}

TEST_CASE("simulate_ramsey noise amplitude is calibrated") {
  FidModelParams params;
  params.envelope = DephasingEnvelope::unit();
  params.p = 1.0;
  params.phi = 0.0;
  params.sigma = 0.018;
  Eigen::ArrayXd times(1);
  times << 0.35;

  const int reps = 10000;
  Eigen::ArrayXd xs(reps);
  for (int i = 0; i < reps; ++i)
    xs[i] = simulate_ramsey(params, times, static_cast<std::uint64_t>(i)).x[0];
  const double mean = xs.mean();
  const double sd = std::sqrt((xs - mean).square().sum() / (reps - 1));
  CHECK(sd == doctest::Approx(0.018).epsilon(0.03));
}

TEST_CASE("angle-response simulation scales with the contrast") {
  NmModelParams params;
  params.contrast = {0.046, 1.030, 0.261};
  params.population = {0.034, 1.738, 0.102, -0.528};
  params.coupling.a_par = angular_mhz(2.169);
  params.sigma_coh = 0.0;

  const Eigen::ArrayXd times = Eigen::ArrayXd::LinSpaced(41, 0.0, 1.226);
  const double phi = 2.0 * std::numbers::pi / 3.0;
  const CoherenceTrace trace = simulate_ramsey(params, phi, times, 5);
  const double contrast = contrast_eval(params.contrast, phi);
  const double p = population_eval(params.population, phi);
  CHECK(trace.norm_scale == doctest::Approx(contrast).epsilon(1e-14));
  for (Eigen::Index i = 0; i < trace.size(); ++i)
    CHECK(trace.magnitude[i] ==
          doctest::Approx(contrast * bloch_length_phi(p, phi, params.coupling, times[i]))
              .epsilon(1e-12));
}

TEST_CASE("magnitude-channel mode draws gaussian noise on r directly") {
  FidModelParams params;
  params.envelope = DephasingEnvelope::unit();
  params.p = 1.0;
  params.phi = 0.0;
  params.sigma = 0.02;
  Eigen::ArrayXd times(2);
  times << 0.1, 0.9;

  const CoherenceTrace trace = simulate_ramsey(params, times, 77, NoiseChannel::Magnitude);
  CHECK(trace.x.size() == 0);
  const int reps = 20000;
  double sum = 0.0;
  for (int i = 0; i < reps; ++i)
    sum += simulate_ramsey(params, times, static_cast<std::uint64_t>(i),
                           NoiseChannel::Magnitude)
               .magnitude[0];
  // r = 1 for the fully polarized state; the magnitude draw is unbiased.
  CHECK(sum / reps == doctest::Approx(1.0).epsilon(5e-4));
}
