#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nvnm/nonmarkov.hpp"
#include "nvnm/rng.hpp"
#include "oracles.hpp"

using namespace nvnm;

namespace {

NmModelParams table_params() {
  NmModelParams params;
  params.contrast = {0.046, 1.030, 0.261};
  params.population = {0.034, 1.738, 0.102, -0.528};
  params.coupling.a_par = angular_mhz(2.169);
  return params;
}

}  // namespace

TEST_CASE("monotone gaussian decay has no increase intervals") {
  AnalyticTrajectory traj;
  traj.p = 1.0;
  traj.phi = std::numbers::pi;  // all population in m_I = 0
  traj.coupling.a_par = angular_mhz(2.143);
  traj.envelope = DephasingEnvelope::gaussian(22.262);
  traj.horizon = 66.0;
  CHECK(detect_monotone_intervals(traj, 0.0).empty());
}

TEST_CASE("half-angle cosine has one revival per period") {
  const double a = angular_mhz(2.143);
  AnalyticTrajectory traj;
  traj.p = 1.0;
  traj.phi = std::numbers::pi / 2;  // r = |cos(At/2)|
  traj.coupling.a_par = a;
  traj.horizon = kTwoPi / a;

  const auto intervals = detect_monotone_intervals(traj, 0.0);
  REQUIRE(intervals.size() == 1);
  CHECK(intervals[0].t_start == doctest::Approx(std::numbers::pi / a).epsilon(1e-6));
  CHECK(intervals[0].t_end == doctest::Approx(kTwoPi / a).epsilon(1e-6));
  CHECK(intervals[0].gain == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("interval count matches a dense brute-force scan") {
  AnalyticTrajectory traj;
  traj.p = 0.915;
  traj.phi = std::numbers::pi;
  traj.coupling.a_par = angular_mhz(2.169);
  traj.horizon = 1.226;

  const auto intervals = detect_monotone_intervals(traj, 0.0);
  const int oracle_count = oracles::increase_run_count(
      [&](double t) { return traj.eval(t); }, traj.horizon, 1000000);
  CHECK(static_cast<int>(intervals.size()) == oracle_count);
}

TEST_CASE("sampled trajectories need two points and honor eps hysteresis") {
  SampledTrajectory tiny;
  tiny.times = Eigen::ArrayXd::Constant(1, 0.0);
  tiny.r = Eigen::ArrayXd::Constant(1, 1.0);
  CHECK_THROWS_AS(detect_monotone_intervals(tiny, 0.0), ValidationError);

  SampledTrajectory wiggly;
  wiggly.times = Eigen::ArrayXd::LinSpaced(7, 0.0, 6.0);
  wiggly.r.resize(7);
  wiggly.r << 1.0, 0.6, 0.605, 0.60, 0.2, 0.8, 0.75;
  // eps = 0 sees both micro-wiggle and main revival; eps = 0.05 keeps only
  // the 0.2 -> 0.8 rise.
  CHECK(detect_monotone_intervals(wiggly, 0.0).size() == 2);
  const auto filtered = detect_monotone_intervals(wiggly, 0.05);
  REQUIRE(filtered.size() == 1);
  CHECK(filtered[0].t_start == doctest::Approx(4.0));
  CHECK(filtered[0].t_end == doctest::Approx(5.0));
  CHECK(filtered[0].gain == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("measure_exact is zero for the markovian baseline") {
  AnalyticTrajectory traj;
  traj.p = 1.0;
  traj.phi = std::numbers::pi;
  traj.coupling.a_par = angular_mhz(2.143);
  traj.envelope = DephasingEnvelope::gaussian(22.262);
  traj.horizon = 66.0;
  const NmReport report = measure_exact(traj, 0.0);
  CHECK(report.value == 0.0);
  CHECK(report.intervals.empty());
}

TEST_CASE("measure_exact counts one unit per full period of |cos|") {
  const double a = kTwoPi * 1.7;
  AnalyticTrajectory traj;
  traj.p = 1.0;
  traj.phi = std::numbers::pi / 2;
  traj.coupling.a_par = a;
  const int k = 3;
  traj.horizon = k * kTwoPi / a;
  const NmReport report = measure_exact(traj, 0.0);
  CHECK(report.value == doctest::Approx(static_cast<double>(k)).epsilon(1e-7));
  CHECK(report.intervals.size() == static_cast<std::size_t>(k));
}

TEST_CASE("measure_exact agrees with the positive-increment grid oracle") {
  Philox rng(3001, 0);
  for (int i = 0; i < 15; ++i) {
    AnalyticTrajectory traj;
    traj.p = rng.uniform();
    traj.phi = rng.uniform(0.0, kTwoPi);
    traj.coupling.a_par = kTwoPi * rng.uniform(0.8, 3.0);
    traj.horizon = rng.uniform(0.8, 2.0);
    const double expected = oracles::positive_increment_sum(
        [&](double t) { return traj.eval(t); }, traj.horizon, 1000000);
    CHECK(measure_exact(traj, 0.0).value == doctest::Approx(expected).scale(1).epsilon(1e-6));
  }
}

TEST_CASE("grid convergence of measure_exact") {
  AnalyticTrajectory traj;
  traj.p = 0.87;
  traj.phi = 1.9;
  traj.coupling.a_par = angular_mhz(2.169);
  traj.horizon = 1.226;
  const double period = kTwoPi / traj.coupling.a_par;
  const double coarse = measure_exact(traj, 0.0, period / 4096.0).value;
  const double fine = measure_exact(traj, 0.0, period / 8192.0).value;
  CHECK(std::abs(coarse - fine) < 1e-6);
}

TEST_CASE("measure_exact is nonnegative and zero iff monotone on the grid") {
  SampledTrajectory monotone;
  monotone.times = Eigen::ArrayXd::LinSpaced(50, 0.0, 1.0);
  monotone.r = 1.0 - 0.7 * monotone.times;
  CHECK(measure_exact(monotone, 0.0).value == 0.0);

  SampledTrajectory bumped = monotone;
  bumped.r[30] = bumped.r[29] + 1e-9;  // any grid increase makes it non-markovian
  const double value = measure_exact(bumped, 0.0).value;
  CHECK(value > 0.0);

  Philox rng(3002, 0);
  for (int i = 0; i < 20; ++i) {
    SampledTrajectory noisy;
    noisy.times = Eigen::ArrayXd::LinSpaced(100, 0.0, 1.0);
    noisy.r.resize(100);
    for (Eigen::Index j = 0; j < 100; ++j) noisy.r[j] = 0.5 + 0.3 * rng.normal();
    CHECK(measure_exact(noisy, 0.0).value >= 0.0);
  }
}

TEST_CASE("measure_modified closed form") {
  NmModelParams ideal = table_params();
  ideal.population = {0.0, 1.0, 0.0, 0.0};  // p(phi) = 1 everywhere
  CHECK(measure_modified(ideal, 0.0, 1.226).value == doctest::Approx(0.0).scale(1).epsilon(1e-12));

  const NmModelParams params = table_params();
  Philox rng(3003, 0);
  for (int i = 0; i < 200; ++i) {
    const double phi = rng.uniform(0.0, kTwoPi);
    CHECK(measure_modified(params, phi, 1.226).value <= 1e-15);
  }

  // Composition oracle in long double at the table values.
  const auto table = oracles::reference_table();
  const double expected = static_cast<double>(
      table.nprime(3.14159265358979323846264338328L, 1.226L));
  CHECK(measure_modified(params, std::numbers::pi, 1.226).value ==
        doctest::Approx(expected).epsilon(1e-12));
  CHECK(measure_modified(params, std::numbers::pi, 1.226).value ==
        doctest::Approx(-0.022405144962613).epsilon(1e-10));  // frozen oracle value

  CHECK_THROWS_AS(measure_modified(params, 0.0, 0.0), std::domain_error);
}

TEST_CASE("measure_modified_from_data telescopes") {
  CoherenceTrace constant;
  constant.times = Eigen::ArrayXd::LinSpaced(20, 0.0, 1.0);
  constant.magnitude = Eigen::ArrayXd::Constant(20, 0.31);
  CHECK(measure_modified_from_data(constant, 0.26).value == 0.0);

  CoherenceTrace empty;
  CHECK_THROWS_AS(measure_modified_from_data(empty, 1.0), ValidationError);

  // Noiseless synthetic record reproduces the closed form to 1e-12.
  NmModelParams params = table_params();
  params.sigma_coh = 0.0;
  const Eigen::ArrayXd times = Eigen::ArrayXd::LinSpaced(41, 0.0, 1.226);
  for (const double phi : {0.7, 2.1, 4.4}) {
    const CoherenceTrace trace = simulate_ramsey(params, phi, times, 0);
    // Trace is in contrast units; normalize to model units and rescale.
    CoherenceTrace normalized = trace;
    normalized.magnitude = trace.magnitude / trace.norm_scale;
    const double from_data =
        measure_modified_from_data(normalized, contrast_eval(params.contrast, phi)).value;
    const double closed = measure_modified(params, phi, 1.226).value;
    CHECK(std::abs(from_data - closed) < 1e-12);
    // Raw-units telescoping gives the same number with contrast 1.
    CHECK(std::abs(measure_modified_from_data(trace, 1.0).value - closed) < 1e-12);
  }
}

TEST_CASE("measure_modified_from_data is unbiased under noise") {
  NmModelParams params = table_params();
  params.contrast = {0.0, 1.0, 1.0};  // model units
  params.sigma_coh = 0.018;
  const double phi = std::numbers::pi / 2;
  const Eigen::ArrayXd times = Eigen::ArrayXd::LinSpaced(41, 0.0, 1.226);

  NmModelParams noiseless = params;
  noiseless.sigma_coh = 0.0;
  const double truth =
      measure_modified_from_data(simulate_ramsey(noiseless, phi, times, 0), 1.0).value;

  const int seeds = 1000;
  Eigen::ArrayXd estimates(seeds);
  for (int s = 0; s < seeds; ++s)
    estimates[s] = measure_modified_from_data(
                       simulate_ramsey(params, phi, times, static_cast<std::uint64_t>(s)), 1.0)
                       .value;
  const double mean = estimates.mean();
  const double sd = std::sqrt((estimates - mean).square().sum() / (seeds - 1));
  const double stderr_mean = sd / std::sqrt(static_cast<double>(seeds));
  CHECK(std::abs(mean - truth) < 2.0 * stderr_mean);
}

TEST_CASE("modified measure is smooth across the measured angles") {
  const NmModelParams params = table_params();
  const int n = 14;
  Eigen::ArrayXd values(n);
  for (int k = 0; k < n; ++k)
    values[k] = measure_modified(params, kTwoPi * k / (n - 1.0), 1.226).value;
  for (int k = 1; k + 1 < n; ++k) {
    const double second_diff = values[k + 1] - 2.0 * values[k] + values[k - 1];
    CHECK(std::abs(second_diff) < 0.15);
  }
}
