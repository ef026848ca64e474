#ifndef NVNM_NONMARKOV_HPP
#define NVNM_NONMARKOV_HPP

#include <Eigen/Dense>
#include <variant>
#include <vector>

#include "nvnm/quantum_oracle.hpp"
#include "nvnm/spin_model.hpp"

// Non-Markovianity quantifiers over coherence trajectories: the exact
// summed-revival measure over intervals of increase, and the contrast-scaled
// telescoped measure that is robust to point-wise fluctuations on finite
// records. The trace-distance maximization over initial state pairs is not
// recomputed: for pure dephasing the antipodal equatorial pair is optimal and
// the coherence length r(t) already is that trace distance.

namespace nvnm {

struct SampledTrajectory {
  Eigen::ArrayXd times;  // us, ascending
  Eigen::ArrayXd r;      // values in [0, 1 + tol]
};

// Model trajectory evaluable at any time up to the horizon.
struct AnalyticTrajectory {
  double p = 1.0;
  double phi = 0.0;
  HyperfineCoupling coupling;
  DephasingEnvelope envelope;
  double horizon = 1.0;  // us

  double eval(double t) const {
    return bloch_length(nitrogen_populations(p, phi), coupling, envelope, t);
  }
};

using Trajectory = std::variant<SampledTrajectory, AnalyticTrajectory>;

struct MonotoneInterval {
  double t_start = 0.0;  // tau_m
  double t_end = 0.0;    // tau'_m
  double gain = 0.0;     // r(tau'_m) - r(tau_m)
};

struct NmReport {
  enum class Kind { Exact, Modified };
  double value = 0.0;
  std::vector<MonotoneInterval> intervals;
  double grid_step = 0.0;  // us; 0 for sampled/closed-form inputs
  Kind kind = Kind::Exact;
};

// Maximal intervals on which r increases by more than eps between consecutive
// local extrema. Analytic trajectories are bracketed on a dense grid (step
// grid_step, default period/4096) and the extrema refined by bisection on the
// finite-difference slope sign to 1e-9 us.
std::vector<MonotoneInterval> detect_monotone_intervals(const Trajectory& traj, double eps,
                                                        double grid_step = 0.0);

// Sum of coherence gains over all detected intervals of increase; zero iff
// none is found. eps defaults: 0 for analytic trajectories; for noisy sampled
// data pass ~2x the per-point noise std.
NmReport measure_exact(const Trajectory& traj, double eps = 0.0, double grid_step = 0.0);

// Contrast-scaled telescoped measure C(phi) * (r(T, phi)|p(phi) - 1); always <= 0.
NmReport measure_modified(const NmModelParams& params, double phi, double horizon);

// Telescoped measure from a recorded trace normalized to model units:
// contrast_at_phi * (last - first magnitude sample).
NmReport measure_modified_from_data(const CoherenceTrace& trace, double contrast_at_phi);

}  // namespace nvnm

#endif  // NVNM_NONMARKOV_HPP
