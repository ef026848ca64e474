#include "nvnm/nonmarkov.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "nvnm/errors.hpp"

namespace nvnm {

namespace {

constexpr double kRefineTol = 1e-9;  // us; sub-grid extremum localization

// Shrink [lo, hi] around an interior extremum by comparing two interior
// probes, i.e. bisecting on the sign of the sampled slope across them.
double refine_extremum(const std::function<double(double)>& f, double lo, double hi,
                       bool maximum) {
  while (hi - lo > kRefineTol) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    const bool keep_right = maximum ? (f(m1) < f(m2)) : (f(m1) > f(m2));
    if (keep_right)
      lo = m1;
    else
      hi = m2;
  }
  return 0.5 * (lo + hi);
}

// Threshold scan over an ordered (t, r) sequence: find maximal stretches in
// which r rises by more than eps between a running minimum and the following
// running maximum. eps acts as hysteresis so that fluctuations below it never
// open or close an interval.
std::vector<MonotoneInterval> scan_intervals(const Eigen::ArrayXd& t, const Eigen::ArrayXd& r,
                                             double eps) {
  std::vector<MonotoneInterval> out;
  Eigen::Index min_idx = 0, max_idx = 0;
  double min_val = r[0], max_val = r[0];
  bool rising = false;
  for (Eigen::Index i = 1; i < r.size(); ++i) {
    if (!rising) {
      if (r[i] < min_val) {
        min_val = r[i];
        min_idx = i;
      } else if (r[i] - min_val > eps) {
        rising = true;
        max_val = r[i];
        max_idx = i;
      }
    } else {
      if (r[i] > max_val) {
        max_val = r[i];
        max_idx = i;
      } else if (max_val - r[i] > eps) {
        out.push_back({t[min_idx], t[max_idx], max_val - min_val});
        rising = false;
        min_val = r[i];
        min_idx = i;
      }
    }
  }
  if (rising) out.push_back({t[min_idx], t[max_idx], max_val - min_val});
  return out;
}

std::vector<MonotoneInterval> detect_sampled(const SampledTrajectory& traj, double eps) {
  if (traj.times.size() < 2)
    throw ValidationError("detect_monotone_intervals: need at least 2 samples");
  return scan_intervals(traj.times, traj.r, eps);
}

std::vector<MonotoneInterval> detect_analytic(const AnalyticTrajectory& traj, double eps,
                                              double& grid_step) {
  if (!(traj.horizon > 0.0))
    throw ValidationError("detect_monotone_intervals: analytic horizon must be > 0");
  if (!traj.coupling.valid())
    throw ValidationError("detect_monotone_intervals: coupling must be > 0");
  if (grid_step <= 0.0) {
    const double period = kTwoPi / traj.coupling.a_par;
    grid_step = std::min(period / 4096.0, traj.horizon / 1024.0);
  }
  const auto n = static_cast<Eigen::Index>(std::ceil(traj.horizon / grid_step)) + 1;
  const auto f = [&traj](double t) { return traj.eval(t); };

  Eigen::ArrayXd grid_t(n), grid_r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    grid_t[i] = std::min(traj.horizon, static_cast<double>(i) * grid_step);
    grid_r[i] = f(grid_t[i]);
  }

  // Bracket interior extrema where the discrete slope flips, then refine to
  // sub-grid precision; endpoints stay as-is.
  std::vector<double> ts{grid_t[0]};
  std::vector<double> rs{grid_r[0]};
  int last_sign = 0;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double diff = grid_r[i + 1] - grid_r[i];
    const int sign = diff > 0.0 ? 1 : (diff < 0.0 ? -1 : 0);
    if (sign == 0) continue;
    if (last_sign != 0 && sign != last_sign) {
      const bool maximum = last_sign > 0;
      const double lo = grid_t[std::max<Eigen::Index>(i - 1, 0)];
      const double hi = grid_t[i + 1];
      const double te = refine_extremum(f, lo, hi, maximum);
      ts.push_back(te);
      rs.push_back(f(te));
    }
    last_sign = sign;
  }
  ts.push_back(grid_t[n - 1]);
  rs.push_back(grid_r[n - 1]);

  const Eigen::Map<const Eigen::ArrayXd> tmap(ts.data(), static_cast<Eigen::Index>(ts.size()));
  const Eigen::Map<const Eigen::ArrayXd> rmap(rs.data(), static_cast<Eigen::Index>(rs.size()));
  return scan_intervals(tmap, rmap, eps);
}

}  // namespace

std::vector<MonotoneInterval> detect_monotone_intervals(const Trajectory& traj, double eps,
                                                        double grid_step) {
  if (eps < 0.0) throw std::domain_error("detect_monotone_intervals: eps must be >= 0");
  if (const auto* sampled = std::get_if<SampledTrajectory>(&traj))
    return detect_sampled(*sampled, eps);
  double step = grid_step;
  return detect_analytic(std::get<AnalyticTrajectory>(traj), eps, step);
}

NmReport measure_exact(const Trajectory& traj, double eps, double grid_step) {
  if (eps < 0.0) throw std::domain_error("measure_exact: eps must be >= 0");
  NmReport report;
  report.kind = NmReport::Kind::Exact;
  double step = grid_step;
  if (const auto* sampled = std::get_if<SampledTrajectory>(&traj)) {
    report.intervals = detect_sampled(*sampled, eps);
    step = 0.0;
  } else {
    report.intervals = detect_analytic(std::get<AnalyticTrajectory>(traj), eps, step);
  }
  report.grid_step = step;
  report.value = 0.0;
  for (const auto& interval : report.intervals) report.value += interval.gain;
  return report;
}

NmReport measure_modified(const NmModelParams& params, double phi, double horizon) {
  if (!(horizon > 0.0)) throw std::domain_error("measure_modified: horizon must be > 0");
  const double p = population_eval(params.population, phi);
  const double r_end = bloch_length_phi(p, phi, params.coupling, horizon);
  NmReport report;
  report.kind = NmReport::Kind::Modified;
  report.value = contrast_eval(params.contrast, phi) * (r_end - 1.0);
  return report;
}

NmReport measure_modified_from_data(const CoherenceTrace& trace, double contrast_at_phi) {
  if (trace.magnitude.size() == 0)
    throw ValidationError("measure_modified_from_data: trace has no magnitude samples");
  NmReport report;
  report.kind = NmReport::Kind::Modified;
  report.value =
      contrast_at_phi * (trace.magnitude[trace.magnitude.size() - 1] - trace.magnitude[0]);
  return report;
}

}  // namespace nvnm
