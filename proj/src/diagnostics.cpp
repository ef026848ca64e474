#include "nvnm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nvnm/errors.hpp"

namespace nvnm {

HpdInterval hpd(Eigen::ArrayXd draws, double mass) {
  const Eigen::Index n = draws.size();
  if (n < 100) throw ValidationError("hpd: need at least 100 draws");
  if (!(mass > 0.0 && mass < 1.0)) throw ValidationError("hpd: mass must lie in (0, 1)");
  std::sort(draws.data(), draws.data() + n);
  const auto window = static_cast<Eigen::Index>(
      std::min<double>(static_cast<double>(n), std::ceil(mass * static_cast<double>(n))));
  Eigen::Index best = 0;
  double best_width = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i + window <= n; ++i) {
    const double width = draws[i + window - 1] - draws[i];
    if (width < best_width) {
      best_width = width;
      best = i;
    }
  }
  return {draws[best], draws[best + window - 1], mass};
}

double median_of(Eigen::ArrayXd draws) {
  const Eigen::Index n = draws.size();
  if (n == 0) throw ValidationError("median_of: empty draws");
  std::sort(draws.data(), draws.data() + n);
  if (n % 2 == 1) return draws[n / 2];
  return 0.5 * (draws[n / 2 - 1] + draws[n / 2]);
}

namespace {

// Split every chain in half; returns the per-sequence columns of one dim.
std::vector<Eigen::ArrayXd> split_sequences(const PosteriorSamples& samples, int dim) {
  std::vector<Eigen::ArrayXd> seqs;
  const Eigen::Index n = samples.draws_per_chain();
  const Eigen::Index half = n / 2;
  for (const auto& chain : samples.chains) {
    seqs.emplace_back(chain.col(dim).head(half).array());
    seqs.emplace_back(chain.col(dim).segment(half, half).array());
  }
  return seqs;
}

struct Variances {
  double within = 0.0;       // W
  double between_n = 0.0;    // B/n
  double var_plus = 0.0;     // (n-1)/n W + B/n
  Eigen::Index seq_len = 0;
};

Variances chain_variances(const std::vector<Eigen::ArrayXd>& seqs) {
  Variances v;
  v.seq_len = seqs.front().size();
  const auto m = static_cast<double>(seqs.size());
  const auto n = static_cast<double>(v.seq_len);
  Eigen::ArrayXd means(seqs.size());
  Eigen::ArrayXd vars(seqs.size());
  for (std::size_t c = 0; c < seqs.size(); ++c) {
    means[static_cast<Eigen::Index>(c)] = seqs[c].mean();
    vars[static_cast<Eigen::Index>(c)] =
        (seqs[c] - means[static_cast<Eigen::Index>(c)]).square().sum() / (n - 1.0);
  }
  v.within = vars.mean();
  const double grand = means.mean();
  v.between_n = (means - grand).square().sum() / (m - 1.0);
  v.var_plus = (n - 1.0) / n * v.within + v.between_n;
  return v;
}

}  // namespace

double rhat(const PosteriorSamples& samples, int dim) {
  if (samples.num_chains() < 2) throw ValidationError("rhat: need at least 2 chains");
  if (samples.draws_per_chain() < 4) throw ValidationError("rhat: need at least 4 draws");
  const auto seqs = split_sequences(samples, dim);
  const Variances v = chain_variances(seqs);
  if (v.var_plus <= 0.0) return 1.0;  // all sequences constant at one value
  if (v.within <= 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(v.var_plus / v.within);
}

double ess(const PosteriorSamples& samples, int dim) {
  if (samples.num_chains() < 1 || samples.draws_per_chain() < 8)
    throw ValidationError("ess: need at least 8 draws");
  const auto seqs = split_sequences(samples, dim);
  const Variances v = chain_variances(seqs);
  const auto m = static_cast<double>(seqs.size());
  const auto n = v.seq_len;
  const double total = m * static_cast<double>(n);
  if (v.var_plus <= 0.0) return total;

  // Mean autocovariance across sequences at each lag (biased 1/n estimator).
  std::vector<Eigen::ArrayXd> centered;
  centered.reserve(seqs.size());
  for (const auto& s : seqs) centered.emplace_back(s - s.mean());
  const auto acov = [&](Eigen::Index lag) {
    double acc = 0.0;
    for (const auto& c : centered)
      acc += (c.head(n - lag) * c.tail(n - lag)).sum() / static_cast<double>(n);
    return acc / m;
  };

  // Geyer initial monotone positive sequence over lag pairs.
  double rho_prev = 1.0 - (v.within - acov(1)) / v.var_plus;  // rho_1
  double tau = 1.0 + 2.0 * rho_prev;
  double last_pair = 1.0 + rho_prev;
  for (Eigen::Index lag = 2; lag + 1 < n; lag += 2) {
    const double rho_even = 1.0 - (v.within - acov(lag)) / v.var_plus;
    const double rho_odd = 1.0 - (v.within - acov(lag + 1)) / v.var_plus;
    double pair = rho_even + rho_odd;
    if (pair < 0.0) break;
    pair = std::min(pair, last_pair);  // enforce monotone decrease
    tau += 2.0 * pair;
    last_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(total + 10.0));
  return std::min(total, total / tau);
}

double point_estimate(const PosteriorSamples& samples, int dim) {
  if (samples.num_chains() == 0 || samples.draws_per_chain() == 0)
    throw ValidationError("point_estimate: empty sample");
  return median_of(samples.dim_draws(dim));
}

std::vector<ParamSummary> summarize(const PosteriorSamples& samples, const PriorSpec* priors,
                                    double hpd_mass) {
  std::vector<ParamSummary> out;
  for (int d = 0; d < samples.dim(); ++d) {
    ParamSummary row;
    row.name = d < static_cast<int>(samples.names.size()) ? samples.names[static_cast<std::size_t>(d)]
                                                          : "theta" + std::to_string(d);
    const Eigen::ArrayXd draws = samples.dim_draws(d);
    row.median = median_of(draws);
    row.mean = draws.mean();
    row.sd = std::sqrt((draws - row.mean).square().sum() /
                       std::max<double>(1.0, static_cast<double>(draws.size() - 1)));
    row.interval = hpd(draws, hpd_mass);
    row.rhat = samples.num_chains() >= 2 ? nvnm::rhat(samples, d) : 0.0;
    row.ess = nvnm::ess(samples, d);
    if (priors) row.prior = (*priors)[static_cast<std::size_t>(d)].prior;
    out.push_back(std::move(row));
  }
  return out;
}

ParamSummary summarize_draws(const std::string& name, const PosteriorSamples& shape,
                             const Eigen::ArrayXd& stacked, double hpd_mass) {
  // Reuse the chain layout of `shape` so rhat/ess see the derived quantity
  // with the same chain boundaries.
  PosteriorSamples derived;
  const Eigen::Index n = shape.draws_per_chain();
  for (int c = 0; c < shape.num_chains(); ++c)
    derived.chains.push_back(stacked.segment(c * n, n).matrix());
  derived.names = {name};
  ParamSummary row;
  row.name = name;
  row.median = median_of(stacked);
  row.mean = stacked.mean();
  row.sd = std::sqrt((stacked - row.mean).square().sum() /
                     std::max<double>(1.0, static_cast<double>(stacked.size() - 1)));
  row.interval = hpd(stacked, hpd_mass);
  row.rhat = derived.num_chains() >= 2 ? rhat(derived, 0) : 0.0;
  row.ess = ess(derived, 0);
  return row;
}

}  // namespace nvnm
