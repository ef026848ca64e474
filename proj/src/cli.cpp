#include "nvnm/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "nvnm/errors.hpp"
#include "nvnm/fit.hpp"
#include "nvnm/nonmarkov.hpp"
#include "nvnm/rng.hpp"
#include "nvnm/trace_io.hpp"

namespace nvnm::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
  return buf;
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
}

// Common flag overrides applied on top of the config file.
struct CommonFlags {
  std::string config_path;
  std::string out;
  std::string format;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int chains = 0;
  long iters = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON run configuration");
  cmd->add_option("--out", flags.out,
                  "output directory (default: config 'out', then $NVNM_OUT_DIR, then ./nvnm_out)");
  cmd->add_option("--format", flags.format, "trace file format: csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  auto* seed_opt = cmd->add_option("--seed", flags.seed, "RNG seed (u64)");
  cmd->callback([seed_opt, &flags] { flags.seed_set = seed_opt->count() > 0; });
  cmd->add_option("--chains", flags.chains, "number of MCMC chains");
  cmd->add_option("--iters", flags.iters, "MCMC iterations per chain");
}

json resolve_common(const CommonFlags& flags) {
  json config = load_config(flags.config_path);
  if (!flags.out.empty()) config["out"] = flags.out;
  if (!config.contains("out")) {
    const char* env = std::getenv("NVNM_OUT_DIR");
    config["out"] = env ? env : "nvnm_out";
  }
  if (flags.seed_set) config["seed"] = flags.seed;
  if (!config.contains("seed")) config["seed"] = 0;
  if (!flags.format.empty()) config["format"] = flags.format;
  if (!config.contains("format")) config["format"] = "csv";
  if (flags.chains > 0) config["sampler"]["chains"] = flags.chains;
  if (flags.iters > 0) config["sampler"]["iters"] = flags.iters;
  return config;
}

FileFormat parse_format(const json& config) {
  const auto name = config.at("format").get<std::string>();
  if (name == "csv") return FileFormat::Csv;
  if (name == "json") return FileFormat::Json;
  throw ValidationError("unknown format '" + name + "'");
}

void write_config_echo(const fs::path& out_dir, const std::string& command, json config) {
  config["command"] = command;
  atomic_write(out_dir / "config_echo.json", config.dump(2) + "\n");
}

double get_or(const json& j, const std::string& key, double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}

HyperfineCoupling coupling_from(const json& j, double default_mhz) {
  HyperfineCoupling coupling;
  if (j.contains("a_par_rad_us"))
    coupling.a_par = j.at("a_par_rad_us").get<double>();
  else
    coupling.a_par = angular_mhz(get_or(j, "a_par_mhz", default_mhz));
  if (!coupling.valid()) throw ValidationError("a_par must be > 0");
  return coupling;
}

DephasingEnvelope envelope_from(const json& j, double default_t2) {
  if (j.contains("envelope_coeffs")) {
    const auto& arr = j.at("envelope_coeffs");
    if (arr.size() != 6) throw ValidationError("envelope_coeffs needs exactly 6 entries");
    Eigen::Array<double, 6, 1> coeffs;
    for (int i = 0; i < 6; ++i) coeffs[i] = arr[static_cast<std::size_t>(i)].get<double>();
    if ((coeffs < 0.0).any()) throw ValidationError("envelope coefficients must be >= 0");
    return DephasingEnvelope::polynomial(coeffs);
  }
  return DephasingEnvelope::gaussian(get_or(j, "t2_star_us", default_t2));
}

Eigen::ArrayXd times_from(const json& config, const std::string& model) {
  // {"grid": [...]} or {"start","stop","n"} or {"segments": [{start,stop,n}..]}.
  // Defaults: fid takes a dual-density layout (dense early points resolve the
  // oscillations, sparse late points the envelope); nm covers one record.
  json spec;
  if (config.contains("times"))
    spec = config.at("times");
  else if (model == "fid")
    spec = json{{"segments",
                 {{{"start", 0.0}, {"stop", 4.4}, {"n", 45}},
                  {{"start", 4.9}, {"stop", 50.0}, {"n", 15}}}}};
  else
    spec = json::object();
  std::vector<double> grid;
  if (spec.contains("grid")) {
    for (const auto& v : spec.at("grid")) grid.push_back(v.get<double>());
  } else if (spec.contains("segments")) {
    for (const auto& seg : spec.at("segments")) {
      const double start = seg.at("start").get<double>();
      const double stop = seg.at("stop").get<double>();
      const auto n = seg.at("n").get<Eigen::Index>();
      if (n < 1 || !(stop > start)) throw ValidationError("bad time segment");
      for (Eigen::Index i = 0; i < n; ++i)
        grid.push_back(n == 1 ? start : start + (stop - start) * static_cast<double>(i) /
                                            static_cast<double>(n - 1));
    }
  } else {
    const double start = get_or(spec, "start", 0.0);
    const double stop = get_or(spec, "stop", 1.226);
    const auto n = spec.contains("n") ? spec.at("n").get<Eigen::Index>() : 41;
    if (n < 2 || !(stop > start)) throw ValidationError("bad time range");
    for (Eigen::Index i = 0; i < n; ++i)
      grid.push_back(start + (stop - start) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  if (grid.size() < 1) throw ValidationError("empty time grid");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ValidationError("time grid must be strictly increasing");
  return Eigen::Map<Eigen::ArrayXd>(grid.data(), static_cast<Eigen::Index>(grid.size()));
}

// Optional affine raw-counts calibration: model units = (raw - offset)/scale.
// Applied on ingestion; the map is recorded in the trace metadata.
CoherenceTrace apply_calibration(CoherenceTrace trace, const json& config) {
  if (!config.contains("calibration")) return trace;
  const json& j = config.at("calibration");
  const double scale = get_or(j, "scale", 1.0);
  const double offset = get_or(j, "offset", 0.0);
  if (!(scale > 0.0)) throw ValidationError("calibration scale must be > 0");
  trace.magnitude = (trace.magnitude - offset) / scale;
  if (trace.x.size() > 0) {
    trace.x = (trace.x - offset) / scale;
    trace.y = trace.y / scale;
  }
  trace.norm_scale = scale;
  trace.norm_offset = offset;
  return trace;
}

NoiseChannel noise_channel_from(const json& config) {
  const std::string name =
      config.contains("noise_channel") ? config.at("noise_channel").get<std::string>() : "quadrature";
  if (name == "quadrature") return NoiseChannel::Quadrature;
  if (name == "magnitude") return NoiseChannel::Magnitude;
  throw ValidationError("noise_channel must be quadrature or magnitude");
}

ContrastModel contrast_from(const json& j) {
  ContrastModel m;
  m.amplitude = get_or(j, "amplitude", 0.046);
  m.frequency = get_or(j, "frequency", 1.030);
  m.offset = get_or(j, "offset", 0.261);
  return m;
}

PopulationModel population_from(const json& j) {
  PopulationModel m;
  m.amplitude = get_or(j, "amplitude", 0.034);
  m.frequency = get_or(j, "frequency", 1.738);
  m.offset = get_or(j, "offset", 0.102);
  m.phase = get_or(j, "phase", -0.528);
  return m;
}

FidModelParams fid_params_from(const json& config) {
  const json j = config.contains("fid") ? config.at("fid") : json::object();
  FidModelParams params;
  params.envelope = envelope_from(j, 22.262);
  params.p = get_or(j, "p", 0.972);
  params.phi = get_or(j, "phi_rad", 0.191);
  params.coupling = coupling_from(j, 2.143);
  params.bias_d = get_or(j, "bias_d", 0.0);
  params.sigma = get_or(j, "sigma", 0.018);
  if (!(params.p >= 0.0 && params.p <= 1.0)) throw ValidationError("p must lie in [0, 1]");
  if (params.sigma < 0.0) throw ValidationError("sigma must be >= 0");
  return params;
}

NmModelParams nm_params_from(const json& j) {
  NmModelParams params;
  params.contrast = contrast_from(j.contains("contrast") ? j.at("contrast") : json::object());
  params.population = population_from(j.contains("population") ? j.at("population") : json::object());
  params.coupling = coupling_from(j, 2.169);
  params.sigma_coh = get_or(j, "sigma_coh", 0.018);
  params.sigma_nm = get_or(j, "sigma_nm", 0.06);
  return params;
}

std::vector<double> phis_from(const json& j) {
  std::vector<double> phis;
  if (j.contains("phis_rad")) {
    for (const auto& v : j.at("phis_rad")) phis.push_back(v.get<double>());
  } else {
    const int n = j.contains("n_phis") ? j.at("n_phis").get<int>() : 14;
    if (n < 1) throw ValidationError("n_phis must be >= 1");
    for (int k = 0; k < n; ++k)
      phis.push_back(kTwoPi * static_cast<double>(k) / std::max(1, n - 1));
  }
  return phis;
}

// Per-name prior overrides: {"a_par": {"family":"normal","mu":..,"sigma":..}, ...}
PriorSpec apply_prior_overrides(PriorSpec priors, const json& config) {
  if (!config.contains("priors")) return priors;
  for (const auto& [name, spec] : config.at("priors").items()) {
    bool found = false;
    for (auto& param : priors) {
      if (param.name != name) continue;
      found = true;
      const auto family = spec.at("family").get<std::string>();
      if (family == "normal")
        param.prior = Prior::normal(spec.at("mu").get<double>(), spec.at("sigma").get<double>());
      else if (family == "half-normal")
        param.prior = Prior::half_normal(spec.at("sigma").get<double>());
      else if (family == "uniform")
        param.prior = Prior::uniform(spec.at("lo").get<double>(), spec.at("hi").get<double>());
      else
        throw ValidationError("unknown prior family '" + family + "' for " + name);
      param.prior.check();
    }
    if (!found) throw ValidationError("prior override for unknown parameter '" + name + "'");
  }
  return priors;
}

FitConfig fit_config_from(const json& config) {
  FitConfig fit;
  const json sampler = config.contains("sampler") ? config.at("sampler") : json::object();
  const std::string algorithm =
      sampler.contains("algorithm") ? sampler.at("algorithm").get<std::string>() : "mh";
  const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
  if (algorithm == "mh") {
    fit.use_hmc = false;
    fit.mh.chains = sampler.contains("chains") ? sampler.at("chains").get<int>() : 4;
    fit.mh.iters = sampler.contains("iters") ? sampler.at("iters").get<int>() : 50000;
    fit.mh.warmup = sampler.contains("warmup") ? sampler.at("warmup").get<int>() : -1;
    fit.mh.target_accept = get_or(sampler, "target_accept", 0.3);
    fit.mh.init_jitter = get_or(sampler, "init_jitter", 1.0);
    fit.mh.seed = seed;
    const std::string proposal =
        sampler.contains("proposal") ? sampler.at("proposal").get<std::string>() : "full";
    if (proposal == "full")
      fit.mh.proposal = MhConfig::Proposal::Full;
    else if (proposal == "diag")
      fit.mh.proposal = MhConfig::Proposal::Diag;
    else
      throw ValidationError("proposal must be full or diag");
  } else if (algorithm == "hmc") {
    fit.use_hmc = true;
    fit.hmc.chains = sampler.contains("chains") ? sampler.at("chains").get<int>() : 4;
    fit.hmc.iters = sampler.contains("iters") ? sampler.at("iters").get<int>() : 2000;
    fit.hmc.warmup = sampler.contains("warmup") ? sampler.at("warmup").get<int>() : -1;
    fit.hmc.step_size = get_or(sampler, "step_size", 0.1);
    fit.hmc.leapfrog_steps =
        sampler.contains("leapfrog_steps") ? sampler.at("leapfrog_steps").get<int>() : 20;
    fit.hmc.target_accept = get_or(sampler, "target_accept", 0.8);
    fit.hmc.init_jitter = get_or(sampler, "init_jitter", 1.0);
    fit.hmc.seed = seed;
  } else {
    throw ValidationError("sampler.algorithm must be mh or hmc");
  }
  fit.force = config.contains("force") && config.at("force").get<bool>();
  fit.hpd_mass = get_or(config, "hpd_mass", 0.95);
  return fit;
}

json sampler_echo(const FitConfig& fit) {
  if (fit.use_hmc)
    return {{"algorithm", "hmc"},
            {"chains", fit.hmc.chains},
            {"iters", fit.hmc.iters},
            {"warmup", fit.hmc.resolved_warmup()},
            {"step_size", fit.hmc.step_size},
            {"leapfrog_steps", fit.hmc.leapfrog_steps},
            {"target_accept", fit.hmc.target_accept},
            {"init_jitter", fit.hmc.init_jitter}};
  return {{"algorithm", "mh"},
          {"chains", fit.mh.chains},
          {"iters", fit.mh.iters},
          {"warmup", fit.mh.resolved_warmup()},
          {"target_accept", fit.mh.target_accept},
          {"proposal", fit.mh.proposal == MhConfig::Proposal::Full ? "full" : "diag"},
          {"init_jitter", fit.mh.init_jitter}};
}

json priors_echo(const PriorSpec& priors) {
  json out = json::object();
  for (const auto& param : priors) {
    switch (param.prior.family) {
      case Prior::Family::Normal:
        out[param.name] = {{"family", "normal"}, {"mu", param.prior.mu}, {"sigma", param.prior.sigma}};
        break;
      case Prior::Family::HalfNormal:
        out[param.name] = {{"family", "half-normal"}, {"sigma", param.prior.sigma}};
        break;
      case Prior::Family::Uniform:
        out[param.name] = {{"family", "uniform"}, {"lo", param.prior.lo}, {"hi", param.prior.hi}};
        break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_simulate(const json& config) {
  const fs::path out_dir = config.at("out").get<std::string>();
  fs::create_directories(out_dir);
  const FileFormat format = parse_format(config);
  const std::string ext = format == FileFormat::Csv ? ".csv" : ".json";
  const auto seed = config.at("seed").get<std::uint64_t>();
  const NoiseChannel channel = noise_channel_from(config);
  const std::string model = config.contains("model") ? config.at("model").get<std::string>() : "fid";
  const Eigen::ArrayXd times = times_from(config, model);

  json echo = config;
  if (model == "fid") {
    const FidModelParams params = fid_params_from(config);
    const CoherenceTrace trace = simulate_ramsey(params, times, seed, channel);
    save_trace(out_dir / ("trace" + ext), trace, format);
    echo["fid"] = {{"envelope_coeffs",
                    {params.envelope.coeffs[0], params.envelope.coeffs[1], params.envelope.coeffs[2],
                     params.envelope.coeffs[3], params.envelope.coeffs[4], params.envelope.coeffs[5]}},
                   {"p", params.p},
                   {"phi_rad", params.phi},
                   {"a_par_rad_us", params.coupling.a_par},
                   {"bias_d", params.bias_d},
                   {"sigma", params.sigma}};
    std::cout << "wrote " << (out_dir / ("trace" + ext)).string() << " (" << trace.size()
              << " points)\n";
  } else if (model == "nm") {
    const json j = config.contains("nm") ? config.at("nm") : json::object();
    const NmModelParams params = nm_params_from(j);
    const std::vector<double> phis = phis_from(j);
    for (std::size_t k = 0; k < phis.size(); ++k) {
      const CoherenceTrace trace =
          simulate_ramsey(params, phis[k], times, seed + k, channel);
      char name[32];
      std::snprintf(name, sizeof(name), "trace_%02zu", k);
      save_trace(out_dir / (name + ext), trace, format);
    }
    const bool emit_points = !j.contains("emit_nm_points") || j.at("emit_nm_points").get<bool>();
    if (emit_points) {
      const double horizon = times[times.size() - 1];
      Philox rng(seed + phis.size(), 0);
      std::vector<std::pair<double, double>> points;
      for (const double phi : phis) {
        const double value =
            measure_modified(params, phi, horizon).value + params.sigma_nm * rng.normal();
        points.emplace_back(phi, value);
      }
      save_nm_points(out_dir / "nm_points.csv", points);
    }
    echo["nm"] = {{"contrast",
                   {{"amplitude", params.contrast.amplitude},
                    {"frequency", params.contrast.frequency},
                    {"offset", params.contrast.offset}}},
                  {"population",
                   {{"amplitude", params.population.amplitude},
                    {"frequency", params.population.frequency},
                    {"offset", params.population.offset},
                    {"phase", params.population.phase}}},
                  {"a_par_rad_us", params.coupling.a_par},
                  {"sigma_coh", params.sigma_coh},
                  {"sigma_nm", params.sigma_nm},
                  {"phis_rad", phis},
                  {"emit_nm_points", emit_points}};
    std::cout << "wrote " << phis.size() << " traces to " << out_dir.string() << "\n";
  } else {
    throw ValidationError("model must be fid or nm");
  }
  write_config_echo(out_dir, "simulate", echo);
  return 0;
}

json fit_payload(const FitResult& result, const FitConfig& fit) {
  json payload;
  payload["summaries"] = summaries_to_json(result.summaries);
  payload["derived"] = summaries_to_json(result.derived);
  payload["accept_rate"] = result.samples.accept_rate;
  payload["warmup"] = result.samples.warmup;
  payload["chains"] = result.samples.num_chains();
  payload["draws_per_chain"] = result.samples.draws_per_chain();
  payload["hpd_mass"] = fit.hpd_mass;
  return payload;
}

int cmd_fit_fid(const json& config) {
  const fs::path out_dir = config.at("out").get<std::string>();
  fs::create_directories(out_dir);
  if (!config.contains("data")) throw ValidationError("fit-fid needs a 'data' trace path");
  const std::string data_path = config.at("data").get<std::string>();
  const CoherenceTrace data = apply_calibration(load_trace(data_path), config);

  const double span = data.times[data.size() - 1] - data.times[0];
  const PriorSpec priors = apply_prior_overrides(default_fid_priors(span), config);
  const FitConfig fit = fit_config_from(config);

  ResultsBundle bundle;
  bundle.kind = "fit-fid";
  bundle.started = now_iso8601();
  const FitResult result = fit_fid(data, priors, fit);
  bundle.finished = now_iso8601();
  bundle.seed = config.at("seed").get<std::uint64_t>();
  bundle.fingerprint = fingerprint_files({data_path});

  json echo = config;
  echo["sampler"] = sampler_echo(fit);
  echo["priors"] = priors_echo(priors);
  echo["hpd_mass"] = fit.hpd_mass;
  bundle.config = echo;
  bundle.config["command"] = "fit-fid";
  bundle.payload = fit_payload(result, fit);

  save_results(out_dir / "results.json", bundle);
  std::vector<std::string> derived_names;
  for (const auto& row : result.derived) derived_names.push_back(row.name);
  save_draws_csv(out_dir / "draws.csv", result.samples, derived_names, result.derived_draws);
  write_config_echo(out_dir, "fit-fid", echo);
  for (const auto& row : result.summaries)
    std::cout << row.name << ": median=" << format_double(row.median) << " hpd=["
              << format_double(row.interval.lo) << ", " << format_double(row.interval.hi)
              << "] rhat=" << format_double(row.rhat) << "\n";
  for (const auto& row : result.derived)
    std::cout << row.name << ": median=" << format_double(row.median) << " hpd=["
              << format_double(row.interval.lo) << ", " << format_double(row.interval.hi) << "]\n";
  return 0;
}

int cmd_fit_nm(const json& config) {
  const fs::path out_dir = config.at("out").get<std::string>();
  fs::create_directories(out_dir);
  if (!config.contains("coh")) throw ValidationError("fit-nm needs a 'coh' trace list");

  std::vector<std::pair<double, CoherenceTrace>> coh_sets;
  std::vector<fs::path> inputs;
  for (const auto& entry : config.at("coh")) {
    const std::string path = entry.at("path").get<std::string>();
    CoherenceTrace trace = apply_calibration(load_trace(path), config);
    const double phi = entry.contains("phi_rad")
                           ? entry.at("phi_rad").get<double>()
                           : (trace.phi ? *trace.phi
                                        : throw ValidationError(path + ": no phi_rad available"));
    coh_sets.emplace_back(phi, std::move(trace));
    inputs.emplace_back(path);
  }

  std::vector<std::pair<double, double>> nm_points;
  if (config.contains("nm_points")) {
    const auto& spec = config.at("nm_points");
    if (spec.is_string()) {
      nm_points = load_nm_points(spec.get<std::string>());
      inputs.emplace_back(spec.get<std::string>());
    } else {
      for (const auto& entry : spec)
        nm_points.emplace_back(entry.at("phi_rad").get<double>(), entry.at("value").get<double>());
    }
  }
  const double horizon = get_or(config, "horizon_us", -1.0);

  const PriorSpec priors = apply_prior_overrides(default_nm_priors(), config);
  const FitConfig fit = fit_config_from(config);

  ResultsBundle bundle;
  bundle.kind = "fit-nm";
  bundle.started = now_iso8601();
  const FitResult result = fit_nm(coh_sets, nm_points, priors, fit, horizon);
  bundle.finished = now_iso8601();
  bundle.seed = config.at("seed").get<std::uint64_t>();
  bundle.fingerprint = fingerprint_files(inputs);

  json echo = config;
  echo["sampler"] = sampler_echo(fit);
  echo["priors"] = priors_echo(priors);
  echo["hpd_mass"] = fit.hpd_mass;
  bundle.config = echo;
  bundle.config["command"] = "fit-nm";
  bundle.payload = fit_payload(result, fit);

  save_results(out_dir / "results.json", bundle);
  std::vector<std::string> derived_names;
  for (const auto& row : result.derived) derived_names.push_back(row.name);
  save_draws_csv(out_dir / "draws.csv", result.samples, derived_names, result.derived_draws);
  write_config_echo(out_dir, "fit-nm", echo);
  for (const auto& row : result.summaries)
    std::cout << row.name << ": median=" << format_double(row.median) << " hpd=["
              << format_double(row.interval.lo) << ", " << format_double(row.interval.hi)
              << "] rhat=" << format_double(row.rhat) << "\n";
  return 0;
}

json report_to_json(const NmReport& report) {
  json intervals = json::array();
  for (const auto& iv : report.intervals)
    intervals.push_back({{"t_start_us", iv.t_start}, {"t_end_us", iv.t_end}, {"gain", iv.gain}});
  return {{"kind", report.kind == NmReport::Kind::Exact ? "exact" : "modified"},
          {"value", report.value},
          {"grid_step_us", report.grid_step},
          {"intervals", intervals}};
}

int cmd_measure(const json& config) {
  const fs::path out_dir = config.at("out").get<std::string>();
  fs::create_directories(out_dir);
  const std::string mode = config.contains("mode") ? config.at("mode").get<std::string>() : "exact";
  const double eps = get_or(config, "eps", 0.0);
  NmReport report;
  std::vector<fs::path> inputs;

  if (mode == "exact") {
    if (config.contains("trace")) {
      const std::string path = config.at("trace").get<std::string>();
      const CoherenceTrace trace = load_trace(path);
      inputs.emplace_back(path);
      report = measure_exact(SampledTrajectory{trace.times, trace.magnitude}, eps);
    } else if (config.contains("analytic")) {
      const json& j = config.at("analytic");
      AnalyticTrajectory traj;
      traj.p = get_or(j, "p", 1.0);
      traj.phi = get_or(j, "phi_rad", 0.0);
      traj.coupling = coupling_from(j, 2.143);
      traj.envelope = j.contains("t2_star_us") || j.contains("envelope_coeffs")
                          ? envelope_from(j, 22.262)
                          : DephasingEnvelope::unit();
      traj.horizon = j.at("horizon_us").get<double>();
      report = measure_exact(traj, eps, get_or(config, "grid_step_us", 0.0));
    } else {
      throw ValidationError("measure exact needs 'trace' or 'analytic'");
    }
  } else if (mode == "modified") {
    if (!config.contains("nm_params")) throw ValidationError("measure modified needs 'nm_params'");
    report = measure_modified(nm_params_from(config.at("nm_params")),
                              config.at("phi_rad").get<double>(),
                              config.at("horizon_us").get<double>());
  } else if (mode == "from-data") {
    if (!config.contains("trace")) throw ValidationError("measure from-data needs 'trace'");
    const std::string path = config.at("trace").get<std::string>();
    const CoherenceTrace trace = apply_calibration(load_trace(path), config);
    inputs.emplace_back(path);
    report = measure_modified_from_data(trace, get_or(config, "contrast_at_phi", 1.0));
  } else {
    throw ValidationError("measure mode must be exact, modified or from-data");
  }

  ResultsBundle bundle;
  bundle.kind = "measure";
  bundle.started = bundle.finished = now_iso8601();
  bundle.seed = config.at("seed").get<std::uint64_t>();
  bundle.fingerprint = inputs.empty() ? "fnv1a64:0000000000000000" : fingerprint_files(inputs);
  bundle.config = config;
  bundle.config["command"] = "measure";
  bundle.payload = report_to_json(report);
  save_results(out_dir / "nm_report.json", bundle);
  write_config_echo(out_dir, "measure", config);
  std::cout << "measure (" << mode << "): " << format_double(report.value) << "\n";
  return 0;
}

int cmd_predict(const json& config) {
  const fs::path out_dir = config.at("out").get<std::string>();
  fs::create_directories(out_dir);
  if (!config.contains("draws")) throw ValidationError("predict needs a 'draws' csv path");
  const std::string draws_path = config.at("draws").get<std::string>();
  const LoadedDraws loaded = load_draws_csv(draws_path);

  // Select the joint-model parameter columns by name, in layout order.
  const std::vector<std::string> wanted = nm_param_names();
  std::vector<Eigen::Index> cols;
  for (const auto& name : wanted) {
    const auto it = std::find(loaded.names.begin(), loaded.names.end(), name);
    if (it == loaded.names.end())
      throw ValidationError(draws_path + ": missing parameter column '" + name + "'");
    cols.push_back(std::distance(loaded.names.begin(), it));
  }
  PosteriorSamples nm_draws;
  nm_draws.names = wanted;
  for (const auto& chain : loaded.samples.chains) {
    Eigen::MatrixXd sub(chain.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t d = 0; d < cols.size(); ++d)
      sub.col(static_cast<Eigen::Index>(d)) = chain.col(cols[d]);
    nm_draws.chains.push_back(std::move(sub));
  }

  const json grid = config.contains("phi_grid") ? config.at("phi_grid") : json::object();
  const double start = get_or(grid, "start", 0.0);
  const double stop = get_or(grid, "stop", kTwoPi);
  const int n = grid.contains("n") ? grid.at("n").get<int>() : 100;
  if (n < 2 || !(stop > start)) throw ValidationError("bad phi_grid");
  std::vector<double> phis(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    phis[static_cast<std::size_t>(i)] = start + (stop - start) * i / (n - 1);

  const double horizon = config.at("horizon_us").get<double>();
  const int thin = config.contains("thin") ? config.at("thin").get<int>() : 10;
  const auto curve = posterior_predictive(nm_draws, nm_prime_expectation(horizon),
                                          nm_observation_sd(), phis, thin);

  std::string csv = "phi_rad,nm_mean,nm_sd_param,nm_sd_total\n";
  for (std::size_t i = 0; i < phis.size(); ++i)
    csv += format_double(phis[i]) + "," + format_double(curve[i].mean) + "," +
           format_double(curve[i].sd_param) + "," + format_double(curve[i].sd_total) + "\n";
  atomic_write(out_dir / "predictive.csv", csv);

  json echo = config;
  echo["phi_grid"] = {{"start", start}, {"stop", stop}, {"n", n}};
  echo["thin"] = thin;
  write_config_echo(out_dir, "predict", echo);
  std::cout << "wrote " << (out_dir / "predictive.csv").string() << " (" << n << " points)\n";
  return 0;
}

void print_summary_table(std::ostream& os, const json& rows) {
  os << "parameter        prior                    median        hpd_lo        hpd_hi      rhat       ess\n";
  const auto compact = [](double value) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%.4g", value);
    return std::string(buf);
  };
  for (const auto& row : rows) {
    std::string prior = "-";
    if (row.contains("prior")) {
      const auto& p = row.at("prior");
      const auto family = p.at("family").get<std::string>();
      if (family == "normal")
        prior = "normal(" + compact(p.at("mu").get<double>()) + ", " +
                compact(p.at("sigma").get<double>()) + ")";
      else if (family == "half-normal")
        prior = "half-normal(" + compact(p.at("sigma").get<double>()) + ")";
      else
        prior = "uniform(" + compact(p.at("lo").get<double>()) + ", " +
                compact(p.at("hi").get<double>()) + ")";
    }
    char line[256];
    std::snprintf(line, sizeof(line), "%-16s %-24s %12.6g %13.6g %13.6g %9.4g %9.4g\n",
                  row.at("name").get<std::string>().c_str(), prior.c_str(),
                  row.at("median").get<double>(), row.at("hpd_lo").get<double>(),
                  row.at("hpd_hi").get<double>(), row.at("rhat").get<double>(),
                  row.at("ess").get<double>());
    os << line;
  }
}

int cmd_report(const json& config) {
  if (!config.contains("results")) throw ValidationError("report needs a 'results' path");
  const ResultsBundle bundle = load_results(config.at("results").get<std::string>());
  const std::string style =
      config.contains("style") ? config.at("style").get<std::string>() : "text";
  if (style == "json") {
    json out = {{"kind", bundle.kind},
                {"seed", bundle.seed},
                {"fingerprint", bundle.fingerprint},
                {"summaries", bundle.payload.value("summaries", json::array())},
                {"derived", bundle.payload.value("derived", json::array())}};
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << "kind: " << bundle.kind << "  seed: " << bundle.seed
              << "  fingerprint: " << bundle.fingerprint << "\n";
    if (bundle.payload.contains("summaries"))
      print_summary_table(std::cout, bundle.payload.at("summaries"));
    if (bundle.payload.contains("derived") && !bundle.payload.at("derived").empty()) {
      std::cout << "derived:\n";
      print_summary_table(std::cout, bundle.payload.at("derived"));
    }
    if (bundle.kind == "measure") std::cout << bundle.payload.dump(2) << "\n";
  }
  if (config.contains("out")) {
    const fs::path out_dir = config.at("out").get<std::string>();
    std::ostringstream os;
    if (bundle.payload.contains("summaries")) print_summary_table(os, bundle.payload.at("summaries"));
    if (bundle.payload.contains("derived")) print_summary_table(os, bundle.payload.at("derived"));
    atomic_write(out_dir / "report.txt", os.str());
  }
  return 0;
}

json error_json(const std::string& type, const std::string& message) {
  return {{"error", {{"type", type}, {"message", message}}}};
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"NV-center Ramsey dephasing toolkit: simulate coherence records, fit the "
               "decay and angle-response models by MCMC, and quantify coherence revivals.\n"
               "Default output directory: --out, config 'out', $NVNM_OUT_DIR, ./nvnm_out."};
  app.require_subcommand(1);

  CommonFlags flags;
  std::array<CLI::App*, 6> cmds = {
      app.add_subcommand("simulate", "generate synthetic coherence traces"),
      app.add_subcommand("fit-fid", "fit the single-trace decay model"),
      app.add_subcommand("fit-nm", "fit the joint angle-response model"),
      app.add_subcommand("measure", "evaluate revival measures (exact/modified/from-data)"),
      app.add_subcommand("predict", "posterior-predictive curve over a phi grid"),
      app.add_subcommand("report", "render a results bundle as a summary table"),
  };
  for (auto* cmd : cmds) add_common(cmd, flags);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      return app.exit(e);
    }
    std::cerr << error_json("validation", e.what()).dump() << "\n";
    return 1;
  }

  try {
    const json config = resolve_common(flags);
    if (cmds[0]->parsed()) return cmd_simulate(config);
    if (cmds[1]->parsed()) return cmd_fit_fid(config);
    if (cmds[2]->parsed()) return cmd_fit_nm(config);
    if (cmds[3]->parsed()) return cmd_measure(config);
    if (cmds[4]->parsed()) return cmd_predict(config);
    if (cmds[5]->parsed()) return cmd_report(config);
    std::cerr << error_json("validation", "no command given").dump() << "\n";
    return 1;
  } catch (const SamplingError& e) {
    std::cerr << error_json("sampling", e.what()).dump() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << error_json("io", e.what()).dump() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << error_json("io", e.what()).dump() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << error_json("validation", e.what()).dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << error_json("validation", e.what()).dump() << "\n";
    return 1;
  }
}

}  // namespace nvnm::cli
