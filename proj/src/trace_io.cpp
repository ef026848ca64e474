#include "nvnm/trace_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nvnm/errors.hpp"

namespace nvnm {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& field, int line_no, int col_no) {
  const std::string t = trim(field);
  double value = 0.0;
  const auto result = std::from_chars(t.data(), t.data() + t.size(), value);
  if (result.ec != std::errc{} || result.ptr != t.data() + t.size())
    throw ValidationError("malformed numeric '" + field + "' at line " +
                          std::to_string(line_no) + ", column " + std::to_string(col_no));
  return value;
}

}  // namespace

std::string format_double(double value) {
  char buf[40];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

void atomic_write(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << contents;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

FileFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".json" ? FileFormat::Json : FileFormat::Csv;
}

namespace {

CoherenceTrace load_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CoherenceTrace trace;
  std::vector<double> times, xs, ys, rs;
  int time_col = -1, x_col = -1, y_col = -1, r_col = -1;
  double time_scale = 1.0;
  bool have_header = false;
  std::string line;
  int line_no = 0, row = 0;

  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    if (stripped[0] == '#') {
      const auto eq = stripped.find('=');
      if (eq != std::string::npos) {
        const std::string key = trim(stripped.substr(1, eq - 1));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key == "phi_rad") trace.phi = parse_double(value, line_no, 1);
        else if (key == "seed") {
          try {
            trace.seed = std::stoull(value);
          } catch (const std::exception&) {
            throw ValidationError("malformed seed '" + value + "' at line " +
                                  std::to_string(line_no));
          }
        }
        else if (key == "norm_scale") trace.norm_scale = parse_double(value, line_no, 1);
        else if (key == "norm_offset") trace.norm_offset = parse_double(value, line_no, 1);
      }
      continue;
    }
    if (!have_header) {
      const auto names = split_csv(stripped);
      for (int i = 0; i < static_cast<int>(names.size()); ++i) {
        const std::string& n = names[static_cast<std::size_t>(i)];
        if (n == "t_us") { time_col = i; time_scale = 1.0; }
        else if (n == "t_ms") { time_col = i; time_scale = 1e3; }
        else if (n == "t_s") { time_col = i; time_scale = 1e6; }
        else if (n == "x") x_col = i;
        else if (n == "y") y_col = i;
        else if (n == "r") r_col = i;
      }
      if (time_col < 0)
        throw ValidationError(path.string() + ": missing time column (t_us/t_ms/t_s) at line " +
                              std::to_string(line_no));
      if (r_col < 0 && (x_col < 0 || y_col < 0))
        throw ValidationError(path.string() + ": need either an r column or both x and y (line " +
                              std::to_string(line_no) + ")");
      have_header = true;
      continue;
    }
    const auto fields = split_csv(stripped);
    const int needed = std::max({time_col, x_col, y_col, r_col}) + 1;
    if (static_cast<int>(fields.size()) < needed)
      throw ValidationError(path.string() + ": row " + std::to_string(row) + " (line " +
                            std::to_string(line_no) + ") has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(needed));
    const double t =
        time_scale * parse_double(fields[static_cast<std::size_t>(time_col)], line_no, time_col + 1);
    if (!times.empty() && !(t > times.back()))
      throw ValidationError(path.string() + ": duplicated or non-increasing time at row " +
                            std::to_string(row) + " (line " + std::to_string(line_no) + ")");
    times.push_back(t);
    if (x_col >= 0) xs.push_back(parse_double(fields[static_cast<std::size_t>(x_col)], line_no, x_col + 1));
    if (y_col >= 0) ys.push_back(parse_double(fields[static_cast<std::size_t>(y_col)], line_no, y_col + 1));
    if (r_col >= 0) rs.push_back(parse_double(fields[static_cast<std::size_t>(r_col)], line_no, r_col + 1));
    ++row;
  }
  if (!have_header) throw ValidationError(path.string() + ": no header row found");
  if (times.empty()) throw ValidationError(path.string() + ": no data rows");

  const auto n = static_cast<Eigen::Index>(times.size());
  trace.times = Eigen::Map<Eigen::ArrayXd>(times.data(), n);
  if (!xs.empty()) trace.x = Eigen::Map<Eigen::ArrayXd>(xs.data(), n);
  if (!ys.empty()) trace.y = Eigen::Map<Eigen::ArrayXd>(ys.data(), n);
  if (!rs.empty())
    trace.magnitude = Eigen::Map<Eigen::ArrayXd>(rs.data(), n);
  else
    trace.magnitude = (trace.x.square() + trace.y.square()).sqrt();
  trace.validate();
  return trace;
}

CoherenceTrace load_trace_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
  CoherenceTrace trace;
  if (!j.contains("times_us")) throw ValidationError(path.string() + ": missing times_us");
  const auto to_array = [](const nlohmann::json& arr) {
    Eigen::ArrayXd out(arr.size());
    Eigen::Index i = 0;
    for (const auto& v : arr) out[i++] = v.get<double>();
    return out;
  };
  trace.times = to_array(j["times_us"]);
  if (j.contains("x")) trace.x = to_array(j["x"]);
  if (j.contains("y")) trace.y = to_array(j["y"]);
  if (j.contains("magnitude"))
    trace.magnitude = to_array(j["magnitude"]);
  else if (trace.x.size() > 0)
    trace.magnitude = (trace.x.square() + trace.y.square()).sqrt();
  else
    throw ValidationError(path.string() + ": need magnitude or x/y channels");
  if (j.contains("phi_rad")) trace.phi = j["phi_rad"].get<double>();
  if (j.contains("seed")) trace.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("norm_scale")) trace.norm_scale = j["norm_scale"].get<double>();
  if (j.contains("norm_offset")) trace.norm_offset = j["norm_offset"].get<double>();
  for (Eigen::Index i = 1; i < trace.times.size(); ++i)
    if (!(trace.times[i] > trace.times[i - 1]))
      throw ValidationError(path.string() + ": duplicated or non-increasing time at row " +
                            std::to_string(i));
  trace.validate();
  return trace;
}

}  // namespace

CoherenceTrace load_trace(const std::filesystem::path& path, FileFormat format) {
  return format == FileFormat::Csv ? load_trace_csv(path) : load_trace_json(path);
}

CoherenceTrace load_trace(const std::filesystem::path& path) {
  return load_trace(path, format_from_path(path));
}

void save_trace(const std::filesystem::path& path, const CoherenceTrace& trace,
                FileFormat format) {
  trace.validate();
  if (format == FileFormat::Csv) {
    std::string out;
    if (trace.phi) out += "# phi_rad=" + format_double(*trace.phi) + "\n";
    if (trace.seed) out += "# seed=" + std::to_string(*trace.seed) + "\n";
    out += "# norm_scale=" + format_double(trace.norm_scale) + "\n";
    out += "# norm_offset=" + format_double(trace.norm_offset) + "\n";
    const bool quad = trace.x.size() > 0;
    out += quad ? "t_us,x,y,r\n" : "t_us,r\n";
    for (Eigen::Index i = 0; i < trace.size(); ++i) {
      out += format_double(trace.times[i]);
      if (quad) {
        out += "," + format_double(trace.x[i]);
        out += "," + format_double(trace.y[i]);
      }
      out += "," + format_double(trace.magnitude[i]) + "\n";
    }
    atomic_write(path, out);
  } else {
    nlohmann::json j;
    const auto to_json = [](const Eigen::ArrayXd& arr) {
      nlohmann::json out = nlohmann::json::array();
      for (Eigen::Index i = 0; i < arr.size(); ++i) out.push_back(arr[i]);
      return out;
    };
    j["times_us"] = to_json(trace.times);
    if (trace.x.size() > 0) {
      j["x"] = to_json(trace.x);
      j["y"] = to_json(trace.y);
    }
    j["magnitude"] = to_json(trace.magnitude);
    if (trace.phi) j["phi_rad"] = *trace.phi;
    if (trace.seed) j["seed"] = *trace.seed;
    j["norm_scale"] = trace.norm_scale;
    j["norm_offset"] = trace.norm_offset;
    atomic_write(path, j.dump(2) + "\n");
  }
}

std::vector<std::pair<double, double>> load_nm_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::pair<double, double>> out;
  std::string line;
  int line_no = 0;
  int phi_col = -1, value_col = -1;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    if (!have_header) {
      const auto names = split_csv(stripped);
      for (int i = 0; i < static_cast<int>(names.size()); ++i) {
        if (names[static_cast<std::size_t>(i)] == "phi_rad") phi_col = i;
        if (names[static_cast<std::size_t>(i)] == "nm_value") value_col = i;
      }
      if (phi_col < 0 || value_col < 0)
        throw ValidationError(path.string() + ": need phi_rad and nm_value columns (line " +
                              std::to_string(line_no) + ")");
      have_header = true;
      continue;
    }
    const auto fields = split_csv(stripped);
    if (static_cast<int>(fields.size()) <= std::max(phi_col, value_col))
      throw ValidationError(path.string() + ": too few fields at line " + std::to_string(line_no));
    out.emplace_back(parse_double(fields[static_cast<std::size_t>(phi_col)], line_no, phi_col + 1),
                     parse_double(fields[static_cast<std::size_t>(value_col)], line_no, value_col + 1));
  }
  if (out.empty()) throw ValidationError(path.string() + ": no measure points found");
  return out;
}

void save_nm_points(const std::filesystem::path& path,
                    const std::vector<std::pair<double, double>>& points) {
  std::string out = "phi_rad,nm_value\n";
  for (const auto& [phi, value] : points)
    out += format_double(phi) + "," + format_double(value) + "\n";
  atomic_write(path, out);
}

namespace {

std::string unit_of(const std::string& name) {
  if (name == "a_par") return "rad/us";
  if (name == "phi" || name == "p_phase") return "rad";
  if (name == "t2_star") return "us";
  if (name.size() == 2 && name[0] == 'a' && name[1] >= '1' && name[1] <= '5')
    return std::string("us^-") + name[1];
  return "1";  // dimensionless
}

}  // namespace

void save_draws_csv(const std::filesystem::path& path, const PosteriorSamples& samples,
                    const std::vector<std::string>& derived_names,
                    const std::vector<Eigen::ArrayXd>& derived_draws) {
  std::string out = "# units: chain=1 iteration=1";
  for (const auto& name : samples.names) out += " " + name + "=" + unit_of(name);
  for (const auto& name : derived_names) out += " " + name + "=" + unit_of(name);
  out += "\nchain,iteration";
  for (const auto& name : samples.names) out += "," + name;
  for (const auto& name : derived_names) out += "," + name;
  out += "\n";
  const Eigen::Index n = samples.draws_per_chain();
  for (int c = 0; c < samples.num_chains(); ++c) {
    const auto& chain = samples.chains[static_cast<std::size_t>(c)];
    for (Eigen::Index i = 0; i < n; ++i) {
      out += std::to_string(c) + "," + std::to_string(i);
      for (int d = 0; d < samples.dim(); ++d) out += "," + format_double(chain(i, d));
      for (const auto& extra : derived_draws) out += "," + format_double(extra[c * n + i]);
      out += "\n";
    }
  }
  atomic_write(path, out);
}

LoadedDraws load_draws_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  int line_no = 0;
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  std::vector<int> chain_ids;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto fields = split_csv(stripped);
    if (names.empty()) {
      if (fields.size() < 3 || fields[0] != "chain" || fields[1] != "iteration")
        throw ValidationError(path.string() + ": expected header chain,iteration,<params> (line " +
                              std::to_string(line_no) + ")");
      names.assign(fields.begin() + 2, fields.end());
      continue;
    }
    if (fields.size() != names.size() + 2)
      throw ValidationError(path.string() + ": wrong field count at line " + std::to_string(line_no));
    chain_ids.push_back(static_cast<int>(parse_double(fields[0], line_no, 1)));
    std::vector<double> row;
    for (std::size_t i = 2; i < fields.size(); ++i)
      row.push_back(parse_double(fields[i], line_no, static_cast<int>(i) + 1));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError(path.string() + ": no draws found");
  const int num_chains = *std::max_element(chain_ids.begin(), chain_ids.end()) + 1;
  const auto per_chain = static_cast<Eigen::Index>(rows.size()) / num_chains;

  LoadedDraws out;
  out.names = names;
  out.samples.names = names;
  out.samples.chains.assign(static_cast<std::size_t>(num_chains),
                            Eigen::MatrixXd(per_chain, static_cast<Eigen::Index>(names.size())));
  std::vector<Eigen::Index> fill(static_cast<std::size_t>(num_chains), 0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const int c = chain_ids[k];
    Eigen::Index& at = fill[static_cast<std::size_t>(c)];
    if (at >= per_chain)
      throw ValidationError(path.string() + ": chains have unequal draw counts");
    for (std::size_t d = 0; d < names.size(); ++d)
      out.samples.chains[static_cast<std::size_t>(c)](at, static_cast<Eigen::Index>(d)) =
          rows[k][d];
    ++at;
  }
  for (const auto used : fill)
    if (used != per_chain)
      throw ValidationError(path.string() + ": chains have unequal draw counts");
  return out;
}

nlohmann::json summaries_to_json(const std::vector<ParamSummary>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json j{{"name", row.name},       {"median", row.median}, {"mean", row.mean},
                     {"sd", row.sd},           {"hpd_lo", row.interval.lo},
                     {"hpd_hi", row.interval.hi}, {"hpd_mass", row.interval.mass},
                     {"rhat", row.rhat},       {"ess", row.ess}};
    if (row.prior) {
      nlohmann::json p;
      switch (row.prior->family) {
        case Prior::Family::Normal:
          p = {{"family", "normal"}, {"mu", row.prior->mu}, {"sigma", row.prior->sigma}};
          break;
        case Prior::Family::HalfNormal:
          p = {{"family", "half-normal"}, {"sigma", row.prior->sigma}};
          break;
        case Prior::Family::Uniform:
          p = {{"family", "uniform"}, {"lo", row.prior->lo}, {"hi", row.prior->hi}};
          break;
      }
      j["prior"] = p;
    }
    out.push_back(j);
  }
  return out;
}

nlohmann::json ResultsBundle::to_json() const {
  return nlohmann::json{{"kind", kind},     {"fingerprint", fingerprint},
                        {"seed", seed},     {"config", config},
                        {"payload", payload},
                        {"timestamps", {{"started", started}, {"finished", finished}}}};
}

ResultsBundle ResultsBundle::from_json(const nlohmann::json& j) {
  ResultsBundle bundle;
  bundle.kind = j.at("kind").get<std::string>();
  bundle.fingerprint = j.at("fingerprint").get<std::string>();
  bundle.seed = j.at("seed").get<std::uint64_t>();
  bundle.config = j.at("config");
  bundle.payload = j.at("payload");
  bundle.started = j.at("timestamps").at("started").get<std::string>();
  bundle.finished = j.at("timestamps").at("finished").get<std::string>();
  return bundle;
}

void save_results(const std::filesystem::path& path, const ResultsBundle& bundle) {
  atomic_write(path, bundle.to_json().dump(2) + "\n");
}

ResultsBundle load_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
  try {
    return ResultsBundle::from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": not a results bundle: " + e.what());
  }
}

std::string fingerprint_files(const std::vector<std::filesystem::path>& paths) {
  std::uint64_t hash = 0xcbf29ce484222325ull;  // FNV-1a 64
  const auto mix = [&hash](const char* data, std::streamsize n) {
    for (std::streamsize i = 0; i < n; ++i) {
      hash ^= static_cast<unsigned char>(data[i]);
      hash *= 0x100000001b3ull;
    }
  };
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for fingerprinting");
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) mix(buf, in.gcount());
    mix("|", 1);
  }
  char out[32];
  std::snprintf(out, sizeof(out), "fnv1a64:%016llx", static_cast<unsigned long long>(hash));
  return out;
}

}  // namespace nvnm
