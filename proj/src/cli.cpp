#include "lvssm/cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "lvssm/analysis.hpp"
#include "lvssm/error.hpp"
#include "lvssm/estimation.hpp"
#include "lvssm/features.hpp"
#include "lvssm/parallel.hpp"
#include "lvssm/session_sim.hpp"

namespace lvssm {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr const char* kVersion = "0.1.0";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Field registry: one entry per RunConfig member drives JSON I/O and flags.

struct Field {
  std::string name;
  std::function<void(const RunConfig&, ordered_json&)> to_json;
  std::function<void(RunConfig&, const ordered_json&)> from_json;
  std::function<CLI::Option*(CLI::App&, RunConfig&)> add_flag;
  std::function<void(RunConfig&, const RunConfig&)> copy;
};

std::string flag_name(const std::string& name) {
  std::string s = "--" + name;
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

template <typename T>
Field make_field(std::string name, T RunConfig::*member, std::string help) {
  Field f;
  f.name = name;
  f.to_json = [name, member](const RunConfig& c, ordered_json& j) { j[name] = c.*member; };
  f.from_json = [name, member](RunConfig& c, const ordered_json& v) {
    try {
      c.*member = v.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config: key '" + name + "' has the wrong type");
    }
  };
  f.add_flag = [name, member, help](CLI::App& app, RunConfig& c) -> CLI::Option* {
    if constexpr (std::is_same_v<T, bool>) {
      const std::string flag = flag_name(name);
      return app.add_flag(flag + ",!--no-" + flag.substr(2), c.*member, help);
    } else {
      return app.add_option(flag_name(name), c.*member, help);
    }
  };
  f.copy = [member](RunConfig& dst, const RunConfig& src) { dst.*member = src.*member; };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      make_field("input_dir", &RunConfig::input_dir, "directory holding the raw sensor CSVs"),
      make_field("features", &RunConfig::features, "feature table(s); default <output-dir>/features.csv"),
      make_field("participants", &RunConfig::participants, "participant ids matching --features"),
      make_field("bcp_csv", &RunConfig::bcp_csv, "change-point CSV; default <output-dir>/bcp.csv"),
      make_field("rolling_csv", &RunConfig::rolling_csv, "rolling-fit CSV; default <output-dir>/rolling.csv"),
      make_field("model", &RunConfig::model, "base, two_latent or a model spec JSON path"),
      make_field("output_dir", &RunConfig::output_dir, "directory for all outputs"),
      make_field("seed", &RunConfig::seed, "random seed"),
      make_field("workers", &RunConfig::workers, "worker threads (0 = all cores)"),
      make_field("gte_window", &RunConfig::gte_window, "gaze transition entropy window in seconds"),
      make_field("aoi_rows", &RunConfig::aoi_rows, "rows of the gaze grid"),
      make_field("aoi_cols", &RunConfig::aoi_cols, "columns of the gaze grid"),
      make_field("bcp_iterations", &RunConfig::bcp_iterations, "change-point sampler sweeps"),
      make_field("bcp_burnin", &RunConfig::bcp_burnin, "change-point burn-in sweeps"),
      make_field("bcp_p0", &RunConfig::bcp_p0, "prior bound on the change probability"),
      make_field("bcp_w0", &RunConfig::bcp_w0, "prior bound on the signal-to-noise ratio"),
      make_field("rare_k", &RunConfig::rare_k, "heart-rate jump threshold in standard deviations"),
      make_field("rare_scale", &RunConfig::rare_scale, "sd behind the jump threshold: residual or series"),
      make_field("prob_floor", &RunConfig::prob_floor, "minimum change probability of a boundary"),
      make_field("stride", &RunConfig::stride, "lag-restructuring stride in seconds"),
      make_field("max_iter", &RunConfig::max_iter, "iteration cap of each fit"),
      make_field("tol", &RunConfig::tol, "convergence tolerance on -2LL"),
      make_field("refine", &RunConfig::refine, "quasi-Newton refinement after EM"),
      make_field("starts", &RunConfig::starts, "number of optimizer starts"),
      make_field("standard_errors", &RunConfig::standard_errors, "compute standard errors"),
      make_field("rolling_window", &RunConfig::rolling_window, "rolling window length in seconds"),
      make_field("rolling_step", &RunConfig::rolling_step, "rolling window step in seconds"),
      make_field("warm_start", &RunConfig::warm_start, "start each window from the previous estimate"),
      make_field("rolling_max_iter", &RunConfig::rolling_max_iter, "iteration cap of each rolling fit"),
      make_field("min_segment", &RunConfig::min_segment, "minimum segment length in seconds"),
      make_field("smoothed_association", &RunConfig::smoothed_association,
                 "scale the association by smoothed-state standard deviations"),
      make_field("wcc_window", &RunConfig::wcc_window, "cross-correlation window in rolling steps"),
      make_field("wcc_window_inc", &RunConfig::wcc_window_inc, "cross-correlation window increment"),
      make_field("wcc_max_lag", &RunConfig::wcc_max_lag, "largest cross-correlation lag"),
      make_field("wcc_lag_inc", &RunConfig::wcc_lag_inc, "cross-correlation lag increment"),
      make_field("wcc_detrend", &RunConfig::wcc_detrend, "remove a linear trend in each window"),
      make_field("duration", &RunConfig::duration, "simulated session length in seconds"),
      make_field("raw", &RunConfig::raw, "simulate raw sensor files instead of a feature table"),
  };
  return all;
}

// ---------------------------------------------------------------------------
// Output helpers.

struct Context {
  RunConfig cfg;
  std::string hash;
  fs::path dir;
  std::vector<std::string> outputs;

  explicit Context(const RunConfig& c) : cfg(c), hash(config_hash(c)), dir(c.output_dir) {
    fs::create_directories(dir);
  }

  std::string comment() const { return "config_hash: " + hash + " seed: " + std::to_string(cfg.seed); }

  std::string path(const std::string& name) {
    outputs.push_back(name);
    return (dir / name).string();
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << text;
}

std::string number_text(double v) { return std::isfinite(v) ? format_number(v) : ""; }

ordered_json json_number(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

/// Prepends the config hash and seed to a JSON report.
std::string stamped(const std::string& report, const Context& ctx) {
  const ordered_json body = ordered_json::parse(report);
  ordered_json j;
  j["config_hash"] = ctx.hash;
  j["seed"] = ctx.cfg.seed;
  for (const auto& [k, v] : body.items()) j[k] = v;
  return j.dump(2) + "\n";
}

void write_manifest(Context& ctx, const std::string& command, ordered_json extra) {
  ordered_json j;
  j["command"] = command;
  j["config_hash"] = ctx.hash;
  j["seed"] = ctx.cfg.seed;
  j["versions"] = {{"lvssm", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)}};
  j["config"] = ordered_json::parse(config_to_json(ctx.cfg));
  for (const auto& [k, v] : extra.items()) j[k] = v;
  j["outputs"] = ctx.outputs;
  write_text((ctx.dir / (command + "_manifest.json")).string(), j.dump(2) + "\n");
}

/// CSV with a string key column followed by numeric columns.
void write_keyed_csv(const std::string& path, const std::string& comment, const std::vector<std::string>& header,
                     const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
  std::ostringstream out;
  out << "# " << comment << "\n";
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << "\n";
  for (const auto& [key, values] : rows) {
    out << key;
    for (double v : values) out << "," << number_text(v);
    out << "\n";
  }
  write_text(path, out.str());
}

void require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw DataError("missing input file: " + path.string());
}

std::string default_path(const RunConfig& cfg, const std::string& given, const std::string& name) {
  return given.empty() ? (fs::path(cfg.output_dir) / name).string() : given;
}

std::string features_path(const RunConfig& cfg) {
  return cfg.features.empty() ? (fs::path(cfg.output_dir) / "features.csv").string() : cfg.features.front();
}

TimeSeriesTable load_table(const std::string& path, const std::string& time_column = "t") {
  require_file(path);
  CsvSchema schema;
  schema.time_column = time_column;
  return load_csv(path, schema);
}

std::vector<std::string> present(const std::vector<std::string>& wanted, const TimeSeriesTable& table) {
  std::vector<std::string> out;
  for (const auto& name : wanted)
    if (table.has_column(name)) out.push_back(name);
  return out;
}

ModelSpec builtin_spec(const std::string& name, const TimeSeriesTable& table) {
  const auto obs = present(feature_observation_columns(), table);
  const auto inputs = present(feature_input_columns(), table);
  if (name == "base") return build_base_spec(obs, inputs);
  return build_two_latent_spec(obs, inputs);
}

ModelSpec resolve_spec(const RunConfig& cfg, const TimeSeriesTable& table) {
  if (cfg.model == "base" || cfg.model == "two_latent") return builtin_spec(cfg.model, table);
  std::ifstream in(cfg.model, std::ios::binary);
  if (!in) throw ConfigError("model: '" + cfg.model + "' is neither a builtin name nor a readable spec file");
  std::ostringstream text;
  text << in.rdbuf();
  ModelSpec spec = spec_from_json(text.str());
  const auto problems = validate_spec(spec);
  if (!problems.empty()) throw ConfigError("model spec " + cfg.model + ": " + problems.front());
  return spec;
}

FitOptions fit_options(const RunConfig& cfg) {
  FitOptions o;
  o.max_iter = cfg.max_iter;
  o.tol = cfg.tol;
  o.refine = cfg.refine;
  o.seed = cfg.seed;
  o.starts = cfg.starts;
  o.standard_errors = cfg.standard_errors;
  return o;
}

std::string safe_name(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
  return s;
}

/// Values of `table` column `name` on rows 0..n-1, missing past its end.
std::vector<double> aligned(const TimeSeriesTable& table, const std::string& name, std::size_t n) {
  std::vector<double> out(n, kMissing);
  const auto& col = table.column(name);
  for (std::size_t i = 0; i < n && i < col.size(); ++i) out[i] = col[i];
  return out;
}

std::string find_column(const TimeSeriesTable& table, const std::vector<std::string>& candidates,
                        const std::string& file) {
  for (const auto& c : candidates)
    if (table.has_column(c)) return c;
  throw DataError(file + ": missing column '" + candidates.front() + "'");
}

// ---------------------------------------------------------------------------
// Feature extraction stages.

std::vector<double> gte_on_grid(const TimeSeriesTable& gaze, const RunConfig& cfg, std::size_t n,
                                ordered_json& info) {
  const auto& ts = gaze.timestamps();
  if (ts.size() < 2 || !(ts.back() > ts.front())) throw DataError("gaze.csv: need at least two distinct timestamps");
  const double rate = static_cast<double>(ts.size() - 1) / (ts.back() - ts.front());
  const auto window = static_cast<std::size_t>(std::max(2.0, std::round(cfg.gte_window * rate)));
  const auto step = static_cast<std::size_t>(std::max(1.0, std::round(rate)));
  const auto& gx = gaze.column(find_column(gaze, {"gaze_x", "x"}, "gaze.csv"));
  const auto& gy = gaze.column(find_column(gaze, {"gaze_y", "y"}, "gaze.csv"));
  const AoiGrid grid = AoiGrid::from_range(gx, gy, cfg.aoi_rows, cfg.aoi_cols);
  const EntropySeries es = windowed_gte(bin_gaze(gx, gy, grid), window, step, grid.cells());
  info["gaze_rate_hz"] = rate;
  info["gte_window_samples"] = window;
  info["gte_step_samples"] = step;
  if (es.value.size() < 2) return std::vector<double>(n, kMissing);
  std::vector<double> t;
  for (std::size_t i : es.end_index) t.push_back(ts[i]);
  const TimeSeriesTable g(std::move(t), {"GTE"}, {es.value});
  return aligned(resample_uniform(g, 1.0), "GTE", n);
}

std::vector<double> hold_on_grid(const TimeSeriesTable& table, const std::vector<double>& values,
                                 const std::vector<double>& grid) {
  const auto& ts = table.timestamps();
  std::vector<double> out(grid.size(), 0.0);
  std::size_t j = 0;
  double last = kNaN;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::isfinite(values[i])) {
      last = values[i];
      break;
    }
  }
  if (std::isnan(last)) last = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    while (j < ts.size() && ts[j] <= grid[g]) {
      if (std::isfinite(values[j])) last = values[j];
      ++j;
    }
    out[g] = last;
  }
  return out;
}

ordered_json column_stats(const TimeSeriesTable& table) {
  ordered_json stats = ordered_json::object();
  for (std::size_t c = 0; c < table.cols(); ++c) {
    const auto& col = table.column(c);
    double sum = 0.0, ss = 0.0;
    long count = 0;
    for (double v : col)
      if (!std::isnan(v)) sum += v, ++count;
    const double mean = count ? sum / count : kNaN;
    for (double v : col)
      if (!std::isnan(v)) ss += (v - mean) * (v - mean);
    stats[table.names()[c]] = {{"mean", json_number(mean)},
                               {"sd", json_number(count > 1 ? std::sqrt(ss / (count - 1)) : kNaN)},
                               {"missing", static_cast<long>(col.size()) - count}};
  }
  return stats;
}

// ---------------------------------------------------------------------------

struct ParticipantFits {
  std::string id;
  ModelSpec base_spec;
  ModelSpec alt_spec;
  FitResult base;
  FitResult alt;
};

}  // namespace

// ---------------------------------------------------------------------------

void validate(const RunConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  need(!c.model.empty(), "model must be set");
  need(!c.output_dir.empty(), "output_dir must be set");
  need(c.workers >= 0, "workers must be >= 0");
  need(c.gte_window > 0, "gte_window must be positive");
  need(c.aoi_rows >= 1 && c.aoi_cols >= 1, "aoi grid needs at least one cell");
  need(c.bcp_iterations > c.bcp_burnin && c.bcp_burnin >= 0, "bcp_iterations must exceed bcp_burnin >= 0");
  need(c.bcp_p0 > 0 && c.bcp_p0 <= 1 && c.bcp_w0 > 0 && c.bcp_w0 <= 1, "bcp priors must lie in (0, 1]");
  need(c.rare_k > 0, "rare_k must be positive");
  need(c.rare_scale == "residual" || c.rare_scale == "series", "rare_scale must be residual or series");
  need(c.prob_floor > 0 && c.prob_floor < 1, "prob_floor must lie in (0, 1)");
  need(c.stride >= 1, "stride must be >= 1");
  need(c.max_iter >= 0 && c.rolling_max_iter >= 0, "iteration caps must be >= 0");
  need(c.tol > 0, "tol must be positive");
  need(c.starts >= 1, "starts must be >= 1");
  need(c.rolling_window > 0 && c.rolling_step > 0, "rolling window and step must be positive");
  need(c.min_segment > 0, "min_segment must be positive");
  need(c.wcc_window >= 4, "wcc_window must be >= 4");
  need(c.wcc_window_inc >= 1 && c.wcc_lag_inc >= 1, "wcc increments must be >= 1");
  need(c.wcc_max_lag >= 0, "wcc_max_lag must be >= 0");
  need(c.duration >= 1, "duration must be >= 1");
  need(c.participants.empty() || c.participants.size() == c.features.size(),
       "participants must match the number of feature tables");
}

std::string config_to_json(const RunConfig& c) {
  ordered_json j = ordered_json::object();
  for (const auto& f : fields()) f.to_json(c, j);
  return j.dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text, RunConfig base) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  for (const auto& [key, value] : j.items()) {
    auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) { return f.name == key; });
    if (it == fields().end()) throw ConfigError("config: unknown key '" + key + "'");
    it->from_json(base, value);
  }
  return base;
}

std::string config_hash(const RunConfig& c) {
  // Where results land does not change them, so the output directory stays out.
  RunConfig keyed = c;
  keyed.output_dir.clear();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : config_to_json(keyed)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------

void cmd_features(const RunConfig& cfg) {
  validate(cfg);
  const fs::path in(cfg.input_dir.empty() ? "." : cfg.input_dir);
  for (const char* name : {"hr.csv", "gaze.csv", "aus.csv", "imu.csv", "objects.csv"}) require_file(in / name);
  Context ctx(cfg);
  ordered_json info;

  const TimeSeriesTable hr_raw = load_csv((in / "hr.csv").string());
  const std::string hr_col = find_column(hr_raw, {"hr", "HR"}, "hr.csv");
  const TimeSeriesTable hr_grid = resample_uniform(hr_raw.select_columns({hr_col}), 1.0);
  const std::size_t n = hr_grid.rows();

  FeatureSeries fs_;
  fs_.grid = hr_grid.timestamps();
  fs_.hr = hr_grid.column(hr_col);

  std::vector<std::size_t> observed;
  std::vector<double> hr_obs;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isnan(fs_.hr[i])) {
      observed.push_back(i);
      hr_obs.push_back(fs_.hr[i]);
    }
  }
  BcpOptions bo;
  bo.iterations = cfg.bcp_iterations;
  bo.burnin = cfg.bcp_burnin;
  bo.seed = cfg.seed;
  bo.p0 = cfg.bcp_p0;
  bo.w0 = cfg.bcp_w0;
  const BcpResult br = bcp(hr_obs, bo);
  fs_.bcp_mean.assign(n, kMissing);
  fs_.bcp_prob.assign(n, kMissing);
  for (std::size_t k = 0; k < observed.size(); ++k) {
    fs_.bcp_mean[observed[k]] = br.posterior_mean[k];
    fs_.bcp_prob[observed[k]] = br.change_prob[k];
  }

  const TimeSeriesTable aus_raw = load_csv((in / "aus.csv").string());
  std::vector<std::string> au_cols;
  for (const auto& au : action_unit_names()) {
    const std::string padded = "AU" + std::string(au.size() == 3 ? "0" : "") + au.substr(2) + "_r";
    au_cols.push_back(find_column(aus_raw, {au, padded}, "aus.csv"));
  }
  const TimeSeriesTable aus = resample_uniform(aus_raw.select_columns(au_cols), 1.0);
  for (std::size_t k = 0; k < au_cols.size(); ++k)
    fs_.action_units[action_unit_names()[k]] = aligned(aus, au_cols[k], n);

  fs_.gte = gte_on_grid(load_csv((in / "gaze.csv").string()), cfg, n, info);

  const TimeSeriesTable imu = load_csv((in / "imu.csv").string());
  auto axis = [&](const std::string& name) -> std::span<const double> {
    return imu.column(find_column(imu, {name}, "imu.csv"));
  };
  const ImuActivity act = imu_activity(imu.timestamps(), {axis("accel_x"), axis("accel_y"), axis("accel_z")},
                                       {axis("gyro_x"), axis("gyro_y"), axis("gyro_z")});
  fs_.hand_activity.assign(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const auto sec = static_cast<std::size_t>(std::llround(fs_.grid[s]));
    if (sec < act.per_second.size()) fs_.hand_activity[s] = act.per_second[sec];
  }

  const TimeSeriesTable objects = load_csv((in / "objects.csv").string());
  std::vector<double> road(objects.rows(), 0.0);
  if (objects.has_column("road_users")) {
    road = objects.column("road_users");
  } else {
    bool any = false;
    for (const char* kind : {"cars", "buses", "pedestrians", "motorcycles", "trucks"}) {
      if (!objects.has_column(kind)) continue;
      any = true;
      const auto& col = objects.column(kind);
      for (std::size_t i = 0; i < road.size(); ++i)
        if (!std::isnan(col[i])) road[i] += col[i];
    }
    if (!any) throw DataError("objects.csv: missing column 'road_users'");
  }
  fs_.road_users = hold_on_grid(objects, road, fs_.grid);

  const TimeSeriesTable table = assemble_feature_table(fs_);
  write_csv(table, ctx.path("features.csv"), "t", ctx.comment());
  const TimeSeriesTable bcp_table(fs_.grid, {"posterior_mean", "change_prob"}, {fs_.bcp_mean, fs_.bcp_prob});
  write_csv(bcp_table, ctx.path("bcp.csv"), "t", ctx.comment());

  ordered_json extra;
  extra["rows"] = n;
  extra["settings"] = info;
  extra["bcp"] = {{"iterations", br.iterations}, {"burnin", br.burnin}, {"seed", br.seed}};
  extra["column_stats"] = column_stats(table);
  write_manifest(ctx, "features", extra);
  std::cout << "features: " << n << " rows written to " << (ctx.dir / "features.csv").string() << "\n";
}

void cmd_fit(const RunConfig& cfg) {
  validate(cfg);
  const TimeSeriesTable table = load_table(features_path(cfg));
  const ModelSpec spec = resolve_spec(cfg, table);
  Context ctx(cfg);
  const FitData data = make_fit_data(table, spec, cfg.stride);
  const FitResult r = fit(spec, data, fit_options(cfg));
  const std::string name = safe_name(spec.name);
  write_text(ctx.path("fit_" + name + ".json"), stamped(fit_to_json(r, spec), ctx));
  write_text(ctx.path("spec_" + name + ".json"), spec_to_json(spec));
  ordered_json extra;
  extra["model"] = spec.name;
  extra["minus2ll"] = json_number(r.minus2ll);
  extra["converged"] = r.converged;
  extra["iterations"] = r.iterations;
  extra["free_parameters"] = r.free_parameters();
  write_manifest(ctx, "fit", extra);
  std::cout << "fit " << spec.name << ": -2LL " << format_number(r.minus2ll) << (r.converged ? "" : " (not converged)")
            << "\n";
}

void cmd_compare(const RunConfig& cfg) {
  validate(cfg);
  std::vector<std::string> paths = cfg.features;
  if (paths.empty()) paths.push_back(features_path(cfg));
  std::vector<std::string> ids = cfg.participants;
  for (std::size_t k = ids.size(); k < paths.size(); ++k) ids.push_back("P" + std::to_string(k + 1));
  Context ctx(cfg);

  std::vector<ParticipantFits> all(paths.size());
  const unsigned workers = static_cast<unsigned>(cfg.workers);
  // With several participants the threads go to participants; a single fit stays sequential.
  parallel_for(paths.size(), workers, [&](std::size_t k) {
    const TimeSeriesTable table = load_table(paths[k]);
    ParticipantFits& p = all[k];
    p.id = ids[k];
    p.base_spec = builtin_spec("base", table);
    p.alt_spec = builtin_spec("two_latent", table);
    const FitData data = make_fit_data(table, p.alt_spec, cfg.stride);
    std::tie(p.base, p.alt) = fit_nested_pair(p.base_spec, p.alt_spec, data, fit_options(cfg));
  });

  const bool single = all.size() == 1;
  std::vector<std::pair<std::string, std::vector<double>>> summary, fig4, fig5, fig6;
  ordered_json per = ordered_json::array();
  for (const ParticipantFits& p : all) {
    const fs::path sub = single ? fs::path() : fs::path(safe_name(p.id));
    if (!single) fs::create_directories(ctx.dir / sub);
    const ComparisonResult cmp = compare_models(p.base, p.alt);
    write_text(ctx.path((sub / "fit_base.json").string()), stamped(fit_to_json(p.base, p.base_spec), ctx));
    write_text(ctx.path((sub / "fit_two_latent.json").string()), stamped(fit_to_json(p.alt, p.alt_spec), ctx));
    write_text(ctx.path((sub / "comparison.json").string()), stamped(comparison_to_json(cmp), ctx));
    ordered_json row;
    row["id"] = p.id;
    row["base_minus2ll"] = json_number(cmp.base_minus2ll);
    row["two_latent_minus2ll"] = json_number(cmp.alternative_minus2ll);
    row["delta_ll"] = json_number(cmp.delta);
    row["base_converged"] = p.base.converged;
    row["two_latent_converged"] = p.alt.converged;
    std::cout << p.id << ": delta -2LL (base - two_latent) " << format_number(cmp.delta) << "\n";
    try {
      const ParticipantSummary s = participant_summary(p.base, p.alt, p.alt_spec, p.id);
      summary.push_back({p.id, {s.delta_ll, s.association, s.road_stress, s.road_workload, s.hand_stress,
                                s.hand_workload, s.b1, s.b4}});
      fig4.push_back({p.id, {s.association}});
      fig5.push_back({p.id, {s.road_stress, s.road_workload, s.hand_stress, s.hand_workload}});
      fig6.push_back({p.id, {s.b1, s.b4}});
      row["summarized"] = true;
    } catch (const NumericalError& e) {
      std::cerr << "warning: " << e.what() << "; left out of the summary tables\n";
      row["summarized"] = false;
    }
    per.push_back(std::move(row));
  }
  const std::string c = ctx.comment();
  write_keyed_csv(ctx.path("participant_summary.csv"), c,
                  {"id", "delta_ll", "association", "road_stress", "road_workload", "hand_stress", "hand_workload",
                   "b1", "b4"},
                  summary);
  write_keyed_csv(ctx.path("fig4_association.csv"), c, {"id", "association"}, fig4);
  write_keyed_csv(ctx.path("fig5_input_effects.csv"), c,
                  {"id", "road_stress", "road_workload", "hand_stress", "hand_workload"}, fig5);
  write_keyed_csv(ctx.path("fig6_transitions.csv"), c, {"id", "b1", "b4"}, fig6);
  ordered_json extra;
  extra["participants"] = per;
  write_manifest(ctx, "compare", extra);
}

void cmd_rolling(const RunConfig& cfg) {
  validate(cfg);
  const TimeSeriesTable table = load_table(features_path(cfg));
  const ModelSpec spec = resolve_spec(cfg, table);
  Context ctx(cfg);
  RollingOptions ro;
  ro.window = cfg.rolling_window;
  ro.step = cfg.rolling_step;
  ro.stride = cfg.stride;
  ro.warm_start = cfg.warm_start;
  ro.workers = cfg.workers;
  ro.fit = fit_options(cfg);
  ro.fit.max_iter = cfg.rolling_max_iter;
  ro.fit.standard_errors = false;
  const RollingFitSeries series = rolling_fit(table, spec, ro);

  std::vector<double> start, end, b1, b4, q2, ll, conv;
  long converged = 0;
  for (const auto& w : series) {
    start.push_back(w.start);
    end.push_back(w.end);
    b1.push_back(w.b1);
    b4.push_back(w.b4);
    q2.push_back(w.q2);
    ll.push_back(w.minus2ll);
    conv.push_back(w.converged ? 1.0 : 0.0);
    converged += w.converged;
  }
  const TimeSeriesTable out(start, {"window_end", "b1", "b4", "q2", "minus2ll", "converged"},
                            {end, b1, b4, q2, ll, conv});
  write_csv(out, ctx.path("rolling.csv"), "window_start", ctx.comment());
  ordered_json extra;
  extra["model"] = spec.name;
  extra["windows"] = series.size();
  extra["converged_windows"] = converged;
  ordered_json values = ordered_json::array();
  for (double v : ll) values.push_back(json_number(v));
  extra["minus2ll"] = values;
  write_manifest(ctx, "rolling", extra);
  std::cout << "rolling: " << series.size() << " windows, " << converged << " converged\n";
}

void cmd_segments(const RunConfig& cfg) {
  validate(cfg);
  const TimeSeriesTable table = load_table(features_path(cfg));
  const TimeSeriesTable bcp_table = load_table(default_path(cfg, cfg.bcp_csv, "bcp.csv"));
  if (bcp_table.rows() != table.rows()) throw DataError("bcp.csv: row count does not match the feature table");
  const ModelSpec spec = resolve_spec(cfg, table);
  Context ctx(cfg);

  BcpResult br;
  br.posterior_mean = bcp_table.column("posterior_mean");
  br.change_prob = bcp_table.column("change_prob");
  for (double& p : br.change_prob)
    if (std::isnan(p)) p = 0.0;
  RareEventOptions re;
  re.k = cfg.rare_k;
  re.prob_floor = cfg.prob_floor;
  re.scale = cfg.rare_scale == "series" ? JumpScale::Series : JumpScale::Residual;
  const SegmentBoundaries bounds = rare_events(table.column("HR"), br, re);

  SegmentOptions so;
  so.min_length = cfg.min_segment;
  so.stride = cfg.stride;
  so.workers = cfg.workers;
  so.fit = fit_options(cfg);
  const auto segs = segment_fit(table, spec, bounds, so);

  std::vector<double> start, end, b1, b4, q2, assoc, ll, conv;
  ordered_json values = ordered_json::array();
  for (const auto& s : segs) {
    const ParamSet ps = unpack(s.fit.estimates, spec);
    start.push_back(s.start_time);
    end.push_back(s.end_time);
    b1.push_back(ps.A(0, 0));
    b4.push_back(ps.latents() > 1 ? ps.A(1, 1) : kNaN);
    q2.push_back(ps.latents() > 1 ? ps.Q(1, 0) : kNaN);
    double a = kNaN;
    if (ps.latents() > 1) {
      try {
        a = normalized_association(s.fit, spec);
      } catch (const NumericalError&) {
      }
    }
    assoc.push_back(a);
    ll.push_back(s.fit.minus2ll);
    conv.push_back(s.fit.converged ? 1.0 : 0.0);
    values.push_back(json_number(s.fit.minus2ll));
  }
  const TimeSeriesTable out(start, {"segment_end", "b1", "b4", "q2", "association", "minus2ll", "converged"},
                            {end, b1, b4, q2, assoc, ll, conv});
  write_csv(out, ctx.path("fig7_segments.csv"), "segment_start", ctx.comment());
  ordered_json extra;
  extra["model"] = spec.name;
  extra["boundaries"] = bounds.indices;
  extra["segments"] = segs.size();
  extra["minus2ll"] = values;
  write_manifest(ctx, "segments", extra);
  std::cout << "segments: " << bounds.indices.size() << " boundaries, " << segs.size() << " segments fitted\n";
}

void cmd_wcc(const RunConfig& cfg) {
  validate(cfg);
  const TimeSeriesTable rolling = load_table(default_path(cfg, cfg.rolling_csv, "rolling.csv"), "window_start");
  Context ctx(cfg);
  RollingFitSeries series(rolling.rows());
  for (std::size_t i = 0; i < rolling.rows(); ++i) {
    RollingWindow& w = series[i];
    w.start = rolling.timestamps()[i];
    w.end = rolling.column("window_end")[i];
    w.b1 = rolling.column("b1")[i];
    w.b4 = rolling.column("b4")[i];
    w.q2 = rolling.column("q2")[i];
    w.minus2ll = rolling.column("minus2ll")[i];
    w.converged = rolling.column("converged")[i] > 0.5 && std::isfinite(w.b1) && std::isfinite(w.b4);
  }
  WccOptions wo;
  wo.window = cfg.wcc_window;
  wo.window_inc = cfg.wcc_window_inc;
  wo.max_lag = cfg.wcc_max_lag;
  wo.lag_inc = cfg.wcc_lag_inc;
  wo.detrend = cfg.wcc_detrend;
  const TransitionSync ts = transition_coefficient_wcc(series, wo);

  std::vector<double> t, lag, r;
  for (std::size_t row = 0; row < ts.wcc.window_start.size(); ++row) {
    const double start = series[static_cast<std::size_t>(ts.wcc.window_start[row])].start;
    for (std::size_t c = 0; c < ts.wcc.lags.size(); ++c) {
      t.push_back(start);
      lag.push_back(ts.wcc.lags[c]);
      r.push_back(ts.wcc.values(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)));
    }
  }
  write_csv(TimeSeriesTable(t, {"lag", "r"}, {lag, r}), ctx.path("fig8_wcc.csv"), "window_start", ctx.comment());

  std::vector<double> pt, plag, pr, flag, miss;
  for (std::size_t i = 0; i < ts.peaks.window_start.size(); ++i) {
    pt.push_back(series[static_cast<std::size_t>(ts.peaks.window_start[i])].start);
    plag.push_back(ts.peaks.missing[i] ? kNaN : ts.peaks.lag[i]);
    pr.push_back(ts.peaks.r[i]);
    flag.push_back(ts.peaks.flagged[i] ? 1.0 : 0.0);
    miss.push_back(ts.peaks.missing[i] ? 1.0 : 0.0);
  }
  write_csv(TimeSeriesTable(pt, {"peak_lag", "peak_r", "flagged", "missing"}, {plag, pr, flag, miss}),
            ctx.path("fig8_peaks.csv"), "window_start", ctx.comment());

  std::vector<double> xl(ts.xcorr.lags.begin(), ts.xcorr.lags.end());
  write_csv(TimeSeriesTable(xl, {"r"}, {ts.xcorr.r}), ctx.path("fig8_xcorr.csv"), "lag", ctx.comment());

  ordered_json extra;
  extra["windows"] = ts.wcc.window_start.size();
  extra["all_missing"] = ts.all_missing;
  write_manifest(ctx, "wcc", extra);
  if (ts.all_missing) std::cerr << "warning: every windowed correlation is undefined (constant series)\n";
  std::cout << "wcc: " << ts.wcc.window_start.size() << " windows x " << ts.wcc.lags.size() << " lags\n";
}

void cmd_simulate(const RunConfig& cfg) {
  validate(cfg);
  ModelSpec spec;
  if (cfg.model == "base" || cfg.model == "two_latent") {
    const auto& obs = feature_observation_columns();
    const auto& inputs = feature_input_columns();
    spec = cfg.model == "base" ? build_base_spec(obs, inputs) : build_two_latent_spec(obs, inputs);
  } else {
    spec = resolve_spec(cfg, TimeSeriesTable());
  }
  Context ctx(cfg);
  const ParamSet truth = reference_truth(spec);
  if (cfg.raw) {
    const RawSession raw = simulate_raw_session(spec, truth, cfg.duration, cfg.seed, cfg.stride);
    for (const char* name : {"hr.csv", "gaze.csv", "aus.csv", "imu.csv", "objects.csv"}) ctx.outputs.push_back(name);
    write_raw_session(raw, ctx.dir.string(), ctx.comment());
  } else {
    const SimulatedSession sim = simulate_session(spec, truth, cfg.duration, cfg.seed, cfg.stride);
    write_csv(sim.features, ctx.path("features.csv"), "t", ctx.comment());
  }
  const PackedParams packed = pack(truth, spec);
  ordered_json j;
  j["config_hash"] = ctx.hash;
  j["seed"] = cfg.seed;
  j["model"] = spec.name;
  ordered_json params = ordered_json::object();
  for (std::size_t k = 0; k < packed.labels.size(); ++k)
    params[packed.labels[k]] = packed.values(static_cast<Eigen::Index>(k));
  j["parameters"] = params;
  write_text(ctx.path("truth.json"), j.dump(2) + "\n");
  ordered_json extra;
  extra["model"] = spec.name;
  extra["duration"] = cfg.duration;
  extra["raw"] = cfg.raw;
  write_manifest(ctx, "simulate", extra);
  std::cout << "simulate: " << cfg.duration << " s session written to " << ctx.dir.string() << "\n";
}

// ---------------------------------------------------------------------------

int run_cli(int argc, char** argv) {
  CLI::App app{"Latent-variable state-space models for multimodal driver data"};
  app.require_subcommand(1);
  std::string config_path;

  struct Command {
    const char* name;
    const char* help;
    void (*run)(const RunConfig&);
  };
  const std::vector<Command> commands = {
      {"features", "extract the 1 Hz feature table from raw sensor files", cmd_features},
      {"fit", "fit one model to a feature table", cmd_fit},
      {"compare", "fit the base and two-latent models and compare them", cmd_compare},
      {"rolling", "refit the model over sliding windows", cmd_rolling},
      {"segments", "fit the model within heart-rate change-point segments", cmd_segments},
      {"wcc", "windowed cross-correlation of the rolling transition coefficients", cmd_wcc},
      {"simulate", "write a simulated session", cmd_simulate},
  };

  RunConfig flags;
  std::vector<std::pair<CLI::Option*, const Field*>> bound;
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "JSON config file; flags override its values");
    for (const auto& f : fields()) bound.emplace_back(f.add_flag(*sub, flags), &f);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path, std::ios::binary);
      if (!in) throw ConfigError("config: cannot read " + config_path);
      std::ostringstream text;
      text << in.rdbuf();
      cfg = config_from_json(text.str());
    }
    for (const auto& [opt, f] : bound)
      if (opt->count() > 0) f->copy(cfg, flags);
    for (std::size_t k = 0; k < subs.size(); ++k) {
      if (subs[k]->parsed()) commands[k].run(cfg);
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace lvssm
