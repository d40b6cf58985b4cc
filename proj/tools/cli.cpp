#include "cli.hpp"

#include "knnloc/data.hpp"
#include "knnloc/distroc.hpp"
#include "knnloc/errors.hpp"
#include "knnloc/parallel.hpp"
#include "knnloc/pipeline.hpp"
#include "knnloc/rng.hpp"
#include "knnloc/serialize.hpp"
#include "knnloc/simbench.hpp"
#include "knnloc/uncertainty.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace knnloc::cli {

namespace {

namespace fs = std::filesystem;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string file_hash(const fs::path& path) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(read_file(path))));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string());
  }
}

char delimiter_char(const std::string& s) {
  if (s == "\\t" || s == "tab") return '\t';
  if (s.size() != 1) throw std::invalid_argument("delimiter must be a single character");
  return s[0];
}

KGridPolicy parse_k_grid(const std::string& spec) {
  KGridPolicy g;
  if (spec == "auto") return g;
  if (spec == "full") {
    g.kind = KGridPolicy::Kind::full;
    return g;
  }
  if (spec == "geometric") {
    g.kind = KGridPolicy::Kind::geometric;
    return g;
  }
  g.kind = KGridPolicy::Kind::explicit_values;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    Index v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size() || v < 1) {
      throw std::invalid_argument("k grid: cannot read '" + item +
                                  "' (use auto, full, geometric or a list like 1,5,10)");
    }
    g.values.push_back(v);
  }
  if (g.values.empty()) throw std::invalid_argument("k grid: empty list");
  return g;
}

// Flag combinations CLI11 cannot check on its own; exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool on_off(const std::string& s) { return s == "on"; }

// ---------------------------------------------------------------------------
// Options shared by every subcommand.

struct Common {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
  std::size_t threads = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c, const std::string& out_help) {
  c.seed_opt = sub->add_option("--seed", c.seed, "Master random seed");
  sub->add_option("--config", c.config, "JSON configuration file");
  sub->add_option("--out", c.out, out_help);
  c.threads_opt = sub->add_option("--threads", c.threads,
                                  "Worker threads (default: KNNLOC_THREADS or all cores)")
                      ->check(CLI::PositiveNumber);
}

// Pipeline flags used by fit, select and roc.
struct PipelineFlags {
  std::string data;
  std::string target = "y";
  std::string delimiter = ",";
  double alpha = 0.05;
  double interval_alpha = 0.1;
  std::string interval_mode = "gaussian";
  std::string fs = "on";
  std::string standardize = "on";
  std::string k_grid = "auto";
  CLI::Option* alpha_opt = nullptr;
  CLI::Option* interval_alpha_opt = nullptr;
  CLI::Option* interval_mode_opt = nullptr;
  CLI::Option* fs_opt = nullptr;
  CLI::Option* standardize_opt = nullptr;
  CLI::Option* k_grid_opt = nullptr;
};

void add_pipeline_flags(CLI::App* sub, PipelineFlags& f, bool with_interval) {
  f.alpha_opt = sub->add_option("--alpha", f.alpha, "Family level of the selection tests")
                    ->check(CLI::Range(0.0, 1.0));
  if (with_interval) {
    f.interval_alpha_opt =
        sub->add_option("--interval-alpha", f.interval_alpha, "Interval miscoverage level")
            ->check(CLI::Range(0.0, 1.0));
    f.interval_mode_opt =
        sub->add_option("--interval-mode", f.interval_mode, "Error law for intervals")
            ->check(CLI::IsMember({"gaussian", "empirical"}));
  }
  f.fs_opt = sub->add_option("--fs", f.fs, "Variable selection")->check(CLI::IsMember({"on", "off"}));
  f.standardize_opt = sub->add_option("--standardize", f.standardize, "Feature standardization")
                          ->check(CLI::IsMember({"on", "off"}));
  f.k_grid_opt = sub->add_option("--k-grid", f.k_grid,
                                 "k candidates: auto, full, geometric or a list like 1,5,10");
}

// A manifest written by an earlier run can stand in for --config.
bool is_manifest(const Json& j) {
  return j.is_object() && j.value("tool", "") == "knnloc" && j.contains("config");
}

struct Resolved {
  PipelineConfig config;
  Json config_json;
};

Resolved resolve_config(const Common& c, const PipelineFlags& f) {
  PipelineConfig cfg;
  if (!c.config.empty()) {
    Json j = read_json(c.config);
    if (is_manifest(j)) j = j.at("config").at("pipeline");
    cfg = config_from_json(j);
    if (j.contains("threads") && c.threads_opt->count() == 0) {
      set_num_threads(j["threads"].get<std::size_t>());
    }
  }
  if (c.seed_opt->count()) cfg.seed = c.seed;
  if (f.alpha_opt->count()) cfg.selection_alpha = f.alpha;
  if (f.interval_alpha_opt && f.interval_alpha_opt->count()) cfg.interval_alpha = f.interval_alpha;
  if (f.interval_mode_opt && f.interval_mode_opt->count()) {
    cfg.error_mode = error_mode_from_string(f.interval_mode);
  }
  if (f.fs_opt->count()) cfg.feature_selection = on_off(f.fs);
  if (f.standardize_opt->count()) cfg.standardize = on_off(f.standardize);
  if (f.k_grid_opt->count()) cfg.k_grid = parse_k_grid(f.k_grid);
  cfg.validate();
  return {cfg, to_json(cfg)};
}

void apply_threads(const Common& c) {
  if (c.threads_opt->count()) set_num_threads(c.threads);
}

// ---------------------------------------------------------------------------
// Manifest

struct Manifest {
  std::string subcommand;
  Json config = Json::object();
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<std::string> artifacts;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const fs::path& dir) const {
    Json j;
    j["tool"] = "knnloc";
    j["version"] = kVersion;
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["config"] = config;
    Json in = Json::array();
    for (const auto& [role, path] : inputs) {
      in.push_back({{"role", role}, {"path", path}, {"fnv1a64", file_hash(path)}});
    }
    j["inputs"] = std::move(in);
    Json out = Json::array();
    for (const auto& name : artifacts) {
      out.push_back({{"file", name}, {"fnv1a64", file_hash(dir / name)}});
    }
    j["artifacts"] = std::move(out);
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_json(dir / "manifest.json", j);
  }
};

// ---------------------------------------------------------------------------
// Rendering

void write_selection_table(std::ostream& os, const SelectionReport& r,
                           const std::vector<std::string>& names) {
  os << (r.target == SelectionTarget::mean ? "Mean" : "Variance") << " selection (alpha "
     << short_num(r.alpha) << ", " << r.n_tests << " tests, threshold "
     << (r.n_tests > 0 ? short_num(r.threshold()) : std::string("-")) << ")\n";
  if (r.features.empty()) {
    os << "  skipped: every candidate kept\n";
    return;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "  %-16s %12s %12s %12s %12s  %s\n", "feature", "w_tilde", "t",
                "p", "threshold", "decision");
  os << buf;
  for (const FeatureTest& f : r.features) {
    const std::string& name = names.at(static_cast<std::size_t>(f.feature));
    std::snprintf(buf, sizeof buf, "  %-16s %12.5g %12.5g %12.5g %12.5g  %s\n", name.c_str(),
                  f.w_tilde, f.t, f.p, r.threshold(), f.selected ? "selected" : "dropped");
    os << buf;
  }
}

Json selection_json(const SelectionReport& mean, const SelectionReport& variance,
                    const std::vector<std::string>& names) {
  Json j;
  j["feature_names"] = names;
  j["mean"] = to_json(mean);
  j["variance"] = to_json(variance);
  return j;
}

std::string matrix_csv(const std::vector<std::string>& header, const Eigen::MatrixXd& m) {
  std::string s;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) s += ',';
    s += csv_field(header[c]);
  }
  s += '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) s += ',';
      s += num(m(r, c));
    }
    s += '\n';
  }
  return s;
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    const fs::path p(path);
    if (p.has_parent_path()) ensure_dir(p.parent_path());
    write_text(p, text);
  }
}

// ---------------------------------------------------------------------------
// Subcommands

struct FitCommand {
  Common common;
  PipelineFlags flags;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("fit", "Fit a scale-location model and write its artifacts");
    sub->add_option("--data", flags.data, "Training CSV with a header row")->required();
    sub->add_option("--target", flags.target, "Response column");
    sub->add_option("--delimiter", flags.delimiter, "Field delimiter");
    add_pipeline_flags(sub, flags, true);
    add_common(sub, common, "Output directory (required)");
    sub->get_option("--out")->required();
  }

  int execute(std::ostream& out) {
    apply_threads(common);
    Manifest manifest;
    manifest.subcommand = "fit";
    const Resolved cfg = resolve_config(common, flags);
    const Dataset data = load_csv(flags.data, flags.target, delimiter_char(flags.delimiter));
    const PipelineResult res = fit_pipeline(data, cfg.config);

    const fs::path dir(common.out);
    ensure_dir(dir);
    save_model(dir / "model.json", res.model);
    write_json(dir / "selection.json",
               selection_json(res.mean_report, res.variance_report, data.feature_names));
    write_json(dir / "ktrace.json", {{"mean", to_json(res.mean_k)}, {"variance", to_json(res.variance_k)}});
    write_json(dir / "splits.json", to_json(res.plan));

    manifest.seed = cfg.config.seed;
    manifest.config = {{"data", flags.data}, {"target", flags.target},
                       {"delimiter", flags.delimiter}, {"pipeline", cfg.config_json}};
    manifest.inputs = {{"data", flags.data}};
    manifest.artifacts = {"model.json", "selection.json", "ktrace.json", "splits.json"};
    manifest.write(dir);

    write_selection_table(out, res.mean_report, data.feature_names);
    write_selection_table(out, res.variance_report, data.feature_names);
    out << "k1 = " << res.model.mean.k()
        << (res.model.mean.is_constant() ? " (constant mean)" : "") << ", k2 = "
        << res.model.variance.k()
        << (res.model.variance.homoscedastic() ? " (homoscedastic)" : "") << '\n';
    return ok;
  }
};

struct SelectCommand {
  Common common;
  PipelineFlags flags;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("select", "Run variable selection only and report the tests");
    sub->add_option("--data", flags.data, "Training CSV with a header row")->required();
    sub->add_option("--target", flags.target, "Response column");
    sub->add_option("--delimiter", flags.delimiter, "Field delimiter");
    add_pipeline_flags(sub, flags, false);
    add_common(sub, common, "Output directory for selection.json and manifest.json");
  }

  int execute(std::ostream& out) {
    apply_threads(common);
    Manifest manifest;
    manifest.subcommand = "select";
    Resolved cfg = resolve_config(common, flags);
    cfg.config.feature_selection = true;
    const Dataset data = load_csv(flags.data, flags.target, delimiter_char(flags.delimiter));
    const SelectionRun res = run_selection(data, cfg.config);
    if (!common.out.empty()) {
      const fs::path dir(common.out);
      ensure_dir(dir);
      write_json(dir / "selection.json", selection_json(res.mean, res.variance, data.feature_names));
      write_json(dir / "splits.json", to_json(res.plan));
      manifest.seed = cfg.config.seed;
      manifest.config = {{"data", flags.data}, {"target", flags.target},
                         {"delimiter", flags.delimiter}, {"pipeline", cfg.config_json}};
      manifest.inputs = {{"data", flags.data}};
      manifest.artifacts = {"selection.json", "splits.json"};
      manifest.write(dir);
    }
    write_selection_table(out, res.mean, data.feature_names);
    write_selection_table(out, res.variance, data.feature_names);
    return ok;
  }
};

struct PredictCommand {
  Common common;
  std::string model;
  std::string data;
  std::string delimiter = ",";

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("predict", "Predict conditional mean and sd for each row");
    sub->add_option("--model", model, "model.json written by fit")->required();
    sub->add_option("--data", data, "CSV whose columns include the model features")->required();
    sub->add_option("--delimiter", delimiter, "Field delimiter");
    add_common(sub, common, "Output CSV (default: standard output)");
  }

  int execute(std::ostream& out) {
    apply_threads(common);
    const ScaleLocModel m = load_model(model);
    const Table table = load_table(data, delimiter_char(delimiter));
    const Eigen::MatrixXd pred = m.predict_rows(aligned_features(m, table));
    emit(matrix_csv({"mean", "sd"}, pred), common.out, out);
    return ok;
  }
};

struct IntervalCommand {
  Common common;
  std::string model;
  std::string data;
  std::string delimiter = ",";
  double alpha = 0.1;
  std::string mode;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("interval", "Prediction intervals m(x) -/+ c sigma(x)");
    sub->add_option("--model", model, "model.json written by fit")->required();
    sub->add_option("--data", data, "CSV whose columns include the model features")->required();
    sub->add_option("--delimiter", delimiter, "Field delimiter");
    sub->add_option("--alpha", alpha, "Miscoverage level")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--interval-mode", mode, "gaussian or empirical (default: the model's mode)")
        ->check(CLI::IsMember({"gaussian", "empirical"}));
    add_common(sub, common, "Output CSV (default: standard output)");
  }

  int execute(std::ostream& out) {
    apply_threads(common);
    const ScaleLocModel m = load_model(model);
    IntervalSpec spec;
    spec.alpha = alpha;
    spec.mode = mode.empty() ? m.error_mode : error_mode_from_string(mode);
    const Table table = load_table(data, delimiter_char(delimiter));
    const Eigen::MatrixXd iv = predict_intervals(m, aligned_features(m, table), spec);
    emit(matrix_csv({"prediction", "lower", "upper"}, iv), common.out, out);
    return ok;
  }
};

struct RocCommand {
  Common common;
  PipelineFlags flags;
  std::string diseased;
  std::string healthy;
  std::string group;
  std::string grid;
  int n_quad = 0;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("roc", "Covariate-conditional AUC under the gaussian model");
    sub->add_option("--diseased", diseased, "CSV of the diseased population");
    sub->add_option("--healthy", healthy, "CSV of the healthy population");
    sub->add_option("--data", flags.data, "Single CSV holding both populations");
    sub->add_option("--group", group, "0/1 column of --data (1 = diseased)");
    sub->add_option("--grid", grid, "CSV of covariate points")->required();
    sub->add_option("--target", flags.target, "Biomarker column");
    sub->add_option("--delimiter", flags.delimiter, "Field delimiter");
    sub->add_option("--n-quad", n_quad, "Also report the quadrature AUC with this many nodes")
        ->check(CLI::Range(2, 100000000));
    add_pipeline_flags(sub, flags, false);
    add_common(sub, common, "Output directory");
  }

  int execute(std::ostream& out) {
    apply_threads(common);
    Manifest manifest;
    manifest.subcommand = "roc";
    Resolved cfg = resolve_config(common, flags);
    cfg.config.error_mode = ErrorMode::gaussian;
    const char delim = delimiter_char(flags.delimiter);

    Dataset d_data, h_data;
    if (!flags.data.empty()) {
      if (!diseased.empty() || !healthy.empty()) {
        throw UsageError("roc: use either --data with --group or --diseased/--healthy");
      }
      if (group.empty()) throw UsageError("roc: --data needs --group");
      const Table t = load_table(flags.data, delim);
      const Index g = t.column(group);
      if (g < 0) throw std::invalid_argument("roc: group column '" + group + "' not found");
      std::vector<Index> d_rows, h_rows;
      for (Index r = 0; r < t.rows(); ++r) {
        const double v = t.values(r, g);
        if (v == 1.0) {
          d_rows.push_back(r);
        } else if (v == 0.0) {
          h_rows.push_back(r);
        } else {
          throw std::invalid_argument("roc: group column must hold 0 or 1 (row " +
                                      std::to_string(r + 1) + ")");
        }
      }
      const std::vector<std::string> skip{group};
      const Dataset all = to_dataset(t, flags.target, skip, flags.data);
      d_data = all.subset(d_rows);
      h_data = all.subset(h_rows);
      manifest.inputs = {{"data", flags.data}, {"grid", grid}};
    } else {
      if (diseased.empty() || healthy.empty()) {
        throw UsageError("roc: give --diseased and --healthy, or --data with --group");
      }
      d_data = load_csv(diseased, flags.target, delim);
      h_data = load_csv(healthy, flags.target, delim);
      if (d_data.feature_names != h_data.feature_names) {
        throw std::invalid_argument("roc: the two populations have different covariates");
      }
      manifest.inputs = {{"diseased", diseased}, {"healthy", healthy}, {"grid", grid}};
    }

    PipelineConfig d_cfg = cfg.config;
    PipelineConfig h_cfg = cfg.config;
    d_cfg.seed = derive_seed(cfg.config.seed, 1);
    h_cfg.seed = derive_seed(cfg.config.seed, 2);
    const RocModel roc(fit_pipeline(d_data, d_cfg).model, fit_pipeline(h_data, h_cfg).model);

    const Table grid_table = load_table(grid, delim);
    const Eigen::MatrixXd x = aligned_features(roc.diseased(), grid_table);
    const std::vector<double> aucs = auc_surface(roc, x);

    std::vector<std::string> header = roc.diseased().feature_names;
    header.push_back("auc");
    Eigen::MatrixXd table(x.rows(), x.cols() + 1 + (n_quad > 0 ? 1 : 0));
    table.leftCols(x.cols()) = x;
    for (Index r = 0; r < x.rows(); ++r) table(r, x.cols()) = aucs[static_cast<std::size_t>(r)];
    if (n_quad > 0) {
      header.push_back("auc_quadrature");
      for (Index r = 0; r < x.rows(); ++r) {
        table(r, x.cols() + 1) = auc_quadrature(roc, x.row(r).transpose(), n_quad);
      }
    }
    const std::string csv = matrix_csv(header, table);
    if (common.out.empty()) {
      out << csv;
      return ok;
    }
    const fs::path dir(common.out);
    ensure_dir(dir);
    write_text(dir / "auc.csv", csv);
    save_model(dir / "model_diseased.json", roc.diseased());
    save_model(dir / "model_healthy.json", roc.healthy());
    manifest.seed = cfg.config.seed;
    manifest.config = {{"target", flags.target}, {"group", group}, {"n_quad", n_quad},
                       {"pipeline", cfg.config_json}};
    manifest.artifacts = {"auc.csv", "model_diseased.json", "model_healthy.json"};
    manifest.write(dir);
    out << csv;
    return ok;
  }
};

struct SimulateCommand {
  Common common;
  std::vector<int> scenarios;
  std::vector<Index> p_list;
  std::vector<Index> n_list;
  Index runs = 30;
  Index n_test = 2000;
  std::string fs_mode = "both";
  bool full_grid = false;
  CLI::Option* scenario_opt = nullptr;
  CLI::Option* p_opt = nullptr;
  CLI::Option* n_opt = nullptr;
  CLI::Option* runs_opt = nullptr;
  CLI::Option* n_test_opt = nullptr;
  CLI::Option* fs_opt = nullptr;
  CLI::Option* full_grid_opt = nullptr;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("simulate", "Monte Carlo study over the scenario table");
    scenario_opt = sub->add_option("--scenario", scenarios, "Scenario ids 1..9")->check(CLI::Range(1, 9));
    p_opt = sub->add_option("--p", p_list, "Dimensions (default: largest of the regime)");
    n_opt = sub->add_option("--n", n_list, "Sample sizes (default: 2500 5000 10000)");
    runs_opt = sub->add_option("--runs", runs, "Monte Carlo runs per cell")->check(CLI::PositiveNumber);
    n_test_opt = sub->add_option("--n-test", n_test, "Test rows per run")->check(CLI::PositiveNumber);
    fs_opt = sub->add_option("--fs", fs_mode, "Feature selection blocks")
                 ->check(CLI::IsMember({"on", "off", "both"}));
    full_grid_opt = sub->add_flag("--full-grid", full_grid,
                                  "All regime dimensions, n in 5000..100000, 300 runs, "
                                  "5000 test rows (explicit flags still win)");
    add_common(sub, common, "Output directory for cells.csv, runs.csv, table.txt");
  }

  // Keys: scenarios, p, n, runs, n_test, fs, full_grid, seed, threads. A
  // manifest of an earlier simulate run is accepted as well.
  void load_config() {
    Json j = read_json(common.config);
    if (is_manifest(j)) {
      if (j.value("subcommand", "") != "simulate") {
        throw std::invalid_argument("config: manifest is not from a simulate run");
      }
      Json c = j.at("config");
      c.erase("pipeline");
      c["seed"] = j.at("seed");
      j = std::move(c);
    }
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
    try {
      for (const auto& [key, value] : j.items()) {
        if (key == "threads") {
          if (!common.threads_opt->count()) set_num_threads(value.get<std::size_t>());
        } else if (key == "seed") {
          if (!common.seed_opt->count()) common.seed = value.get<std::uint64_t>();
        } else if (key == "scenarios") {
          if (!scenario_opt->count()) scenarios = value.get<std::vector<int>>();
        } else if (key == "p") {
          if (!p_opt->count()) p_list = value.get<std::vector<Index>>();
        } else if (key == "n") {
          if (!n_opt->count()) n_list = value.get<std::vector<Index>>();
        } else if (key == "runs") {
          if (!runs_opt->count()) runs = value.get<Index>();
        } else if (key == "n_test") {
          if (!n_test_opt->count()) n_test = value.get<Index>();
        } else if (key == "fs") {
          if (!fs_opt->count()) fs_mode = value.get<std::string>();
        } else if (key == "full_grid") {
          if (!full_grid_opt->count()) full_grid = value.get<bool>();
        } else {
          throw std::invalid_argument("config: key '" + key + "' does not apply to simulate");
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("config: ") + e.what());
    }
    if (fs_mode != "on" && fs_mode != "off" && fs_mode != "both") {
      throw std::invalid_argument("config: fs must be on, off or both");
    }
    // Sizes given in the config win over the full-grid defaults.
    if (full_grid) {
      if (j.contains("runs")) runs_set = true;
      if (j.contains("n_test")) n_test_set = true;
      if (j.contains("n")) n_set = true;
    }
  }

  bool runs_set = false;
  bool n_test_set = false;
  bool n_set = false;

  int execute(std::ostream& out) {
    apply_threads(common);
    Manifest manifest;
    manifest.subcommand = "simulate";
    if (!common.config.empty()) load_config();
    if (scenarios.empty()) throw UsageError("simulate: --scenario is required");
    for (int s : scenarios) {
      if (s < 1 || s > 9) throw std::invalid_argument("simulate: scenario ids run from 1 to 9");
    }
    runs_set = runs_set || runs_opt->count();
    n_test_set = n_test_set || n_test_opt->count();
    n_set = n_set || n_opt->count();
    GridSpec grid;
    grid.scenarios = scenarios;
    grid.seed = common.seed;
    grid.runs = runs;
    grid.n_test = n_test;
    if (full_grid) {
      if (!runs_set) grid.runs = 300;
      if (!n_test_set) grid.n_test = 5000;
      if (!n_set) n_list = {5000, 10000, 20000, 50000, 100000};
    }
    if (!n_list.empty()) grid.n_list = n_list;
    if (fs_mode == "on") grid.fs_modes = {true};
    if (fs_mode == "off") grid.fs_modes = {false};

    std::vector<SimCell> cells;
    auto run_block = [&](const std::vector<Index>& ps, int scenario,
                         const std::function<void(const SimCell&)>& sink) {
      GridSpec g = grid;
      g.scenarios = {scenario};
      g.p_list = ps;
      for (SimCell& c : run_grid(g, sink)) cells.push_back(std::move(c));
    };

    std::ofstream partial;
    fs::path dir;
    if (!common.out.empty()) {
      dir = common.out;
      ensure_dir(dir);
      partial.open(dir / "cells.csv", std::ios::binary | std::ios::trunc);
      if (!partial) throw IoError("cannot write " + (dir / "cells.csv").string());
      partial << "scenario,p,n,fs,runs,mss_m,mss_sigma\n";
    }
    const auto sink = [&](const SimCell& c) {
      if (!partial.is_open()) return;
      partial << c.scenario << ',' << c.p << ',' << c.n << ','
              << (c.feature_selection ? "on" : "off") << ',' << c.runs.size() << ','
              << num(c.average.mean) << ',' << num(c.average.sigma) << '\n';
      partial.flush();
    };
    grid.validate();
    for (int s : scenarios) {
      std::vector<Index> ps = p_list;
      if (ps.empty()) {
        const auto dims = ScenarioSpec::regime_dimensions(s);
        ps = full_grid ? dims : std::vector<Index>{dims.back()};
      }
      run_block(ps, s, sink);
    }

    std::ostringstream table;
    write_table(table, cells);
    out << table.str();
    if (!dir.empty()) {
      partial.close();
      std::ostringstream runs_csv;
      write_runs_csv(runs_csv, cells);
      write_text(dir / "runs.csv", runs_csv.str());
      write_text(dir / "table.txt", table.str());
      Json cfg;
      cfg["scenarios"] = scenarios;
      cfg["p"] = p_list;
      cfg["n"] = grid.n_list;
      cfg["runs"] = grid.runs;
      cfg["n_test"] = grid.n_test;
      cfg["fs"] = fs_mode;
      cfg["full_grid"] = full_grid;
      cfg["pipeline"] = to_json(simulation_config(true));
      manifest.seed = common.seed;
      manifest.config = cfg;
      manifest.artifacts = {"cells.csv", "runs.csv", "table.txt"};
      manifest.write(dir);
    }
    return ok;
  }
};

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"knnloc: kNN scale-location regression, variable selection, "
               "prediction intervals and conditional ROC"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  FitCommand fit;
  SelectCommand select;
  PredictCommand predict;
  IntervalCommand interval;
  RocCommand roc;
  SimulateCommand simulate;
  fit.add(app);
  select.add(app);
  predict.add(app);
  interval.add(app);
  roc.add(app);
  simulate.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return usage_error;
  }

  auto fail = [&](const char* kind, int code, const std::string& message) {
    Json j{{"status", "error"}, {"kind", kind}, {"exit_code", code}, {"message", message}};
    err << j.dump() << '\n';
    return code;
  };
  try {
    if (app.got_subcommand("fit")) return fit.execute(out);
    if (app.got_subcommand("select")) return select.execute(out);
    if (app.got_subcommand("predict")) return predict.execute(out);
    if (app.got_subcommand("interval")) return interval.execute(out);
    if (app.got_subcommand("roc")) return roc.execute(out);
    if (app.got_subcommand("simulate")) return simulate.execute(out);
  } catch (const UsageError& e) {
    return fail("usage", usage_error, e.what());
  } catch (const IoError& e) {
    return fail("io", io_error, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail("io", io_error, e.what());
  } catch (const std::logic_error& e) {
    return fail("precondition", precondition_error, e.what());
  } catch (const std::exception& e) {
    return fail("internal", internal_error, e.what());
  }
  return fail("usage", usage_error, "no subcommand");
}

} // namespace knnloc::cli
