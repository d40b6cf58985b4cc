#include "knnloc/simbench.hpp"

#include "knnloc/parallel.hpp"
#include "knnloc/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>

namespace knnloc {

namespace {

Support range(Index first, Index last) {
  Support s;
  for (Index i = first; i <= last; ++i) s.push_back(i - 1);
  return s;
}

std::string linear_formula(double coef, const Support& terms, double constant) {
  if (terms.empty() || coef == 0.0) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", constant);
    return buf;
  }
  std::string s;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g*(", coef);
  s = buf;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i) s += " + ";
    s += "x" + std::to_string(terms[i] + 1);
  }
  s += ")";
  if (constant != 0.0) {
    std::snprintf(buf, sizeof buf, " + %g", constant);
    s += buf;
  }
  return s;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace

ScenarioSpec ScenarioSpec::table(int id, Index p) {
  ScenarioSpec s;
  s.id = id;
  s.p = p;
  s.mean_coef = 5.0;
  s.sd_const = 0.0;
  s.sd_coef = 5.0;
  switch (id) {
    case 1: s.mean_terms = range(2, 3); s.sd_const = 1.0; s.sd_coef = 0.0; break;
    case 2: s.mean_coef = 0.0; s.sd_terms = range(1, 1); break;
    case 3: s.mean_terms = range(2, 3); s.sd_terms = range(1, 1); break;
    case 4: s.mean_terms = range(1, 4); s.sd_const = 1.0; s.sd_coef = 0.0; break;
    case 5: s.mean_coef = 0.0; s.sd_terms = range(1, 4); break;
    case 6: s.mean_terms = range(1, 3); s.sd_terms = range(4, 5); break;
    case 7: s.mean_terms = range(1, 4); s.sd_terms = range(2, 5); break;
    case 8: s.mean_terms = range(1, 8); s.sd_const = 1.0; s.sd_coef = 0.0; break;
    case 9: s.mean_terms = range(1, 6); s.sd_terms = range(8, 10); break;
    default: throw std::invalid_argument("scenario id must be 1..9, got " + std::to_string(id));
  }
  s.validate();
  return s;
}

std::vector<Index> ScenarioSpec::regime_dimensions(int id) {
  if (id >= 1 && id <= 3) return {3, 10, 20, 25};
  if (id >= 4 && id <= 6) return {5, 10, 20, 50};
  if (id >= 7 && id <= 9) return {10, 25, 50, 100};
  throw std::invalid_argument("scenario id must be 1..9, got " + std::to_string(id));
}

void ScenarioSpec::validate() const {
  Index needed = 0;
  for (const Support* terms : {&mean_terms, &sd_terms}) {
    check_support(*terms, std::numeric_limits<Index>::max());
    if (!terms->empty()) needed = std::max(needed, terms->back() + 1);
  }
  if (p < needed) {
    throw std::invalid_argument("scenario " + std::to_string(id) + " uses x" +
                                std::to_string(needed) + " but p = " + std::to_string(p));
  }
  if (sd_const < 0.0 || sd_coef < 0.0) {
    throw std::invalid_argument("scenario " + std::to_string(id) +
                                ": sigma must be nonnegative on [0,1]^p");
  }
}

double ScenarioSpec::mean(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double s = 0.0;
  for (Index i : mean_terms) s += x(i);
  return mean_coef * s;
}

double ScenarioSpec::sd(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double s = 0.0;
  for (Index i : sd_terms) s += x(i);
  return sd_const + sd_coef * s;
}

std::string ScenarioSpec::mean_formula() const { return linear_formula(mean_coef, mean_terms, 0.0); }
std::string ScenarioSpec::sd_formula() const { return linear_formula(sd_coef, sd_terms, sd_const); }

Dataset generate(const ScenarioSpec& spec, Index n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("generate: n must be positive");
  Rng rng(seed);
  Eigen::MatrixXd x(n, spec.p);
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < spec.p; ++j) x(i, j) = rng.uniform();
    const double eps = rng.normal();
    const auto row = x.row(i).transpose();
    y(i) = spec.mean(row) + spec.sd(row) * eps;
  }
  return make_dataset(std::move(x), std::move(y));
}

MssValue mss(const Eigen::MatrixXd& predictions, const ScenarioSpec& spec,
             const Dataset& test) {
  if (predictions.rows() != test.rows() || predictions.cols() != 2) {
    throw std::invalid_argument("mss: need one (mean, sd) row per test row");
  }
  if (test.rows() < 1) throw std::invalid_argument("mss: empty test set");
  if (test.cols() != spec.p) throw std::invalid_argument("mss: test set has the wrong dimension");
  MssValue out;
  for (Index i = 0; i < test.rows(); ++i) {
    const auto x = test.features.row(i).transpose();
    const double dm = predictions(i, 0) - spec.mean(x);
    const double ds = predictions(i, 1) - spec.sd(x);
    out.mean += dm * dm;
    out.sigma += ds * ds;
  }
  out.mean /= static_cast<double>(test.rows());
  out.sigma /= static_cast<double>(test.rows());
  return out;
}

MssValue mss(const ScaleLocModel& model, const ScenarioSpec& spec, const Dataset& test) {
  return mss(model.predict_rows(test.features), spec, test);
}

RunSeeds run_seeds(std::uint64_t master, int scenario, Index p, Index n, Index run) {
  std::uint64_t s = derive_seed(master, static_cast<std::uint64_t>(scenario));
  s = derive_seed(s, static_cast<std::uint64_t>(p));
  s = derive_seed(s, static_cast<std::uint64_t>(n));
  s = derive_seed(s, static_cast<std::uint64_t>(run));
  return {s, derive_seed(s, 0), derive_seed(s, 1), derive_seed(s, 2)};
}

PipelineConfig simulation_config(bool feature_selection) {
  PipelineConfig c;
  c.standardize = false;
  c.error_mode = ErrorMode::gaussian;
  c.feature_selection = feature_selection;
  return c;
}

MssValue run_once(const ScenarioSpec& spec, Index n, Index n_test, bool feature_selection,
                  std::uint64_t master, Index run) {
  const RunSeeds seeds = run_seeds(master, spec.id, spec.p, n, run);
  const Dataset train = generate(spec, n, seeds.train);
  const Dataset test = generate(spec, n_test, seeds.test);
  PipelineConfig config = simulation_config(feature_selection);
  config.seed = seeds.pipeline;
  const PipelineResult fit = fit_pipeline(train, config);
  return mss(fit.model, spec, test);
}

void GridSpec::validate() const {
  if (scenarios.empty() || p_list.empty() || n_list.empty() || fs_modes.empty()) {
    throw std::invalid_argument("simulation grid: every axis needs at least one value");
  }
  if (runs < 1) throw std::invalid_argument("simulation grid: runs must be positive");
  if (n_test < 1) throw std::invalid_argument("simulation grid: n_test must be positive");
  for (int s : scenarios) {
    for (Index p : p_list) ScenarioSpec::table(s, p);
  }
}

std::vector<SimCell> run_grid(const GridSpec& grid,
                              const std::function<void(const SimCell&)>& on_cell) {
  grid.validate();
  std::vector<SimCell> cells;
  for (int s : grid.scenarios) {
    for (Index p : grid.p_list) {
      const ScenarioSpec spec = ScenarioSpec::table(s, p);
      for (Index n : grid.n_list) {
        for (bool fs : grid.fs_modes) {
          SimCell cell;
          cell.scenario = s;
          cell.p = p;
          cell.n = n;
          cell.feature_selection = fs;
          cell.runs.resize(static_cast<std::size_t>(grid.runs));
          parallel_for(cell.runs.size(), [&](std::size_t r) {
            cell.runs[r] = run_once(spec, n, grid.n_test, fs, grid.seed, static_cast<Index>(r));
          });
          for (const MssValue& v : cell.runs) {
            cell.average.mean += v.mean;
            cell.average.sigma += v.sigma;
          }
          cell.average.mean /= static_cast<double>(grid.runs);
          cell.average.sigma /= static_cast<double>(grid.runs);
          if (on_cell) on_cell(cell);
          cells.push_back(std::move(cell));
        }
      }
    }
  }
  return cells;
}

void write_cells_csv(std::ostream& out, const std::vector<SimCell>& cells) {
  out << "scenario,p,n,fs,runs,mss_m,mss_sigma\n";
  for (const SimCell& c : cells) {
    out << c.scenario << ',' << c.p << ',' << c.n << ',' << (c.feature_selection ? "on" : "off")
        << ',' << c.runs.size() << ',' << fmt_full(c.average.mean) << ','
        << fmt_full(c.average.sigma) << '\n';
  }
}

void write_runs_csv(std::ostream& out, const std::vector<SimCell>& cells) {
  out << "scenario,p,n,fs,run,mss_m,mss_sigma\n";
  for (const SimCell& c : cells) {
    for (std::size_t r = 0; r < c.runs.size(); ++r) {
      out << c.scenario << ',' << c.p << ',' << c.n << ','
          << (c.feature_selection ? "on" : "off") << ',' << r << ','
          << fmt_full(c.runs[r].mean) << ',' << fmt_full(c.runs[r].sigma) << '\n';
    }
  }
}

void write_table(std::ostream& out, const std::vector<SimCell>& cells) {
  std::vector<int> scenarios;
  for (const SimCell& c : cells) {
    if (std::find(scenarios.begin(), scenarios.end(), c.scenario) == scenarios.end()) {
      scenarios.push_back(c.scenario);
    }
  }
  for (int s : scenarios) {
    std::set<Index> ps, ns;
    std::map<std::tuple<bool, Index, Index>, const SimCell*> lookup;
    for (const SimCell& c : cells) {
      if (c.scenario != s) continue;
      ps.insert(c.p);
      ns.insert(c.n);
      lookup[{c.feature_selection, c.p, c.n}] = &c;
    }
    const ScenarioSpec spec = ScenarioSpec::table(s, *ps.rbegin());
    out << "Scenario " << s << ": m = " << spec.mean_formula()
        << ", sigma = " << spec.sd_formula() << '\n';
    for (bool fs : {true, false}) {
      bool any = false;
      for (const auto& [key, cell] : lookup) any = any || std::get<0>(key) == fs;
      if (!any) continue;
      out << (fs ? "  FS\n" : "  No FS\n");
      out << "  " << std::string(8, ' ');
      for (Index p : ps) {
        char buf[64];
        std::snprintf(buf, sizeof buf, " | p=%-4lld %8s %8s", static_cast<long long>(p), "MSS^m",
                      "MSS^sd");
        out << buf;
      }
      out << '\n';
      for (Index n : ns) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "  n=%-6lld", static_cast<long long>(n));
        out << buf;
        for (Index p : ps) {
          const auto it = lookup.find({fs, p, n});
          char cellbuf[64];
          if (it == lookup.end()) {
            std::snprintf(cellbuf, sizeof cellbuf, " | %6s %8s %8s", "", "-", "-");
          } else {
            std::snprintf(cellbuf, sizeof cellbuf, " | %6s %8s %8s", "",
                          fmt(it->second->average.mean).c_str(),
                          fmt(it->second->average.sigma).c_str());
          }
          out << cellbuf;
        }
        out << '\n';
      }
    }
  }
}

} // namespace knnloc
