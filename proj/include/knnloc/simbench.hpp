#pragma once

#include "knnloc/data.hpp"
#include "knnloc/estimators.hpp"
#include "knnloc/pipeline.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace knnloc {

//! One row of the scenario table:
//!   m(x) = mean_coef * sum_{i in mean_terms} x_i
//!   sigma(x) = sd_const + sd_coef * sum_{i in sd_terms} x_i
//! Term indices are 0-based columns.
struct ScenarioSpec {
  int id = 1;
  Index p = 3;
  double mean_coef = 0.0;
  Support mean_terms;
  double sd_const = 1.0;
  double sd_coef = 0.0;
  Support sd_terms;

  //! Scenario 1..9 at dimension p.
  static ScenarioSpec table(int id, Index p);
  //! The dimensions listed for the scenario's regime.
  static std::vector<Index> regime_dimensions(int id);

  void validate() const;
  double mean(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double sd(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  std::string mean_formula() const;
  std::string sd_formula() const;
};

//! X ~ U[0,1]^p, eps ~ N(0,1), Y = m(X) + sigma(X) eps. Each row draws its p
//! covariates then its error from one Rng(seed) stream.
Dataset generate(const ScenarioSpec& spec, Index n, std::uint64_t seed);

struct MssValue {
  double mean = 0.0;   // average of (m_hat - m)^2
  double sigma = 0.0;  // average of (sigma_hat - sigma)^2
};

//! `predictions` holds (mean, sd) per row of `test`.
MssValue mss(const Eigen::MatrixXd& predictions, const ScenarioSpec& spec,
             const Dataset& test);
MssValue mss(const ScaleLocModel& model, const ScenarioSpec& spec, const Dataset& test);

//! Seeds for one Monte Carlo run: the training sample, the test sample and the
//! split plan all derive from the master seed and the cell coordinates.
struct RunSeeds {
  std::uint64_t data;
  std::uint64_t train;
  std::uint64_t test;
  std::uint64_t pipeline;
};

RunSeeds run_seeds(std::uint64_t master, int scenario, Index p, Index n, Index run);

//! Pipeline settings used by the harness: no standardization, gaussian mode.
PipelineConfig simulation_config(bool feature_selection);

struct SimCell {
  int scenario = 1;
  Index p = 0;
  Index n = 0;
  bool feature_selection = true;
  std::vector<MssValue> runs;
  MssValue average;
};

//! One run: fit on a fresh sample, score on a fresh test sample.
MssValue run_once(const ScenarioSpec& spec, Index n, Index n_test, bool feature_selection,
                  std::uint64_t master, Index run);

struct GridSpec {
  std::vector<int> scenarios{1};
  std::vector<Index> p_list{3};
  std::vector<Index> n_list{2500, 5000, 10000};
  Index runs = 30;
  std::vector<bool> fs_modes{true, false};
  std::uint64_t seed = 1;
  Index n_test = 2000;

  void validate() const;
};

//! Every (scenario, p, n, fs) cell in that nesting order. Runs within a cell
//! execute in parallel; FS and No-FS cells share seeds. `on_cell` sees each
//! cell as soon as it completes.
std::vector<SimCell> run_grid(const GridSpec& grid,
                              const std::function<void(const SimCell&)>& on_cell = {});

//! CSV: scenario,p,n,fs,runs,mss_m,mss_sigma.
void write_cells_csv(std::ostream& out, const std::vector<SimCell>& cells);
//! Per-run CSV: scenario,p,n,fs,run,mss_m,mss_sigma.
void write_runs_csv(std::ostream& out, const std::vector<SimCell>& cells);
//! Text table per scenario and FS block: rows n, columns p x {MSS^m, MSS^sigma}.
void write_table(std::ostream& out, const std::vector<SimCell>& cells);

} // namespace knnloc
