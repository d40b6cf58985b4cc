#pragma once

#include "knnloc/data.hpp"
#include "knnloc/estimators.hpp"
#include "knnloc/varselect.hpp"

#include <cstdint>
#include <optional>

namespace knnloc {

struct PipelineConfig {
  //! Split weights by role; must name the six roles of RoleNames.
  RoleWeights roles = default_roles();
  double selection_alpha = 0.05;
  double interval_alpha = 0.1;
  KGridPolicy k_grid;
  bool standardize = true;
  ErrorMode error_mode = ErrorMode::gaussian;
  std::uint64_t seed = 0;
  //! Off: every candidate enters both supports and the tests are skipped.
  bool feature_selection = true;
  //! Candidate feature indices; all features when unset.
  std::optional<Support> candidates;
  Index leaf_size = 32;

  static RoleWeights default_roles();
  void validate() const;
};

struct PipelineResult {
  ScaleLocModel model;
  //! Empty feature lists when feature selection is off.
  SelectionReport mean_report;
  SelectionReport variance_report;
  KSelectionTrace mean_k;
  KSelectionTrace variance_k;
  SplitPlan plan;
};

//! Minimum rows a role needs.
Index role_minimum(const std::string& role, const PipelineConfig& config);

//! Split, standardize (weights fitted on the mean_fit role), select the mean
//! support, pick k1, fit the mean, select the variance support from residuals,
//! pick k2, fit the variance, and calibrate in empirical mode. Each stage reads
//! only its own role's rows.
PipelineResult fit_pipeline(const Dataset& data, const PipelineConfig& config);

struct SelectionRun {
  SelectionReport mean;
  SelectionReport variance;
  SplitPlan plan;
};

//! The selection stages of fit_pipeline alone, on the same splits.
SelectionRun run_selection(const Dataset& data, const PipelineConfig& config);

//! Column order of `data` mapped onto the model's features by name. Throws
//! when a model feature is missing.
Eigen::MatrixXd aligned_features(const ScaleLocModel& model, const Dataset& data);
Eigen::MatrixXd aligned_features(const ScaleLocModel& model, const Table& table);

//! Rows of (mean, sd) for every row of `data`.
Eigen::MatrixXd predict(const ScaleLocModel& model, const Dataset& data);

} // namespace knnloc
