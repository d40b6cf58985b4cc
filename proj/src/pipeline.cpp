#include "knnloc/pipeline.hpp"

#include "knnloc/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace knnloc {

RoleWeights PipelineConfig::default_roles() {
  const RoleNames names;
  return {{names.mean_select, 1.0}, {names.mean_k, 1.0},     {names.mean_fit, 1.0},
          {names.var_select, 1.0},  {names.var_fit, 1.0},    {names.calibration, 1.0}};
}

void PipelineConfig::validate() const {
  const RoleNames names;
  for (const std::string& required :
       {names.mean_select, names.mean_k, names.mean_fit, names.var_select, names.var_fit,
        names.calibration}) {
    const auto it = std::find_if(roles.begin(), roles.end(),
                                 [&](const auto& r) { return r.first == required; });
    if (it == roles.end()) {
      throw std::invalid_argument("pipeline config: missing role '" + required + "'");
    }
  }
  for (const auto& [name, w] : roles) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("pipeline config: role '" + name +
                                  "' needs a positive weight");
    }
  }
  if (!(selection_alpha > 0.0 && selection_alpha < 1.0)) {
    throw std::invalid_argument("pipeline config: selection_alpha must lie in (0, 1)");
  }
  if (!(interval_alpha > 0.0 && interval_alpha < 1.0)) {
    throw std::invalid_argument("pipeline config: interval_alpha must lie in (0, 1)");
  }
  if (leaf_size < 1) throw std::invalid_argument("pipeline config: leaf_size must be >= 1");
  if (k_grid.kind == KGridPolicy::Kind::explicit_values && k_grid.values.empty()) {
    throw std::invalid_argument("pipeline config: explicit k grid is empty");
  }
}

Index role_minimum(const std::string& role, const PipelineConfig& config) {
  const RoleNames names;
  if (role == names.mean_select || role == names.var_select) return 4;
  if (role == names.mean_k) return 2;
  if (role == names.calibration && config.error_mode == ErrorMode::empirical) {
    return min_calibration_size(config.interval_alpha);
  }
  return 1;
}

namespace {

Eigen::VectorXd responses_of(const Dataset& data, const IndexSet& rows) {
  Eigen::VectorXd y(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) y(static_cast<Index>(i)) = data.response(rows[i]);
  return y;
}

SelectionReport skipped_report(SelectionTarget target, double alpha, Index n_tests) {
  SelectionReport r;
  r.target = target;
  r.alpha = alpha;
  r.n_tests = n_tests;
  return r;
}

} // namespace

namespace {

struct Prepared {
  SplitPlan plan;
  Support candidates;
  Standardizer standardizer;
  Dataset work;
};

Prepared prepare(const Dataset& data, const PipelineConfig& config) {
  config.validate();
  data.validate();
  const Index n = data.rows();
  const Index p = data.cols();
  if (p < 1) throw std::invalid_argument("pipeline: data has no features");

  std::vector<double> weights;
  for (const auto& r : config.roles) weights.push_back(r.second);
  const std::vector<Index> sizes = split_sizes(n, weights);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const std::string& name = config.roles[i].first;
    const Index need = role_minimum(name, config);
    if (sizes[i] < need) {
      throw std::invalid_argument("pipeline: role '" + name + "' gets " +
                                  std::to_string(sizes[i]) + " of " + std::to_string(n) +
                                  " rows; at least " + std::to_string(need) + " are needed");
    }
  }

  Prepared out;
  out.plan = make_splits(n, config.roles, config.seed);
  if (config.candidates) {
    out.candidates = *config.candidates;
  } else {
    out.candidates.resize(static_cast<std::size_t>(p));
    std::iota(out.candidates.begin(), out.candidates.end(), Index{0});
  }
  check_support(out.candidates, p);
  if (out.candidates.empty()) throw std::invalid_argument("pipeline: no candidate features");
  out.standardizer = config.standardize
                         ? fit_standardizer(data, out.plan.role(RoleNames{}.mean_fit))
                         : Standardizer::identity(p);
  out.work = config.standardize ? apply_standardizer(out.standardizer, data) : data;
  return out;
}

} // namespace

SelectionRun run_selection(const Dataset& data, const PipelineConfig& config) {
  Prepared prep = prepare(data, config);
  SelectionOptions options;
  options.grid = config.k_grid;
  options.leaf_size = config.leaf_size;
  SelectionOutcome sel =
      select_variables(prep.work, prep.plan, prep.candidates, config.selection_alpha, options);
  return {std::move(sel.mean), std::move(sel.variance), std::move(prep.plan)};
}

PipelineResult fit_pipeline(const Dataset& data, const PipelineConfig& config) {
  Prepared prep = prepare(data, config);
  PipelineResult result;
  result.plan = std::move(prep.plan);
  const SplitPlan& plan = result.plan;
  const RoleNames names;
  const Support& candidates = prep.candidates;
  const Index n_tests = 2 * static_cast<Index>(candidates.size());
  const Dataset& work = prep.work;

  ScaleLocModel& model = result.model;
  model.feature_names = data.feature_names;
  model.target_name = data.target_name;
  model.standardizer = std::move(prep.standardizer);
  model.error_mode = config.error_mode;

  Eigen::VectorXd var_select_residuals;
  Support variance_support;
  if (config.feature_selection) {
    SelectionOptions options;
    options.grid = config.k_grid;
    options.leaf_size = config.leaf_size;
    SelectionOutcome sel =
        select_variables(work, plan, candidates, config.selection_alpha, options);
    result.mean_report = std::move(sel.mean);
    result.variance_report = std::move(sel.variance);
    result.mean_k = std::move(sel.mean_k);
    model.mean = std::move(sel.mean_model);
    var_select_residuals = std::move(sel.var_select_residuals);
    variance_support = result.variance_report.selected();
  } else {
    result.mean_report = skipped_report(SelectionTarget::mean, config.selection_alpha, n_tests);
    result.variance_report =
        skipped_report(SelectionTarget::variance, config.selection_alpha, n_tests);
    const IndexSet& k_rows = plan.role(names.mean_k);
    const IndexSet& fit_rows = plan.role(names.mean_fit);
    result.mean_k = select_k(work, k_rows, candidates, responses_of(work, k_rows),
                             config.k_grid.materialize(static_cast<Index>(k_rows.size())),
                             config.leaf_size);
    const Index k1 = std::min(result.mean_k.chosen, static_cast<Index>(fit_rows.size()));
    model.mean = fit_mean(work, fit_rows, candidates, k1, config.leaf_size);
    var_select_residuals = compute_residuals(model.mean, work, plan.role(names.var_select));
    variance_support = candidates;
  }

  const IndexSet& vsel = plan.role(names.var_select);
  const IndexSet& vfit = plan.role(names.var_fit);
  const Eigen::VectorXd vfit_residuals = compute_residuals(model.mean, work, vfit);
  if (variance_support.empty()) {
    model.variance = fit_variance(vfit_residuals, work, vfit, {}, 0, true, config.leaf_size);
  } else {
    const Eigen::VectorXd sq = var_select_residuals.array().square();
    result.variance_k =
        select_k(work, vsel, variance_support, sq,
                 config.k_grid.materialize(static_cast<Index>(vsel.size())), config.leaf_size);
    const Index k2 = std::min(result.variance_k.chosen, static_cast<Index>(vfit.size()));
    model.variance = fit_variance(vfit_residuals, work, vfit, variance_support, k2, false,
                                  config.leaf_size);
  }

  if (config.error_mode == ErrorMode::empirical) {
    const CalibrationSet cal =
        calibrate_empirical(model.mean, model.variance, work, plan.role(names.calibration));
    cal.multiplier(config.interval_alpha);
    model.calibration = cal.residuals();
    model.calibration_dropped = cal.dropped();
  }
  model.validate();
  return result;
}

namespace {

Eigen::MatrixXd pick_columns(const ScaleLocModel& model,
                             const std::vector<std::string>& names,
                             const Eigen::MatrixXd& values) {
  Eigen::MatrixXd out(values.rows(), model.dim());
  for (Index j = 0; j < model.dim(); ++j) {
    const std::string& name = model.feature_names[static_cast<std::size_t>(j)];
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
      throw std::invalid_argument("predict: data has no column '" + name + "'");
    }
    out.col(j) = values.col(it - names.begin());
  }
  return out;
}

} // namespace

Eigen::MatrixXd aligned_features(const ScaleLocModel& model, const Dataset& data) {
  return pick_columns(model, data.feature_names, data.features);
}

Eigen::MatrixXd aligned_features(const ScaleLocModel& model, const Table& table) {
  return pick_columns(model, table.columns, table.values);
}

Eigen::MatrixXd predict(const ScaleLocModel& model, const Dataset& data) {
  return model.predict_rows(aligned_features(model, data));
}

} // namespace knnloc
