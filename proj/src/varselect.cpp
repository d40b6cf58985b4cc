#include "knnloc/varselect.hpp"

#include "knnloc/parallel.hpp"
#include "knnloc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace knnloc {

TTestResult t_test_one_sided(std::span<const double> values) {
  const auto n = static_cast<Index>(values.size());
  if (n < 2) throw std::invalid_argument("t-test: need at least 2 values");
  if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); })) {
    throw std::invalid_argument("t-test: values must be finite");
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const Index df = n - 1;

  const bool all_equal = std::all_of(values.begin(), values.end(),
                                     [&](double v) { return v == values[0]; });
  if (all_equal || sd == 0.0) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (mean > 0.0) return {inf, 0.0, df};
    return {mean < 0.0 ? -inf : 0.0, 1.0, df};
  }
  const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
  return {t, stats::student_t_sf(t, static_cast<double>(df)), df};
}

const char* to_string(SelectionTarget target) {
  return target == SelectionTarget::mean ? "mean" : "variance";
}

Support SelectionReport::selected() const {
  Support out;
  for (const auto& f : features) {
    if (f.selected) out.push_back(f.feature);
  }
  return out;
}

// ---------------------------------------------------------------------------

LocoEvaluator::LocoEvaluator(const Dataset& data, IndexSet fit_rows,
                             Eigen::VectorXd fit_response, IndexSet eval_rows,
                             Eigen::VectorXd eval_response, Support candidates,
                             KGridPolicy grid, Index leaf_size)
    : data_(data), fit_rows_(std::move(fit_rows)),
      fit_response_(std::move(fit_response)), eval_rows_(std::move(eval_rows)),
      eval_response_(std::move(eval_response)), candidates_(std::move(candidates)),
      grid_(std::move(grid)), leaf_size_(leaf_size) {
  if (fit_rows_.empty() || eval_rows_.empty()) {
    throw std::invalid_argument("loco: fitting and evaluation rows must be non-empty");
  }
  if (fit_response_.size() != static_cast<Index>(fit_rows_.size()) ||
      eval_response_.size() != static_cast<Index>(eval_rows_.size())) {
    throw std::invalid_argument("loco: response length does not match rows");
  }
  if (!disjoint(fit_rows_, eval_rows_)) {
    throw std::invalid_argument("loco: fitting and evaluation splits overlap");
  }
  check_support(candidates_, data_.cols());
  if (candidates_.empty()) throw std::invalid_argument("loco: no candidate features");
  full_pred_ = predictions(candidates_, &k_full_);
}

Eigen::VectorXd LocoEvaluator::predictions(const Support& support,
                                           Index* k_used) const {
  Index k = static_cast<Index>(fit_rows_.size());
  if (!support.empty()) {
    const RowMatrix pts = gather_points(data_.features, fit_rows_, support);
    k = select_k(pts, fit_response_,
                 grid_.materialize(static_cast<Index>(fit_rows_.size())), leaf_size_)
            .chosen;
    if (k_used) *k_used = k;
  } else if (k_used) {
    *k_used = 0;
  }
  const LocalAverage model(support, k,
                           gather_points(data_.features, fit_rows_, support),
                           fit_response_, leaf_size_);
  Eigen::VectorXd out(static_cast<Index>(eval_rows_.size()));
  for (std::size_t i = 0; i < eval_rows_.size(); ++i) {
    out(static_cast<Index>(i)) = model(data_.features.row(eval_rows_[i]).transpose());
  }
  return out;
}

Eigen::VectorXd LocoEvaluator::statistics(Index feature, Index* k_without) const {
  if (!std::binary_search(candidates_.begin(), candidates_.end(), feature)) {
    throw std::invalid_argument("loco: feature " + std::to_string(feature) +
                                " is not a candidate");
  }
  Support reduced;
  for (Index c : candidates_) {
    if (c != feature) reduced.push_back(c);
  }
  const Eigen::VectorXd pred = predictions(reduced, k_without);
  const Eigen::ArrayXd r = eval_response_.array();
  return ((r - pred.array()).square() - (r - full_pred_.array()).square()).matrix();
}

Eigen::VectorXd loco_statistics(const Dataset& data, std::span<const Index> fit_rows,
                                const Eigen::VectorXd& fit_response,
                                std::span<const Index> eval_rows,
                                const Eigen::VectorXd& eval_response,
                                const Support& candidates, Index feature,
                                const KGridPolicy& grid) {
  const LocoEvaluator eval(data, IndexSet(fit_rows.begin(), fit_rows.end()),
                           fit_response, IndexSet(eval_rows.begin(), eval_rows.end()),
                           eval_response, candidates, grid);
  return eval.statistics(feature);
}

SelectionReport select_target(const Dataset& data, std::span<const Index> fit_rows,
                              const Eigen::VectorXd& fit_response,
                              std::span<const Index> eval_rows,
                              const Eigen::VectorXd& eval_response,
                              const Support& candidates, double alpha,
                              Index n_tests, SelectionTarget target,
                              const KGridPolicy& grid, Index leaf_size) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("selection: alpha must lie in (0, 1)");
  }
  if (n_tests < static_cast<Index>(candidates.size())) {
    throw std::invalid_argument("selection: n_tests smaller than the candidate count");
  }
  if (eval_rows.size() < 2) {
    throw std::invalid_argument("selection: need at least 2 evaluation rows");
  }
  const LocoEvaluator loco(data, IndexSet(fit_rows.begin(), fit_rows.end()),
                           fit_response, IndexSet(eval_rows.begin(), eval_rows.end()),
                           eval_response, candidates, grid, leaf_size);
  SelectionReport report;
  report.target = target;
  report.alpha = alpha;
  report.n_tests = n_tests;
  report.n_eval = static_cast<Index>(eval_rows.size());
  report.k_full = loco.k_full();
  report.features.resize(candidates.size());
  const double level = report.threshold();
  parallel_for(candidates.size(), [&](std::size_t c) {
    FeatureTest& ft = report.features[c];
    ft.feature = candidates[c];
    const Eigen::VectorXd w = loco.statistics(ft.feature, &ft.k_without);
    const auto test = t_test_one_sided(std::span<const double>(w.data(), static_cast<std::size_t>(w.size())));
    ft.w_tilde = w.mean();
    ft.sd = std::sqrt((w.array() - ft.w_tilde).square().sum() /
                      static_cast<double>(w.size() - 1));
    ft.t = test.t;
    ft.p = test.p;
    ft.selected = test.p < level;
  });
  return report;
}

// ---------------------------------------------------------------------------

std::pair<IndexSet, IndexSet> halve(const IndexSet& rows) {
  const auto mid = rows.size() / 2;
  return {IndexSet(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(mid)),
          IndexSet(rows.begin() + static_cast<std::ptrdiff_t>(mid), rows.end())};
}

namespace {

Eigen::VectorXd responses_of(const Dataset& data, const IndexSet& rows) {
  Eigen::VectorXd y(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) y(static_cast<Index>(i)) = data.response(rows[i]);
  return y;
}

void require_rows(const SplitPlan& plan, const std::string& role, std::size_t min_rows) {
  const auto& rows = plan.role(role);
  if (rows.size() < min_rows) {
    throw std::invalid_argument("role '" + role + "' has " + std::to_string(rows.size()) +
                                " rows; at least " + std::to_string(min_rows) +
                                " are needed");
  }
}

} // namespace

SelectionOutcome select_variables(const Dataset& data, const SplitPlan& plan,
                                  const Support& candidates, double alpha,
                                  const SelectionOptions& options) {
  const RoleNames& roles = options.roles;
  require_rows(plan, roles.mean_select, 4);
  require_rows(plan, roles.mean_k, 2);
  require_rows(plan, roles.mean_fit, 1);
  require_rows(plan, roles.var_select, 4);
  check_support(candidates, data.cols());
  const Index n_tests = 2 * static_cast<Index>(candidates.size());

  SelectionOutcome out;
  {
    const auto [fit, eval] = halve(plan.role(roles.mean_select));
    out.mean = select_target(data, fit, responses_of(data, fit), eval,
                             responses_of(data, eval), candidates, alpha, n_tests,
                             SelectionTarget::mean, options.grid, options.leaf_size);
  }

  const Support mean_support = out.mean.selected();
  const IndexSet& k_rows = plan.role(roles.mean_k);
  const IndexSet& fit_rows = plan.role(roles.mean_fit);
  Index k1 = static_cast<Index>(fit_rows.size());
  if (!mean_support.empty()) {
    out.mean_k = select_k(data, k_rows, mean_support, responses_of(data, k_rows),
                          options.grid.materialize(static_cast<Index>(k_rows.size())),
                          options.leaf_size);
    k1 = std::min(out.mean_k.chosen, static_cast<Index>(fit_rows.size()));
  }
  out.mean_model = fit_mean(data, fit_rows, mean_support, k1, options.leaf_size);

  const IndexSet& vrows = plan.role(roles.var_select);
  out.var_select_residuals = compute_residuals(out.mean_model, data, vrows);
  {
    const auto half = vrows.size() / 2;
    const auto [fit, eval] = halve(vrows);
    const Eigen::VectorXd sq = out.var_select_residuals.array().square();
    out.variance = select_target(
        data, fit, sq.head(static_cast<Index>(half)), eval,
        sq.tail(static_cast<Index>(vrows.size() - half)), candidates, alpha, n_tests,
        SelectionTarget::variance, options.grid, options.leaf_size);
  }
  return out;
}

} // namespace knnloc
