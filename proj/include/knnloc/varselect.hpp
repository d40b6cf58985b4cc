#pragma once

#include "knnloc/data.hpp"
#include "knnloc/estimators.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace knnloc {

struct TTestResult {
  double t;
  double p;
  Index df;
};

//! One-sample, one-sided t-test of H0: mean <= 0 against mean > 0, with the
//! sample standard deviation (denominator n - 1). When every value is equal
//! the decision follows the common sign: p = 0 for positive values, p = 1
//! otherwise (t is then +inf, 0 or -inf).
TTestResult t_test_one_sided(std::span<const double> values);

enum class SelectionTarget { mean, variance };

const char* to_string(SelectionTarget target);

struct FeatureTest {
  Index feature = 0;
  double w_tilde = 0.0;  // mean of the loss differences on the evaluation rows
  double sd = 0.0;
  double t = 0.0;
  double p = 1.0;
  Index k_without = 0;  // LOOCV k of the model without this feature (0: constant)
  bool selected = false;
};

struct SelectionReport {
  SelectionTarget target = SelectionTarget::mean;
  double alpha = 0.05;
  Index n_tests = 0;
  Index n_eval = 0;
  Index k_full = 0;
  std::vector<FeatureTest> features;

  //! Bonferroni per-test level alpha / n_tests.
  double threshold() const { return alpha / static_cast<double>(n_tests); }
  Support selected() const;
};

//! Leave-one-covariate-out loss differences.
//!
//! The full model uses every candidate feature; each reduced model drops one.
//! Both get their own LOOCV k on the fitting rows and are evaluated on the
//! disjoint evaluation rows:
//!   W_j(x, r) = (r - m_{-j}(x))^2 - (r - m(x))^2.
//! A reduced model with no features left is the constant mean.
class LocoEvaluator {
public:
  LocoEvaluator(const Dataset& data, IndexSet fit_rows,
                Eigen::VectorXd fit_response, IndexSet eval_rows,
                Eigen::VectorXd eval_response, Support candidates,
                KGridPolicy grid = {}, Index leaf_size = 32);

  const Support& candidates() const { return candidates_; }
  Index k_full() const { return k_full_; }
  const Eigen::VectorXd& full_predictions() const { return full_pred_; }

  //! W values for dropping `feature` (which must be a candidate), plus the
  //! k chosen for the reduced model (0 when it is constant).
  Eigen::VectorXd statistics(Index feature, Index* k_without = nullptr) const;

private:
  Eigen::VectorXd predictions(const Support& support, Index* k_used) const;

  const Dataset& data_;
  IndexSet fit_rows_;
  Eigen::VectorXd fit_response_;
  IndexSet eval_rows_;
  Eigen::VectorXd eval_response_;
  Support candidates_;
  KGridPolicy grid_;
  Index leaf_size_;
  Index k_full_ = 0;
  Eigen::VectorXd full_pred_;
};

Eigen::VectorXd loco_statistics(const Dataset& data, std::span<const Index> fit_rows,
                                const Eigen::VectorXd& fit_response,
                                std::span<const Index> eval_rows,
                                const Eigen::VectorXd& eval_response,
                                const Support& candidates, Index feature,
                                const KGridPolicy& grid = {});

//! Tests every candidate with the LOCO statistic and a one-sided t-test at
//! the Bonferroni level alpha / n_tests.
SelectionReport select_target(const Dataset& data, std::span<const Index> fit_rows,
                              const Eigen::VectorXd& fit_response,
                              std::span<const Index> eval_rows,
                              const Eigen::VectorXd& eval_response,
                              const Support& candidates, double alpha,
                              Index n_tests, SelectionTarget target,
                              const KGridPolicy& grid = {}, Index leaf_size = 32);

//! Role names used by the split-based workflow.
struct RoleNames {
  std::string mean_select = "mean_select";
  std::string mean_k = "mean_k";
  std::string mean_fit = "mean_fit";
  std::string var_select = "var_select";
  std::string var_fit = "var_fit";
  std::string calibration = "calibration";
};

//! Deterministic halving of a role's rows: first half fits, second half
//! evaluates.
std::pair<IndexSet, IndexSet> halve(const IndexSet& rows);

struct SelectionOptions {
  RoleNames roles;
  KGridPolicy grid;
  Index leaf_size = 32;
};

//! Everything the mean-then-variance selection produces along the way.
struct SelectionOutcome {
  SelectionReport mean;
  SelectionReport variance;
  KSelectionTrace mean_k;     // empty grid when the mean support is empty
  MeanModel mean_model;       // fitted on the mean_fit role
  Eigen::VectorXd var_select_residuals;  // residuals on the var_select role
};

//! Mean selection on the halves of `mean_select`; LOOCV k for the selected
//! mean on `mean_k`; mean refit on `mean_fit`; variance selection with squared
//! residuals of that refit on the halves of `var_select`. n_tests is
//! 2 * |candidates| for both reports.
SelectionOutcome select_variables(const Dataset& data, const SplitPlan& plan,
                                  const Support& candidates, double alpha,
                                  const SelectionOptions& options = {});

} // namespace knnloc
