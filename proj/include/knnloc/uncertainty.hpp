#pragma once

#include "knnloc/data.hpp"
#include "knnloc/estimators.hpp"

#include <Eigen/Core>

#include <span>

namespace knnloc {

struct IntervalSpec {
  double alpha = 0.1;
  ErrorMode mode = ErrorMode::gaussian;

  void validate() const;
};

//! Standardized residuals (Y - m(X)) / sigma(X) from a held-out split.
class CalibrationSet {
public:
  CalibrationSet() = default;
  CalibrationSet(Eigen::VectorXd residuals, Index dropped);

  const Eigen::VectorXd& residuals() const { return residuals_; }
  Index size() const { return residuals_.size(); }
  //! Rows skipped because sigma(X) was below 1e-12.
  Index dropped() const { return dropped_; }

  //! The ceil((1 - alpha)(n + 1))-th smallest absolute residual. Throws when
  //! that index exceeds n.
  double multiplier(double alpha) const;

private:
  Eigen::VectorXd residuals_;
  Eigen::VectorXd sorted_abs_;
  Index dropped_ = 0;
};

inline constexpr double kMinCalibrationSd = 1e-12;

//! Order-statistic index ceil((1 - alpha)(n + 1)), 1-based.
Index calibration_rank(double alpha, Index n);

//! Smallest calibration size for which `alpha` is attainable.
Index min_calibration_size(double alpha);

CalibrationSet calibrate_empirical(const MeanModel& mean, const VarianceModel& variance,
                                   const Dataset& data, std::span<const Index> rows);

//! Uses the model's own standardizer; `data` holds raw features.
CalibrationSet calibrate_empirical(const ScaleLocModel& model, const Dataset& data,
                                   std::span<const Index> rows);

//! Phi^{-1}(1 - alpha / 2).
double gaussian_multiplier(double alpha);

//! c for the given model and interval settings: the calibration order statistic in
//! empirical mode, the normal quantile otherwise.
double interval_multiplier(const ScaleLocModel& model, const IntervalSpec& spec);

struct Interval {
  double prediction;
  double lower;
  double upper;
};

Interval predict_interval(const ScaleLocModel& model,
                          const Eigen::Ref<const Eigen::VectorXd>& x,
                          const IntervalSpec& spec);

//! One row per input row: prediction, lower, upper.
Eigen::MatrixXd predict_intervals(const ScaleLocModel& model,
                                  const Eigen::MatrixXd& raw_features,
                                  const IntervalSpec& spec);

} // namespace knnloc
