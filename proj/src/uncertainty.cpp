#include "knnloc/uncertainty.hpp"

#include "knnloc/parallel.hpp"
#include "knnloc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace knnloc {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("interval alpha must lie in (0, 1), got " +
                                std::to_string(alpha));
  }
}

} // namespace

void IntervalSpec::validate() const { check_alpha(alpha); }

Index calibration_rank(double alpha, Index n) {
  check_alpha(alpha);
  // The small offset keeps exact products such as 0.9 * 20 from rounding up.
  return static_cast<Index>(std::ceil((1.0 - alpha) * static_cast<double>(n + 1) - 1e-9));
}

Index min_calibration_size(double alpha) {
  check_alpha(alpha);
  Index n = 1;
  while (calibration_rank(alpha, n) > n) ++n;
  return n;
}

CalibrationSet::CalibrationSet(Eigen::VectorXd residuals, Index dropped)
    : residuals_(std::move(residuals)), dropped_(dropped) {
  if (dropped_ < 0) throw std::invalid_argument("calibration: negative drop count");
  if (!residuals_.allFinite()) {
    throw std::invalid_argument("calibration: residuals must be finite");
  }
  sorted_abs_ = residuals_.cwiseAbs();
  std::sort(sorted_abs_.begin(), sorted_abs_.end());
}

double CalibrationSet::multiplier(double alpha) const {
  const Index n = size();
  const Index rank = calibration_rank(alpha, n);
  if (rank > n) {
    throw std::invalid_argument(
        "calibration: alpha = " + std::to_string(alpha) + " needs at least " +
        std::to_string(min_calibration_size(alpha)) + " usable rows, have " +
        std::to_string(n));
  }
  return sorted_abs_(std::max<Index>(rank, 1) - 1);
}

CalibrationSet calibrate_empirical(const MeanModel& mean, const VarianceModel& variance,
                                   const Dataset& data, std::span<const Index> rows) {
  for (Index r : rows) {
    if (std::binary_search(mean.train_rows().begin(), mean.train_rows().end(), r) ||
        std::binary_search(variance.train_rows().begin(), variance.train_rows().end(), r)) {
      throw std::invalid_argument("calibration: row " + std::to_string(r) +
                                  " was used to fit the model");
    }
  }
  Eigen::VectorXd z(static_cast<Index>(rows.size()));
  std::vector<char> keep(rows.size(), 0);
  parallel_for(rows.size(), [&](std::size_t i) {
    const auto x = data.features.row(rows[i]).transpose();
    const double sd = variance.predict_sd(x);
    if (sd < kMinCalibrationSd) return;
    z(static_cast<Index>(i)) = (data.response(rows[i]) - mean.predict(x)) / sd;
    keep[i] = 1;
  });
  Eigen::VectorXd kept(static_cast<Index>(std::count(keep.begin(), keep.end(), 1)));
  Index j = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (keep[i]) kept(j++) = z(static_cast<Index>(i));
  }
  const Index dropped = static_cast<Index>(rows.size()) - kept.size();
  return CalibrationSet(std::move(kept), dropped);
}

CalibrationSet calibrate_empirical(const ScaleLocModel& model, const Dataset& data,
                                   std::span<const Index> rows) {
  if (data.cols() != model.dim()) {
    throw std::invalid_argument("calibration: data has " + std::to_string(data.cols()) +
                                " features, model expects " + std::to_string(model.dim()));
  }
  return calibrate_empirical(model.mean, model.variance,
                             apply_standardizer(model.standardizer, data), rows);
}

double gaussian_multiplier(double alpha) {
  check_alpha(alpha);
  return -stats::normal_quantile(alpha / 2.0);
}

double interval_multiplier(const ScaleLocModel& model, const IntervalSpec& spec) {
  spec.validate();
  if (spec.mode == ErrorMode::gaussian) return gaussian_multiplier(spec.alpha);
  if (!model.calibration) {
    throw std::invalid_argument("interval: empirical mode needs a calibrated model");
  }
  return CalibrationSet(*model.calibration, model.calibration_dropped).multiplier(spec.alpha);
}

Interval predict_interval(const ScaleLocModel& model,
                          const Eigen::Ref<const Eigen::VectorXd>& x,
                          const IntervalSpec& spec) {
  const double c = interval_multiplier(model, spec);
  const Prediction p = model.predict(x);
  return {p.mean, p.mean - c * p.sd, p.mean + c * p.sd};
}

Eigen::MatrixXd predict_intervals(const ScaleLocModel& model,
                                  const Eigen::MatrixXd& raw_features,
                                  const IntervalSpec& spec) {
  const double c = interval_multiplier(model, spec);
  const Eigen::MatrixXd pred = model.predict_rows(raw_features);
  Eigen::MatrixXd out(pred.rows(), 3);
  out.col(0) = pred.col(0);
  out.col(1) = pred.col(0) - c * pred.col(1);
  out.col(2) = pred.col(0) + c * pred.col(1);
  return out;
}

} // namespace knnloc
