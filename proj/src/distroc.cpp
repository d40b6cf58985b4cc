#include "knnloc/distroc.hpp"

#include "knnloc/parallel.hpp"
#include "knnloc/stats.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace knnloc {

CdfValue NormalLaw::cdf(double t) const {
  if (sd > 0.0) return {stats::normal_cdf((t - mean) / sd), false};
  return {t < mean ? 0.0 : 1.0, true};
}

double NormalLaw::quantile(double u) const {
  if (sd > 0.0) return mean + sd * stats::normal_quantile(u);
  return mean;
}

NormalLaw conditional_law(const ScaleLocModel& model,
                          const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Prediction p = model.predict(x);
  return {p.mean, p.sd};
}

CdfValue conditional_cdf(const ScaleLocModel& model, double t,
                         const Eigen::Ref<const Eigen::VectorXd>& x) {
  return conditional_law(model, x).cdf(t);
}

RocModel::RocModel(ScaleLocModel diseased, ScaleLocModel healthy)
    : diseased_(std::move(diseased)), healthy_(std::move(healthy)) {
  diseased_.validate();
  healthy_.validate();
  if (diseased_.error_mode != ErrorMode::gaussian ||
      healthy_.error_mode != ErrorMode::gaussian) {
    throw std::invalid_argument("roc: both models must use the gaussian error mode");
  }
  if (diseased_.dim() != healthy_.dim()) {
    throw std::invalid_argument("roc: diseased model has " + std::to_string(diseased_.dim()) +
                                " covariates, healthy model has " +
                                std::to_string(healthy_.dim()));
  }
}

RocPoint tpr_fpr(const RocModel& roc, double c, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const CdfValue d = conditional_cdf(roc.diseased(), c, x);
  const CdfValue h = conditional_cdf(roc.healthy(), c, x);
  return {1.0 - d.value, 1.0 - h.value, d.degenerate || h.degenerate};
}

double binormal_auc(const NormalLaw& diseased, const NormalLaw& healthy) {
  const double delta = diseased.mean - healthy.mean;
  const double scale = std::hypot(diseased.sd, healthy.sd);
  if (scale > 0.0) return stats::normal_cdf(delta / scale);
  if (delta > 0.0) return 1.0;
  if (delta < 0.0) return 0.0;
  return 0.5;
}

namespace {

// int_0^1 [1 - F_outer(F_inner^{-1}(1 - u))] du. For a non-degenerate inner
// law the substitution 1 - u = Phi(s) turns it into
//   int [1 - F_outer(m_inner + sd_inner * s)] phi(s) ds,
// whose integrand is smooth with Gaussian tails; the midpoint rule then runs
// over s in [-kTail, kTail]. A degenerate inner law has a constant integrand
// in u.
constexpr double kTail = 10.0;

double composed_integral(const NormalLaw& outer, const NormalLaw& inner, int n_quad) {
  if (n_quad < 2) {
    throw std::invalid_argument("auc: n_quad must be at least 2, got " + std::to_string(n_quad));
  }
  if (!(inner.sd > 0.0)) return 1.0 - outer.cdf(inner.mean).value;
  const double h = 2.0 * kTail / n_quad;
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double sum = 0.0;
  for (int i = 0; i < n_quad; ++i) {
    const double s = -kTail + (i + 0.5) * h;
    sum += (1.0 - outer.cdf(inner.mean + inner.sd * s).value) * norm * std::exp(-0.5 * s * s);
  }
  return sum * h;
}

} // namespace

double binormal_auc_quadrature(const NormalLaw& diseased, const NormalLaw& healthy,
                               int n_quad) {
  return composed_integral(diseased, healthy, n_quad);
}

double swapped_auc_quadrature(const NormalLaw& diseased, const NormalLaw& healthy,
                              int n_quad) {
  return composed_integral(healthy, diseased, n_quad);
}

double auc(const RocModel& roc, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return binormal_auc(conditional_law(roc.diseased(), x), conditional_law(roc.healthy(), x));
}

double auc_quadrature(const RocModel& roc, const Eigen::Ref<const Eigen::VectorXd>& x,
                      int n_quad) {
  return binormal_auc_quadrature(conditional_law(roc.diseased(), x),
                                 conditional_law(roc.healthy(), x), n_quad);
}

std::vector<double> auc_surface(const RocModel& roc, const Eigen::MatrixXd& grid) {
  if (grid.cols() != roc.dim()) {
    throw std::invalid_argument("roc: grid has " + std::to_string(grid.cols()) +
                                " columns, models expect " + std::to_string(roc.dim()));
  }
  std::vector<double> out(static_cast<std::size_t>(grid.rows()));
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = auc(roc, grid.row(static_cast<Index>(i)).transpose());
  });
  return out;
}

} // namespace knnloc
