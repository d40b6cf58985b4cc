#pragma once

#include "knnloc/estimators.hpp"

#include <Eigen/Core>

#include <vector>

namespace knnloc {

struct CdfValue {
  double value;
  bool degenerate;  // sigma(x) == 0: step function at m(x)
};

//! Gaussian location-scale law at fixed x: F(t) = Phi((t - m) / sigma).
struct NormalLaw {
  double mean = 0.0;
  double sd = 1.0;

  CdfValue cdf(double t) const;
  double quantile(double u) const;
};

NormalLaw conditional_law(const ScaleLocModel& model,
                          const Eigen::Ref<const Eigen::VectorXd>& x);

CdfValue conditional_cdf(const ScaleLocModel& model, double t,
                         const Eigen::Ref<const Eigen::VectorXd>& x);

//! Diseased (D) and healthy (H) models over the same covariates.
class RocModel {
public:
  RocModel(ScaleLocModel diseased, ScaleLocModel healthy);

  const ScaleLocModel& diseased() const { return diseased_; }
  const ScaleLocModel& healthy() const { return healthy_; }
  Index dim() const { return diseased_.dim(); }

private:
  ScaleLocModel diseased_;
  ScaleLocModel healthy_;
};

struct RocPoint {
  double tpr;
  double fpr;
  bool degenerate;
};

RocPoint tpr_fpr(const RocModel& roc, double c, const Eigen::Ref<const Eigen::VectorXd>& x);

//! Closed form Phi((m_D - m_H) / sqrt(sd_D^2 + sd_H^2)). When both sds are 0
//! the result is 1, 0 or 0.5 by the sign of m_D - m_H.
double binormal_auc(const NormalLaw& diseased, const NormalLaw& healthy);

//! int_0^1 [1 - F_D(F_H^{-1}(1 - u))] du by the midpoint rule with n_quad
//! nodes in s = Phi^{-1}(1 - u), truncated to |s| <= 10.
double binormal_auc_quadrature(const NormalLaw& diseased, const NormalLaw& healthy,
                               int n_quad);

//! Same rule for int_0^1 [1 - F_H(F_D^{-1}(1 - u))] du, the composition with
//! the roles of the two laws swapped. It equals 1 - AUC.
double swapped_auc_quadrature(const NormalLaw& diseased, const NormalLaw& healthy,
                              int n_quad);

double auc(const RocModel& roc, const Eigen::Ref<const Eigen::VectorXd>& x);
double auc_quadrature(const RocModel& roc, const Eigen::Ref<const Eigen::VectorXd>& x,
                      int n_quad);

//! AUC at every row of `grid` (raw covariates).
std::vector<double> auc_surface(const RocModel& roc, const Eigen::MatrixXd& grid);

} // namespace knnloc
