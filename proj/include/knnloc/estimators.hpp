#pragma once

#include "knnloc/data.hpp"
#include "knnloc/knn_index.hpp"

#include <Eigen/Core>

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace knnloc {

//! Sorted, duplicate-free feature (column) indices.
using Support = std::vector<Index>;
using RowMatrix = PointMatrix<double>;

//! Copies rows x support columns of `features` into a row-major block.
RowMatrix gather_points(const Eigen::MatrixXd& features,
                        std::span<const Index> rows, const Support& support);

//! Throws unless `support` is sorted, unique and inside [0, p).
void check_support(const Support& support, Index p);

//! Average of `values` over the k nearest training points, distances taken in
//! the support coordinates only. With an empty support it is the plain mean of
//! all values (the constant model).
class LocalAverage {
public:
  LocalAverage() = default;
  LocalAverage(Support support, Index k, RowMatrix points,
               Eigen::VectorXd values, Index leaf_size = 32);

  //! `x` is a full feature vector; only support coordinates are read.
  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  const Support& support() const { return support_; }
  Index k() const { return k_; }
  Index leaf_size() const { return leaf_size_; }
  const RowMatrix& points() const { return points_; }
  const Eigen::VectorXd& values() const { return values_; }
  bool is_constant() const { return support_.empty(); }

private:
  Support support_;
  Index k_ = 0;
  Index leaf_size_ = 32;
  RowMatrix points_;
  Eigen::VectorXd values_;
  std::shared_ptr<const KdTree<double>> tree_;
  double constant_ = 0.0;
};

//! kNN conditional mean m(x) fitted on one split.
class MeanModel {
public:
  MeanModel() = default;
  MeanModel(Support support, Index k, RowMatrix points,
            Eigen::VectorXd responses, IndexSet train_rows,
            Index leaf_size = 32);

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return average_(x);
  }
  Eigen::VectorXd predict_rows(const Eigen::MatrixXd& features) const;

  const Support& support() const { return average_.support(); }
  Index k() const { return average_.k(); }
  bool is_constant() const { return average_.is_constant(); }
  const LocalAverage& average() const { return average_; }
  //! Dataset rows the model was fitted on.
  const IndexSet& train_rows() const { return train_rows_; }

private:
  LocalAverage average_;
  IndexSet train_rows_;
};

MeanModel fit_mean(const Dataset& data, std::span<const Index> rows,
                   Support support, Index k, Index leaf_size = 32);

//! Y - m(X) on `rows`. Throws when `rows` overlaps the rows that fitted the
//! model.
Eigen::VectorXd compute_residuals(const MeanModel& model, const Dataset& data,
                                  std::span<const Index> rows);

//! Residual-based conditional variance: a kNN average of squared residuals, or
//! a single pooled value when homoscedastic.
class VarianceModel {
public:
  VarianceModel() = default;
  VarianceModel(Support support, Index k, RowMatrix points,
                Eigen::VectorXd squared_residuals, IndexSet train_rows,
                bool homoscedastic, Index leaf_size = 32);

  double predict_variance(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double predict_sd(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  bool homoscedastic() const { return homoscedastic_; }
  double constant_variance() const { return constant_variance_; }
  const Support& support() const { return average_.support(); }
  Index k() const { return average_.k(); }
  const LocalAverage& average() const { return average_; }
  const IndexSet& train_rows() const { return train_rows_; }

private:
  LocalAverage average_;
  IndexSet train_rows_;
  bool homoscedastic_ = true;
  double constant_variance_ = 0.0;
};

//! `residuals` are the raw residuals of the listed rows; they are squared here.
//! With `homoscedastic` (or an empty support) the model is the pooled mean of
//! the squared residuals.
VarianceModel fit_variance(const Eigen::VectorXd& residuals,
                           const Dataset& data, std::span<const Index> rows,
                           Support support, Index k, bool homoscedastic,
                           Index leaf_size = 32);

//! Leave-one-out scores f(k) over a grid, and the minimizer.
struct KSelectionTrace {
  std::vector<Index> grid;
  std::vector<double> scores;
  Index chosen = 0;
};

//! Candidate k values for a slice of n rows.
struct KGridPolicy {
  enum class Kind { automatic, full, geometric, explicit_values };

  Kind kind = Kind::automatic;
  std::vector<Index> values;   // explicit_values only
  Index full_up_to = 1000;     // automatic: full grid while n <= this
  double ratio = 1.25;         // geometric step

  //! Grid restricted to [1, n - 1]. Explicit values outside that range are
  //! dropped; throws when nothing remains.
  std::vector<Index> materialize(Index n) const;
};

//! 1..n-1 when n <= 1000, otherwise the distinct values ceil(1.25^j) below n.
std::vector<Index> default_k_grid(Index n);

//! Leave-one-out cross-validation of the kNN average:
//!   f(k) = 1/n sum_i (r_i - (1/k) sum_{j in N_k(x_i), j != i} r_j)^2
//! with neighbors in (distance, index) order. The chosen k minimizes f; ties
//! go to the largest k. Neighbor sums are accumulated in neighbor order, so
//! the scores are reproducible bit-for-bit.
KSelectionTrace select_k(const RowMatrix& points,
                         const Eigen::VectorXd& responses,
                         std::vector<Index> grid, Index leaf_size = 32);

KSelectionTrace select_k(const Dataset& data, std::span<const Index> rows,
                         const Support& support,
                         const Eigen::VectorXd& responses,
                         std::vector<Index> grid, Index leaf_size = 32);

enum class ErrorMode { gaussian, empirical };

struct Prediction {
  double mean;
  double sd;
};

//! Fitted scale-location model Y = m(X) + eps * sigma(X).
struct ScaleLocModel {
  std::vector<std::string> feature_names;
  std::string target_name;
  Standardizer standardizer;
  MeanModel mean;
  VarianceModel variance;
  ErrorMode error_mode = ErrorMode::gaussian;
  //! Standardized residuals (Y - m)/sigma on the calibration split. Present
  //! exactly when error_mode is empirical.
  std::optional<Eigen::VectorXd> calibration;
  Index calibration_dropped = 0;

  Index dim() const { return static_cast<Index>(feature_names.size()); }

  //! Throws on inconsistent parts (dimensions, calibration/mode mismatch).
  void validate() const;

  //! `x` is a raw (unstandardized) feature vector of length dim().
  Prediction predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  //! Row-wise predictions; column 0 is the mean, column 1 the sd.
  Eigen::MatrixXd predict_rows(const Eigen::MatrixXd& raw_features) const;
};

} // namespace knnloc
