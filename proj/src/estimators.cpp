#include "knnloc/estimators.hpp"

#include "knnloc/parallel.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace knnloc {

RowMatrix gather_points(const Eigen::MatrixXd& features,
                        std::span<const Index> rows, const Support& support) {
  RowMatrix out(static_cast<Index>(rows.size()),
                static_cast<Index>(support.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < support.size(); ++c) {
      out(static_cast<Index>(r), static_cast<Index>(c)) =
          features(rows[r], support[c]);
    }
  }
  return out;
}

void check_support(const Support& support, Index p) {
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (support[i] < 0 || support[i] >= p) {
      throw std::invalid_argument("support feature " +
                                  std::to_string(support[i]) + " outside 0.." +
                                  std::to_string(p - 1));
    }
    if (i > 0 && support[i] <= support[i - 1]) {
      throw std::invalid_argument("support must be sorted without duplicates");
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

// Row indices 0..n-1 ordered by (sq[j], j). Stable LSD radix passes on the
// upper 32 bits of the (nonnegative) distance bit pattern, then insertion sort
// inside runs sharing those bits.
void distance_order(const std::vector<double>& sq, std::vector<std::uint64_t>& keys,
                    std::vector<std::uint64_t>& scratch) {
  const std::size_t n = sq.size();
  keys.resize(n);
  scratch.resize(n);
  std::array<std::array<std::uint32_t, 2048>, 3> count{};
  for (std::size_t j = 0; j < n; ++j) {
    const std::uint64_t high = std::bit_cast<std::uint64_t>(sq[j]) >> 32;
    keys[j] = (high << 32) | j;
    ++count[0][high & 2047u];
    ++count[1][(high >> 11) & 2047u];
    ++count[2][(high >> 22) & 2047u];
  }
  for (int pass = 0; pass < 3; ++pass) {
    auto& c = count[static_cast<std::size_t>(pass)];
    const int shift = 32 + 11 * pass;
    if (c[(keys[0] >> shift) & 2047u] == n) continue;
    std::uint32_t total = 0;
    for (auto& x : c) {
      const std::uint32_t v = x;
      x = total;
      total += v;
    }
    for (const std::uint64_t k : keys) scratch[c[(k >> shift) & 2047u]++] = k;
    keys.swap(scratch);
  }
  auto less = [&](std::uint64_t a, std::uint64_t b) {
    const double da = sq[a & 0xffffffffu], db = sq[b & 0xffffffffu];
    return da < db || (da == db && (a & 0xffffffffu) < (b & 0xffffffffu));
  };
  for (std::size_t i = 1; i < n; ++i) {
    if ((keys[i] >> 32) != (keys[i - 1] >> 32) || !less(keys[i], keys[i - 1])) continue;
    const std::uint64_t k = keys[i];
    std::size_t j = i;
    while (j > 0 && (keys[j - 1] >> 32) == (k >> 32) && less(k, keys[j - 1])) {
      keys[j] = keys[j - 1];
      --j;
    }
    keys[j] = k;
  }
}

} // namespace

LocalAverage::LocalAverage(Support support, Index k, RowMatrix points,
                           Eigen::VectorXd values, Index leaf_size)
    : support_(std::move(support)), k_(k), leaf_size_(leaf_size),
      points_(std::move(points)), values_(std::move(values)) {
  const Index n = values_.size();
  if (n < 1) throw std::invalid_argument("local average: no training rows");
  if (points_.rows() != n) {
    throw std::invalid_argument("local average: point/value count mismatch");
  }
  if (points_.cols() != static_cast<Index>(support_.size())) {
    throw std::invalid_argument("local average: point width does not match support");
  }
  if (k_ < 1 || k_ > n) {
    throw std::out_of_range("k = " + std::to_string(k_) + " outside 1.." +
                            std::to_string(n));
  }
  if (!points_.allFinite() || !values_.allFinite()) {
    throw std::invalid_argument("local average: training data must be finite");
  }
  if (support_.empty()) {
    constant_ = values_.sum() / static_cast<double>(n);
  } else if (k_ * 16 <= n) {
    tree_ = std::make_shared<const KdTree<double>>(points_, leaf_size_);
  }
}

double LocalAverage::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (values_.size() == 0) throw std::logic_error("local average not fitted");
  if (support_.empty()) return constant_;
  Eigen::VectorXd q(static_cast<Index>(support_.size()));
  for (std::size_t c = 0; c < support_.size(); ++c) {
    if (support_[c] >= x.size()) {
      throw std::invalid_argument("feature vector too short for model support");
    }
    q(static_cast<Index>(c)) = x(support_[c]);
  }
  double s = 0.0;
  if (tree_) {
    const auto nb =
        tree_->query(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())), k_);
    for (Index idx : nb.indices) s += values_(idx);
  } else {
    thread_local std::vector<double> sq;
    thread_local std::vector<std::uint64_t> keys;
    thread_local std::vector<std::uint64_t> scratch;
    sq.resize(static_cast<std::size_t>(points_.rows()));
    detail::squared_distances(q.data(), points_.data(), points_.rows(), points_.cols(),
                              sq.data());
    distance_order(sq, keys, scratch);
    for (Index r = 0; r < k_; ++r) {
      s += values_(static_cast<Index>(keys[static_cast<std::size_t>(r)] & 0xffffffffu));
    }
  }
  return s / static_cast<double>(k_);
}

// ---------------------------------------------------------------------------

MeanModel::MeanModel(Support support, Index k, RowMatrix points,
                     Eigen::VectorXd responses, IndexSet train_rows,
                     Index leaf_size)
    : average_(std::move(support), k, std::move(points), std::move(responses),
               leaf_size),
      train_rows_(std::move(train_rows)) {}

Eigen::VectorXd MeanModel::predict_rows(const Eigen::MatrixXd& features) const {
  Eigen::VectorXd out(features.rows());
  parallel_for(static_cast<std::size_t>(features.rows()), [&](std::size_t i) {
    const auto r = static_cast<Index>(i);
    out(r) = average_(features.row(r).transpose());
  });
  return out;
}

MeanModel fit_mean(const Dataset& data, std::span<const Index> rows,
                   Support support, Index k, Index leaf_size) {
  if (rows.empty()) throw std::invalid_argument("fit_mean: empty row set");
  check_support(support, data.cols());
  Eigen::VectorXd y(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) y(static_cast<Index>(r)) = data.response(rows[r]);
  if (support.empty()) k = static_cast<Index>(rows.size());
  RowMatrix pts = gather_points(data.features, rows, support);
  return MeanModel(std::move(support), k, std::move(pts), std::move(y),
                   IndexSet(rows.begin(), rows.end()), leaf_size);
}

Eigen::VectorXd compute_residuals(const MeanModel& model, const Dataset& data,
                                  std::span<const Index> rows) {
  if (!disjoint(model.train_rows(), rows)) {
    throw std::invalid_argument(
        "compute_residuals: rows overlap the split that fitted the mean model");
  }
  Eigen::VectorXd out(static_cast<Index>(rows.size()));
  parallel_for(rows.size(), [&](std::size_t i) {
    const Index r = rows[i];
    out(static_cast<Index>(i)) =
        data.response(r) - model.predict(data.features.row(r).transpose());
  });
  return out;
}

// ---------------------------------------------------------------------------

VarianceModel::VarianceModel(Support support, Index k, RowMatrix points,
                             Eigen::VectorXd squared_residuals,
                             IndexSet train_rows, bool homoscedastic,
                             Index leaf_size)
    : train_rows_(std::move(train_rows)) {
  if ((squared_residuals.array() < 0.0).any()) {
    throw std::invalid_argument("variance model: squared residuals must be >= 0");
  }
  const Index n = squared_residuals.size();
  homoscedastic_ = homoscedastic || support.empty();
  if (homoscedastic_) {
    average_ = LocalAverage({}, n, RowMatrix(n, 0), std::move(squared_residuals),
                            leaf_size);
    constant_variance_ = average_(Eigen::VectorXd());
  } else {
    average_ = LocalAverage(std::move(support), k, std::move(points),
                            std::move(squared_residuals), leaf_size);
  }
}

double VarianceModel::predict_variance(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return std::max(0.0, average_(x));
}

double VarianceModel::predict_sd(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return std::sqrt(predict_variance(x));
}

VarianceModel fit_variance(const Eigen::VectorXd& residuals, const Dataset& data,
                           std::span<const Index> rows, Support support,
                           Index k, bool homoscedastic, Index leaf_size) {
  if (rows.empty()) throw std::invalid_argument("fit_variance: empty row set");
  if (residuals.size() != static_cast<Index>(rows.size())) {
    throw std::invalid_argument("fit_variance: residual count does not match rows");
  }
  check_support(support, data.cols());
  Eigen::VectorXd sq = residuals.array().square();
  if (homoscedastic || support.empty()) {
    return VarianceModel({}, static_cast<Index>(rows.size()), RowMatrix(),
                         std::move(sq), IndexSet(rows.begin(), rows.end()), true,
                         leaf_size);
  }
  RowMatrix pts = gather_points(data.features, rows, support);
  return VarianceModel(std::move(support), k, std::move(pts), std::move(sq),
                       IndexSet(rows.begin(), rows.end()), false, leaf_size);
}

// ---------------------------------------------------------------------------

std::vector<Index> default_k_grid(Index n) {
  return KGridPolicy{}.materialize(n);
}

std::vector<Index> KGridPolicy::materialize(Index n) const {
  if (n < 2) {
    throw std::invalid_argument("k grid: need at least 2 rows for leave-one-out, got " +
                                std::to_string(n));
  }
  std::vector<Index> grid;
  auto geometric = [&] {
    if (!(ratio > 1.0)) throw std::invalid_argument("k grid: ratio must exceed 1");
    for (int j = 0;; ++j) {
      const auto k = static_cast<Index>(std::ceil(std::pow(ratio, j)));
      if (k > n - 1) break;
      if (grid.empty() || grid.back() != k) grid.push_back(k);
    }
  };
  switch (kind) {
  case Kind::automatic:
    if (n <= full_up_to) {
      for (Index k = 1; k <= n - 1; ++k) grid.push_back(k);
    } else {
      geometric();
    }
    break;
  case Kind::full:
    for (Index k = 1; k <= n - 1; ++k) grid.push_back(k);
    break;
  case Kind::geometric:
    geometric();
    break;
  case Kind::explicit_values:
    for (Index k : values) {
      if (k >= 1 && k <= n - 1) grid.push_back(k);
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    if (grid.empty()) {
      throw std::invalid_argument("k grid: no explicit value lies in [1, " +
                                  std::to_string(n - 1) + "]");
    }
    break;
  }
  return grid;
}

KSelectionTrace select_k(const RowMatrix& points, const Eigen::VectorXd& responses,
                         std::vector<Index> grid, Index leaf_size) {
  const Index n = points.rows();
  if (responses.size() != n) {
    throw std::invalid_argument("select_k: response count does not match rows");
  }
  if (points.cols() < 1) throw std::invalid_argument("select_k: empty support");
  if (n >= (Index{1} << 32)) throw std::invalid_argument("select_k: too many rows");
  if (grid.empty()) throw std::invalid_argument("select_k: empty k grid");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.front() < 1 || grid.back() > n - 1) {
    throw std::out_of_range("select_k: grid values must lie in [1, " +
                            std::to_string(n - 1) + "]");
  }
  const Index kmax = grid.back();
  const auto g = grid.size();
  const Index d = points.cols();

  // Small neighborhoods use the tree; larger ones scan and sort all distances.
  std::unique_ptr<KdTree<double>> tree;
  if (kmax * 16 <= n) tree = std::make_unique<KdTree<double>>(points, leaf_size);

  Eigen::MatrixXd sq_err(static_cast<Index>(g), n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ui) {
    const auto i = static_cast<Index>(ui);
    thread_local std::vector<Index> order;
    thread_local std::vector<double> sq;
    thread_local std::vector<std::uint64_t> keys;
    thread_local std::vector<std::uint64_t> scratch;
    order.clear();
    if (tree) {
      const auto nb = tree->query(
          std::span<const double>(points.row(i).data(), static_cast<std::size_t>(d)),
          kmax, i);
      order.assign(nb.indices.begin(), nb.indices.end());
    } else {
      sq.resize(static_cast<std::size_t>(n));
      detail::squared_distances(points.row(i).data(), points.data(), n, d, sq.data());
      distance_order(sq, keys, scratch);
      for (const std::uint64_t k : keys) {
        const auto j = static_cast<Index>(k & 0xffffffffu);
        if (j == i) continue;
        order.push_back(j);
        if (static_cast<Index>(order.size()) == kmax) break;
      }
    }
    double s = 0.0;
    std::size_t gi = 0;
    for (Index r = 0; r < kmax && gi < g; ++r) {
      s += responses(order[static_cast<std::size_t>(r)]);
      if (r + 1 == grid[gi]) {
        const double e = responses(i) - s / static_cast<double>(grid[gi]);
        sq_err(static_cast<Index>(gi), i) = e * e;
        ++gi;
      }
    }
  });

  KSelectionTrace trace;
  trace.grid = std::move(grid);
  trace.scores.resize(g);
  double best = 0.0;
  for (std::size_t gi = 0; gi < g; ++gi) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) total += sq_err(static_cast<Index>(gi), i);
    trace.scores[gi] = total / static_cast<double>(n);
    if (gi == 0 || trace.scores[gi] <= best) {
      best = trace.scores[gi];
      trace.chosen = trace.grid[gi];
    }
  }
  return trace;
}

KSelectionTrace select_k(const Dataset& data, std::span<const Index> rows,
                         const Support& support, const Eigen::VectorXd& responses,
                         std::vector<Index> grid, Index leaf_size) {
  check_support(support, data.cols());
  return select_k(gather_points(data.features, rows, support), responses,
                  std::move(grid), leaf_size);
}

// ---------------------------------------------------------------------------

void ScaleLocModel::validate() const {
  const Index p = dim();
  if (p < 1) throw std::invalid_argument("model: no features");
  if (standardizer.size() != p) {
    throw std::invalid_argument("model: standardizer width does not match features");
  }
  check_support(mean.support(), p);
  check_support(variance.support(), p);
  if (error_mode == ErrorMode::empirical && !calibration) {
    throw std::invalid_argument("model: empirical error mode needs calibration residuals");
  }
  if (error_mode == ErrorMode::gaussian && calibration) {
    throw std::invalid_argument("model: calibration residuals present in gaussian mode");
  }
}

Prediction ScaleLocModel::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != dim()) {
    throw std::invalid_argument("predict: expected " + std::to_string(dim()) +
                                " features, got " + std::to_string(x.size()));
  }
  const Eigen::VectorXd z = standardizer.apply(x);
  return {mean.predict(z), variance.predict_sd(z)};
}

Eigen::MatrixXd ScaleLocModel::predict_rows(const Eigen::MatrixXd& raw_features) const {
  if (raw_features.cols() != dim()) {
    throw std::invalid_argument("predict: expected " + std::to_string(dim()) +
                                " features, got " + std::to_string(raw_features.cols()));
  }
  Eigen::MatrixXd out(raw_features.rows(), 2);
  parallel_for(static_cast<std::size_t>(raw_features.rows()), [&](std::size_t i) {
    const auto r = static_cast<Index>(i);
    const Prediction p = predict(raw_features.row(r).transpose());
    out(r, 0) = p.mean;
    out(r, 1) = p.sd;
  });
  return out;
}

} // namespace knnloc
