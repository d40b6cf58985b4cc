#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <optional>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace knnloc {

template <typename Scalar>
using PointMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

//! One k-nearest-neighbor request. `point` must have the index dimension.
template <typename Scalar>
struct NeighborQuery {
  std::span<const Scalar> point;
  Eigen::Index k = 1;
  std::optional<Eigen::Index> exclude;
};

//! Neighbors in ascending (squared distance, row index) order. `distances`
//! holds Euclidean distances.
template <typename Scalar>
struct NeighborList {
  std::vector<Eigen::Index> indices;
  std::vector<Scalar> distances;

  std::size_t size() const { return indices.size(); }
};

namespace detail {

template <typename Scalar>
inline Scalar squared_distance(const Scalar* a, const Scalar* b,
                               Eigen::Index dim) {
  Scalar s = 0;
  for (Eigen::Index d = 0; d < dim; ++d) {
    const Scalar diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

//! Squared distances from `q` to `count` consecutive rows starting at `rows`.
//! Each sum runs over the dimensions in order, exactly as squared_distance;
//! points are interleaved in blocks of 8 only for instruction-level
//! parallelism.
template <typename Scalar>
inline void squared_distances(const Scalar* q, const Scalar* rows,
                              Eigen::Index count, Eigen::Index dim,
                              Scalar* out) {
  constexpr Eigen::Index B = 8;
  Eigen::Index j = 0;
  for (; j + B <= count; j += B) {
    Scalar acc[B] = {};
    const Scalar* base = rows + j * dim;
    for (Eigen::Index d = 0; d < dim; ++d) {
      const Scalar qd = q[d];
      for (Eigen::Index t = 0; t < B; ++t) {
        const Scalar diff = qd - base[t * dim + d];
        acc[t] += diff * diff;
      }
    }
    for (Eigen::Index t = 0; t < B; ++t) out[j + t] = acc[t];
  }
  for (; j < count; ++j) out[j] = squared_distance(q, rows + j * dim, dim);
}

template <typename Scalar>
struct Candidate {
  Scalar sq;
  Eigen::Index index;

  friend bool operator<(const Candidate& a, const Candidate& b) {
    return a.sq < b.sq || (a.sq == b.sq && a.index < b.index);
  }
};

template <typename Scalar>
void check_query(Eigen::Index m, Eigen::Index dim,
                 const NeighborQuery<Scalar>& q) {
  if (static_cast<Eigen::Index>(q.point.size()) != dim) {
    throw std::invalid_argument("knn query: point has dimension " +
                                std::to_string(q.point.size()) +
                                ", index has " + std::to_string(dim));
  }
  if (q.exclude && (*q.exclude < 0 || *q.exclude >= m)) {
    throw std::out_of_range("knn query: exclude index " +
                            std::to_string(*q.exclude) + " outside 0.." +
                            std::to_string(m - 1));
  }
  const Eigen::Index available = m - (q.exclude ? 1 : 0);
  if (q.k < 1 || q.k > available) {
    throw std::out_of_range("knn query: k = " + std::to_string(q.k) +
                            " outside 1.." + std::to_string(available));
  }
}

template <typename Scalar>
NeighborList<Scalar> to_list(std::vector<Candidate<Scalar>> cands) {
  std::sort(cands.begin(), cands.end());
  NeighborList<Scalar> out;
  out.indices.reserve(cands.size());
  out.distances.reserve(cands.size());
  for (const auto& c : cands) {
    out.indices.push_back(c.index);
    out.distances.push_back(std::sqrt(c.sq));
  }
  return out;
}

} // namespace detail

//! Exact k-NN by scanning every point. Reference implementation for KdTree.
template <typename Scalar>
NeighborList<Scalar> query_brute(const PointMatrix<Scalar>& points,
                                 const NeighborQuery<Scalar>& q) {
  detail::check_query(points.rows(), points.cols(), q);
  std::vector<Scalar> sq(static_cast<std::size_t>(points.rows()));
  detail::squared_distances(q.point.data(), points.data(), points.rows(),
                            points.cols(), sq.data());
  std::vector<detail::Candidate<Scalar>> all;
  all.reserve(sq.size());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (q.exclude && *q.exclude == i) continue;
    all.push_back({sq[static_cast<std::size_t>(i)], i});
  }
  if (q.k < static_cast<Eigen::Index>(all.size())) {
    std::nth_element(all.begin(), all.begin() + (q.k - 1), all.end());
    all.resize(static_cast<std::size_t>(q.k));
  }
  return detail::to_list(std::move(all));
}

//! Static kd-tree over the rows of a point matrix.
//!
//! Nodes split at the median of the dimension with the widest spread; each
//! node keeps its bounding box, and a subtree is skipped only when the box is
//! strictly farther than the current k-th candidate, so results are identical
//! to query_brute including the (distance, index) tie order.
template <typename Scalar = double>
class KdTree {
public:
  using Points = PointMatrix<Scalar>;

  explicit KdTree(Points points, Eigen::Index leaf_size = 32)
      : points_(std::move(points)), leaf_size_(std::max<Eigen::Index>(1, leaf_size)) {
    if (points_.rows() < 1 || points_.cols() < 1) {
      throw std::invalid_argument("kd-tree needs at least one point and one dimension");
    }
    if (!points_.allFinite()) {
      throw std::invalid_argument("kd-tree points must be finite");
    }
    order_.resize(static_cast<std::size_t>(points_.rows()));
    for (Eigen::Index i = 0; i < points_.rows(); ++i) order_[static_cast<std::size_t>(i)] = i;
    build(0, points_.rows());
    ordered_.resize(points_.rows(), points_.cols());
    for (Eigen::Index r = 0; r < points_.rows(); ++r) {
      ordered_.row(r) = points_.row(order_[static_cast<std::size_t>(r)]);
    }
  }

  Eigen::Index size() const { return points_.rows(); }
  Eigen::Index dim() const { return points_.cols(); }
  Eigen::Index leaf_size() const { return leaf_size_; }
  const Points& points() const { return points_; }

  NeighborList<Scalar> query(const NeighborQuery<Scalar>& q) const {
    detail::check_query(points_.rows(), points_.cols(), q);
    Heap heap;
    search(0, q, heap);
    std::vector<detail::Candidate<Scalar>> found;
    found.reserve(heap.size());
    while (!heap.empty()) {
      found.push_back(heap.top());
      heap.pop();
    }
    return detail::to_list(std::move(found));
  }

  NeighborList<Scalar> query(std::span<const Scalar> point, Eigen::Index k,
                             std::optional<Eigen::Index> exclude = {}) const {
    return query(NeighborQuery<Scalar>{point, k, exclude});
  }

private:
  using Heap = std::priority_queue<detail::Candidate<Scalar>>;
  static constexpr Eigen::Index kMaxLeafBlock = 64;

  struct Node {
    Eigen::Index begin;
    Eigen::Index end;
    Eigen::Index left = -1;
    Eigen::Index right = -1;
  };

  const Scalar* lo(Eigen::Index node) const { return &bounds_[static_cast<std::size_t>(2 * node * dim())]; }
  const Scalar* hi(Eigen::Index node) const { return lo(node) + dim(); }

  Eigen::Index build(Eigen::Index begin, Eigen::Index end) {
    const Eigen::Index id = static_cast<Eigen::Index>(nodes_.size());
    nodes_.push_back({begin, end});
    const Eigen::Index d = dim();
    bounds_.resize(bounds_.size() + static_cast<std::size_t>(2 * d));
    Scalar* lower = &bounds_[static_cast<std::size_t>(2 * id * d)];
    Scalar* upper = lower + d;
    for (Eigen::Index c = 0; c < d; ++c) {
      lower[c] = upper[c] = points_(order_[static_cast<std::size_t>(begin)], c);
    }
    for (Eigen::Index r = begin + 1; r < end; ++r) {
      const Scalar* p = points_.row(order_[static_cast<std::size_t>(r)]).data();
      for (Eigen::Index c = 0; c < d; ++c) {
        lower[c] = std::min(lower[c], p[c]);
        upper[c] = std::max(upper[c], p[c]);
      }
    }
    Eigen::Index axis = 0;
    Scalar spread = upper[0] - lower[0];
    for (Eigen::Index c = 1; c < d; ++c) {
      if (upper[c] - lower[c] > spread) {
        spread = upper[c] - lower[c];
        axis = c;
      }
    }
    if (end - begin <= leaf_size_ || !(spread > 0)) return id;

    const Eigen::Index mid = begin + (end - begin) / 2;
    auto first = order_.begin() + begin;
    std::nth_element(first, order_.begin() + mid, order_.begin() + end,
                     [&](Eigen::Index a, Eigen::Index b) {
                       const Scalar va = points_(a, axis), vb = points_(b, axis);
                       return va < vb || (va == vb && a < b);
                     });
    const Eigen::Index left = build(begin, mid);
    const Eigen::Index right = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  // Squared distance from q to the node's box, summed in dimension order so
  // it never exceeds squared_distance to any point inside the box.
  Scalar box_distance(Eigen::Index node, const Scalar* q) const {
    const Scalar* lower = lo(node);
    const Scalar* upper = hi(node);
    Scalar s = 0;
    for (Eigen::Index c = 0; c < dim(); ++c) {
      Scalar diff = 0;
      if (q[c] < lower[c]) {
        diff = lower[c] - q[c];
      } else if (q[c] > upper[c]) {
        diff = q[c] - upper[c];
      }
      s += diff * diff;
    }
    return s;
  }

  void search(Eigen::Index node_id, const NeighborQuery<Scalar>& q, Heap& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(node_id)];
    const Scalar* qp = q.point.data();
    if (node.left < 0) {
      Scalar sq[kMaxLeafBlock];
      for (Eigen::Index b = node.begin; b < node.end; b += kMaxLeafBlock) {
        const Eigen::Index count = std::min(kMaxLeafBlock, node.end - b);
        detail::squared_distances(qp, ordered_.row(b).data(), count, dim(), sq);
        for (Eigen::Index t = 0; t < count; ++t) {
          const Eigen::Index idx = order_[static_cast<std::size_t>(b + t)];
          if (q.exclude && *q.exclude == idx) continue;
          const detail::Candidate<Scalar> c{sq[t], idx};
          if (static_cast<Eigen::Index>(heap.size()) < q.k) {
            heap.push(c);
          } else if (c < heap.top()) {
            heap.pop();
            heap.push(c);
          }
        }
      }
      return;
    }
    Eigen::Index first = node.left;
    Eigen::Index second = node.right;
    Scalar d_first = box_distance(first, qp);
    Scalar d_second = box_distance(second, qp);
    if (d_second < d_first) {
      std::swap(first, second);
      std::swap(d_first, d_second);
    }
    if (prunable(d_first, heap, q.k)) return;
    search(first, q, heap);
    if (prunable(d_second, heap, q.k)) return;
    search(second, q, heap);
  }

  static bool prunable(Scalar bound, const Heap& heap, Eigen::Index k) {
    return static_cast<Eigen::Index>(heap.size()) == k && bound > heap.top().sq;
  }

  Points points_;
  Points ordered_;  // points_ rows in tree order, so leaves are contiguous
  Eigen::Index leaf_size_;
  std::vector<Eigen::Index> order_;
  std::vector<Node> nodes_;
  std::vector<Scalar> bounds_;
};

} // namespace knnloc
