#include "knnloc/knn_index.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace knnloc;
using Points = PointMatrix<double>;

namespace {

Points column(std::initializer_list<double> v) {
  Points p(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) p(i++, 0) = x;
  return p;
}

Points random_points(oracle::Gen& g, Eigen::Index m, Eigen::Index d, bool lattice) {
  Points p(m, d);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      // Lattice coordinates force many exact distance ties.
      p(i, j) = lattice ? static_cast<double>(g.integer(0, 3)) : g.uniform(-1, 1);
    }
  }
  return p;
}

void expect_matches_oracle(const Points& pts, const NeighborList<double>& got,
                           const double* q, Eigen::Index k, Eigen::Index exclude) {
  const auto ref = oracle::knn(pts, q, k, exclude);
  ASSERT_EQ(got.size(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_EQ(got.indices[i], ref[i].index);
    EXPECT_EQ(got.distances[i], std::sqrt(ref[i].sq));
  }
}

} // namespace

TEST(KdTree, HandExample) {
  const KdTree<double> tree(column({0.0, 1.0, 2.0, 4.0}));
  const double q = 1.2;
  const auto r = tree.query(std::span<const double>(&q, 1), 2);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r.indices[0], 1);
  EXPECT_EQ(r.indices[1], 2);
  EXPECT_NEAR(r.distances[0], 0.2, 1e-15);
  EXPECT_NEAR(r.distances[1], 0.8, 1e-15);
}

TEST(KdTree, SingletonAndSelfMatch) {
  const KdTree<double> one(column({3.5}));
  const double q = -10;
  const auto r = one.query(std::span<const double>(&q, 1), 1);
  EXPECT_EQ(r.indices, std::vector<Eigen::Index>{0});

  const KdTree<double> tree(column({0.0, 1.0, 2.0, 4.0}));
  const double s = 2.0;
  const auto self = tree.query(std::span<const double>(&s, 1), 1);
  EXPECT_EQ(self.indices[0], 2);
  EXPECT_EQ(self.distances[0], 0.0);
  const auto other = tree.query({std::span<const double>(&s, 1), 1, Eigen::Index{2}});
  EXPECT_EQ(other.indices[0], 1);
  EXPECT_EQ(other.distances[0], 1.0);
}

TEST(KdTree, DuplicatesOrderedByIndex) {
  const KdTree<double> tree(column({5.0, 1.0, 1.0, 1.0, 0.0}), 1);
  const double q = 1.0;
  const auto r = tree.query(std::span<const double>(&q, 1), 4);
  EXPECT_EQ(r.indices, (std::vector<Eigen::Index>{1, 2, 3, 4}));
}

TEST(KdTree, FullOrderingWhenKEqualsM) {
  oracle::Gen g(5);
  const Points pts = random_points(g, 37, 3, false);
  const KdTree<double> tree(pts, 4);
  const double q[3] = {0.1, -0.2, 0.3};
  expect_matches_oracle(pts, tree.query(std::span<const double>(q, 3), 37), q, 37, -1);
}

TEST(KdTree, RandomInstancesMatchBruteForce) {
  oracle::Gen g(2024);
  for (int inst = 0; inst < 200; ++inst) {
    const Eigen::Index m = g.integer(1, 200);
    const Eigen::Index d = g.integer(1, 8);
    const Points pts = random_points(g, m, d, inst % 3 == 0);
    const KdTree<double> tree(pts, g.integer(1, 40));
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<double> q(static_cast<std::size_t>(d));
      const bool on_point = rep % 2 == 0;
      const Eigen::Index at = g.integer(0, m - 1);
      for (Eigen::Index j = 0; j < d; ++j) {
        q[static_cast<std::size_t>(j)] = on_point ? pts(at, j) : g.uniform(-1.2, 1.2);
      }
      const bool exclude = on_point && m > 1 && rep == 2;
      const Eigen::Index avail = m - (exclude ? 1 : 0);
      const Eigen::Index k = g.integer(1, std::min<Eigen::Index>(20, avail));
      NeighborQuery<double> nq{std::span<const double>(q), k, std::nullopt};
      if (exclude) nq.exclude = at;
      const auto fast = tree.query(nq);
      const auto brute = query_brute(pts, nq);
      expect_matches_oracle(pts, fast, q.data(), k, exclude ? at : -1);
      EXPECT_EQ(fast.indices, brute.indices);
      EXPECT_EQ(fast.distances, brute.distances);
    }
  }
}

TEST(KdTree, NeighborSetsAreNested) {
  oracle::Gen g(77);
  const Points pts = random_points(g, 150, 4, true);
  const KdTree<double> tree(pts, 8);
  const double q[4] = {1, 2, 0, 3};
  for (Eigen::Index k = 1; k < 30; ++k) {
    const auto a = tree.query(std::span<const double>(q, 4), k);
    const auto b = tree.query(std::span<const double>(q, 4), k + 1);
    EXPECT_TRUE(std::equal(a.indices.begin(), a.indices.end(), b.indices.begin()));
  }
}

TEST(KdTree, ExclusionEqualsRemovingThePoint) {
  oracle::Gen g(8);
  const Points pts = random_points(g, 60, 2, false);
  const KdTree<double> tree(pts, 5);
  for (Eigen::Index ex = 0; ex < 60; ex += 7) {
    Points rest(59, 2);
    std::vector<Eigen::Index> back;
    for (Eigen::Index i = 0, r = 0; i < 60; ++i) {
      if (i == ex) continue;
      rest.row(r++) = pts.row(i);
      back.push_back(i);
    }
    const KdTree<double> reduced(rest, 5);
    const double q[2] = {pts(ex, 0), pts(ex, 1)};
    const auto a = tree.query({std::span<const double>(q, 2), 10, ex});
    const auto b = reduced.query(std::span<const double>(q, 2), 10);
    for (std::size_t i = 0; i < 10; ++i) {
      EXPECT_EQ(a.indices[i], back[static_cast<std::size_t>(b.indices[i])]);
      EXPECT_EQ(a.distances[i], b.distances[i]);
    }
  }
}

TEST(KdTree, FloatScalar) {
  PointMatrix<float> pts(3, 2);
  pts << 0.f, 0.f, 1.f, 1.f, 2.f, 2.f;
  const KdTree<float> tree(pts);
  const float q[2] = {1.9f, 1.9f};
  EXPECT_EQ(tree.query(std::span<const float>(q, 2), 1).indices[0], 2);
}

TEST(KdTree, Preconditions) {
  EXPECT_THROW(KdTree<double>(Points(0, 2)), std::invalid_argument);
  Points bad = column({1.0, std::nan("")});
  EXPECT_THROW(KdTree<double>{bad}, std::invalid_argument);
  const KdTree<double> tree(column({0.0, 1.0, 2.0}));
  const double q[2] = {0, 0};
  EXPECT_THROW(tree.query(std::span<const double>(q, 2), 1), std::invalid_argument);
  EXPECT_THROW(tree.query(std::span<const double>(q, 1), 4), std::out_of_range);
  EXPECT_THROW(tree.query(std::span<const double>(q, 1), 0), std::out_of_range);
  EXPECT_THROW(tree.query({std::span<const double>(q, 1), 3, Eigen::Index{0}}), std::out_of_range);
  EXPECT_THROW(tree.query({std::span<const double>(q, 1), 1, Eigen::Index{3}}), std::out_of_range);
}

TEST(SquaredDistances, BlockedKernelIsBitwiseEqual) {
  oracle::Gen g(4);
  for (Eigen::Index d : {1, 2, 3, 7, 13}) {
    const Points pts = random_points(g, 29, d, false);
    std::vector<double> q(static_cast<std::size_t>(d));
    for (auto& v : q) v = g.uniform(-1, 1);
    std::vector<double> out(29);
    detail::squared_distances(q.data(), pts.data(), 29, d, out.data());
    for (Eigen::Index i = 0; i < 29; ++i) {
      EXPECT_EQ(out[static_cast<std::size_t>(i)],
                detail::squared_distance(q.data(), pts.row(i).data(), d));
    }
  }
}
