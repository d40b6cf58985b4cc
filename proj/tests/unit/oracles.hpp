#pragma once

// Reference computations written independently of the library, used as test
// oracles. Everything here favours obviousness over speed.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

namespace oracle {

using ld = long double;

inline const ld kPi = 3.141592653589793238462643383279502884L;

// erf(z) = 2/sqrt(pi) e^{-z^2} sum_n 2^n z^{2n+1} / (1*3*...*(2n+1)); every
// term is positive, so there is no cancellation.
inline ld erf_series(ld z) {
  const ld z2 = z * z;
  ld term = z;
  ld sum = z;
  for (int n = 1; n < 2000; ++n) {
    term *= 2.0L * z2 / (2.0L * n + 1.0L);
    sum += term;
    if (term < sum * 1e-22L) break;
  }
  return 2.0L / std::sqrt(kPi) * std::exp(-z2) * sum;
}

// erfc(z) for z > 0 by the classical continued fraction
//   erfc z = e^{-z^2}/sqrt(pi) * 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))
// evaluated bottom-up with a fixed depth.
inline ld erfc_cf(ld z) {
  ld f = z;
  for (int n = 400; n >= 1; --n) f = z + (n / 2.0L) / f;
  return std::exp(-z * z) / std::sqrt(kPi) / f;
}

inline ld erfc_ref(ld z) {
  if (z < 0) return 2.0L - erfc_ref(-z);
  if (z < 3.0L) return 1.0L - erf_series(z);
  return erfc_cf(z);
}

inline double phi(double x) {
  return static_cast<double>(0.5L * erfc_ref(-static_cast<ld>(x) / std::sqrt(2.0L)));
}

// Inverse by bisection on the oracle CDF.
inline double phi_inverse(double p) {
  // Upper half by symmetry: 1 - p is exact there and the lower tail keeps full
  // relative precision.
  if (p > 0.5) return -phi_inverse(1.0 - p);
  ld lo = -40.0L, hi = 40.0L;
  for (int i = 0; i < 200; ++i) {
    const ld mid = 0.5L * (lo + hi);
    const ld v = 0.5L * erfc_ref(-mid / std::sqrt(2.0L));
    (v < p ? lo : hi) = mid;
  }
  return static_cast<double>(0.5L * (lo + hi));
}

// Student t with two degrees of freedom: F(x) = 1/2 + x / (2 sqrt(2 + x^2)).
inline double t2_cdf(double x) {
  const ld v = x;
  return static_cast<double>(0.5L + v / (2.0L * std::sqrt(2.0L + v * v)));
}
inline double t2_sf(double x) {
  const ld v = x;
  return static_cast<double>(0.5L - v / (2.0L * std::sqrt(2.0L + v * v)));
}

// Cauchy (t with one degree of freedom).
inline double t1_cdf(double x) {
  return static_cast<double>(0.5L + std::atan(static_cast<ld>(x)) / kPi);
}

// Brute-force k nearest neighbors: every pair, full sort by (sq distance, index).
struct Neighbor {
  double sq;
  Eigen::Index index;
};

template <typename Points>
std::vector<Neighbor> knn(const Points& pts, const double* q, Eigen::Index k,
                          Eigen::Index exclude = -1) {
  std::vector<Neighbor> all;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    if (i == exclude) continue;
    double s = 0;
    for (Eigen::Index d = 0; d < pts.cols(); ++d) {
      const double diff = q[d] - pts(i, d);
      s += diff * diff;
    }
    all.push_back({s, i});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.sq < b.sq || (a.sq == b.sq && a.index < b.index);
  });
  all.resize(static_cast<std::size_t>(std::min<Eigen::Index>(k, static_cast<Eigen::Index>(all.size()))));
  return all;
}

// Definitional leave-one-out score: for each row, drop it, take its k nearest
// remaining rows, average their responses in neighbor order.
template <typename Points>
double loocv_score(const Points& pts, const Eigen::VectorXd& y, Eigen::Index k) {
  double total = 0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const std::vector<double> q(pts.row(i).data(), pts.row(i).data() + pts.cols());
    const auto nb = knn(pts, q.data(), k, i);
    double s = 0;
    for (const auto& n : nb) s += y(n.index);
    const double r = y(i) - s / static_cast<double>(k);
    total += r * r;
  }
  return total / static_cast<double>(pts.rows());
}

// Tiny deterministic generator for property tests (xorshift64*), kept apart
// from the library's Rng so the two never share state or bugs.
class Gen {
public:
  explicit Gen(std::uint64_t seed) : s_(seed * 0x9E3779B97F4A7C15ull + 1) {}
  std::uint64_t next() {
    s_ ^= s_ >> 12;
    s_ ^= s_ << 25;
    s_ ^= s_ >> 27;
    return s_ * 0x2545F4914F6CDD1Dull;
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  Eigen::Index integer(Eigen::Index lo, Eigen::Index hi) {  // inclusive
    return lo + static_cast<Eigen::Index>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

private:
  std::uint64_t s_;
};

} // namespace oracle
