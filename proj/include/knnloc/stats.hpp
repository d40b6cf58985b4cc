#pragma once

namespace knnloc::stats {

//! Standard normal CDF, computed as erfc(-x/sqrt2)/2.
double normal_cdf(double x);

//! Upper tail 1 - normal_cdf(x) without cancellation.
double normal_sf(double x);

//! Standard normal quantile (Wichura's AS 241, PPND16). Returns -inf/+inf at
//! p = 0 / 1; throws std::domain_error outside [0, 1].
double normal_quantile(double p);

//! Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz).
double incomplete_beta(double a, double b, double x);

//! Student-t CDF with `df` degrees of freedom (df > 0).
double student_t_cdf(double t, double df);

//! Upper tail P(T > t) for Student-t with `df` degrees of freedom.
double student_t_sf(double t, double df);

} // namespace knnloc::stats
