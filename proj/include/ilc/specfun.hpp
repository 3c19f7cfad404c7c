// SPDX-License-Identifier: Apache-2.0
//
// ilcsim: integrated uplink localisation & communication simulator

#pragma once

#include <complex>
#include <utility>

#include "ilc/types.hpp"

namespace ilc::specfun {

/// Truncation policy for the infinite series in this module.
/// A sum stops once a term's magnitude drops below abs_tol relative to the
/// running partial sum (checked only after the terms start decreasing), or
/// fails with SeriesNonConvergence when max_terms is reached first.
struct SeriesPolicy {
  double abs_tol = 1e-12;
  int max_terms = 500;
};

/// Why a truncated series stopped, reported back to the caller.
struct SeriesInfo {
  int terms_used = 0;
  bool converged = false;
  double last_term = 0.0;  // magnitude relative to the partial sum
};

/// Modified Bessel function of the first kind, I_q(x), via the ascending
/// series sum_b (x/2)^{2b+q} / (b! Gamma(b+q+1)). Terms are accumulated in
/// log space so large x does not overflow before the result itself does.
double bessel_i(int order, double x, const SeriesPolicy& policy = {}, SeriesInfo* info = nullptr);

/// log I_q(x); the form needed for ratios I_q(x)/I_0(x) at concentrations
/// where I_0 itself overflows.
double log_bessel_i(int order, double x, const SeriesPolicy& policy = {}, SeriesInfo* info = nullptr);

/// E[alpha^c] for alpha ~ Rician(location nu, scale sigma_r):
///   e^{-x} (2 sigma_r^2)^{c/2} sum_b x^b Gamma(b + c/2 + 1) / (b!)^2,  x = nu^2/(2 sigma_r^2).
/// Gamma factors of half-integer argument go through lgamma to avoid overflow.
double rician_moment(int c, double nu, double sigma_r, const SeriesPolicy& policy = {},
                     SeriesInfo* info = nullptr);

/// E[e^{+-j C dd}] for dd ~ von Mises(mu, kappa) restricted to
/// bounds [lo, hi] within [-pi, pi], renormalised over those bounds.
/// Evaluated through the Bessel-series expansion of the density: a direct
/// term plus sum_q I_q(kappa)/I_0(kappa) times an elementary trigonometric
/// integral. That inner integral uses the double Taylor expansion while the
/// expansion is numerically viable (small q*|bound|) and the exact
/// antiderivative beyond that.
cxd vonmises_char(double c_mult, int sign, double mu, double kappa, double lo, double hi,
                  const SeriesPolicy& policy = {}, SeriesInfo* info = nullptr);

/// Convenience: full-circle bounds [-pi, pi].
cxd vonmises_char_full(double c_mult, int sign, double mu, double kappa,
                       const SeriesPolicy& policy = {}, SeriesInfo* info = nullptr);

/// Error function of a complex argument. Maclaurin series for small |z|,
/// Laplace continued fraction for large |z| away from the imaginary axis,
/// and the trigonometric expansion of erf(x+iy) near the axis. Relative
/// accuracy ~1e-12 for |z| <= 10; exponents are clamped for very large
/// |Im z| instead of overflowing.
cxd erf_complex(cxd z);

/// Physicists' Hermite polynomial H_n(z) by the three-term recurrence.
cxd hermite_poly(int order, cxd z, int max_order = 20);

}  // namespace ilc::specfun
