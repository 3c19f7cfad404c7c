// SPDX-License-Identifier: Apache-2.0
//
// ilcsim: integrated uplink localisation & communication simulator

#include "ilc/specfun.hpp"

#include <algorithm>
#include <cmath>

namespace ilc::specfun {

namespace {

// Sum of a positive-term series given the first term's log and the ratio
// t_{b+1}/t_b. Terms are kept in a rebased linear scale so sums like the
// ascending Bessel series at x ~ 1000 (peak term ~ e^x) never overflow.
// Returns log(sum). The stop test applies once the terms are decreasing.
struct LogSeriesSum {
  double log_base = 0.0;
  double scaled_sum = 0.0;
  double scaled_term = 0.0;

  void start(double log_first_term) {
    log_base = log_first_term;
    scaled_term = 1.0;
    scaled_sum = 1.0;
  }
  void advance(double ratio) {
    scaled_term *= ratio;
    scaled_sum += scaled_term;
    if (scaled_sum > 1e280) {
      const double s = scaled_sum;
      log_base += std::log(s);
      scaled_term /= s;
      scaled_sum = 1.0;
    }
  }
  double rel_term() const { return scaled_term / scaled_sum; }
  double log_sum() const { return log_base + std::log(scaled_sum); }
};

double log_series(double log_first, auto&& ratio_fn, const SeriesPolicy& policy,
                  SeriesInfo* info, const char* what) {
  LogSeriesSum acc;
  acc.start(log_first);
  bool decreasing = false;
  int b = 0;
  for (; b < policy.max_terms; ++b) {
    const double r = ratio_fn(b);
    if (r < 1.0) decreasing = true;
    acc.advance(r);
    if (decreasing && acc.rel_term() < policy.abs_tol) {
      if (info) { info->terms_used = b + 2; info->converged = true; info->last_term = acc.rel_term(); }
      return acc.log_sum();
    }
  }
  if (info) { info->terms_used = b + 1; info->converged = false; info->last_term = acc.rel_term(); }
  throw SeriesNonConvergence(std::string(what) + ": max_terms reached before abs_tol");
}

// Budget for the ascending Bessel series: the terms peak near b ~ x/2, so a
// fixed cap independent of x cannot work. Sub-evaluations inside
// vonmises_char size their budget from kappa; direct bessel_i callers keep
// the literal policy.
SeriesPolicy bessel_budget(double x, const SeriesPolicy& policy) {
  SeriesPolicy p = policy;
  p.max_terms = std::max(policy.max_terms,
                         static_cast<int>(x / 2.0 + 12.0 * std::sqrt(x / 2.0 + 1.0)) + 64);
  return p;
}

}  // namespace

double log_bessel_i(int order, double x, const SeriesPolicy& policy, SeriesInfo* info) {
  if (order < 0) throw std::invalid_argument("bessel_i: order must be >= 0");
  if (x < 0) throw std::invalid_argument("bessel_i: x must be >= 0");
  if (x == 0.0) {
    if (info) { info->terms_used = 1; info->converged = true; info->last_term = 0.0; }
    return order == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  const double loghalfx = std::log(0.5 * x);
  const double log_first = order * loghalfx - std::lgamma(order + 1.0);
  const double q = order;
  return log_series(
      log_first,
      [&](int b) { return 0.25 * x * x / ((b + 1.0) * (b + q + 1.0)); },
      policy, info, "bessel_i");
}

double bessel_i(int order, double x, const SeriesPolicy& policy, SeriesInfo* info) {
  const double lv = log_bessel_i(order, x, policy, info);
  return std::exp(lv);
}

double rician_moment(int c, double nu, double sigma_r, const SeriesPolicy& policy,
                     SeriesInfo* info) {
  if (c < 0) throw std::invalid_argument("rician_moment: c must be >= 0");
  if (sigma_r <= 0) throw std::invalid_argument("rician_moment: sigma_r must be > 0");
  if (nu < 0) throw std::invalid_argument("rician_moment: nu must be >= 0");
  const double twos2 = 2.0 * sigma_r * sigma_r;
  const double x = nu * nu / twos2;
  const double ch = 0.5 * c;
  if (x == 0.0) {
    // only the b = 0 term survives
    if (info) { info->terms_used = 1; info->converged = true; info->last_term = 0.0; }
    return std::exp(ch * std::log(twos2) + std::lgamma(ch + 1.0));
  }
  const double log_first = std::lgamma(ch + 1.0);
  const double log_sum = log_series(
      log_first,
      [&](int b) { return x * (b + ch + 1.0) / ((b + 1.0) * (b + 1.0)); },
      policy, info, "rician_moment");
  return std::exp(-x + ch * std::log(twos2) + log_sum);
}

namespace {

// int_a^b e^{j w x} dx
cxd phase_integral(double w, double a, double b) {
  if (std::abs(w) < 1e-14) return cxd(b - a, 0.0);
  return (std::exp(jimag * w * b) - std::exp(jimag * w * a)) / (jimag * w);
}

// int_a^b e^{s j C x} cos(q x) dx, exact antiderivative.
cxd i3_exact(double sc, double q, double a, double b) {
  return 0.5 * (phase_integral(sc + q, a, b) + phase_integral(sc - q, a, b));
}

// Same integral through the double Taylor expansion of e^{s j C x} and
// cos(q x); viable only while max(|C|, q) * max(|a|, |b|) stays small.
cxd i3_taylor(double sc, double q, double a, double b, const SeriesPolicy& policy) {
  constexpr int kCap = 96;
  cxd sum = 0.0;
  cxd jc_pow = 1.0;  // (j sc)^{l1} / l1!
  int small_layers = 0;  // parity can zero out alternate layers exactly
  for (int l1 = 0; l1 <= kCap; ++l1) {
    cxd layer = 0.0;
    double coef2 = 1.0;  // (-1)^{l2} q^{2 l2} / (2 l2)!
    for (int l2 = 0; l2 <= kCap; ++l2) {
      const int p = l1 + 2 * l2;
      const double mono = (std::pow(b, p + 1) - std::pow(a, p + 1)) / (p + 1);
      const cxd term = jc_pow * coef2 * mono;
      layer += term;
      if (l2 > 2 && std::abs(term) < 1e-18 * (std::abs(sum) + 1e-30)) break;
      coef2 *= -q * q / ((2.0 * l2 + 1.0) * (2.0 * l2 + 2.0));
    }
    sum += layer;
    small_layers = (std::abs(layer) < policy.abs_tol * (std::abs(sum) + 1e-30)) ? small_layers + 1 : 0;
    if (l1 > 2 && small_layers >= 2) return sum;
    jc_pow *= jimag * sc / (l1 + 1.0);
    if (sc == 0.0) break;  // only the l1 = 0 layer contributes
  }
  return sum;
}

}  // namespace

cxd vonmises_char(double c_mult, int sign, double mu, double kappa, double lo, double hi,
                  const SeriesPolicy& policy, SeriesInfo* info) {
  if (kappa <= 0) throw std::invalid_argument("vonmises_char: kappa must be > 0");
  if (sign != 1 && sign != -1) throw std::invalid_argument("vonmises_char: sign must be +-1");
  if (lo < -pi - 1e-12 || hi > pi + 1e-12 || lo >= hi)
    throw std::invalid_argument("vonmises_char: bounds must satisfy -pi <= lo < hi <= pi");

  const double sc = sign * c_mult;
  // direct part of the density, 1/(2 pi)
  cxd result = phase_integral(sc, lo, hi) / (2.0 * pi);

  // Ratios I_q/I_0: ascending series up to concentrations the series can
  // reach quickly; the Gaussian high-concentration limit beyond that
  // (absolute error O(q^4/kappa^3), far below tolerance in that regime).
  const bool huge_kappa = kappa > 1e5;
  const SeriesPolicy bp = bessel_budget(kappa, policy);
  const double log_i0 = huge_kappa ? 0.0 : log_bessel_i(0, kappa, bp);
  const double a = lo - mu, b = hi - mu;
  const double bmax = std::max(std::abs(a), std::abs(b));
  const cxd mu_phase = std::exp(jimag * sc * mu);

  const int qcap = std::max(policy.max_terms,
                            static_cast<int>(std::sqrt(2.0 * kappa * 30.0)) + 8);
  int q = 1;
  for (; q <= qcap; ++q) {
    const double ratio = huge_kappa ? std::exp(-0.5 * q * q / kappa)
                                    : std::exp(log_bessel_i(q, kappa, bp) - log_i0);
    if (ratio < policy.abs_tol) {
      if (info) { info->terms_used = q; info->converged = true; info->last_term = ratio; }
      return result;
    }
    const bool taylor_ok = std::max(std::abs(sc), static_cast<double>(q)) * bmax <= 15.0;
    const cxd i3 = taylor_ok ? i3_taylor(sc, q, a, b, policy) : i3_exact(sc, q, a, b);
    result += (ratio / pi) * mu_phase * i3;
  }
  if (info) { info->terms_used = q; info->converged = false; info->last_term = 0.0; }
  throw SeriesNonConvergence("vonmises_char: Bessel-series index cap reached before abs_tol");
}

cxd vonmises_char_full(double c_mult, int sign, double mu, double kappa,
                       const SeriesPolicy& policy, SeriesInfo* info) {
  return vonmises_char(c_mult, sign, mu, kappa, -pi, pi, policy, info);
}

namespace {

cxd erf_maclaurin(cxd z) {
  const cxd z2 = z * z;
  cxd term = z;
  cxd sum = z;
  for (int n = 1; n < 80; ++n) {
    term *= -z2 / static_cast<double>(n);
    const cxd contrib = term / (2.0 * n + 1.0);
    sum += contrib;
    if (std::abs(contrib) < 1e-18 * std::abs(sum)) break;
  }
  return sum * (2.0 / std::sqrt(pi));
}

double safe_exp(double x) { return std::exp(std::min(x, 700.0)); }

// erf(x+iy) for x >= 0, y >= 0 via the trigonometric expansion
// (Abramowitz & Stegun 7.1.29); fractional error ~1.6e-16.
cxd erf_trig_expansion(double x, double y) {
  const double ex2 = safe_exp(-x * x);
  double re = std::erf(x);
  double im = 0.0;
  const double c2 = std::cos(2.0 * x * y);
  const double s2 = std::sin(2.0 * x * y);
  if (x > 1e-8) {
    re += ex2 / (2.0 * pi * x) * (1.0 - c2);
    im += ex2 / (2.0 * pi * x) * s2;
  } else {
    re += ex2 * x * y * y / pi;
    im += ex2 * y / pi * (1.0 - 2.0 * x * x * y * y / 3.0);
  }
  const int kmax = static_cast<int>(2.0 * y) + 24;
  for (int k = 1; k <= kmax; ++k) {
    // cosh/sinh folded into the exponentials so nothing overflows before
    // the e^{y^2 - x^2} scale of the result itself
    const double ep = safe_exp(k * y - 0.25 * k * k - x * x);
    const double em = safe_exp(-k * y - 0.25 * k * k - x * x);
    const double e0 = safe_exp(-0.25 * k * k - x * x);
    const double ch = 0.5 * (ep + em), sh = 0.5 * (ep - em);
    const double denom = k * k + 4.0 * x * x;
    const double fk = 2.0 * x * e0 - 2.0 * x * ch * c2 + k * sh * s2;
    const double gk = 2.0 * x * ch * s2 + k * sh * c2;
    re += (2.0 / pi) * fk / denom;
    im += (2.0 / pi) * gk / denom;
  }
  return {re, im};
}

}  // namespace

cxd erf_complex(cxd z) {
  if (z == cxd(0.0, 0.0)) return z;
  if (z.real() < 0.0) return -erf_complex(-z);
  if (z.imag() < 0.0) return std::conj(erf_complex(std::conj(z)));
  if (std::abs(z) <= 3.5) return erf_maclaurin(z);
  return erf_trig_expansion(z.real(), z.imag());
}

cxd hermite_poly(int order, cxd z, int max_order) {
  if (order < 0) throw std::invalid_argument("hermite_poly: order must be >= 0");
  if (order > max_order) throw std::invalid_argument("hermite_poly: order beyond configured max");
  cxd hm1 = 1.0;  // H_0
  if (order == 0) return hm1;
  cxd h = 2.0 * z;  // H_1
  for (int n = 1; n < order; ++n) {
    const cxd hp1 = 2.0 * z * h - 2.0 * static_cast<double>(n) * hm1;
    hm1 = h;
    h = hp1;
  }
  return h;
}

}  // namespace ilc::specfun
