// SPDX-License-Identifier: Apache-2.0
//
// ilcsim: integrated uplink localisation & communication simulator

#include "ilc/analytics.hpp"

#include <cmath>

#include "ilc/specfun.hpp"

namespace ilc::analytics {

MatrixXcd mu_jacobian(const locate::ParamVector& truth, const locate::EmitterContext& ctx,
                      int pilots) {
  const int K = truth.size();
  const int MN = ctx.array.size();
  const int M = ctx.array.m_count, N = ctx.array.n_count;
  const double d_wl = ctx.array.spacing_wavelengths;
  const cxd c = ctx.steering_scale();

  MatrixXcd jac = MatrixXcd::Zero(MN * pilots, 3 * K);
  for (int k = 0; k < K; ++k) {
    const double az = truth.azimuths[k], el = truth.elevations[k];
    const VectorXcd a = scene::steering_vector(ctx.array, az, el);
    // diagonal angle-derivative factors of the steering entries
    VectorXcd phi_fac(MN), theta_fac(MN);
    for (int m = 0; m < M; ++m) {
      for (int n = 0; n < N; ++n) {
        const double gp = (-m * std::sin(az) + n * std::cos(az)) * std::sin(el);
        const double gt = (m * std::cos(az) + n * std::sin(az)) * std::cos(el);
        phi_fac[m * N + n] = -jimag * 2.0 * pi * d_wl * gp;
        theta_fac[m * N + n] = -jimag * 2.0 * pi * d_wl * gt;
      }
    }
    const double amp = ctx.amplitudes[k];
    for (int l = 1; l <= pilots; ++l) {
      const double psi = 2.0 * pi * truth.dopplers[k] * l / ctx.sampling_hz;
      const cxd rot = ctx.path_losses[k] * std::exp(jimag * psi);
      const cxd w = amp * c * rot;
      for (int i = 0; i < MN; ++i) {
        const cxd base = w * a[i];
        jac((l - 1) * MN + i, k) = phi_fac[i] * base;
        jac((l - 1) * MN + i, K + k) = theta_fac[i] * base;
        jac((l - 1) * MN + i, 2 * K + k) = jimag * (2.0 * pi * l / ctx.sampling_hz) * base;
      }
    }
  }
  return jac;
}

FimResult fim(const locate::ParamVector& truth, const locate::EmitterContext& ctx, int pilots) {
  const int K = truth.size();
  FimResult out;

  locate::MomentModel mm = locate::build_moments(truth, ctx, pilots);
  const int dim = static_cast<int>(mm.mean.size());

  Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(mm.covariance);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  if (!(lmin > 0.0) || lmax / lmin > 1e12) {
    mm.covariance.diagonal().array() += 1e-12 * mm.covariance.real().trace() / dim;
    out.gamma_ridged = true;
  }

  const MatrixXcd jac = mu_jacobian(truth, ctx, pilots);
  const Eigen::LDLT<MatrixXcd> ldlt(mm.covariance);
  const MatrixXcd solved = ldlt.solve(jac);
  out.fim = 2.0 * (jac.adjoint() * solved).real();

  // unit-balanced inversion: angles (rad) and Doppler (Hz) live on wildly
  // different scales
  VectorXd d(3 * K);
  for (int i = 0; i < 3 * K; ++i) d[i] = 1.0 / std::sqrt(std::max(out.fim(i, i), 1e-300));
  const MatrixXd fn = d.asDiagonal() * out.fim * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<MatrixXd> feig(fn);
  const double fmax = feig.eigenvalues().maxCoeff();
  const double fmin = feig.eigenvalues().minCoeff();
  out.condition = fmax / std::max(fmin, 1e-300);
  if (!(fmin > 0.0) || out.condition > 1e10) out.ill_conditioned = true;
  // a single pilot ties the Doppler phase to the mean's absolute phase;
  // treat that configuration as weakly identifiable
  if (pilots == 1) out.ill_conditioned = true;

  const MatrixXd fninv = fn.ldlt().solve(MatrixXd::Identity(3 * K, 3 * K));
  out.crlb_diag.resize(3 * K);
  for (int i = 0; i < 3 * K; ++i) out.crlb_diag[i] = fninv(i, i) * d[i] * d[i];
  return out;
}

E3Bounds default_bounds(double az, double el, const AngleStats& st) {
  E3Bounds b;
  b.az_lo = std::max(az - 6.0 * st.sigma_az, 1e-9);
  b.az_hi = std::min(az + 6.0 * st.sigma_az, pi / 2 - 1e-9);
  b.el_lo = std::max(el - 6.0 * st.sigma_el, 1e-9);
  b.el_hi = std::min(el + 6.0 * st.sigma_el, pi / 2 - 1e-9);
  return b;
}

namespace {

// polynomial helpers on small complex coefficient vectors, c[i] u^i
using Poly = std::vector<cxd>;

Poly poly_mul(const Poly& a, const Poly& b) {
  Poly out(a.size() + b.size() - 1, cxd(0.0, 0.0));
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

// int_{w1}^{w2} sum_i c_i w^i dw
cxd poly_integral(const Poly& c, double w1, double w2) {
  cxd acc = 0.0;
  double p1 = w1, p2 = w2;
  for (size_t i = 0; i < c.size(); ++i) {
    acc += c[i] * (p2 - p1) / static_cast<double>(i + 1);
    p1 *= w1;
    p2 *= w2;
  }
  return acc;
}

struct E3Parts {
  cxd value;
  double tail = 0.0;  // relative size of the last exponential-series layer
};

E3Parts e3_at_order(int m_off, int n_off, double az, double el, const AngleStats& st,
                    const E3Bounds& bounds, double d_wl, int l3, int l4) {
  const double kappa = 2.0 * pi * d_wl;
  const double nu0 = kappa * (m_off * std::cos(az) + n_off * std::sin(az));
  const double dnu = kappa * (n_off * std::cos(az) - m_off * std::sin(az));
  const double c2 = 1.0 / (2.0 * st.sigma_el * st.sigma_el);
  const double sq_c2 = std::sqrt(c2);
  const double cos_el = std::cos(el), sin_el = std::sin(el);

  // exponent around the truth in u = az_hat - az:
  //   a1 + b1 u + b2 u^2 (nu linearized, elevation integrated out)
  const cxd a1 = jimag * nu0 * sin_el - nu0 * nu0 * cos_el * cos_el / (4.0 * c2);
  const cxd b1 = jimag * dnu * sin_el - dnu * nu0 * cos_el * cos_el / (2.0 * c2);
  const cxd b2 = cxd(-1.0 / (2.0 * st.sigma_az * st.sigma_az) -
                         dnu * dnu * cos_el * cos_el / (4.0 * c2),
                     0.0);
  const cxd c11 = jimag * dnu * cos_el / (2.0 * sq_c2);

  // sigma-scaled coordinate w = u / (sqrt(2) sigma_az) keeps every
  // coefficient O(1) regardless of how small sigma is
  const double s = std::sqrt(2.0) * st.sigma_az;
  const double w1 = (bounds.az_lo - az) / s, w2 = (bounds.az_hi - az) / s;

  // truncated exp(b1 u + b2 u^2) = sum_l3 (...)^l3 / l3!
  const Poly delta{cxd(0.0, 0.0), b1 * s, b2 * s * s};
  Poly expansion{cxd(1.0, 0.0)};
  Poly power{cxd(1.0, 0.0)};
  double fact = 1.0;
  for (int l = 1; l <= l3; ++l) {
    power = poly_mul(power, delta);
    fact *= l;
    if (expansion.size() < power.size()) expansion.resize(power.size(), cxd(0.0, 0.0));
    for (size_t i = 0; i < power.size(); ++i) expansion[i] += power[i] / fact;
  }

  cxd i56[2];
  for (int which = 0; which < 2; ++which) {
    const double el_bound = which == 0 ? bounds.el_lo : bounds.el_hi;
    const cxd a2 = sq_c2 * (el - el_bound) + jimag * nu0 * cos_el / (2.0 * sq_c2);
    // erf(a2 + c11 u) Taylor: erf(a2) + (2/sqrt(pi)) e^{-a2^2}
    //   sum_{n>=1} (-1)^{n-1} H_{n-1}(a2) (c11 u)^n / n!
    Poly erf_taylor{specfun::erf_complex(a2)};
    const cxd pref = 2.0 / std::sqrt(pi) * std::exp(-a2 * a2);
    cxd cpow = 1.0;
    double nfact = 1.0;
    erf_taylor.resize(l4 + 2, cxd(0.0, 0.0));
    for (int n = 1; n <= l4 + 1; ++n) {
      cpow *= c11 * s;
      nfact *= n;
      const double sign = (n % 2 == 1) ? 1.0 : -1.0;
      erf_taylor[n] = pref * sign * specfun::hermite_poly(n - 1, a2, 64) * cpow / nfact;
    }
    i56[which] = poly_integral(poly_mul(expansion, erf_taylor), w1, w2) * s;
  }

  const double c1 = 1.0 / (std::sqrt(2.0 * pi) * st.sigma_el);
  const double c3 = 1.0 / (std::sqrt(2.0 * pi) * st.sigma_az);
  const cxd raw = std::sqrt(pi) * c1 * c3 / (2.0 * sq_c2) * std::exp(a1) * (i56[0] - i56[1]);

  const double z_el = 0.5 * (std::erf(sq_c2 * (bounds.el_hi - el)) -
                             std::erf(sq_c2 * (bounds.el_lo - el)));
  const double sq_c4 = 1.0 / (std::sqrt(2.0) * st.sigma_az);
  const double z_az = 0.5 * (std::erf(sq_c4 * (bounds.az_hi - az)) -
                             std::erf(sq_c4 * (bounds.az_lo - az)));

  E3Parts parts;
  parts.value = raw / (z_el * z_az);
  // tail estimate: magnitude of the last retained exponential layer
  double wmax = std::max(std::abs(w1), std::abs(w2));
  double delta_max = std::abs(b1 * s) * wmax + std::abs(b2 * s * s) * wmax * wmax;
  double lterm = 1.0;
  for (int l = 1; l <= l3; ++l) lterm *= delta_max / l;
  parts.tail = lterm;
  return parts;
}

}  // namespace

cxd expectation_e3(int m_off, int n_off, double az, double el, const AngleStats& st,
                   const E3Bounds& bounds, double d_wl, const SeriesOrders& orders) {
  if (m_off == 0 && n_off == 0) return cxd(1.0, 0.0);  // constant integrand
  if (st.sigma_az <= 1e-12 && st.sigma_el <= 1e-12) {
    const double kappa = 2.0 * pi * d_wl;
    const double nu0 = kappa * (m_off * std::cos(az) + n_off * std::sin(az));
    return std::exp(jimag * nu0 * std::sin(el));
  }
  AngleStats eff = st;
  eff.sigma_az = std::max(st.sigma_az, 1e-12);
  eff.sigma_el = std::max(st.sigma_el, 1e-12);

  int l3 = orders.l3, l4 = orders.l4;
  E3Parts parts = e3_at_order(m_off, n_off, az, el, eff, bounds, d_wl, l3, l4);
  cxd prev = parts.value;
  while (l3 < orders.l3_max) {
    // escalate until the exponential layers have genuinely decayed and the
    // value has stabilized
    l3 = std::min(2 * l3, orders.l3_max);
    l4 = std::min(l4 + 4, orders.l4_max);
    parts = e3_at_order(m_off, n_off, az, el, eff, bounds, d_wl, l3, l4);
    const double diff = std::abs(parts.value - prev);
    prev = parts.value;
    if (parts.tail < orders.conv_tol && diff < 100.0 * orders.conv_tol * (std::abs(prev) + 1e-6))
      return parts.value;
  }
  if (parts.tail > 1e-6)
    throw SeriesNonConvergence("expectation_e3: series cap reached before convergence");
  return parts.value;
}

void SdrContext::finalize() {
  if (error.is_ideal()) {
    for (int c = 0; c <= 4; ++c) e_alpha_pow[c] = 1.0;
    chi1 = chi2 = cxd(1.0, 0.0);
    return;
  }
  for (int c = 0; c <= 4; ++c)
    e_alpha_pow[c] = specfun::rician_moment(c, error.rician_location, error.rician_scale, policy);
  chi1 = specfun::vonmises_char_full(1.0, +1, error.vonmises_mean, error.vonmises_concentration,
                                     policy);
  chi2 = specfun::vonmises_char_full(2.0, +1, error.vonmises_mean, error.vonmises_concentration,
                                     policy);
}

E3Cache build_e3_cache(const SdrContext& ctx, int k_hat, int order4) {
  const int M = ctx.array.m_count, N = ctx.array.n_count;
  const int rm = order4 ? 2 * (M - 1) : (M - 1);
  const int rn = order4 ? 2 * (N - 1) : (N - 1);
  E3Cache cache;
  cache.m_off0 = rm;
  cache.n_off0 = rn;
  cache.width = 2 * rn + 1;
  cache.values.resize((2 * rm + 1) * cache.width);
  const auto& st = ctx.est_stats[k_hat];
  const double az = ctx.azimuths[k_hat], el = ctx.elevations[k_hat];
  const E3Bounds bounds = default_bounds(az, el, st);
  for (int mo = -rm; mo <= rm; ++mo)
    for (int no = -rn; no <= rn; ++no)
      cache.values[(mo + rm) * cache.width + (no + rn)] =
          expectation_e3(mo, no, az, el, st, bounds, ctx.array.spacing_wavelengths, ctx.orders);
  return cache;
}

namespace {

// gain-phase expectation for a 4-tuple of antennas with conjugation signs
// (+,-,+,-), keyed by the 6 pairwise-equality bits
struct PartitionTable {
  cxd value[64];
};

PartitionTable build_partition_table(const SdrContext& ctx) {
  PartitionTable table;
  const auto chi = [&](int c) -> cxd {
    switch (c) {
      case 0: return cxd(1.0, 0.0);
      case 1: return ctx.chi1;
      case -1: return std::conj(ctx.chi1);
      case 2: return ctx.chi2;
      default: return std::conj(ctx.chi2);
    }
  };
  const int sign[4] = {+1, -1, +1, -1};
  for (int bits = 0; bits < 64; ++bits) {
    const bool b12 = bits & 1, b13 = bits & 2, b14 = bits & 4;
    const bool b23 = bits & 8, b24 = bits & 16, b34 = bits & 32;
    // union into block ids
    int blk[4] = {0, 1, 2, 3};
    auto join = [&](int a, int b) {
      const int from = std::max(blk[a], blk[b]), to = std::min(blk[a], blk[b]);
      for (int& x : blk)
        if (x == from) x = to;
    };
    if (b12) join(0, 1);
    if (b13) join(0, 2);
    if (b14) join(0, 3);
    if (b23) join(1, 2);
    if (b24) join(1, 3);
    if (b34) join(2, 3);
    cxd v = 1.0;
    for (int b = 0; b < 4; ++b) {
      int count = 0, net = 0;
      for (int i = 0; i < 4; ++i)
        if (blk[i] == b) {
          ++count;
          net += sign[i];
        }
      if (count == 0) continue;
      v *= ctx.e_alpha_pow[count] * chi(net);
    }
    table.value[bits] = v;
  }
  return table;
}

// two-tuple version with signs (+,-)
cxd pair_expectation(const SdrContext& ctx, bool same) {
  if (same) return cxd(ctx.e_alpha_pow[2], 0.0);
  return ctx.e_alpha_pow[1] * ctx.e_alpha_pow[1] * ctx.chi1 * std::conj(ctx.chi1);
}

}  // namespace

double channel_moment_2(const SdrContext& ctx, int k_hat, int varsigma, const E3Cache* cache) {
  const int M = ctx.array.m_count, N = ctx.array.n_count;
  const int MN = M * N;
  E3Cache local;
  if (!cache) {
    local = build_e3_cache(ctx, k_hat, /*order4=*/0);
    cache = &local;
  }
  const VectorXcd a =
      scene::steering_vector(ctx.array, ctx.azimuths[varsigma], ctx.elevations[varsigma]);
  const double eta2 = ctx.path_losses[varsigma] * ctx.path_losses[varsigma];

  cxd acc = 0.0;
  for (int r1 = 0; r1 < MN; ++r1) {
    const int m1 = r1 / N, n1 = r1 % N;
    for (int r2 = 0; r2 < MN; ++r2) {
      const int m2 = r2 / N, n2 = r2 % N;
      const cxd ge = pair_expectation(ctx, r1 == r2);
      acc += ge * a[r1] * std::conj(a[r2]) * cache->at(m1 - m2, n1 - n2);
    }
  }
  return eta2 * acc.real();
}

double channel_moment_4(const SdrContext& ctx, int k_hat, int drone_a, int drone_b,
                        const E3Cache* cache) {
  const int M = ctx.array.m_count, N = ctx.array.n_count;
  const int MN = M * N;
  E3Cache local;
  if (!cache) {
    local = build_e3_cache(ctx, k_hat, /*order4=*/1);
    cache = &local;
  }
  const PartitionTable table = build_partition_table(ctx);
  const VectorXcd ua =
      scene::steering_vector(ctx.array, ctx.azimuths[drone_a], ctx.elevations[drone_a]);
  const VectorXcd ub =
      scene::steering_vector(ctx.array, ctx.azimuths[drone_b], ctx.elevations[drone_b]);
  const double eta4 = ctx.path_losses[drone_a] * ctx.path_losses[drone_a] *
                      ctx.path_losses[drone_b] * ctx.path_losses[drone_b];

  const int rm = cache->m_off0, rn = cache->n_off0, W = cache->width;
  cxd acc = 0.0;
  for (int r1 = 0; r1 < MN; ++r1) {
    const int m1 = r1 / N, n1 = r1 % N;
    const cxd u1 = ua[r1];
    for (int r2 = 0; r2 < MN; ++r2) {
      const int m12 = m1 - r2 / N, n12 = n1 - r2 % N;
      const cxd u12 = u1 * std::conj(ua[r2]);
      const int bit12 = (r1 == r2) ? 1 : 0;
      for (int r3 = 0; r3 < MN; ++r3) {
        const int m123 = m12 + r3 / N + rm, n123 = n12 + r3 % N + rn;
        const cxd u123 = u12 * ub[r3];
        const int bits123 = bit12 | ((r1 == r3) ? 2 : 0) | ((r2 == r3) ? 8 : 0);
        for (int r4 = 0; r4 < MN; ++r4) {
          const int bits = bits123 | ((r1 == r4) ? 4 : 0) | ((r2 == r4) ? 16 : 0) |
                           ((r3 == r4) ? 32 : 0);
          const cxd e2 = cache->values[(m123 - r4 / N) * W + (n123 - r4 % N)];
          acc += u123 * std::conj(ub[r4]) * table.value[bits] * e2;
        }
      }
    }
  }
  return eta4 * acc.real();
}

NoiseMoments noise_moments(const SdrContext& ctx, int k_hat, int varsigma, const E3Cache* cache) {
  NoiseMoments nm;
  const double mn_sigma2 = ctx.array.size() * ctx.noise_variance;
  nm.second = mn_sigma2;
  nm.fourth = 2.0 * mn_sigma2 * mn_sigma2;
  nm.mixed = mn_sigma2 * channel_moment_2(ctx, k_hat, varsigma, cache);
  return nm;
}

SdrPrediction sdr_predict(const SdrContext& ctx, SdrMethod method) {
  const int K = ctx.emitters();
  SdrPrediction out;
  out.rate = VectorXd::Zero(K);
  out.e_gx = VectorXd::Zero(K);
  out.e_gy = VectorXd::Zero(K);
  out.var_gx = VectorXd::Zero(K);
  out.var_gy = VectorXd::Zero(K);
  out.cov_gxgy = VectorXd::Zero(K);
  out.e_gk = VectorXd::Zero(K);
  out.e_gk2 = VectorXd::Zero(K);

  const double mn_sigma2 = ctx.array.size() * ctx.noise_variance;
  for (int k = 0; k < K; ++k) {
    const E3Cache cache = build_e3_cache(ctx, k, /*order4=*/1);

    const double chm2_kk = channel_moment_2(ctx, k, k, &cache);
    const double e_gx = ctx.powers[k] * chm2_kk;

    double e_gy = mn_sigma2;
    std::vector<double> chm2_kp(K, 0.0);
    for (int p = 0; p < K; ++p) {
      if (p == k) continue;
      chm2_kp[p] = channel_moment_2(ctx, k, p, &cache);
      e_gy += ctx.powers[p] * chm2_kp[p];
    }

    const double e_gx2 = ctx.powers[k] * ctx.powers[k] * channel_moment_4(ctx, k, k, k, &cache);

    // E[gx gy] = sum_p Pk Pp E[|hk|^2 |hp|^2] + Pk E[|hk|^2 |n|^2]
    double e_gxgy = ctx.powers[k] * mn_sigma2 * chm2_kk;
    for (int p = 0; p < K; ++p) {
      if (p == k) continue;
      e_gxgy += ctx.powers[k] * ctx.powers[p] * channel_moment_4(ctx, k, k, p, &cache);
    }

    // E[gy^2] = E[gy1^2] + 2 E[gy1 gy2] + E[gy2^2]
    double e_gy1sq = 0.0, e_gy1y2 = 0.0;
    for (int p = 0; p < K; ++p) {
      if (p == k) continue;
      e_gy1sq += ctx.powers[p] * ctx.powers[p] * channel_moment_4(ctx, k, p, p, &cache);
      e_gy1y2 += ctx.powers[p] * mn_sigma2 * chm2_kp[p];
      for (int pt = p + 1; pt < K; ++pt) {
        if (pt == k) continue;
        e_gy1sq +=
            2.0 * ctx.powers[p] * ctx.powers[pt] * channel_moment_4(ctx, k, p, pt, &cache);
      }
    }
    const double e_gy2sq = 2.0 * mn_sigma2 * mn_sigma2;
    const double e_gysq = e_gy1sq + 2.0 * e_gy1y2 + e_gy2sq;

    const double var_gx = e_gx2 - e_gx * e_gx;
    const double var_gy = e_gysq - e_gy * e_gy;
    const double cov = e_gxgy - e_gx * e_gy;
    if (var_gx < -1e-9 * e_gx2 || var_gy < -1e-9 * e_gysq) out.negative_variance = true;

    out.e_gx[k] = e_gx;
    out.e_gy[k] = e_gy;
    out.var_gx[k] = var_gx;
    out.var_gy[k] = var_gy;
    out.cov_gxgy[k] = cov;

    if (method == SdrMethod::FirstOrder) {
      out.e_gk[k] = e_gx / e_gy;
      out.e_gk2[k] = out.e_gk[k] * out.e_gk[k];
      out.rate[k] = std::log2(1.0 + e_gx / e_gy);
    } else {
      const double e_gk = e_gx / e_gy - cov / (e_gy * e_gy) + var_gy * e_gx / std::pow(e_gy, 3);
      const double e_gk2 = e_gx * e_gx / (e_gy * e_gy) + var_gx / (e_gy * e_gy) -
                           4.0 * e_gx * cov / std::pow(e_gy, 3) +
                           3.0 * e_gx * e_gx * var_gy / std::pow(e_gy, 4);
      out.e_gk[k] = e_gk;
      out.e_gk2[k] = e_gk2;
      out.rate[k] = std::log2(1.0 + e_gk) -
                    (e_gk2 - e_gk * e_gk) / (2.0 * std::log(2.0) * (1.0 + e_gk) * (1.0 + e_gk));
    }
  }
  out.sum_rate = out.rate.sum();
  return out;
}

}  // namespace ilc::analytics
