// SPDX-License-Identifier: Apache-2.0
//
// ilcsim: integrated uplink localisation & communication simulator

#pragma once

#include <vector>

#include "ilc/locate.hpp"
#include "ilc/scene.hpp"
#include "ilc/types.hpp"

namespace ilc::analytics {

/// Fisher information for the stacked-pilot Gaussian model, parameter
/// ordering (az_1..az_K, el_1..el_K, fD_1..fD_K). Angles in radians,
/// Doppler in Hz.
struct FimResult {
  MatrixXd fim;        // 3K x 3K
  VectorXd crlb_diag;  // diagonal of F^{-1}
  bool ill_conditioned = false;
  bool gamma_ridged = false;
  double condition = 0.0;  // of the unit-normalized F
};

/// d mu / d beta, MNL x 3K; the column layout matches FimResult.
MatrixXcd mu_jacobian(const locate::ParamVector& truth, const locate::EmitterContext& ctx,
                      int pilots);

FimResult fim(const locate::ParamVector& truth, const locate::EmitterContext& ctx, int pilots);

/// Gaussian spread of the angle estimates feeding the SDR analysis. The
/// Doppler spread is carried but never enters: the Doppler rotation cancels
/// inside |h_hat^H h|.
struct AngleStats {
  double sigma_az = 0.0;  // radians
  double sigma_el = 0.0;
  double doppler_stddev_hz = 0.0;
};

/// Truncation control for the expectation series; the layer orders escalate
/// (doubling, up to the caps) until the last layer falls below conv_tol.
struct SeriesOrders {
  int l3 = 8;
  int l4 = 8;
  double conv_tol = 1e-10;
  int l3_max = 96;
  int l4_max = 20;
};

struct E3Bounds {
  double az_lo, az_hi, el_lo, el_hi;
};

/// truth +- 6 sigma, clipped to (0, pi/2)
E3Bounds default_bounds(double az, double el, const AngleStats& st);

/// E[e^{j kappa (M cos az_hat + N sin az_hat) sin el_hat}], kappa = 2 pi d/lambda,
/// over independent Gaussians truncated to the bounds and renormalised.
/// Closed form: the inner elevation integral via complex erf after the
/// small-angle step, the outer azimuth integral via the Taylor/Hermite
/// polynomial series evaluated in centered, sigma-scaled coordinates.
cxd expectation_e3(int m_off, int n_off, double az, double el, const AngleStats& st,
                   const E3Bounds& bounds, double spacing_wavelengths,
                   const SeriesOrders& orders = {});

/// Everything the closed-form SDR needs.
struct SdrContext {
  scene::ArrayConfig array;
  VectorXd powers;       // P_k
  VectorXd path_losses;  // eta_k
  VectorXd azimuths;     // truth, radians
  VectorXd elevations;
  scene::GainPhaseModel error;
  double noise_variance = 0.0;
  std::vector<AngleStats> est_stats;  // per drone
  SeriesOrders orders;
  specfun::SeriesPolicy policy{1e-13, 2'000'000};

  // cached defect moments, filled by finalize()
  double e_alpha_pow[5] = {1, 1, 1, 1, 1};  // E[alpha^c], c = 0..4
  cxd chi1{1.0, 0.0};                       // E[e^{j dd}]
  cxd chi2{1.0, 0.0};                       // E[e^{j 2 dd}]

  int emitters() const { return static_cast<int>(powers.size()); }
  void finalize();
};

/// Cache of E3 values over every antenna-offset pair reachable for the
/// estimate statistics of drone k_hat.
struct E3Cache {
  std::vector<cxd> values;
  int m_off0 = 0, n_off0 = 0, width = 0;
  cxd at(int m_off, int n_off) const { return values[(m_off + m_off0) * width + (n_off + n_off0)]; }
};
E3Cache build_e3_cache(const SdrContext& ctx, int k_hat, int order4);

/// E[|h_hat_k^H h_varsigma|^2]: the quadruple antenna sum combining the
/// Rician moments, the von Mises phase characteristics and E3.
double channel_moment_2(const SdrContext& ctx, int k_hat, int varsigma,
                        const E3Cache* cache = nullptr);

/// E[|h_hat_k^H h_a|^2 |h_hat_k^H h_b|^2]: the octuple antenna sum with the
/// gain/phase expectations factorized over the partition of coincident
/// antennas and E3 at fourth-order offsets.
double channel_moment_4(const SdrContext& ctx, int k_hat, int drone_a, int drone_b,
                        const E3Cache* cache = nullptr);

struct NoiseMoments {
  double second = 0.0;  // E[|h_hat^H n|^2] = MN sigma^2
  double fourth = 0.0;  // E[|h_hat^H n|^4] = 2 (MN sigma^2)^2
  double mixed = 0.0;   // E[|h_hat^H h_varsigma|^2 |h_hat^H n|^2]
};
NoiseMoments noise_moments(const SdrContext& ctx, int k_hat, int varsigma,
                           const E3Cache* cache = nullptr);

enum class SdrMethod { FirstOrder, SecondOrder };

struct SdrPrediction {
  VectorXd rate;  // per drone
  double sum_rate = 0.0;
  // exposed intermediates, per drone
  VectorXd e_gx, e_gy, var_gx, var_gy, cov_gxgy, e_gk, e_gk2;
  bool negative_variance = false;
};

SdrPrediction sdr_predict(const SdrContext& ctx, SdrMethod method);

}  // namespace ilc::analytics
