// SPDX-License-Identifier: Apache-2.0
//
// ilcsim: integrated uplink localisation & communication simulator

#include "ilc/scene.hpp"

#include <cmath>
#include <random>

namespace ilc::scene {

void ArrayConfig::validate() const {
  if (m_count < 1 || n_count < 1)
    throw std::invalid_argument("array: m_count and n_count must be >= 1");
  if (spacing_wavelengths <= 0) throw std::invalid_argument("array: spacing must be > 0");
  if (wavelength_m <= 0) throw std::invalid_argument("array: wavelength must be > 0");
}

void DroneTruth::validate(double wavelength_m) const {
  if (!(azimuth_rad > 0 && azimuth_rad < pi / 2))
    throw std::invalid_argument("drone: azimuth must lie in (0, pi/2)");
  if (!(elevation_rad > 0 && elevation_rad < pi / 2))
    throw std::invalid_argument("drone: elevation must lie in (0, pi/2)");
  if (tx_power_w <= 0) throw std::invalid_argument("drone: tx power must be > 0");
  if (range_m <= 0) throw std::invalid_argument("drone: range must be > 0");
  if (velocity_mps) {
    const double implied = *velocity_mps * std::cos(elevation_rad) / wavelength_m;
    if (std::abs(implied - doppler_hz) > 1e-6 * std::max(1.0, std::abs(doppler_hz)))
      throw std::invalid_argument("drone: doppler_hz inconsistent with v cos(el)/lambda");
  }
}

void GainPhaseModel::validate() const {
  if (kind == Kind::Ideal) return;
  if (rician_scale <= 0) throw std::invalid_argument("errors: rician_scale must be > 0");
  if (rician_location < 0) throw std::invalid_argument("errors: rician_location must be >= 0");
  if (vonmises_concentration <= 0)
    throw std::invalid_argument("errors: vonmises_concentration must be > 0");
}

void FrameConfig::validate() const {
  if (subframes < 1) throw std::invalid_argument("frame: subframes must be >= 1");
  if (symbols_per_subframe < 0) throw std::invalid_argument("frame: symbols must be >= 0");
  if (sampling_hz <= 0) throw std::invalid_argument("frame: sampling_hz must be > 0");
  if (psk_order != 2 && psk_order != 4 && psk_order != 8 && psk_order != 16)
    throw std::invalid_argument("frame: psk_order must be one of 2, 4, 8, 16");
}

void NoiseModel::validate() const {
  if (!variance && !snr_db) throw std::invalid_argument("noise: variance or snr_db required");
  if (variance && *variance < 0) throw std::invalid_argument("noise: variance must be >= 0");
}

double SceneConfig::signal_power_per_antenna() const {
  double acc = 0.0;
  for (const auto& d : drones) {
    const double eta = d.path_loss(array.wavelength_m);
    acc += d.tx_power_w * eta * eta;
  }
  return acc;
}

double SceneConfig::noise_variance(const NoiseModel& noise) const {
  noise.validate();
  if (noise.variance) return *noise.variance;
  return signal_power_per_antenna() / std::pow(10.0, *noise.snr_db / 10.0);
}

void SceneConfig::validate() const {
  array.validate();
  if (drones.empty()) throw std::invalid_argument("scene: at least one drone required");
  if (emitter_count() > array.size())
    throw std::invalid_argument("scene: more emitters than array degrees of freedom (K > MN)");
  for (const auto& d : drones) d.validate(array.wavelength_m);
}

MatrixXcd ChannelRealization::erroneous_steering() const {
  MatrixXcd out = steering;
  for (int i = 0; i < out.rows(); ++i)
    out.row(i) *= defect_gains[i] * std::exp(jimag * defect_phases[i]);
  return out;
}

VectorXcd ReceivedFrame::pilot_stack() const { return pilot_stack(frame.subframes); }

VectorXcd ReceivedFrame::pilot_stack(int pilots) const {
  const int mn = array.size();
  VectorXcd out(mn * pilots);
  for (int l = 0; l < pilots; ++l) out.segment(l * mn, mn) = samples[l].col(0);
  return out;
}

VectorXcd steering_vector(const ArrayConfig& array, double azimuth_rad, double elevation_rad) {
  const int M = array.m_count, N = array.n_count;
  const double u = std::cos(azimuth_rad) * std::sin(elevation_rad);
  const double v = std::sin(azimuth_rad) * std::sin(elevation_rad);
  const double scale = -2.0 * pi * array.spacing_wavelengths;
  VectorXcd ax(M), ay(N);
  for (int m = 0; m < M; ++m) ax[m] = std::exp(jimag * (scale * m * u));
  for (int n = 0; n < N; ++n) ay[n] = std::exp(jimag * (scale * n * v));
  VectorXcd out(M * N);
  for (int m = 0; m < M; ++m)
    for (int n = 0; n < N; ++n) out[m * N + n] = ax[m] * ay[n];
  return out;
}

double sample_rician(std::mt19937_64& rng, double nu, double sigma_r) {
  std::normal_distribution<double> g(0.0, 1.0);
  const double x = nu + sigma_r * g(rng);
  const double y = sigma_r * g(rng);
  return std::hypot(x, y);
}

double sample_vonmises(std::mt19937_64& rng, double mu, double kappa) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
  const double r = (1.0 + rho * rho) / (2.0 * rho);
  double f = 0.0;
  for (;;) {
    const double z = std::cos(pi * u(rng));
    f = (1.0 + r * z) / (r + z);
    const double c = kappa * (r - f);
    const double u2 = u(rng);
    if (c * (2.0 - c) - u2 > 0.0) break;
    if (std::log(c / u2) + 1.0 - c >= 0.0) break;
  }
  const double side = (u(rng) < 0.5) ? -1.0 : 1.0;
  double angle = mu + side * std::acos(std::clamp(f, -1.0, 1.0));
  if (angle > pi) angle -= 2.0 * pi;
  if (angle < -pi) angle += 2.0 * pi;
  return angle;
}

std::pair<VectorXd, VectorXd> sample_defects(const GainPhaseModel& model, const ArrayConfig& array,
                                             std::uint64_t seed) {
  model.validate();
  const int mn = array.size();
  VectorXd gains = VectorXd::Ones(mn);
  VectorXd phases = VectorXd::Zero(mn);
  if (model.is_ideal()) return {gains, phases};
  std::mt19937_64 rng(seed);
  for (int i = 0; i < mn; ++i)
    gains[i] = sample_rician(rng, model.rician_location, model.rician_scale);
  for (int i = 0; i < mn; ++i)
    phases[i] = sample_vonmises(rng, model.vonmises_mean, model.vonmises_concentration);
  return {gains, phases};
}

cxd psk_symbol(int index, int order) { return std::exp(jimag * (2.0 * pi * index / order)); }

ReceivedFrame synthesize_frame(const SceneConfig& scene, const FrameConfig& frame,
                               const GainPhaseModel& error, const NoiseModel& noise,
                               std::uint64_t seed, const std::vector<Eigen::MatrixXi>* symbols) {
  scene.validate();
  frame.validate();
  error.validate();
  const int K = scene.emitter_count();
  const int MN = scene.array.size();
  const int T = frame.symbols_per_subframe;
  const int L = frame.subframes;
  const double sigma2 = scene.noise_variance(noise);

  std::mt19937_64 rng(seed);

  ReceivedFrame out;
  out.array = scene.array;
  out.frame = frame;
  out.noise_variance = sigma2;

  VectorXd gains = VectorXd::Ones(MN);
  VectorXd phases = VectorXd::Zero(MN);
  if (!error.is_ideal()) {
    for (int i = 0; i < MN; ++i)
      gains[i] = sample_rician(rng, error.rician_location, error.rician_scale);
    for (int i = 0; i < MN; ++i)
      phases[i] = sample_vonmises(rng, error.vonmises_mean, error.vonmises_concentration);
  }

  out.realization.steering.resize(MN, K);
  out.realization.omega.resize(L, K);
  out.amplitudes.resize(K);
  for (int k = 0; k < K; ++k) {
    const auto& d = scene.drones[k];
    out.realization.steering.col(k) = steering_vector(scene.array, d.azimuth_rad, d.elevation_rad);
    out.amplitudes[k] = std::sqrt(d.tx_power_w);
    const double eta = d.path_loss(scene.array.wavelength_m);
    for (int l = 0; l < L; ++l) {
      const double psi = 2.0 * pi * d.doppler_hz * (l + 1) / frame.sampling_hz;
      out.realization.omega(l, k) = eta * std::exp(jimag * psi);
    }
  }
  out.realization.defect_gains = gains;
  out.realization.defect_phases = phases;

  std::uniform_int_distribution<int> sym(0, frame.psk_order - 1);
  out.sent_symbols.resize(L);
  for (int l = 0; l < L; ++l) {
    if (symbols) {
      if ((*symbols)[l].rows() != K || (*symbols)[l].cols() != T)
        throw std::invalid_argument("synthesize_frame: supplied symbols have wrong shape");
      out.sent_symbols[l] = (*symbols)[l];
    } else {
      out.sent_symbols[l].resize(K, T);
      for (int t = 0; t < T; ++t)
        for (int k = 0; k < K; ++k) out.sent_symbols[l](k, t) = sym(rng);
    }
  }

  const MatrixXcd a_err = out.realization.erroneous_steering();
  std::normal_distribution<double> g(0.0, std::sqrt(sigma2 / 2.0));
  out.samples.resize(L);
  out.noise_draws.resize(L);
  for (int l = 0; l < L; ++l) {
    out.samples[l].resize(MN, T + 1);
    out.noise_draws[l].resize(MN, T + 1);
    for (int t = 0; t <= T; ++t) {
      VectorXcd s(K);
      for (int k = 0; k < K; ++k) {
        const cxd value = (t == 0) ? cxd(1.0, 0.0)
                                   : psk_symbol(out.sent_symbols[l](k, t - 1), frame.psk_order);
        s[k] = out.amplitudes[k] * out.realization.omega(l, k) * value;
      }
      VectorXcd n(MN);
      for (int i = 0; i < MN; ++i) n[i] = cxd(g(rng), g(rng));
      out.noise_draws[l].col(t) = n;
      out.samples[l].col(t) = a_err * s + n;
    }
  }
  return out;
}

}  // namespace ilc::scene
