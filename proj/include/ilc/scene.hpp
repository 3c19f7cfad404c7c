// SPDX-License-Identifier: Apache-2.0
//
// ilcsim: integrated uplink localisation & communication simulator

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "ilc/types.hpp"

namespace ilc::scene {

/// Uniform rectangular array: m_count elements along x, n_count along y,
/// element spacing given as a fraction of the wavelength.
struct ArrayConfig {
  int m_count = 1;
  int n_count = 1;
  double spacing_wavelengths = 0.5;
  double wavelength_m = 1.6e-3;

  int size() const { return m_count * n_count; }
  void validate() const;
};

/// Ground truth for one emitter. Angles live in the open interval
/// (0, pi/2); azimuth is unobservable at zero elevation.
struct DroneTruth {
  double azimuth_rad = 0.0;
  double elevation_rad = 0.0;
  double doppler_hz = 0.0;
  double tx_power_w = 1.0;
  double range_m = 100.0;
  std::optional<double> velocity_mps;  // consistency-checked, never inferred

  double path_loss(double wavelength_m) const { return wavelength_m / (4.0 * pi * range_m); }
  void validate(double wavelength_m) const;
};

struct GainPhaseModel {
  enum class Kind { Ideal, Stochastic };
  Kind kind = Kind::Ideal;
  double rician_location = 1.0;       // nu
  double rician_scale = 0.1;          // sigma_r
  double vonmises_mean = 0.0;         // mu
  double vonmises_concentration = 0;  // kappa

  static GainPhaseModel ideal() { return {}; }
  static GainPhaseModel stochastic(double nu, double sigma_r, double kappa, double mu = 0.0) {
    return {Kind::Stochastic, nu, sigma_r, mu, kappa};
  }
  bool is_ideal() const { return kind == Kind::Ideal; }
  void validate() const;
};

/// One frame = subframes subframes, each carrying 1 unit pilot followed by
/// symbols_per_subframe PSK data symbols.
struct FrameConfig {
  int subframes = 1;             // L
  int symbols_per_subframe = 0;  // T
  double sampling_hz = 1e5;      // f_s
  int psk_order = 16;

  void validate() const;
};

/// Complex circular AWGN, variance sigma^2 per antenna sample. The SNR
/// parameterization resolves sigma^2 = sum_k P_k eta_k^2 / 10^(snr_db/10),
/// i.e. aggregate received signal power per antenna over noise power.
struct NoiseModel {
  std::optional<double> variance;
  std::optional<double> snr_db;

  static NoiseModel from_variance(double v) { return {v, std::nullopt}; }
  static NoiseModel from_snr_db(double s) { return {std::nullopt, s}; }
  void validate() const;
};

struct SceneConfig {
  ArrayConfig array;
  std::vector<DroneTruth> drones;

  int emitter_count() const { return static_cast<int>(drones.size()); }
  double signal_power_per_antenna() const;  // sum_k P_k eta_k^2
  double noise_variance(const NoiseModel& noise) const;
  void validate() const;
};

/// The channel draw shared by every sample of one frame.
struct ChannelRealization {
  MatrixXcd steering;     // error-free steering columns, MN x K
  VectorXd defect_gains;  // alpha, MN
  VectorXd defect_phases; // delta-delta, MN
  MatrixXcd omega;        // per-subframe rotation eta_k e^{j 2 pi f_k l / f_s}, L x K

  /// alpha e^{j dd} applied to the error-free columns.
  MatrixXcd erroneous_steering() const;
};

struct ReceivedFrame {
  std::vector<MatrixXcd> samples;      // per subframe, MN x (T+1); column 0 = pilot
  std::vector<MatrixXcd> noise_draws;  // same shape
  std::vector<Eigen::MatrixXi> sent_symbols;  // per subframe, K x T
  ChannelRealization realization;
  ArrayConfig array;
  FrameConfig frame;
  std::vector<double> amplitudes;  // sqrt(P_k)
  double noise_variance = 0.0;

  /// Pilot observations stacked subframe-major into an MNL vector.
  VectorXcd pilot_stack() const;
  /// Same, restricted to the first `pilots` subframes.
  VectorXcd pilot_stack(int pilots) const;
};

/// a_{m,n}(az, el) = exp(-j 2 pi d [(m-1) cos az + (n-1) sin az] sin el / lambda),
/// row-major over (m, n).
VectorXcd steering_vector(const ArrayConfig& array, double azimuth_rad, double elevation_rad);

/// Per-antenna gain/phase defect draws, i.i.d. across the array and fixed
/// within one frame realization. Deterministic in the seed.
std::pair<VectorXd, VectorXd> sample_defects(const GainPhaseModel& model, const ArrayConfig& array,
                                             std::uint64_t seed);

/// Synthesizes one received frame. Data symbols are uniform PSK draws unless
/// an explicit K x T symbol matrix per subframe is supplied.
ReceivedFrame synthesize_frame(const SceneConfig& scene, const FrameConfig& frame,
                               const GainPhaseModel& error, const NoiseModel& noise,
                               std::uint64_t seed,
                               const std::vector<Eigen::MatrixXi>* symbols = nullptr);

cxd psk_symbol(int index, int order);

/// Best-Fisher rejection sampler for the von Mises distribution.
double sample_vonmises(std::mt19937_64& rng, double mu, double kappa);
double sample_rician(std::mt19937_64& rng, double nu, double sigma_r);

}  // namespace ilc::scene
