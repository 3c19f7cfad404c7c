// SPDX-License-Identifier: Apache-2.0
//
// ilcsim: integrated uplink localisation & communication simulator

#pragma once

#include <vector>

#include "ilc/locate.hpp"
#include "ilc/scene.hpp"
#include "ilc/types.hpp"

namespace ilc::joint {

/// Growing prefix of one subframe: the pilot plus t data symbols, of which
/// symbols 1..t-1 were decoded in earlier windows and stay frozen.
struct TimeWindow {
  int subframe = 1;                // 1-based l
  int data_symbols = 0;            // t; window length is t+1
  Eigen::MatrixXi decoded_prefix;  // K x (t-1) symbol indices
};

struct JointResult {
  locate::ParamVector params;
  VectorXi decoded_symbol;  // K, symbol detected at position t (-1 when t = 0)
  int iterations = 0;
  bool converged = true;
  bool ill_conditioned_compensation = false;  // MUSIC-MLE pseudo-inverse flag
  std::vector<double> objective_trace;
};

enum class Algorithm { MleMle, MusicMle };

struct JointConfig {
  locate::GridSpec grid;
  locate::SolverConfig solver;
  int psk_order = 16;
  // windows after the first search locally around the previous window's
  // estimate; a full-grid pass runs whenever the local search hits its edge
  double local_angle_halfwidth_rad = deg2rad(3.0);
  double local_doppler_halfwidth_hz = 500.0;
};

/// Alternating MLE-MLE on one time window: angle search given (doppler,
/// symbols), then joint (doppler, trailing symbol) search given angles,
/// iterated to the epsilon criterion. A window of length 1 reduces to AO-ML
/// on the pilot.
JointResult mle_mle_window(const TimeWindow& window, const MatrixXcd& observations,
                           const locate::EmitterContext& ctx, const JointConfig& cfg,
                           const locate::ParamVector& init,
                           const VectorXi* init_symbol = nullptr);

/// Joint MUSIC-MLE on one time window: MUSIC over the t+1 snapshots for the
/// angles (diagonally loaded below K+1 snapshots), then the compensated
/// joint (doppler, symbol) estimate through the pseudo-inverse of A_hat.
JointResult music_mle_window(const TimeWindow& window, const MatrixXcd& observations,
                             const locate::EmitterContext& ctx, const JointConfig& cfg,
                             const locate::ParamVector& doppler_init);

/// Runs windows 1..T+1 of one subframe, threading decoded prefixes forward.
/// observations: MN x (T+1) with the pilot in column 0. Estimators that fail
/// on a window record diagnostics and the sweep continues.
struct SubframeResult {
  std::vector<JointResult> windows;       // per window t = 0..T
  Eigen::MatrixXi decoded;                // K x T
  locate::ParamVector final_params;
};

SubframeResult run_subframe(const MatrixXcd& observations, int subframe,
                            const locate::EmitterContext& ctx, Algorithm algorithm,
                            const JointConfig& cfg);

}  // namespace ilc::joint
