// SPDX-License-Identifier: Apache-2.0
//
// ilcsim: integrated uplink localisation & communication simulator

#pragma once

#include <optional>
#include <vector>

#include "ilc/scene.hpp"
#include "ilc/specfun.hpp"
#include "ilc/types.hpp"

namespace ilc::locate {

/// Azimuth/elevation/Doppler triple per emitter.
struct ParamVector {
  VectorXd azimuths;
  VectorXd elevations;
  VectorXd dopplers;

  int size() const { return static_cast<int>(azimuths.size()); }
  static ParamVector zeros(int k) {
    return {VectorXd::Zero(k), VectorXd::Zero(k), VectorXd::Zero(k)};
  }
};

/// Distance in the solver's normalized units: angles in degrees, Doppler in
/// steps of 100 Hz, so the epsilon criterion is commensurate across types.
double normalized_distance(const ParamVector& a, const ParamVector& b);

/// First and second-order statistics of the stacked pilot observations.
struct MomentModel {
  VectorXcd mean;        // MNL
  MatrixXcd covariance;  // MNL x MNL, Hermitian PSD
};

struct AxisSpec {
  double lo = 0.0;
  double hi = 0.0;
  double step = 1.0;
};

/// Search lattice with coarse-to-fine refinement: each level re-centers on
/// the incumbent best with half-width one previous step and step scaled by
/// refine_shrink.
struct GridSpec {
  AxisSpec azimuth{deg2rad(1.0), deg2rad(89.0), deg2rad(1.0)};
  AxisSpec elevation{deg2rad(1.0), deg2rad(89.0), deg2rad(1.0)};
  AxisSpec doppler{0.0, 10000.0, 100.0};
  int refine_levels = 3;
  double refine_shrink = 0.2;
};

struct SolverConfig {
  double epsilon = 1e-3;  // normalized units
  int max_iters = 50;
};

/// Everything the receiver knows when forming the ML objective: geometry,
/// per-emitter amplitudes and path losses, the defect statistics, noise.
struct EmitterContext {
  scene::ArrayConfig array;
  double sampling_hz = 1e5;
  VectorXd amplitudes;   // sqrt(P_k)
  VectorXd path_losses;  // eta_k
  scene::GainPhaseModel error;
  double noise_variance = 0.0;
  bool gamma_weighted = false;  // Gamma^{-1}-weighted ML objective (slow path)
  specfun::SeriesPolicy policy{1e-12, 200000};

  // cached defect statistics, filled by finalize()
  double e_alpha = 1.0;   // E[alpha]
  double e_alpha2 = 1.0;  // E[alpha^2]
  cxd chi1{1.0, 0.0};     // E[e^{j dd}]

  int emitters() const { return static_cast<int>(amplitudes.size()); }
  cxd steering_scale() const { return e_alpha * chi1; }
  void finalize();

  static EmitterContext from_scene(const scene::SceneConfig& sc, double sampling_hz,
                                   const scene::GainPhaseModel& error, double noise_variance);
};

/// One observed snapshot together with the symbol amplitudes the template
/// uses for it (sqrt(P_k) folded in; a pilot block carries sqrt(P_k) itself).
struct ObsBlock {
  VectorXcd y;
  VectorXcd symbol_amps;
  int subframe = 1;  // 1-based l entering the Doppler rotation
};

/// Pilot blocks l = 1..L from a received frame (first `pilots` subframes).
std::vector<ObsBlock> pilot_blocks(const scene::ReceivedFrame& frame, int pilots);

/// mu and Gamma of the stacked pilots at hypothesis beta. Gamma couples the
/// L pilot samples of one antenna (the defect draw is shared within the
/// frame) and carries sigma^2 on the diagonal.
MomentModel build_moments(const ParamVector& beta, const EmitterContext& ctx, int pilots);

/// || y - mu(beta) ||^2 over the given blocks, templates built literally.
double block_objective(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                       const ParamVector& beta);

struct ScanResult {
  double objective = 0.0;
  bool boundary = false;  // coarse-level optimum on the range boundary
};

/// Conditional searches used by the ML family. Each updates only the stated
/// coordinates of `beta`, scanning the grid with refinement. When
/// `include_current` is set the incumbent beta is a candidate too, so
/// alternating optimisation can never regress.
ScanResult scan_angles(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                       ParamVector& beta, int k, const GridSpec& grid,
                       bool include_current = true);
ScanResult scan_doppler(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                        ParamVector& beta, int k, const GridSpec& grid,
                        bool include_current = true);
/// Joint (azimuth, elevation, Doppler) search for drone k holding the other
/// drones fixed; the grid MLE reduces to this for K = 1.
ScanResult scan_drone_joint(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                            ParamVector& beta, int k, const GridSpec& grid,
                            bool include_current = false);

struct EstimateDiagnostics {
  bool boundary = false;
  bool converged = true;
  int iterations = 0;
  std::vector<double> objective_trace;        // one entry per iteration
  std::vector<ParamVector> beta_trace;
};

struct EstimateResult {
  ParamVector params;
  EstimateDiagnostics diag;
};

/// Grid MLE on the stacked pilots: joint search for K = 1; for K >= 2 a
/// decimated joint pass seeds cyclic per-drone searches.
EstimateResult mle_estimate(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                            const GridSpec& grid);

/// AO-ML: alternate (angles | doppler) and (doppler | angles) exhaustive
/// searches until ||beta_z - beta_{z-1}|| < epsilon in normalized units.
EstimateResult aoml_estimate(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                             const GridSpec& grid, const SolverConfig& solver,
                             const ParamVector& init);
/// Self-initializing variant: seeds from a decimated-grid MLE pass.
EstimateResult aoml_estimate(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                             const GridSpec& grid, const SolverConfig& solver);

struct MusicResult {
  VectorXd azimuths;   // by descending peak height
  VectorXd elevations;
  int peaks_found = 0;
  bool rank_deficient = false;  // fewer distinguishable peaks than requested
};

/// 2-D MUSIC on MN x S snapshots: sample covariance, eigendecomposition,
/// K largest local maxima of 1 / ||U_n^H a||^2 with per-peak refinement.
MusicResult music_estimate(const MatrixXcd& snapshots, int k_sources,
                           const scene::ArrayConfig& array, const GridSpec& grid,
                           double diagonal_loading = 0.0);

/// Minimum-total-angular-distance assignment, exhaustive over permutations.
/// Returns p with p[i] = estimate index matched to truth emitter i.
std::vector<int> match_to_truth(const ParamVector& estimates, const ParamVector& truth);

}  // namespace ilc::locate
