// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "ilc/jointdet.hpp"
#include "oracles.hpp"

using namespace ilc;
using namespace ilc::joint;

namespace {

scene::SceneConfig make_scene(int m, int n, std::vector<std::array<double, 3>> drones) {
  scene::SceneConfig sc;
  sc.array = {m, n, 0.5, 1.6e-3};
  for (auto& d : drones)
    sc.drones.push_back({deg2rad(d[0]), deg2rad(d[1]), d[2], 1.0, 100.0, std::nullopt});
  return sc;
}

locate::ParamVector truth_of(const scene::SceneConfig& sc) {
  auto p = locate::ParamVector::zeros(sc.emitter_count());
  for (int k = 0; k < sc.emitter_count(); ++k) {
    p.azimuths[k] = sc.drones[k].azimuth_rad;
    p.elevations[k] = sc.drones[k].elevation_rad;
    p.dopplers[k] = sc.drones[k].doppler_hz;
  }
  return p;
}

}  // namespace

TEST_SUITE("jointdet") {

TEST_CASE("window of length 1 reproduces aoml exactly") {
  auto sc = make_scene(4, 4, {{30, 40, 3000}});
  scene::FrameConfig fc{1, 5, 1e5, 16};
  auto ctx = locate::EmitterContext::from_scene(sc, fc.sampling_hz,
                                                scene::GainPhaseModel::ideal(),
                                                sc.signal_power_per_antenna() / 10.0);
  const auto frame = scene::synthesize_frame(sc, fc, scene::GainPhaseModel::ideal(),
                                             scene::NoiseModel::from_snr_db(10.0), 17);
  JointConfig cfg;
  locate::ParamVector init = locate::ParamVector::zeros(1);
  init.azimuths[0] = deg2rad(32);
  init.elevations[0] = deg2rad(38);
  init.dopplers[0] = 2800;

  TimeWindow w{1, 0, Eigen::MatrixXi(1, 0)};
  const auto jr = mle_mle_window(w, frame.samples[0], ctx, cfg, init);
  const auto ao = locate::aoml_estimate(locate::pilot_blocks(frame, 1), ctx, cfg.grid,
                                        cfg.solver, init);
  CHECK(jr.params.azimuths[0] == ao.params.azimuths[0]);
  CHECK(jr.params.elevations[0] == ao.params.elevations[0]);
  CHECK(jr.params.dopplers[0] == ao.params.dopplers[0]);
  CHECK(jr.iterations == ao.diag.iterations);
}

TEST_CASE("noiseless single drone decodes every window symbol exactly") {
  auto sc = make_scene(4, 4, {{30, 40, 3000}});
  scene::FrameConfig fc{1, 12, 1e5, 16};
  auto ctx = locate::EmitterContext::from_scene(sc, fc.sampling_hz,
                                                scene::GainPhaseModel::ideal(), 0.0);
  const auto frame = scene::synthesize_frame(sc, fc, scene::GainPhaseModel::ideal(),
                                             scene::NoiseModel::from_variance(0.0), 19);
  for (auto algorithm : {Algorithm::MleMle, Algorithm::MusicMle}) {
    const auto res = run_subframe(frame.samples[0], 1, ctx, algorithm, JointConfig{});
    CHECK(res.decoded == frame.sent_symbols[0]);
    CHECK(std::abs(rad2deg(res.final_params.azimuths[0]) - 30.0) < 0.05);
    CHECK(std::abs(rad2deg(res.final_params.elevations[0]) - 40.0) < 0.05);
    CHECK(std::abs(res.final_params.dopplers[0] - 3000.0) < 5.0);
  }
}

TEST_CASE("run_subframe with T = 0 degenerates to pure localisation") {
  auto sc = make_scene(4, 4, {{30, 40, 3000}});
  scene::FrameConfig fc{1, 0, 1e5, 16};
  auto ctx = locate::EmitterContext::from_scene(sc, fc.sampling_hz,
                                                scene::GainPhaseModel::ideal(), 0.0);
  const auto frame = scene::synthesize_frame(sc, fc, scene::GainPhaseModel::ideal(),
                                             scene::NoiseModel::from_variance(0.0), 23);
  const auto res = run_subframe(frame.samples[0], 1, ctx, Algorithm::MleMle, JointConfig{});
  CHECK(res.windows.size() == 1);
  CHECK(res.decoded.cols() == 0);
  CHECK(std::abs(rad2deg(res.final_params.azimuths[0]) - 30.0) < 0.05);
}

TEST_CASE("run_subframe is deterministic") {
  auto sc = make_scene(3, 3, {{30, 40, 3000}});
  scene::FrameConfig fc{1, 6, 1e5, 16};
  auto ctx = locate::EmitterContext::from_scene(sc, fc.sampling_hz,
                                                scene::GainPhaseModel::ideal(),
                                                sc.signal_power_per_antenna() / 10.0);
  const auto frame = scene::synthesize_frame(sc, fc, scene::GainPhaseModel::ideal(),
                                             scene::NoiseModel::from_snr_db(10.0), 29);
  const auto a = run_subframe(frame.samples[0], 1, ctx, Algorithm::MleMle, JointConfig{});
  const auto b = run_subframe(frame.samples[0], 1, ctx, Algorithm::MleMle, JointConfig{});
  CHECK(a.decoded == b.decoded);
  CHECK(a.final_params.azimuths == b.final_params.azimuths);
  CHECK(a.final_params.dopplers == b.final_params.dopplers);
}

TEST_CASE("music-mle with pinned angles decodes the nearest-projection symbol") {
  auto sc = make_scene(4, 4, {{30, 40, 3000}, {60, 55, 5500}});
  scene::FrameConfig fc{1, 4, 1e5, 16};
  auto ctx = locate::EmitterContext::from_scene(sc, fc.sampling_hz,
                                                scene::GainPhaseModel::ideal(),
                                                sc.signal_power_per_antenna() / 100.0);
  const auto frame = scene::synthesize_frame(sc, fc, scene::GainPhaseModel::ideal(),
                                             scene::NoiseModel::from_snr_db(20.0), 31);
  const int t = 4;
  TimeWindow w{1, t, frame.sent_symbols[0].leftCols(t - 1)};
  JointConfig cfg;
  const auto res = music_mle_window(w, frame.samples[0], ctx, cfg, truth_of(sc));

  // oracle: compensate with the true manifold, project the trailing column
  MatrixXcd A(16, 2);
  for (int k = 0; k < 2; ++k)
    A.col(k) = scene::steering_vector(sc.array, sc.drones[k].azimuth_rad,
                                      sc.drones[k].elevation_rad);
  const VectorXcd y2 = A.completeOrthogonalDecomposition().solve(frame.samples[0].col(t));
  for (int k = 0; k < 2; ++k) {
    const cxd m = ctx.path_losses[k] *
                  std::exp(jimag * (2.0 * pi * res.params.dopplers[k] * 1 / fc.sampling_hz));
    int best = -1;
    double bobj = 1e300;
    for (int s = 0; s < 16; ++s) {
      const double obj = std::norm(y2[k] - m * scene::psk_symbol(s, 16));
      if (obj < bobj) {
        bobj = obj;
        best = s;
      }
    }
    CHECK(res.decoded_symbol[k] == best);
  }
}

TEST_CASE("phase-2 joint search equals brute force on a small lattice") {
  auto sc = make_scene(3, 3, {{30, 40, 3000}});
  scene::FrameConfig fc{1, 3, 1e5, 4};
  auto ctx = locate::EmitterContext::from_scene(sc, fc.sampling_hz,
                                                scene::GainPhaseModel::ideal(),
                                                sc.signal_power_per_antenna() / 10.0);
  const auto frame = scene::synthesize_frame(sc, fc, scene::GainPhaseModel::ideal(),
                                             scene::NoiseModel::from_snr_db(10.0), 37);
  const int t = 3;
  TimeWindow w{1, t, frame.sent_symbols[0].leftCols(t - 1)};
  JointConfig cfg;
  cfg.psk_order = 4;
  cfg.grid.doppler = {1000.0, 5000.0, 500.0};
  cfg.grid.refine_levels = 0;
  cfg.solver.max_iters = 1;
  cfg.local_doppler_halfwidth_hz = 1e9;  // keep the full lattice in play

  locate::ParamVector init = truth_of(sc);
  init.dopplers[0] = 3000.0;
  VectorXi sym0 = VectorXi::Zero(1);
  const auto res = mle_mle_window(w, frame.samples[0], ctx, cfg, init, &sym0);

  // brute force over (doppler lattice) x (constellation) at the same angles
  double best = 1e300;
  double best_f = 0;
  int best_s = -1;
  for (double f = 1000.0; f <= 5000.0 + 1e-9; f += 500.0) {
    for (int s = 0; s < 4; ++s) {
      locate::ParamVector b = res.params;  // angles as chosen by phase 1
      b.dopplers[0] = f;
      std::vector<locate::ObsBlock> blocks(t + 1);
      for (int i = 0; i <= t; ++i) {
        blocks[i].y = frame.samples[0].col(i);
        blocks[i].subframe = 1;
        cxd symv(1.0, 0.0);
        if (i > 0 && i < t) symv = scene::psk_symbol(frame.sent_symbols[0](0, i - 1), 4);
        if (i == t) symv = scene::psk_symbol(s, 4);
        blocks[i].symbol_amps = VectorXcd::Constant(1, symv);
      }
      const double obj = locate::block_objective(blocks, ctx, b);
      if (obj < best) {
        best = obj;
        best_f = f;
        best_s = s;
      }
    }
  }
  CHECK(res.params.dopplers[0] == best_f);
  CHECK(res.decoded_symbol[0] == best_s);
}

TEST_CASE("re-running a window on its own outputs is a fixed point") {
  auto sc = make_scene(4, 4, {{30, 40, 3000}, {60, 55, 5500}});
  scene::FrameConfig fc{1, 6, 1e5, 16};
  auto ctx = locate::EmitterContext::from_scene(sc, fc.sampling_hz,
                                                scene::GainPhaseModel::ideal(),
                                                sc.signal_power_per_antenna() / 30.0);
  const auto frame = scene::synthesize_frame(sc, fc, scene::GainPhaseModel::ideal(),
                                             scene::NoiseModel::from_snr_db(15.0), 41);
  const auto full = run_subframe(frame.samples[0], 1, ctx, Algorithm::MleMle, JointConfig{});
  const int t = 6;
  TimeWindow w{1, t, full.decoded.leftCols(t - 1)};
  VectorXi last = full.decoded.col(t - 1);
  const auto again = mle_mle_window(w, frame.samples[0], ctx, JointConfig{},
                                    full.final_params, &last);
  CHECK(again.decoded_symbol == last);
  const double before = full.windows.back().objective_trace.back();
  const double after = again.objective_trace.back();
  CHECK(after <= before * (1.0 + 1e-9) + 1e-12);
}

TEST_CASE("window statistics improve with window length at moderate SNR") {
  auto sc = make_scene(4, 4, {{40, 40, 4000}});
  scene::FrameConfig fc{1, 20, 1e5, 16};
  const double sigma2 = sc.signal_power_per_antenna() / std::pow(10.0, 0.2);  // 2 dB
  auto ctx = locate::EmitterContext::from_scene(sc, fc.sampling_hz,
                                                scene::GainPhaseModel::ideal(), sigma2);
  const int trials = 60;
  double rmse_short = 0.0, rmse_long = 0.0;
  for (int i = 0; i < trials; ++i) {
    const auto frame = scene::synthesize_frame(
        sc, fc, scene::GainPhaseModel::ideal(), scene::NoiseModel::from_variance(sigma2),
        9900 + i);
    const auto res = run_subframe(frame.samples[0], 1, ctx, Algorithm::MleMle, JointConfig{});
    const double e1 = rad2deg(res.windows[1].params.azimuths[0] - sc.drones[0].azimuth_rad);
    const double e2 = rad2deg(res.windows[20].params.azimuths[0] - sc.drones[0].azimuth_rad);
    rmse_short += e1 * e1;
    rmse_long += e2 * e2;
  }
  CHECK(std::sqrt(rmse_long / trials) < std::sqrt(rmse_short / trials));
}

}  // TEST_SUITE
