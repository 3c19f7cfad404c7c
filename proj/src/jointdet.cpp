// SPDX-License-Identifier: Apache-2.0
//
// ilcsim: integrated uplink localisation & communication simulator

#include "ilc/jointdet.hpp"

#include <cmath>

namespace ilc::joint {

namespace {

using locate::AxisSpec;
using locate::GridSpec;
using locate::ObsBlock;
using locate::ParamVector;

std::vector<ObsBlock> window_blocks(const TimeWindow& w, const MatrixXcd& observations,
                                    const locate::EmitterContext& ctx, int psk_order,
                                    const VectorXi* trailing_symbol) {
  const int K = ctx.emitters();
  const int t = w.data_symbols;
  std::vector<ObsBlock> blocks(t + 1);
  for (int i = 0; i <= t; ++i) {
    blocks[i].y = observations.col(i);
    blocks[i].subframe = w.subframe;
    blocks[i].symbol_amps.resize(K);
    for (int k = 0; k < K; ++k) {
      cxd sym(1.0, 0.0);  // pilot
      if (i > 0 && i < t) sym = scene::psk_symbol(w.decoded_prefix(k, i - 1), psk_order);
      if (i == t && t > 0)
        sym = trailing_symbol ? scene::psk_symbol((*trailing_symbol)[k], psk_order)
                              : cxd(1.0, 0.0);
      blocks[i].symbol_amps[k] = ctx.amplitudes[k] * sym;
    }
  }
  return blocks;
}

AxisSpec local_axis(double center, double halfwidth, double step, const AxisSpec& full) {
  AxisSpec a;
  a.lo = std::max(full.lo, center - halfwidth);
  a.hi = std::min(full.hi, center + halfwidth);
  a.step = step;
  return a;
}

GridSpec local_angle_grid(const GridSpec& full, double az, double el, double halfwidth) {
  GridSpec g = full;
  g.azimuth = local_axis(az, halfwidth, full.azimuth.step * 0.5, full.azimuth);
  g.elevation = local_axis(el, halfwidth, full.elevation.step * 0.5, full.elevation);
  return g;
}

std::vector<double> axis_values(const AxisSpec& axis) {
  std::vector<double> v;
  const int n = static_cast<int>(std::floor((axis.hi - axis.lo) / axis.step + 1e-9)) + 1;
  for (int i = 0; i < n; ++i) v.push_back(axis.lo + i * axis.step);
  return v;
}

struct Phase2Result {
  double objective = 0.0;
  VectorXi symbol;
};

// Joint (doppler, trailing-symbol) search with angles fixed: joint over the
// full cartesian product for K <= 2, cyclic per drone beyond. The incumbent
// is always a candidate, so the alternation cannot regress. With
// freeze_doppler set only the symbol is searched.
Phase2Result scan_doppler_symbol(const std::vector<ObsBlock>& blocks,
                                 const locate::EmitterContext& ctx, ParamVector& beta,
                                 int free_block, int psk_order, const GridSpec& grid,
                                 const VectorXi& current_symbol, bool freeze_doppler = false) {
  const int K = ctx.emitters();
  const int MN = ctx.array.size();
  const cxd cscale = ctx.steering_scale();

  MatrixXcd cols(MN, K);
  for (int k = 0; k < K; ++k)
    cols.col(k) =
        cscale * scene::steering_vector(ctx.array, beta.azimuths[k], beta.elevations[k]);
  const MatrixXcd gram = cols.adjoint() * cols;

  double c0 = 0.0;
  MatrixXcd b(K, blocks.size());
  for (size_t i = 0; i < blocks.size(); ++i) {
    c0 += blocks[i].y.squaredNorm();
    b.col(i) = cols.adjoint() * blocks[i].y;
  }

  VectorXcd V = VectorXcd::Zero(K);
  MatrixXcd S = MatrixXcd::Zero(K, K);
  const int l = blocks.empty() ? 1 : blocks[0].subframe;
  for (size_t i = 0; i < blocks.size(); ++i) {
    if (static_cast<int>(i) == free_block) continue;
    V += blocks[i].symbol_amps.conjugate().cwiseProduct(b.col(i));
    S += blocks[i].symbol_amps.conjugate() * blocks[i].symbol_amps.transpose();
  }
  const MatrixXcd GS = gram.cwiseProduct(S);

  auto objective = [&](const VectorXd& f, const VectorXi& sym) {
    VectorXcd m(K);
    for (int k = 0; k < K; ++k) {
      const double psi = 2.0 * pi * f[k] * l / ctx.sampling_hz;
      m[k] = ctx.path_losses[k] * std::exp(jimag * psi);
    }
    cxd fixed = 0.0;
    for (int k = 0; k < K; ++k)
      for (int kk = 0; kk < K; ++kk) fixed += std::conj(m[k]) * GS(k, kk) * m[kk];
    double obj = c0 - 2.0 * m.dot(V).real() + fixed.real();
    if (free_block >= 0) {
      VectorXcd w(K);
      for (int k = 0; k < K; ++k)
        w[k] = m[k] * ctx.amplitudes[k] * scene::psk_symbol(sym[k], psk_order);
      obj += -2.0 * w.dot(b.col(free_block)).real() + w.dot(gram * w).real();
    }
    return obj;
  };

  VectorXd best_f = beta.dopplers;
  VectorXi best_s = current_symbol.size() ? current_symbol : VectorXi::Zero(K);
  double best = objective(best_f, best_s);
  const int n_sym = free_block >= 0 ? psk_order : 1;

  auto enumerate = [&](const std::vector<std::vector<double>>& faxes) {
    if (K == 1) {
      VectorXd f(1);
      VectorXi s = best_s;
      for (double f0 : faxes[0]) {
        f[0] = f0;
        for (int s0 = 0; s0 < n_sym; ++s0) {
          if (free_block >= 0) s[0] = s0;
          const double obj = objective(f, s);
          if (obj < best) {
            best = obj;
            best_f = f;
            best_s = s;
          }
        }
      }
    } else if (K == 2) {
      VectorXd f(2);
      VectorXi s = best_s;
      for (double f0 : faxes[0]) {
        f[0] = f0;
        for (double f1 : faxes[1]) {
          f[1] = f1;
          for (int s0 = 0; s0 < n_sym; ++s0) {
            if (free_block >= 0) s[0] = s0;
            for (int s1 = 0; s1 < n_sym; ++s1) {
              if (free_block >= 0) s[1] = s1;
              const double obj = objective(f, s);
              if (obj < best) {
                best = obj;
                best_f = f;
                best_s = s;
              }
            }
          }
        }
      }
    } else {
      for (int round = 0; round < 2; ++round) {
        for (int k = 0; k < K; ++k) {
          VectorXd f = best_f;
          VectorXi s = best_s;
          for (double fk : faxes[k]) {
            f[k] = fk;
            for (int sk = 0; sk < n_sym; ++sk) {
              if (free_block >= 0) s[k] = sk;
              const double obj = objective(f, s);
              if (obj < best) {
                best = obj;
                best_f = f;
                best_s = s;
              }
            }
          }
        }
      }
    }
  };

  if (freeze_doppler) {
    std::vector<std::vector<double>> faxes(K);
    for (int k = 0; k < K; ++k) faxes[k] = {best_f[k]};
    enumerate(faxes);
  } else {
    std::vector<std::vector<double>> faxes(K, axis_values(grid.doppler));
    enumerate(faxes);
    double step = grid.doppler.step;
    for (int level = 0; level < grid.refine_levels; ++level) {
      const double newstep = step * grid.refine_shrink;
      const int half = static_cast<int>(std::ceil(step / newstep - 1e-9));
      for (int k = 0; k < K; ++k) {
        faxes[k].clear();
        for (int i = -half; i <= half; ++i) {
          const double f = best_f[k] + i * newstep;
          if (f >= grid.doppler.lo - 1e-9 && f <= grid.doppler.hi + 1e-9)
            faxes[k].push_back(std::clamp(f, grid.doppler.lo, grid.doppler.hi));
        }
      }
      enumerate(faxes);
      step = newstep;
    }
  }

  beta.dopplers = best_f;
  Phase2Result out;
  out.objective = best;
  out.symbol = best_s;
  return out;
}

}  // namespace

JointResult mle_mle_window(const TimeWindow& window, const MatrixXcd& observations,
                           const locate::EmitterContext& ctx, const JointConfig& cfg,
                           const ParamVector& init, const VectorXi* init_symbol) {
  const int K = ctx.emitters();
  const int t = window.data_symbols;
  JointResult out;

  if (t == 0) {
    // the stated degeneracy: one pilot makes this exactly AO-ML
    const auto blocks = window_blocks(window, observations, ctx, cfg.psk_order, nullptr);
    const auto est = aoml_estimate(blocks, ctx, cfg.grid, cfg.solver, init);
    out.params = est.params;
    out.decoded_symbol = VectorXi::Constant(K, -1);
    out.iterations = est.diag.iterations;
    out.converged = est.diag.converged;
    out.objective_trace = est.diag.objective_trace;
    return out;
  }

  out.params = init;
  VectorXi symbol = init_symbol ? *init_symbol : VectorXi::Zero(K);
  std::vector<ObsBlock> blocks = window_blocks(window, observations, ctx, cfg.psk_order, &symbol);

  if (!init_symbol) {
    // initialize the trailing symbol by detection at the incoming estimate
    const auto det =
        scan_doppler_symbol(blocks, ctx, out.params, t, cfg.psk_order, cfg.grid, symbol, true);
    symbol = det.symbol;
    for (int k = 0; k < K; ++k)
      blocks[t].symbol_amps[k] = ctx.amplitudes[k] * scene::psk_symbol(symbol[k], cfg.psk_order);
  }

  out.converged = false;
  for (int z = 1; z <= cfg.solver.max_iters; ++z) {
    const ParamVector prev = out.params;
    const VectorXi prev_symbol = symbol;

    // phase 1: angles given doppler and symbols, local with full-grid rescue
    for (int k = 0; k < K; ++k) {
      const GridSpec lg = local_angle_grid(cfg.grid, out.params.azimuths[k],
                                           out.params.elevations[k],
                                           cfg.local_angle_halfwidth_rad);
      const auto res = locate::scan_angles(blocks, ctx, out.params, k, lg, true);
      if (res.boundary) locate::scan_angles(blocks, ctx, out.params, k, cfg.grid, true);
    }

    // phase 2: joint (doppler, trailing symbol) given angles
    GridSpec dg = cfg.grid;
    dg.doppler = local_axis(out.params.dopplers.mean(), cfg.local_doppler_halfwidth_hz,
                            cfg.grid.doppler.step, cfg.grid.doppler);
    const auto p2 = scan_doppler_symbol(blocks, ctx, out.params, t, cfg.psk_order, dg, symbol);
    symbol = p2.symbol;
    for (int k = 0; k < K; ++k)
      blocks[t].symbol_amps[k] = ctx.amplitudes[k] * scene::psk_symbol(symbol[k], cfg.psk_order);

    out.objective_trace.push_back(locate::block_objective(blocks, ctx, out.params));
    out.iterations = z;
    if (locate::normalized_distance(prev, out.params) < cfg.solver.epsilon &&
        symbol == prev_symbol) {
      out.converged = true;
      break;
    }
  }
  out.decoded_symbol = symbol;
  return out;
}

JointResult music_mle_window(const TimeWindow& window, const MatrixXcd& observations,
                             const locate::EmitterContext& ctx, const JointConfig& cfg,
                             const ParamVector& doppler_init) {
  const int K = ctx.emitters();
  const int t = window.data_symbols;
  const int S = t + 1;
  const int MN = ctx.array.size();
  JointResult out;
  out.params = doppler_init;

  // MUSIC needs >= K+1 snapshots for a rank-adequate covariance; shorter
  // windows get diagonal loading so the algorithm stays total
  double loading = 0.0;
  const MatrixXcd snaps = observations.leftCols(S);
  if (S < K + 1) loading = 1e-6 * snaps.squaredNorm() / S / MN;
  const auto music = locate::music_estimate(snaps, K, ctx.array, cfg.grid, loading);

  // keep drone labels stable across windows: match peaks onto the carry-in
  ParamVector peaks = ParamVector::zeros(K);
  peaks.azimuths = music.azimuths;
  peaks.elevations = music.elevations;
  const auto perm = locate::match_to_truth(peaks, doppler_init);
  for (int k = 0; k < K; ++k) {
    out.params.azimuths[k] = music.azimuths[perm[k]];
    out.params.elevations[k] = music.elevations[perm[k]];
  }

  // compensation through the pseudo-inverse of the estimated manifold
  MatrixXcd ahat(MN, K);
  for (int k = 0; k < K; ++k)
    ahat.col(k) =
        scene::steering_vector(ctx.array, out.params.azimuths[k], out.params.elevations[k]);
  Eigen::JacobiSVD<MatrixXcd> svd(ahat, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(K - 1);
  out.ill_conditioned_compensation = smax / std::max(smin, 1e-300) > 1e8;
  VectorXd inv_sv(K);
  for (int k = 0; k < K; ++k) {
    const double sv = svd.singularValues()(k);
    inv_sv[k] = sv > 1e-12 * smax ? 1.0 / sv : 0.0;
  }
  const MatrixXcd pinv = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().adjoint();

  // per-drone (doppler, trailing symbol) fit on the compensated sequence;
  // the problem separates exactly across drones
  const MatrixXcd y2 = pinv * snaps;  // K x S
  out.decoded_symbol = VectorXi::Constant(K, -1);
  const int l = window.subframe;
  for (int k = 0; k < K; ++k) {
    auto fit = [&](double f, int sym) {
      const double psi = 2.0 * pi * f * l / ctx.sampling_hz;
      const cxd m = ctx.path_losses[k] * std::exp(jimag * psi);
      double acc = 0.0;
      for (int i = 0; i < S; ++i) {
        cxd s(1.0, 0.0);
        if (i > 0 && i < t) s = scene::psk_symbol(window.decoded_prefix(k, i - 1), cfg.psk_order);
        if (i == t && t > 0) s = scene::psk_symbol(sym, cfg.psk_order);
        acc += std::norm(y2(k, i) - m * ctx.amplitudes[k] * s);
      }
      return acc;
    };
    double best = std::numeric_limits<double>::infinity();
    double best_f = out.params.dopplers[k];
    int best_s = 0;
    const int n_sym = t > 0 ? cfg.psk_order : 1;
    auto try_axis = [&](const std::vector<double>& fss) {
      for (double f : fss)
        for (int s = 0; s < n_sym; ++s) {
          const double obj = fit(f, s);
          if (obj < best) {
            best = obj;
            best_f = f;
            best_s = s;
          }
        }
    };
    try_axis(axis_values(cfg.grid.doppler));
    double step = cfg.grid.doppler.step;
    for (int level = 0; level < cfg.grid.refine_levels; ++level) {
      const double newstep = step * cfg.grid.refine_shrink;
      const int half = static_cast<int>(std::ceil(step / newstep - 1e-9));
      std::vector<double> fss;
      for (int i = -half; i <= half; ++i) {
        const double f = best_f + i * newstep;
        if (f >= cfg.grid.doppler.lo - 1e-9 && f <= cfg.grid.doppler.hi + 1e-9)
          fss.push_back(std::clamp(f, cfg.grid.doppler.lo, cfg.grid.doppler.hi));
      }
      try_axis(fss);
      step = newstep;
    }
    out.params.dopplers[k] = best_f;
    if (t > 0) out.decoded_symbol[k] = best_s;
    out.objective_trace.push_back(best);
  }
  out.iterations = 1;
  return out;
}

SubframeResult run_subframe(const MatrixXcd& observations, int subframe,
                            const locate::EmitterContext& ctx, Algorithm algorithm,
                            const JointConfig& cfg) {
  const int K = ctx.emitters();
  const int T = static_cast<int>(observations.cols()) - 1;
  SubframeResult out;
  out.decoded.resize(K, T);
  out.windows.reserve(T + 1);

  ParamVector carry = ParamVector::zeros(K);
  for (int t = 0; t <= T; ++t) {
    TimeWindow w;
    w.subframe = subframe;
    w.data_symbols = t;
    if (t > 1)
      w.decoded_prefix = out.decoded.leftCols(t - 1);
    else
      w.decoded_prefix.resize(K, 0);

    JointResult res;
    if (algorithm == Algorithm::MleMle) {
      if (t == 0) {
        // coarse-MLE initialization, then the pure AO-ML pilot window
        const auto pilot = window_blocks(w, observations, ctx, cfg.psk_order, nullptr);
        GridSpec coarse = cfg.grid;
        coarse.azimuth.step *= 4.0;
        coarse.elevation.step *= 4.0;
        coarse.doppler.step *= 4.0;
        coarse.refine_levels = 1;
        const auto seed = locate::mle_estimate(pilot, ctx, coarse);
        res = mle_mle_window(w, observations, ctx, cfg, seed.params);
      } else {
        res = mle_mle_window(w, observations, ctx, cfg, carry);
      }
    } else {
      if (t == 0) {
        ParamVector init = ParamVector::zeros(K);
        init.azimuths.setConstant(deg2rad(45));
        init.elevations.setConstant(deg2rad(45));
        init.dopplers.setConstant(0.5 * (cfg.grid.doppler.lo + cfg.grid.doppler.hi));
        res = music_mle_window(w, observations, ctx, cfg, init);
      } else {
        res = music_mle_window(w, observations, ctx, cfg, carry);
      }
    }
    carry = res.params;
    if (t > 0)
      for (int k = 0; k < K; ++k) out.decoded(k, t - 1) = res.decoded_symbol[k];
    out.windows.push_back(std::move(res));
  }
  out.final_params = carry;
  return out;
}

}  // namespace ilc::joint
