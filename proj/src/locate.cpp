// SPDX-License-Identifier: Apache-2.0
//
// ilcsim: integrated uplink localisation & communication simulator

#include "ilc/locate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ilc::locate {

double normalized_distance(const ParamVector& a, const ParamVector& b) {
  double acc = 0.0;
  for (int k = 0; k < a.size(); ++k) {
    const double daz = rad2deg(a.azimuths[k] - b.azimuths[k]);
    const double del = rad2deg(a.elevations[k] - b.elevations[k]);
    const double dfd = (a.dopplers[k] - b.dopplers[k]) / 100.0;
    acc += daz * daz + del * del + dfd * dfd;
  }
  return std::sqrt(acc);
}

void EmitterContext::finalize() {
  if (error.is_ideal()) {
    e_alpha = e_alpha2 = 1.0;
    chi1 = cxd(1.0, 0.0);
    return;
  }
  e_alpha = specfun::rician_moment(1, error.rician_location, error.rician_scale, policy);
  e_alpha2 = specfun::rician_moment(2, error.rician_location, error.rician_scale, policy);
  chi1 = specfun::vonmises_char_full(1.0, +1, error.vonmises_mean,
                                     error.vonmises_concentration, policy);
}

EmitterContext EmitterContext::from_scene(const scene::SceneConfig& sc, double sampling_hz,
                                          const scene::GainPhaseModel& error,
                                          double noise_variance) {
  EmitterContext ctx;
  ctx.array = sc.array;
  ctx.sampling_hz = sampling_hz;
  const int K = sc.emitter_count();
  ctx.amplitudes.resize(K);
  ctx.path_losses.resize(K);
  for (int k = 0; k < K; ++k) {
    ctx.amplitudes[k] = std::sqrt(sc.drones[k].tx_power_w);
    ctx.path_losses[k] = sc.drones[k].path_loss(sc.array.wavelength_m);
  }
  ctx.error = error;
  ctx.noise_variance = noise_variance;
  ctx.finalize();
  return ctx;
}

std::vector<ObsBlock> pilot_blocks(const scene::ReceivedFrame& frame, int pilots) {
  std::vector<ObsBlock> blocks(pilots);
  const int K = static_cast<int>(frame.amplitudes.size());
  for (int l = 0; l < pilots; ++l) {
    blocks[l].y = frame.samples[l].col(0);
    blocks[l].symbol_amps.resize(K);
    for (int k = 0; k < K; ++k) blocks[l].symbol_amps[k] = frame.amplitudes[k];
    blocks[l].subframe = l + 1;
  }
  return blocks;
}

namespace {

// eta_k e^{j 2 pi f_k l / f_s}
cxd rotation(const EmitterContext& ctx, double doppler_hz, int k, int subframe) {
  const double psi = 2.0 * pi * doppler_hz * subframe / ctx.sampling_hz;
  return ctx.path_losses[k] * std::exp(jimag * psi);
}

MatrixXcd scaled_steering(const EmitterContext& ctx, const ParamVector& beta) {
  const int K = beta.size();
  MatrixXcd cols(ctx.array.size(), K);
  const cxd c = ctx.steering_scale();
  for (int k = 0; k < K; ++k)
    cols.col(k) = c * scene::steering_vector(ctx.array, beta.azimuths[k], beta.elevations[k]);
  return cols;
}

VectorXcd block_template(const MatrixXcd& cols, const EmitterContext& ctx,
                         const ParamVector& beta, const ObsBlock& blk) {
  VectorXcd acc = VectorXcd::Zero(cols.rows());
  for (int k = 0; k < beta.size(); ++k)
    acc += cols.col(k) * (rotation(ctx, beta.dopplers[k], k, blk.subframe) * blk.symbol_amps[k]);
  return acc;
}

// residuals after subtracting every drone except k (k = -1 subtracts all)
std::vector<VectorXcd> residuals_without(const std::vector<ObsBlock>& blocks,
                                         const EmitterContext& ctx, const ParamVector& beta,
                                         int k) {
  const MatrixXcd cols = scaled_steering(ctx, beta);
  std::vector<VectorXcd> r(blocks.size());
  for (size_t i = 0; i < blocks.size(); ++i) {
    r[i] = blocks[i].y;
    for (int kk = 0; kk < beta.size(); ++kk) {
      if (kk == k) continue;
      r[i] -= cols.col(kk) * (rotation(ctx, beta.dopplers[kk], kk, blocks[i].subframe) *
                              blocks[i].symbol_amps[kk]);
    }
  }
  return r;
}

std::vector<double> axis_values(const AxisSpec& axis) {
  std::vector<double> v;
  if (axis.hi < axis.lo) return v;
  const int n = static_cast<int>(std::floor((axis.hi - axis.lo) / axis.step + 1e-9)) + 1;
  v.reserve(n);
  for (int i = 0; i < n; ++i) v.push_back(axis.lo + i * axis.step);
  return v;
}

std::vector<double> refined_axis(double center, double prev_step, double shrink, double lo,
                                 double hi) {
  const double step = prev_step * shrink;
  const int half = static_cast<int>(std::ceil(prev_step / step - 1e-9));
  std::vector<double> v;
  v.reserve(2 * half + 1);
  for (int i = -half; i <= half; ++i) {
    const double x = center + i * step;
    if (x >= lo - 1e-12 && x <= hi + 1e-12) v.push_back(std::clamp(x, lo, hi));
  }
  return v;
}

}  // namespace

double block_objective(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                       const ParamVector& beta) {
  const MatrixXcd cols = scaled_steering(ctx, beta);
  double acc = 0.0;
  for (const auto& blk : blocks)
    acc += (blk.y - block_template(cols, ctx, beta, blk)).squaredNorm();
  return acc;
}

MomentModel build_moments(const ParamVector& beta, const EmitterContext& ctx, int pilots) {
  const int K = beta.size();
  if (K > ctx.array.size())
    throw std::invalid_argument("build_moments: more emitters than antennas");
  const int MN = ctx.array.size();
  MomentModel mm;
  mm.mean.resize(MN * pilots);

  // Q_{mnl} = sum_k eta_k sqrt(P_k) a_mn(k) e^{j 2 pi f_k l / f_s}
  MatrixXcd steer(MN, K);
  for (int k = 0; k < K; ++k)
    steer.col(k) = scene::steering_vector(ctx.array, beta.azimuths[k], beta.elevations[k]);
  MatrixXcd q(MN, pilots);
  for (int l = 0; l < pilots; ++l) {
    VectorXcd w(K);
    for (int k = 0; k < K; ++k)
      w[k] = ctx.amplitudes[k] * rotation(ctx, beta.dopplers[k], k, l + 1);
    q.col(l) = steer * w;
  }

  const cxd c = ctx.steering_scale();
  for (int l = 0; l < pilots; ++l) mm.mean.segment(l * MN, MN) = c * q.col(l);

  // The defect draw is shared across the frame, so the covariance couples
  // the L pilot samples of each antenna; distinct antennas factorize and
  // their covariance cancels exactly.
  const double spread = ctx.e_alpha2 - ctx.e_alpha * ctx.e_alpha * std::norm(ctx.chi1);
  mm.covariance = MatrixXcd::Zero(MN * pilots, MN * pilots);
  for (int i = 0; i < MN; ++i)
    for (int l1 = 0; l1 < pilots; ++l1)
      for (int l2 = 0; l2 < pilots; ++l2)
        mm.covariance(l1 * MN + i, l2 * MN + i) = spread * q(i, l1) * std::conj(q(i, l2));
  mm.covariance.diagonal().array() += ctx.noise_variance;
  return mm;
}

namespace {

struct AngleEval {
  // objective(az, el) = r0 - 2 Re(conj(c) a^H v) + |c|^2 MN w2. Candidates
  // are compared on the variable correlation term alone: the constant parts
  // would otherwise mask sub-epsilon differences between nearby candidates.
  VectorXcd v;
  double r0 = 0.0, w2 = 0.0;
  const EmitterContext* ctx = nullptr;

  double operator()(double az, double el) const {
    const VectorXcd a = scene::steering_vector(ctx->array, az, el);
    const cxd corr = std::conj(ctx->steering_scale()) * a.dot(v);
    return -2.0 * corr.real();
  }
  double constant() const {
    return r0 + std::norm(ctx->steering_scale()) * ctx->array.size() * w2;
  }
};

}  // namespace

ScanResult scan_angles(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                       ParamVector& beta, int k, const GridSpec& grid, bool include_current) {
  const auto r = residuals_without(blocks, ctx, beta, k);
  AngleEval eval;
  eval.ctx = &ctx;
  eval.v = VectorXcd::Zero(ctx.array.size());
  for (size_t i = 0; i < blocks.size(); ++i) {
    const cxd w =
        rotation(ctx, beta.dopplers[k], k, blocks[i].subframe) * blocks[i].symbol_amps[k];
    eval.v += r[i] * std::conj(w);
    eval.r0 += r[i].squaredNorm();
    eval.w2 += std::norm(w);
  }

  double best_az = beta.azimuths[k], best_el = beta.elevations[k];
  double best =
      include_current ? eval(best_az, best_el) : std::numeric_limits<double>::infinity();
  ScanResult res;

  const auto azs = axis_values(grid.azimuth);
  const auto els = axis_values(grid.elevation);
  int bi = -1, bj = -1;
  for (size_t i = 0; i < azs.size(); ++i) {
    for (size_t j = 0; j < els.size(); ++j) {
      const double obj = eval(azs[i], els[j]);
      if (obj < best) {
        best = obj;
        best_az = azs[i];
        best_el = els[j];
        bi = static_cast<int>(i);
        bj = static_cast<int>(j);
      }
    }
  }
  auto on_edge = [](int idx, size_t n) {
    return idx >= 0 && n > 1 && (idx == 0 || idx + 1 == static_cast<int>(n));
  };
  res.boundary = on_edge(bi, azs.size()) || on_edge(bj, els.size());

  double step_az = grid.azimuth.step, step_el = grid.elevation.step;
  for (int level = 0; level < grid.refine_levels; ++level) {
    const auto raz =
        refined_axis(best_az, step_az, grid.refine_shrink, grid.azimuth.lo, grid.azimuth.hi);
    const auto rel = refined_axis(best_el, step_el, grid.refine_shrink, grid.elevation.lo,
                                  grid.elevation.hi);
    for (double az : raz)
      for (double el : rel) {
        const double obj = eval(az, el);
        if (obj < best) {
          best = obj;
          best_az = az;
          best_el = el;
        }
      }
    step_az *= grid.refine_shrink;
    step_el *= grid.refine_shrink;
  }

  beta.azimuths[k] = best_az;
  beta.elevations[k] = best_el;
  res.objective = best;
  return res;
}

namespace {

struct DopplerEval {
  // objective(f) = r0 - 2 Re(sum_i e^{-j psi(f) l_i} z_i) + cnorm
  std::vector<cxd> z;
  std::vector<int> subframes;
  double r0 = 0.0, cnorm = 0.0, inv_fs = 0.0;

  double operator()(double f) const {
    cxd acc = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
      const double psi = 2.0 * pi * f * subframes[i] * inv_fs;
      acc += std::exp(cxd(0.0, -psi)) * z[i];
    }
    return r0 - 2.0 * acc.real() + cnorm;
  }
};

DopplerEval make_doppler_eval(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                              const ParamVector& beta, int k,
                              const std::vector<VectorXcd>& residuals) {
  DopplerEval eval;
  eval.inv_fs = 1.0 / ctx.sampling_hz;
  const VectorXcd col = ctx.steering_scale() * scene::steering_vector(ctx.array, beta.azimuths[k],
                                                                      beta.elevations[k]);
  double w2 = 0.0;
  for (size_t i = 0; i < blocks.size(); ++i) {
    const cxd u = col.dot(residuals[i]);  // col^H r
    eval.z.push_back(ctx.path_losses[k] * std::conj(blocks[i].symbol_amps[k]) * u);
    eval.subframes.push_back(blocks[i].subframe);
    eval.r0 += residuals[i].squaredNorm();
    w2 += std::norm(ctx.path_losses[k] * blocks[i].symbol_amps[k]);
  }
  eval.cnorm = std::norm(ctx.steering_scale()) * ctx.array.size() * w2;
  return eval;
}

}  // namespace

ScanResult scan_doppler(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                        ParamVector& beta, int k, const GridSpec& grid, bool include_current) {
  const auto r = residuals_without(blocks, ctx, beta, k);
  const DopplerEval eval = make_doppler_eval(blocks, ctx, beta, k, r);

  double best_f = beta.dopplers[k];
  double best = include_current ? eval(best_f) : std::numeric_limits<double>::infinity();
  ScanResult res;
  const auto fs = axis_values(grid.doppler);
  int bi = -1;
  for (size_t i = 0; i < fs.size(); ++i) {
    const double obj = eval(fs[i]);
    if (obj < best) {
      best = obj;
      best_f = fs[i];
      bi = static_cast<int>(i);
    }
  }
  res.boundary = bi >= 0 && fs.size() > 1 && (bi == 0 || bi + 1 == static_cast<int>(fs.size()));

  double step = grid.doppler.step;
  for (int level = 0; level < grid.refine_levels; ++level) {
    for (double f :
         refined_axis(best_f, step, grid.refine_shrink, grid.doppler.lo, grid.doppler.hi)) {
      const double obj = eval(f);
      if (obj < best) {
        best = obj;
        best_f = f;
      }
    }
    step *= grid.refine_shrink;
  }
  beta.dopplers[k] = best_f;
  res.objective = best;
  return res;
}

ScanResult scan_drone_joint(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                            ParamVector& beta, int k, const GridSpec& grid,
                            bool include_current) {
  const auto r = residuals_without(blocks, ctx, beta, k);
  const int MN = ctx.array.size();
  const cxd cscale = ctx.steering_scale();

  double r0 = 0.0, w2 = 0.0;
  for (size_t i = 0; i < blocks.size(); ++i) {
    r0 += r[i].squaredNorm();
    w2 += std::norm(ctx.path_losses[k] * blocks[i].symbol_amps[k]);
  }
  const double cnorm = std::norm(cscale) * MN * w2;
  const double inv_fs = 1.0 / ctx.sampling_hz;

  std::vector<cxd> z(blocks.size());
  auto fill_z = [&](double az, double el) {
    const VectorXcd a = scene::steering_vector(ctx.array, az, el);
    for (size_t i = 0; i < blocks.size(); ++i) {
      const cxd u = std::conj(cscale) * a.dot(r[i]);
      z[i] = ctx.path_losses[k] * std::conj(blocks[i].symbol_amps[k]) * u;
    }
  };
  auto eval_f = [&](double f) {
    cxd acc = 0.0;
    for (size_t i = 0; i < blocks.size(); ++i) {
      const double psi = 2.0 * pi * f * blocks[i].subframe * inv_fs;
      acc += std::exp(cxd(0.0, -psi)) * z[i];
    }
    return r0 - 2.0 * acc.real() + cnorm;
  };

  double best_az = beta.azimuths[k], best_el = beta.elevations[k], best_f = beta.dopplers[k];
  double best = std::numeric_limits<double>::infinity();
  if (include_current) {
    fill_z(best_az, best_el);
    best = eval_f(best_f);
  }

  ScanResult res;
  const auto azs = axis_values(grid.azimuth);
  const auto els = axis_values(grid.elevation);
  const auto fds = axis_values(grid.doppler);
  int bi = -1, bj = -1, bl = -1;
  for (size_t i = 0; i < azs.size(); ++i) {
    for (size_t j = 0; j < els.size(); ++j) {
      fill_z(azs[i], els[j]);
      for (size_t l = 0; l < fds.size(); ++l) {
        const double obj = eval_f(fds[l]);
        if (obj < best) {
          best = obj;
          best_az = azs[i];
          best_el = els[j];
          best_f = fds[l];
          bi = static_cast<int>(i);
          bj = static_cast<int>(j);
          bl = static_cast<int>(l);
        }
      }
    }
  }
  auto on_edge = [](int idx, size_t n) {
    return idx >= 0 && n > 1 && (idx == 0 || idx + 1 == static_cast<int>(n));
  };
  res.boundary = on_edge(bi, azs.size()) || on_edge(bj, els.size()) || on_edge(bl, fds.size());

  double step_az = grid.azimuth.step, step_el = grid.elevation.step, step_f = grid.doppler.step;
  for (int level = 0; level < grid.refine_levels; ++level) {
    const auto raz =
        refined_axis(best_az, step_az, grid.refine_shrink, grid.azimuth.lo, grid.azimuth.hi);
    const auto rel = refined_axis(best_el, step_el, grid.refine_shrink, grid.elevation.lo,
                                  grid.elevation.hi);
    const auto rfd =
        refined_axis(best_f, step_f, grid.refine_shrink, grid.doppler.lo, grid.doppler.hi);
    for (double az : raz)
      for (double el : rel) {
        fill_z(az, el);
        for (double f : rfd) {
          const double obj = eval_f(f);
          if (obj < best) {
            best = obj;
            best_az = az;
            best_el = el;
            best_f = f;
          }
        }
      }
    step_az *= grid.refine_shrink;
    step_el *= grid.refine_shrink;
    step_f *= grid.refine_shrink;
  }

  beta.azimuths[k] = best_az;
  beta.elevations[k] = best_el;
  beta.dopplers[k] = best_f;
  res.objective = best;
  return res;
}

namespace {

GridSpec decimate(const GridSpec& grid, double factor) {
  GridSpec g = grid;
  g.azimuth.step *= factor;
  g.elevation.step *= factor;
  g.doppler.step *= factor;
  g.refine_levels = 0;
  return g;
}

// Joint pass over two emitters on a decimated lattice. The per-drone scans
// cannot see the cross term between the two templates; this pass can.
void joint_pass_two(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                    ParamVector& beta, const GridSpec& grid) {
  const GridSpec dg = decimate(grid, 10.0);
  const auto azs = axis_values(dg.azimuth);
  const auto els = axis_values(dg.elevation);
  const auto fds = axis_values(dg.doppler);
  const int MN = ctx.array.size();
  const cxd cscale = ctx.steering_scale();
  const double cn = std::norm(cscale);
  const double inv_fs = 1.0 / ctx.sampling_hz;
  const size_t B = blocks.size();

  struct Cell {
    double az, el;
    VectorXcd a;
  };
  std::vector<Cell> cells;
  cells.reserve(azs.size() * els.size());
  for (double az : azs)
    for (double el : els) cells.push_back({az, el, scene::steering_vector(ctx.array, az, el)});

  const int nc = static_cast<int>(cells.size()), nf = static_cast<int>(fds.size());

  // per (drone, cell, f): Re<template_k, y>
  std::vector<std::vector<double>> corr(2, std::vector<double>(nc * nf));
  for (int k = 0; k < 2; ++k) {
    std::vector<cxd> zi(B);
    for (int cidx = 0; cidx < nc; ++cidx) {
      for (size_t i = 0; i < B; ++i) {
        const cxd u = std::conj(cscale) * cells[cidx].a.dot(blocks[i].y);
        zi[i] = ctx.path_losses[k] * std::conj(blocks[i].symbol_amps[k]) * u;
      }
      for (int fi = 0; fi < nf; ++fi) {
        cxd acc = 0.0;
        for (size_t i = 0; i < B; ++i) {
          const double psi = 2.0 * pi * fds[fi] * blocks[i].subframe * inv_fs;
          acc += std::exp(cxd(0.0, -psi)) * zi[i];
        }
        corr[k][cidx * nf + fi] = acc.real();
      }
    }
  }

  // cross term sum_i conj(w_{i,1}(f1)) w_{i,2}(f2), independent of the cells
  std::vector<cxd> cross(nf * nf);
  for (int f1 = 0; f1 < nf; ++f1)
    for (int f2 = 0; f2 < nf; ++f2) {
      cxd acc = 0.0;
      for (size_t i = 0; i < B; ++i) {
        const double psi1 = 2.0 * pi * fds[f1] * blocks[i].subframe * inv_fs;
        const double psi2 = 2.0 * pi * fds[f2] * blocks[i].subframe * inv_fs;
        acc += std::conj(ctx.path_losses[0] * blocks[i].symbol_amps[0] * std::exp(cxd(0.0, psi1))) *
               (ctx.path_losses[1] * blocks[i].symbol_amps[1] * std::exp(cxd(0.0, psi2)));
      }
      cross[f1 * nf + f2] = acc;
    }

  double w2[2] = {0.0, 0.0};
  for (int k = 0; k < 2; ++k)
    for (size_t i = 0; i < B; ++i)
      w2[k] += std::norm(ctx.path_losses[k] * blocks[i].symbol_amps[k]);
  const double norms = cn * MN * (w2[0] + w2[1]);

  double best = std::numeric_limits<double>::infinity();
  int b1c = 0, b1f = 0, b2c = 0, b2f = 0;
  for (int c1 = 0; c1 < nc; ++c1) {
    for (int c2 = 0; c2 < nc; ++c2) {
      const cxd a12 = cn * cells[c1].a.dot(cells[c2].a);  // <col1, col2>
      for (int f1 = 0; f1 < nf; ++f1) {
        const double part = -2.0 * corr[0][c1 * nf + f1] + norms;
        for (int f2 = 0; f2 < nf; ++f2) {
          const double obj = part - 2.0 * corr[1][c2 * nf + f2] +
                             2.0 * (a12 * cross[f1 * nf + f2]).real();
          if (obj < best) {
            best = obj;
            b1c = c1;
            b1f = f1;
            b2c = c2;
            b2f = f2;
          }
        }
      }
    }
  }
  beta.azimuths[0] = cells[b1c].az;
  beta.elevations[0] = cells[b1c].el;
  beta.dopplers[0] = fds[b1f];
  beta.azimuths[1] = cells[b2c].az;
  beta.elevations[1] = cells[b2c].el;
  beta.dopplers[1] = fds[b2f];
}

// Greedy seeding for K >= 3: fit drones one at a time against the current
// residual on a mildly decimated grid.
void greedy_seed(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                 ParamVector& beta, const GridSpec& grid) {
  const int K = ctx.emitters();
  const GridSpec dg = decimate(grid, 4.0);
  std::vector<ObsBlock> work = blocks;
  for (int k = 0; k < K; ++k) {
    EmitterContext sub = ctx;
    sub.path_losses = VectorXd::Constant(1, ctx.path_losses[k]);
    sub.amplitudes = VectorXd::Constant(1, ctx.amplitudes[k]);
    std::vector<ObsBlock> sub_blocks = work;
    for (size_t i = 0; i < work.size(); ++i)
      sub_blocks[i].symbol_amps = VectorXcd::Constant(1, blocks[i].symbol_amps[k]);
    ParamVector one = ParamVector::zeros(1);
    scan_drone_joint(sub_blocks, sub, one, 0, dg, false);
    beta.azimuths[k] = one.azimuths[0];
    beta.elevations[k] = one.elevations[0];
    beta.dopplers[k] = one.dopplers[0];
    // subtract the fitted template from the working residual
    const VectorXcd col = ctx.steering_scale() *
                          scene::steering_vector(ctx.array, one.azimuths[0], one.elevations[0]);
    for (size_t i = 0; i < work.size(); ++i)
      work[i].y -= col * (rotation(ctx, one.dopplers[0], k, work[i].subframe) *
                          blocks[i].symbol_amps[k]);
  }
}

double weighted_objective(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                          const ParamVector& beta) {
  // Gamma^{-1}-weighted form; pilot blocks only, small grids only
  const int MN = ctx.array.size();
  VectorXcd y(MN * blocks.size());
  for (size_t i = 0; i < blocks.size(); ++i) y.segment(i * MN, MN) = blocks[i].y;
  const MomentModel mm = build_moments(beta, ctx, static_cast<int>(blocks.size()));
  const VectorXcd d = y - mm.mean;
  const VectorXcd sol = mm.covariance.ldlt().solve(d);
  return d.dot(sol).real();
}

}  // namespace

EstimateResult mle_estimate(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                            const GridSpec& grid) {
  const int K = ctx.emitters();
  EstimateResult out;
  out.params = ParamVector::zeros(K);
  for (int k = 0; k < K; ++k) {
    out.params.azimuths[k] = 0.5 * (grid.azimuth.lo + grid.azimuth.hi);
    out.params.elevations[k] = 0.5 * (grid.elevation.lo + grid.elevation.hi);
    out.params.dopplers[k] = 0.5 * (grid.doppler.lo + grid.doppler.hi);
  }

  if (ctx.gamma_weighted) {
    // direct search with the weighted objective; exponential in K, intended
    // for small grids and K = 1 cross-checks
    if (K != 1) throw std::invalid_argument("gamma-weighted MLE implemented for K = 1 only");
    double best = std::numeric_limits<double>::infinity();
    for (double az : axis_values(grid.azimuth))
      for (double el : axis_values(grid.elevation))
        for (double f : axis_values(grid.doppler)) {
          ParamVector b = out.params;
          b.azimuths[0] = az;
          b.elevations[0] = el;
          b.dopplers[0] = f;
          const double obj = weighted_objective(blocks, ctx, b);
          if (obj < best) {
            best = obj;
            out.params = b;
          }
        }
    out.diag.objective_trace.push_back(best);
    out.diag.iterations = 1;
    return out;
  }

  if (K == 1) {
    const auto res = scan_drone_joint(blocks, ctx, out.params, 0, grid, false);
    out.diag.boundary = res.boundary;
    out.diag.objective_trace.push_back(res.objective);
    out.diag.iterations = 1;
    return out;
  }

  if (K == 2)
    joint_pass_two(blocks, ctx, out.params, grid);
  else
    greedy_seed(blocks, ctx, out.params, grid);

  // cyclic per-drone joint searches until the assignment stops moving
  for (int cycle = 0; cycle < 8; ++cycle) {
    bool boundary = false;
    double obj = 0.0;
    const ParamVector before = out.params;
    for (int k = 0; k < K; ++k) {
      const auto res = scan_drone_joint(blocks, ctx, out.params, k, grid, true);
      boundary = boundary || res.boundary;
      obj = res.objective;
    }
    out.diag.boundary = boundary;
    out.diag.objective_trace.push_back(obj);
    out.diag.iterations = cycle + 1;
    if (cycle > 0 && normalized_distance(before, out.params) == 0.0) break;
  }
  return out;
}

EstimateResult aoml_estimate(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                             const GridSpec& grid, const SolverConfig& solver,
                             const ParamVector& init) {
  const int K = ctx.emitters();
  EstimateResult out;
  out.params = init;
  out.diag.converged = false;
  for (int z = 1; z <= solver.max_iters; ++z) {
    const ParamVector prev = out.params;
    bool boundary = false;
    for (int k = 0; k < K; ++k)
      boundary = scan_angles(blocks, ctx, out.params, k, grid).boundary || boundary;
    for (int k = 0; k < K; ++k)
      boundary = scan_doppler(blocks, ctx, out.params, k, grid).boundary || boundary;
    out.diag.boundary = out.diag.boundary || boundary;
    out.diag.objective_trace.push_back(block_objective(blocks, ctx, out.params));
    out.diag.beta_trace.push_back(out.params);
    out.diag.iterations = z;
    if (normalized_distance(prev, out.params) < solver.epsilon) {
      out.diag.converged = true;
      break;
    }
  }
  return out;
}

EstimateResult aoml_estimate(const std::vector<ObsBlock>& blocks, const EmitterContext& ctx,
                             const GridSpec& grid, const SolverConfig& solver) {
  GridSpec coarse = decimate(grid, 4.0);
  coarse.refine_levels = 1;
  const EstimateResult seed = mle_estimate(blocks, ctx, coarse);
  return aoml_estimate(blocks, ctx, grid, solver, seed.params);
}

MusicResult music_estimate(const MatrixXcd& snapshots, int k_sources,
                           const scene::ArrayConfig& array, const GridSpec& grid,
                           double diagonal_loading) {
  const int MN = array.size();
  const int S = static_cast<int>(snapshots.cols());
  if (snapshots.rows() != MN) throw std::invalid_argument("music: snapshot rows != MN");
  if (k_sources < 1 || k_sources > MN - 1)
    throw std::invalid_argument("music: k_sources must lie in [1, MN-1]");
  if (S < 1) throw std::invalid_argument("music: need at least one snapshot");

  MatrixXcd R = snapshots * snapshots.adjoint() / static_cast<double>(S);
  if (diagonal_loading > 0.0) R.diagonal().array() += diagonal_loading;

  Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(R);
  const MatrixXcd us = eig.eigenvectors().rightCols(k_sources);

  // pseudo-spectrum 1 / ||U_n^H a||^2 = 1 / (MN - ||U_s^H a||^2)
  auto spectrum = [&](double az, double el) {
    const VectorXcd a = scene::steering_vector(array, az, el);
    const double den = MN - (us.adjoint() * a).squaredNorm();
    return 1.0 / std::max(den, 1e-300);
  };

  const auto azs = axis_values(grid.azimuth);
  const auto els = axis_values(grid.elevation);
  const int na = static_cast<int>(azs.size()), ne = static_cast<int>(els.size());
  MatrixXd spec(na, ne);
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < ne; ++j) spec(i, j) = spectrum(azs[i], els[j]);

  struct Peak {
    double value;
    int i, j;
  };
  std::vector<Peak> peaks;
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < ne; ++j) {
      const double v = spec(i, j);
      bool is_peak = true;
      if (i > 0 && spec(i - 1, j) > v) is_peak = false;
      if (i + 1 < na && spec(i + 1, j) > v) is_peak = false;
      if (j > 0 && spec(i, j - 1) > v) is_peak = false;
      if (j + 1 < ne && spec(i, j + 1) > v) is_peak = false;
      if (is_peak) peaks.push_back({v, i, j});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.value > b.value; });
  std::vector<Peak> kept;
  for (const auto& p : peaks) {
    bool dup = false;
    for (const auto& q : kept)
      if (std::abs(p.i - q.i) <= 1 && std::abs(p.j - q.j) <= 1) dup = true;
    if (!dup) kept.push_back(p);
  }

  MusicResult out;
  out.peaks_found = std::min<int>(k_sources, static_cast<int>(kept.size()));
  // fewer independent snapshots than sources, or fewer clean peaks
  const int snap_rank = static_cast<int>(snapshots.colPivHouseholderQr().rank());
  out.rank_deficient = out.peaks_found < k_sources || snap_rank < k_sources;
  out.azimuths.resize(k_sources);
  out.elevations.resize(k_sources);

  for (int k = 0; k < k_sources; ++k) {
    int i, j;
    if (k < static_cast<int>(kept.size())) {
      i = kept[k].i;
      j = kept[k].j;
    } else {
      // keep the result total even when the spectrum lacks K clean peaks
      Eigen::Index bi, bj;
      spec.maxCoeff(&bi, &bj);
      i = static_cast<int>(bi);
      j = static_cast<int>(bj);
    }
    double az = azs[i], el = els[j];
    double best = spec(i, j);
    double step_az = grid.azimuth.step, step_el = grid.elevation.step;
    for (int level = 0; level < grid.refine_levels; ++level) {
      for (double caz :
           refined_axis(az, step_az, grid.refine_shrink, grid.azimuth.lo, grid.azimuth.hi))
        for (double cel : refined_axis(el, step_el, grid.refine_shrink, grid.elevation.lo,
                                       grid.elevation.hi)) {
          const double v = spectrum(caz, cel);
          if (v > best) {
            best = v;
            az = caz;
            el = cel;
          }
        }
      step_az *= grid.refine_shrink;
      step_el *= grid.refine_shrink;
    }
    out.azimuths[k] = az;
    out.elevations[k] = el;
  }
  return out;
}

std::vector<int> match_to_truth(const ParamVector& estimates, const ParamVector& truth) {
  const int K = truth.size();
  if (estimates.size() != K) throw std::invalid_argument("match_to_truth: size mismatch");
  if (K > 8) throw std::invalid_argument("match_to_truth: exhaustive matching capped at K = 8");
  std::vector<int> perm(K), best_perm(K);
  std::iota(perm.begin(), perm.end(), 0);
  best_perm = perm;
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (int i = 0; i < K; ++i)
      cost += std::hypot(estimates.azimuths[perm[i]] - truth.azimuths[i],
                         estimates.elevations[perm[i]] - truth.elevations[i]);
    if (cost < best) {
      best = cost;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best_perm;
}

}  // namespace ilc::locate
