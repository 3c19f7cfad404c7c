// SPDX-License-Identifier: Apache-2.0
//
// ilcsim: integrated uplink localisation & communication simulator

#include "ilc/comms.hpp"

#include <cmath>

namespace ilc::comms {

ChannelEstimate ChannelEstimate::from_params(const locate::ParamVector& params,
                                             const scene::ArrayConfig& array, double sampling_hz,
                                             int subframe) {
  ChannelEstimate est;
  est.h.resize(params.size());
  for (int k = 0; k < params.size(); ++k) {
    const double psi = 2.0 * pi * params.dopplers[k] * subframe / sampling_hz;
    est.h[k] = scene::steering_vector(array, params.azimuths[k], params.elevations[k]) *
               std::exp(jimag * psi);
  }
  return est;
}

MatrixXcd mrc_combine(const scene::ReceivedFrame& frame, const ChannelEstimate& est,
                      int subframe) {
  const int K = static_cast<int>(est.h.size());
  const int T = frame.frame.symbols_per_subframe;
  const auto& block = frame.samples.at(subframe - 1);
  MatrixXcd out(K, T);
  for (int k = 0; k < K; ++k)
    for (int t = 1; t <= T; ++t) out(k, t - 1) = est.h[k].dot(block.col(t));  // h^H y
  return out;
}

int detect_psk(cxd combined, int order, double ref_phase) {
  const double sector = 2.0 * pi / order;
  double a = (std::arg(combined) - ref_phase) / sector;
  a -= std::floor(a / order) * order;  // into [0, order)
  // round half down: exact boundary ties resolve to the lower sector
  int idx = static_cast<int>(std::ceil(a - 0.5));
  if (idx >= order) idx -= order;
  if (idx < 0) idx += order;
  return idx;
}

double sinr_instant(const std::vector<VectorXcd>& h_hat, const std::vector<VectorXcd>& h_true,
                    const VectorXd& powers, int k, const VectorXcd& noise_draw,
                    double expected_noise_power) {
  const double num = powers[k] * std::norm(h_hat[k].dot(h_true[k]));
  double den = 0.0;
  for (int p = 0; p < static_cast<int>(h_true.size()); ++p) {
    if (p == k) continue;
    den += powers[p] * std::norm(h_hat[k].dot(h_true[p]));
  }
  if (expected_noise_power >= 0.0)
    den += expected_noise_power;
  else
    den += std::norm(h_hat[k].dot(noise_draw));
  return num / den;
}

LinkMetrics measure_link(const scene::ReceivedFrame& frame, const locate::ParamVector& params,
                         const locate::EmitterContext& ctx, const LinkOptions& opts) {
  const int K = params.size();
  const int T = frame.frame.symbols_per_subframe;
  const int L = frame.frame.subframes;
  const int MN = frame.array.size();
  const int order = frame.frame.psk_order;

  VectorXd powers(K);
  for (int k = 0; k < K; ++k) powers[k] = frame.amplitudes[k] * frame.amplitudes[k];

  LinkMetrics out;
  out.mean_sinr = VectorXd::Zero(K);
  out.ser = VectorXd::Zero(K);
  out.rate = VectorXd::Zero(K);
  out.rate_first_slot = VectorXd::Zero(K);

  // realized channels h_k = eta_k (alpha e^{j dd} o a_k) e^{j psi_k l}
  const MatrixXcd a_err = frame.realization.erroneous_steering();

  long slots = 0, errors_possible = 0;
  std::vector<long> symbol_errors(K, 0);
  for (int l = 1; l <= L; ++l) {
    const auto est = ChannelEstimate::from_params(params, frame.array, frame.frame.sampling_hz, l);
    std::vector<VectorXcd> h_true(K);
    for (int k = 0; k < K; ++k) h_true[k] = a_err.col(k) * frame.realization.omega(l - 1, k);

    const MatrixXcd combined = T > 0 ? mrc_combine(frame, est, l) : MatrixXcd(K, 0);
    for (int t = 1; t <= T; ++t) {
      for (int k = 0; k < K; ++k) {
        const double g = sinr_instant(est.h, h_true, powers, k, frame.noise_draws[l - 1].col(t),
                                      opts.expectation_noise ? MN * frame.noise_variance : -1.0);
        out.mean_sinr[k] += g;
        out.rate[k] += std::log2(1.0 + g);
        if (t == 1) out.rate_first_slot[k] += std::log2(1.0 + g);
        const int detected = detect_psk(combined(k, t - 1), order, opts.reference_phase);
        if (detected != frame.sent_symbols[l - 1](k, t - 1)) ++symbol_errors[k];
      }
      ++slots;
    }
  }
  if (slots > 0) {
    for (int k = 0; k < K; ++k) {
      out.mean_sinr[k] /= slots;
      out.rate[k] /= slots;
      out.rate_first_slot[k] /= L;
      out.ser[k] = static_cast<double>(symbol_errors[k]) / slots;
    }
  }
  out.sum_rate = out.rate.sum();
  return out;
}

}  // namespace ilc::comms
