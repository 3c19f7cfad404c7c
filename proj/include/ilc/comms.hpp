// SPDX-License-Identifier: Apache-2.0
//
// ilcsim: integrated uplink localisation & communication simulator

#pragma once

#include "ilc/locate.hpp"
#include "ilc/scene.hpp"
#include "ilc/types.hpp"

namespace ilc::comms {

/// Estimated per-drone channel response for one subframe: the error-free
/// steering vector at the estimated angles times the estimated Doppler
/// rotation. Entries are unit modulus; no path-loss factor enters.
struct ChannelEstimate {
  std::vector<VectorXcd> h;  // per drone, MN

  static ChannelEstimate from_params(const locate::ParamVector& params,
                                     const scene::ArrayConfig& array, double sampling_hz,
                                     int subframe /* 1-based */);
};

struct LinkOptions {
  bool expectation_noise = false;  // replace |h^H n|^2 by its mean MN sigma^2
  double reference_phase = 0.0;    // coherent-gain phase removed before detection
};

struct LinkMetrics {
  VectorXd mean_sinr;        // per drone, averaged over data slots
  VectorXd ser;              // per drone
  VectorXd rate;             // per drone, mean log2(1 + gamma) over data slots
  VectorXd rate_first_slot;  // same from one representative slot per subframe
  double sum_rate = 0.0;
};

/// MRC combining of the data slots of subframe l (1-based): K x T outputs,
/// pilots excluded.
MatrixXcd mrc_combine(const scene::ReceivedFrame& frame, const ChannelEstimate& est,
                      int subframe);

/// Nearest-phase PSK decision after removing ref_phase; exact sector-boundary
/// ties go to the lower index.
int detect_psk(cxd combined, int order, double ref_phase = 0.0);

/// Instantaneous SINR of drone k given the realized channels and one noise
/// draw (or its expectation when noise_power >= 0 is passed instead).
double sinr_instant(const std::vector<VectorXcd>& h_hat, const std::vector<VectorXcd>& h_true,
                    const VectorXd& powers, int k, const VectorXcd& noise_draw,
                    double expected_noise_power = -1.0);

/// Decodes every data slot of every subframe with the supplied parameter
/// estimate and accumulates SER, instantaneous SINR and empirical rate.
LinkMetrics measure_link(const scene::ReceivedFrame& frame, const locate::ParamVector& params,
                         const locate::EmitterContext& ctx, const LinkOptions& opts = {});

}  // namespace ilc::comms
