// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "ilc/scene.hpp"
#include "ilc/specfun.hpp"
#include "oracles.hpp"

using namespace ilc;
using namespace ilc::scene;

namespace {
const specfun::SeriesPolicy kWide{1e-13, 2'000'000};

ArrayConfig ura(int m, int n) { return {m, n, 0.5, 1.6e-3}; }

DroneTruth drone(double az_deg, double el_deg, double fd, double p = 1.0, double d = 100.0) {
  return {deg2rad(az_deg), deg2rad(el_deg), fd, p, d, std::nullopt};
}
}  // namespace

TEST_SUITE("scene") {

TEST_CASE("steering vector zero elevation gives all ones") {
  const auto a = steering_vector(ura(2, 2), 1.234, 0.0);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(a[i] - cxd(1.0, 0.0)) < 1e-15);
}

TEST_CASE("steering vector half-wavelength endfire") {
  const auto a = steering_vector(ura(2, 1), 0.0, pi / 2);
  CHECK(std::abs(a[0] - cxd(1.0, 0.0)) < 1e-15);
  CHECK(std::abs(a[1] - cxd(-1.0, 0.0)) < 1e-12);
}

TEST_CASE("steering vector matches per-entry scalar formula") {
  const auto arr = ura(6, 6);
  const double az = deg2rad(20.0), el = deg2rad(20.0);
  const auto a = steering_vector(arr, az, el);
  for (int m = 1; m <= 6; ++m) {
    for (int n = 1; n <= 6; ++n) {
      const double phase = -2.0 * pi *
                           ((m - 1) * 0.5 * std::cos(az) * std::sin(el) +
                            (n - 1) * 0.5 * std::sin(az) * std::sin(el));
      const cxd ref{std::cos(phase), std::sin(phase)};
      CHECK(std::abs(a[(m - 1) * 6 + (n - 1)] - ref) < 1e-13);
      CHECK(std::abs(std::abs(a[(m - 1) * 6 + (n - 1)]) - 1.0) < 1e-15);
    }
  }
}

TEST_CASE("sample_defects ideal model") {
  const auto [g, p] = sample_defects(GainPhaseModel::ideal(), ura(3, 4), 42);
  CHECK(g.minCoeff() == 1.0);
  CHECK(g.maxCoeff() == 1.0);
  CHECK(p.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sample_defects rejects invalid parameters") {
  CHECK_THROWS_AS(sample_defects(GainPhaseModel::stochastic(0.5, -1.0, 10.0), ura(2, 2), 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(sample_defects(GainPhaseModel::stochastic(0.5, 1.0, -5.0), ura(2, 2), 1),
                  std::invalid_argument);
}

TEST_CASE("sample_defects gain mean matches the moment series") {
  const int draws = 100000;
  std::mt19937_64 rng(17);
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double a = sample_rician(rng, 0.5, 1.0);
    acc += a;
    acc2 += a * a;
  }
  const double mean = acc / draws;
  const double sd = std::sqrt(acc2 / draws - mean * mean);
  const double expected = specfun::rician_moment(1, 0.5, 1.0, kWide);
  CHECK(std::abs(mean - expected) < 3.0 * sd / std::sqrt(double(draws)));
}

TEST_CASE("sample_defects circular phase mean concentrates at zero") {
  const int draws = 100000;
  std::mt19937_64 rng(23);
  double s = 0.0, c = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double d = sample_vonmises(rng, 0.0, 1000.0);
    s += std::sin(d);
    c += std::cos(d);
  }
  const double circ_mean = std::atan2(s / draws, c / draws);
  const double se = (1.0 / std::sqrt(1000.0)) / std::sqrt(double(draws));
  CHECK(std::abs(circ_mean) < 3.0 * se);
}

TEST_CASE("noiseless ideal synthesis reconstructs the pilot response exactly") {
  SceneConfig sc{ura(3, 3), {drone(20, 20, 2000)}};
  FrameConfig fc{4, 2, 1e5, 16};
  const auto frame = synthesize_frame(sc, fc, GainPhaseModel::ideal(),
                                      NoiseModel::from_variance(0.0), 5);
  const double eta = sc.drones[0].path_loss(sc.array.wavelength_m);
  const auto a = steering_vector(sc.array, sc.drones[0].azimuth_rad, sc.drones[0].elevation_rad);
  for (int l = 0; l < 4; ++l) {
    const cxd rot = eta * std::exp(jimag * (2.0 * pi * 2000.0 * (l + 1) / 1e5));
    for (int i = 0; i < 9; ++i)
      CHECK(std::abs(frame.samples[l](i, 0) - rot * a[i]) < 1e-18);
  }
}

TEST_CASE("synthesis is deterministic in the seed") {
  SceneConfig sc{ura(4, 4), {drone(40, 40, 4000), drone(60, 60, 6000)}};
  FrameConfig fc{3, 5, 1e5, 16};
  const auto err = GainPhaseModel::stochastic(0.5, 1.0, 1000.0);
  const auto f1 = synthesize_frame(sc, fc, err, NoiseModel::from_snr_db(8.0), 99);
  const auto f2 = synthesize_frame(sc, fc, err, NoiseModel::from_snr_db(8.0), 99);
  for (int l = 0; l < 3; ++l) {
    CHECK(f1.samples[l] == f2.samples[l]);
    CHECK(f1.sent_symbols[l] == f2.sent_symbols[l]);
  }
}

TEST_CASE("table-of-parameters scenario synthesizes with the stated shapes") {
  SceneConfig sc{ura(6, 6), {drone(40, 40, 4000), drone(60, 60, 6000)}};
  FrameConfig fc{10, 100, 1e5, 16};
  const auto frame = synthesize_frame(sc, fc, GainPhaseModel::stochastic(0.5, 1.0, 1000.0),
                                      NoiseModel::from_snr_db(8.0), 3);
  REQUIRE(frame.samples.size() == 10);
  CHECK(frame.samples[0].rows() == 36);
  CHECK(frame.samples[0].cols() == 101);
  CHECK(frame.pilot_stack().size() == 360);
  CHECK(frame.pilot_stack(3).size() == 108);
}

TEST_CASE("noiseless error-free synthesis is invertible to the symbols") {
  SceneConfig sc{ura(4, 4), {drone(30, 25, 2000), drone(55, 65, 5000)}};
  FrameConfig fc{2, 6, 1e5, 16};
  const auto frame = synthesize_frame(sc, fc, GainPhaseModel::ideal(),
                                      NoiseModel::from_variance(0.0), 7);
  const MatrixXcd A = frame.realization.steering;
  for (int l = 0; l < 2; ++l) {
    for (int t = 1; t <= 6; ++t) {
      const VectorXcd x = A.colPivHouseholderQr().solve(frame.samples[l].col(t));
      for (int k = 0; k < 2; ++k) {
        const cxd recovered = x[k] / (frame.amplitudes[k] * frame.realization.omega(l, k));
        const cxd sent = psk_symbol(frame.sent_symbols[l](k, t - 1), 16);
        CHECK(std::abs(recovered - sent) < 1e-10);
      }
    }
  }
}

TEST_CASE("synthesized noise second moment matches sigma^2") {
  SceneConfig sc{ura(4, 4), {drone(30, 25, 2000)}};
  FrameConfig fc{8, 50, 1e5, 16};
  const double sigma2 = 0.37;
  const auto frame = synthesize_frame(sc, fc, GainPhaseModel::ideal(),
                                      NoiseModel::from_variance(sigma2), 21);
  double acc = 0.0;
  int n = 0;
  for (const auto& blk : frame.noise_draws) {
    acc += blk.cwiseAbs2().sum();
    n += blk.size();
  }
  const double mean = acc / n;
  // |n|^2 is exponential with sd = sigma2
  CHECK(std::abs(mean - sigma2) < 3.0 * sigma2 / std::sqrt(double(n)));
}

TEST_CASE("steering vectors at distinct angles are linearly independent") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.05, pi / 2 - 0.05);
  const auto arr = ura(4, 4);
  for (int trial = 0; trial < 20; ++trial) {
    const int K = 1 + (trial % 8);
    MatrixXcd A(16, K);
    for (int k = 0; k < K; ++k) A.col(k) = steering_vector(arr, u(rng), u(rng));
    CHECK(A.colPivHouseholderQr().rank() == K);
  }
}

TEST_CASE("energy accounting matches Theorem-1 second moment") {
  const double e_a2 = specfun::rician_moment(2, 0.5, 1.0, kWide);
  const auto err = GainPhaseModel::stochastic(0.5, 1.0, 1000.0);
  const int trials = 20000;

  // single emitter: E||y||^2 = P eta^2 E[alpha^2] MN + MN sigma^2 exactly
  {
    SceneConfig sc{ura(3, 3), {drone(40, 40, 4000)}};
    FrameConfig fc{1, 0, 1e5, 16};
    const double sigma2 = sc.signal_power_per_antenna();
    double acc = 0.0, acc2 = 0.0;
    for (int i = 0; i < trials; ++i) {
      const auto frame =
          synthesize_frame(sc, fc, err, NoiseModel::from_variance(sigma2), 1000 + i);
      const double e = frame.samples[0].col(0).squaredNorm();
      acc += e;
      acc2 += e * e;
    }
    const double mean = acc / trials;
    const double sd = std::sqrt(std::max(0.0, acc2 / trials - mean * mean));
    const double expected = sc.signal_power_per_antenna() * e_a2 * 9 + 9 * sigma2;
    CHECK(std::abs(mean - expected) < 3.0 * sd / std::sqrt(double(trials)));
  }

  // two emitters: steering cross-terms enter through ||A c||^2
  {
    SceneConfig sc{ura(3, 3), {drone(40, 40, 4000), drone(60, 60, 6000)}};
    FrameConfig fc{1, 0, 1e5, 16};
    const double sigma2 = sc.signal_power_per_antenna();
    double acc = 0.0, acc2 = 0.0;
    VectorXcd combined;
    for (int i = 0; i < trials; ++i) {
      const auto frame =
          synthesize_frame(sc, fc, err, NoiseModel::from_variance(sigma2), 5000 + i);
      if (i == 0) {
        VectorXcd c(2);
        for (int k = 0; k < 2; ++k) c[k] = frame.amplitudes[k] * frame.realization.omega(0, k);
        combined = frame.realization.steering * c;
      }
      const double e = frame.samples[0].col(0).squaredNorm();
      acc += e;
      acc2 += e * e;
    }
    const double mean = acc / trials;
    const double sd = std::sqrt(std::max(0.0, acc2 / trials - mean * mean));
    const double expected = e_a2 * combined.squaredNorm() + 9 * sigma2;
    CHECK(std::abs(mean - expected) < 3.0 * sd / std::sqrt(double(trials)));
  }
}

TEST_CASE("scene validation rejects K > MN and bad angles") {
  SceneConfig sc{ura(1, 2), {drone(20, 20, 0), drone(30, 30, 0), drone(40, 40, 0)}};
  CHECK_THROWS_AS(sc.validate(), std::invalid_argument);
  SceneConfig sc2{ura(2, 2), {drone(0.0, 20, 0)}};
  CHECK_THROWS_AS(sc2.validate(), std::invalid_argument);
  SceneConfig sc3{ura(2, 2), {drone(20, 20, 2000)}};
  sc3.drones[0].velocity_mps = 3.4;  // implies f_D = 3.4 cos(20 deg)/lambda
  CHECK_THROWS_AS(sc3.validate(), std::invalid_argument);
  sc3.drones[0].doppler_hz = 3.4 * std::cos(deg2rad(20.0)) / sc3.array.wavelength_m;
  CHECK_NOTHROW(sc3.validate());
}

}  // TEST_SUITE
