#pragma once

// Model functions for coincidence and decay histograms, with analytic
// gradients. Times in ns.

#include <cmath>
#include <cstddef>
#include <span>

namespace antibunch::fit {

namespace detail {
inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}  // namespace detail

// a * (1 - b * exp(-|tau - tau0| / tau_x)); parameters [a, b, tau0, tau_x].
struct G2CwModel {
  static constexpr std::size_t kA = 0, kB = 1, kTau0 = 2, kTauX = 3;

  std::size_t parameter_count() const { return 4; }

  double operator()(double tau, std::span<const double> p) const {
    const double e = std::exp(-std::abs(tau - p[kTau0]) / p[kTauX]);
    return p[kA] * (1.0 - p[kB] * e);
  }

  void gradient(double tau, std::span<const double> p, std::span<double> g) const {
    const double u = tau - p[kTau0];
    const double t = p[kTauX];
    const double e = std::exp(-std::abs(u) / t);
    g[kA] = 1.0 - p[kB] * e;
    g[kB] = -p[kA] * e;
    g[kTau0] = -p[kA] * p[kB] * e * detail::sign(u) / t;
    g[kTauX] = -p[kA] * p[kB] * e * std::abs(u) / (t * t);
  }
};

// a + b0 E0 + sum_{n != 0} b_n E_n (1 - E0), with
// E_n = exp(-|tau - tau0 - n T| / tau_x). Parameters
// [a, b_{-N} .. b_{N}, tau0, tau_x]; the period T is fixed.
struct G2PwModel {
  double period = 100.0;
  int side_peaks = 5;

  std::size_t parameter_count() const { return static_cast<std::size_t>(2 * side_peaks + 4); }
  std::size_t height_index(int n) const { return static_cast<std::size_t>(1 + n + side_peaks); }
  std::size_t tau0_index() const { return static_cast<std::size_t>(2 * side_peaks + 2); }
  std::size_t tau_x_index() const { return static_cast<std::size_t>(2 * side_peaks + 3); }

  double operator()(double tau, std::span<const double> p) const {
    const double u = tau - p[tau0_index()];
    const double t = p[tau_x_index()];
    const double e0 = std::exp(-std::abs(u) / t);
    double side = 0.0;
    for (int n = -side_peaks; n <= side_peaks; ++n) {
      if (n == 0) continue;
      side += p[height_index(n)] * std::exp(-std::abs(u - n * period) / t);
    }
    return p[0] + p[height_index(0)] * e0 + side * (1.0 - e0);
  }

  void gradient(double tau, std::span<const double> p, std::span<double> g) const {
    const double u = tau - p[tau0_index()];
    const double t = p[tau_x_index()];
    const double e0 = std::exp(-std::abs(u) / t);
    const double de0_dtau0 = e0 * detail::sign(u) / t;
    const double de0_dt = e0 * std::abs(u) / (t * t);
    const double b0 = p[height_index(0)];
    double side = 0.0, dside_dtau0 = 0.0, dside_dt = 0.0;
    for (int n = -side_peaks; n <= side_peaks; ++n) {
      if (n == 0) continue;
      const double v = u - n * period;
      const double en = std::exp(-std::abs(v) / t);
      const double bn = p[height_index(n)];
      g[height_index(n)] = en * (1.0 - e0);
      side += bn * en;
      dside_dtau0 += bn * en * detail::sign(v) / t;
      dside_dt += bn * en * std::abs(v) / (t * t);
    }
    g[0] = 1.0;
    g[height_index(0)] = e0;
    g[tau0_index()] = b0 * de0_dtau0 + dside_dtau0 * (1.0 - e0) - side * de0_dtau0;
    g[tau_x_index()] = b0 * de0_dt + dside_dt * (1.0 - e0) - side * de0_dt;
  }
};

// A + sum_i B_i exp(-(tau - tau0) / tau_i) with tau0 fixed.
// Parameters [A, B_1, tau_1, ..., B_n, tau_n].
struct MultiExpModel {
  double tau0 = 0.0;
  int components = 1;

  std::size_t parameter_count() const { return static_cast<std::size_t>(1 + 2 * components); }

  double operator()(double tau, std::span<const double> p) const {
    const double u = tau - tau0;
    double f = p[0];
    for (int i = 0; i < components; ++i) f += p[1 + 2 * i] * std::exp(-u / p[2 + 2 * i]);
    return f;
  }

  void gradient(double tau, std::span<const double> p, std::span<double> g) const {
    const double u = tau - tau0;
    g[0] = 1.0;
    for (int i = 0; i < components; ++i) {
      const double b = p[1 + 2 * i];
      const double t = p[2 + 2 * i];
      const double e = std::exp(-u / t);
      g[1 + 2 * i] = e;
      g[2 + 2 * i] = b * e * u / (t * t);
    }
  }
};

}  // namespace antibunch::fit
