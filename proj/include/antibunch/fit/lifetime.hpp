#pragma once

// Multi-exponential decay fits on sync-referenced histograms.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "antibunch/core.hpp"
#include "antibunch/fit/g2.hpp"
#include "antibunch/fit/levenberg_marquardt.hpp"
#include "antibunch/fit/models.hpp"

namespace antibunch::fit {

struct MultiExpFit {
  FitResult<MultiExpParams> result;
  // Some component is indistinguishable from zero amplitude, or two lifetimes
  // coincide within their uncertainties.
  bool degenerate = false;
  std::string advice;
};

namespace detail {

struct DecaySamples {
  std::vector<double> x, y, w;
  double tau0 = 0.0;
};

// Bins from the histogram maximum onwards; tau0 is the center of that bin.
inline DecaySamples decay_samples(const DecayHistogram& d) {
  if (d.counts.empty() || d.total() == 0) throw FitError(FitErrc::empty_histogram, "decay histogram is empty");
  const auto peak = static_cast<std::size_t>(std::max_element(d.counts.begin(), d.counts.end()) - d.counts.begin());
  DecaySamples s;
  s.tau0 = d.bin_center_ns(peak);
  for (std::size_t j = peak; j < d.counts.size(); ++j) {
    const double y = static_cast<double>(d.counts[j]);
    s.x.push_back(d.bin_center_ns(j));
    s.y.push_back(y);
    s.w.push_back(1.0 / std::max(y, 1.0));
  }
  return s;
}

// Grid search over lifetimes with amplitudes solved linearly; the best
// combination with non-negative amplitudes seeds the nonlinear fit.
inline std::vector<double> multiexp_seed(const DecaySamples& s, int components, double bin_ns, double period_ns) {
  constexpr int kGrid = 24;
  const double lo = std::max(bin_ns, 0.02);
  const double hi = 2.0 * period_ns;
  std::vector<double> grid(kGrid);
  for (int g = 0; g < kGrid; ++g) grid[g] = lo * std::pow(hi / lo, static_cast<double>(g) / (kGrid - 1));

  // Column 0 is the constant floor, column g+1 the exponential for grid[g].
  const std::size_t n = s.x.size();
  const int cols = kGrid + 1;
  std::vector<std::vector<double>> basis(cols, std::vector<double>(n, 1.0));
  for (int g = 0; g < kGrid; ++g)
    for (std::size_t i = 0; i < n; ++i) basis[g + 1][i] = std::exp(-(s.x[i] - s.tau0) / grid[g]);
  Eigen::MatrixXd gram(cols, cols);
  Eigen::VectorXd rhs(cols);
  for (int a = 0; a < cols; ++a) {
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) r += s.w[i] * basis[a][i] * s.y[i];
    rhs[a] = r;
    for (int b = a; b < cols; ++b) {
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) v += s.w[i] * basis[a][i] * basis[b][i];
      gram(a, b) = gram(b, a) = v;
    }
  }
  double yy = 0.0;
  for (std::size_t i = 0; i < n; ++i) yy += s.w[i] * s.y[i] * s.y[i];

  std::vector<int> pick(static_cast<std::size_t>(components));
  std::vector<int> best;
  Eigen::VectorXd best_coef;
  double best_chi2 = std::numeric_limits<double>::infinity();
  const auto k = components + 1;
  auto evaluate = [&] {
    std::vector<int> idx{0};
    for (int g : pick) idx.push_back(g + 1);
    Eigen::MatrixXd m(k, k);
    Eigen::VectorXd r(k);
    for (int a = 0; a < k; ++a) {
      r[a] = rhs[idx[a]];
      for (int b = 0; b < k; ++b) m(a, b) = gram(idx[a], idx[b]);
    }
    const Eigen::VectorXd c = m.ldlt().solve(r);
    for (int a = 1; a < k; ++a)
      if (!(c[a] >= 0.0)) return;
    const double chi2 = yy - 2.0 * c.dot(r) + c.dot(m * c);
    if (chi2 < best_chi2) {
      best_chi2 = chi2;
      best = pick;
      best_coef = c;
    }
  };
  // Enumerate strictly increasing index tuples.
  std::function<void(int, int)> recurse = [&](int depth, int start) {
    if (depth == components) {
      evaluate();
      return;
    }
    for (int g = start; g < kGrid; ++g) {
      pick[static_cast<std::size_t>(depth)] = g;
      recurse(depth + 1, g + 1);
    }
  };
  recurse(0, 0);

  std::vector<double> p(static_cast<std::size_t>(1 + 2 * components));
  const double peak = *std::max_element(s.y.begin(), s.y.end());
  if (best.empty()) {
    p[0] = 0.0;
    for (int i = 0; i < components; ++i) {
      p[static_cast<std::size_t>(1 + 2 * i)] = peak / components;
      p[static_cast<std::size_t>(2 + 2 * i)] = lo * std::pow(hi / lo, (i + 1.0) / (components + 1.0));
    }
    return p;
  }
  p[0] = std::max(0.0, best_coef[0]);
  for (int i = 0; i < components; ++i) {
    // Keep amplitudes off the zero bound so every lifetime stays identifiable.
    p[static_cast<std::size_t>(1 + 2 * i)] = std::max(best_coef[i + 1], 1e-3 * peak);
    p[static_cast<std::size_t>(2 + 2 * i)] = grid[static_cast<std::size_t>(best[static_cast<std::size_t>(i)])];
  }
  return p;
}

}  // namespace detail

namespace detail {

// Least squares for the multi-exponential model. A component whose lifetime
// runs onto its lower bound, or whose amplitude reaches zero, fits a single
// sample instead of a decay; the fit is then restarted with that component
// placed in each gap of the surviving lifetimes and the best chi2 kept.
inline FitResult<std::vector<double>> multiexp_least_squares(const MultiExpModel& model, std::span<const double> x,
                                                             std::span<const double> y, std::span<const double> w,
                                                             const std::vector<double>& init,
                                                             const std::vector<Bound>& bounds,
                                                             const FitOptions& options = {}) {
  auto best = levenberg_marquardt(model, x, y, w, init, bounds, options);
  const int n = model.components;
  for (int round = 0; round < n; ++round) {
    int lost = -1;
    for (int i = 0; i < n && lost < 0; ++i) {
      const auto b = static_cast<std::size_t>(1 + 2 * i), t = b + 1;
      if (best.values[b] <= bounds[b].lo || best.values[t] <= bounds[t].lo * (1.0 + 1e-9)) lost = i;
    }
    if (lost < 0 || n == 1) break;

    std::vector<double> kept;
    double amplitude = 0.0;
    for (int i = 0; i < n; ++i) {
      if (i == lost) continue;
      kept.push_back(best.values[static_cast<std::size_t>(2 + 2 * i)]);
      amplitude += best.values[static_cast<std::size_t>(1 + 2 * i)];
    }
    std::sort(kept.begin(), kept.end());
    amplitude = std::max(amplitude / static_cast<double>(n - 1), 1.0);
    std::vector<double> candidates{kept.front() / 3.0, kept.back() * 3.0};
    for (std::size_t k = 1; k < kept.size(); ++k) candidates.push_back(std::sqrt(kept[k - 1] * kept[k]));

    bool improved = false;
    for (double tau : candidates) {
      std::vector<double> start = best.values;
      const auto b = static_cast<std::size_t>(1 + 2 * lost), t = b + 1;
      start[b] = std::clamp(amplitude, bounds[b].lo, bounds[b].hi);
      start[t] = std::clamp(tau, bounds[t].lo, bounds[t].hi);
      auto trial = levenberg_marquardt(model, x, y, w, start, bounds, options);
      if (trial.converged && trial.chi2 < best.chi2 * (1.0 - 1e-12)) {
        best = std::move(trial);
        improved = true;
      }
    }
    if (!improved) break;
  }
  return best;
}

}  // namespace detail

inline MultiExpFit fit_multiexp(const DecayHistogram& d, int components, const FitOptions& options = {}) {
  if (components < 1 || components > 3) throw FitError(FitErrc::invalid_input, "1 to 3 components supported");
  const auto s = detail::decay_samples(d);
  const double bin_ns = ps_to_ns(d.bin_width);
  const double period_ns = ps_to_ns(d.period);
  if (s.x.size() < static_cast<std::size_t>(1 + 2 * components))
    throw FitError(FitErrc::invalid_input, "too few bins after the decay maximum");

  MultiExpModel model{s.tau0, components};
  const auto p0 = detail::multiexp_seed(s, components, bin_ns, period_ns);
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<Bound> bounds{{0.0, inf}};
  for (int i = 0; i < components; ++i) {
    bounds.push_back({0.0, inf});
    bounds.push_back({bin_ns / 10.0, 10.0 * period_ns});
  }
  auto raw = detail::multiexp_least_squares(model, s.x, s.y, s.w, p0, bounds, options);

  // Report components in ascending lifetime; permute the covariance to match.
  std::vector<int> order(static_cast<std::size_t>(components));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return raw.values[static_cast<std::size_t>(2 + 2 * a)] < raw.values[static_cast<std::size_t>(2 + 2 * b)];
  });
  const auto np = static_cast<Eigen::Index>(raw.values.size());
  std::vector<Eigen::Index> perm{0};
  for (int i : order) {
    perm.push_back(1 + 2 * i);
    perm.push_back(2 + 2 * i);
  }

  MultiExpFit out;
  FitResult<MultiExpParams>& r = out.result;
  r.values.resize(raw.values.size());
  r.sigma.resize(raw.values.size());
  r.covariance.resize(np, np);
  for (Eigen::Index a = 0; a < np; ++a) {
    r.values[static_cast<std::size_t>(a)] = raw.values[static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])];
    r.sigma[static_cast<std::size_t>(a)] = raw.sigma[static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])];
    for (Eigen::Index b = 0; b < np; ++b)
      r.covariance(a, b) = raw.covariance(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]);
  }
  r.params.floor = r.values[0];
  r.params.tau0 = s.tau0;
  for (int i = 0; i < components; ++i)
    r.params.components.push_back({r.values[static_cast<std::size_t>(1 + 2 * i)], r.values[static_cast<std::size_t>(2 + 2 * i)]});
  r.chi2 = raw.chi2;
  r.chi2_reduced = raw.chi2_reduced;
  r.converged = raw.converged;
  r.singular = raw.singular;
  r.iterations = raw.iterations;

  for (int i = 0; i < components; ++i) {
    const double b = r.values[static_cast<std::size_t>(1 + 2 * i)];
    const double sb = r.sigma[static_cast<std::size_t>(1 + 2 * i)];
    if (b - sb <= 0.0) out.degenerate = true;
    if (i > 0) {
      const double t1 = r.values[static_cast<std::size_t>(2 * i)];
      const double t2 = r.values[static_cast<std::size_t>(2 + 2 * i)];
      const double s1 = r.sigma[static_cast<std::size_t>(2 * i)];
      const double s2 = r.sigma[static_cast<std::size_t>(2 + 2 * i)];
      if (t2 - t1 <= std::hypot(s1, s2)) out.degenerate = true;
    }
  }
  if (r.singular) out.degenerate = true;
  if (out.degenerate && components > 1)
    out.advice = "refit with " + std::to_string(components - 1) + " component" + (components == 2 ? "" : "s");
  return out;
}

// Amplitude-weighted mean lifetime sum(B_i tau_i) / sum(B_i).
inline double average_lifetime(const MultiExpParams& p) {
  double num = 0.0, den = 0.0;
  for (const auto& c : p.components) {
    num += c.amplitude * c.lifetime;
    den += c.amplitude;
  }
  if (!(den > 0.0)) throw FitError(FitErrc::invalid_input, "average lifetime needs a positive total amplitude");
  return num / den;
}

// Same, with sigma propagated from the fit covariance.
inline Estimate average_lifetime(const FitResult<MultiExpParams>& fit) {
  const MultiExpParams& p = fit.params;
  const double tau_avg = average_lifetime(p);
  double den = 0.0;
  for (const auto& c : p.components) den += c.amplitude;
  const auto np = static_cast<Eigen::Index>(1 + 2 * p.components.size());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(np);
  for (std::size_t i = 0; i < p.components.size(); ++i) {
    grad[static_cast<Eigen::Index>(1 + 2 * i)] = (p.components[i].lifetime - tau_avg) / den;
    grad[static_cast<Eigen::Index>(2 + 2 * i)] = p.components[i].amplitude / den;
  }
  Estimate e{tau_avg, 0.0};
  if (fit.covariance.rows() == np) e.sigma = propagate_sigma(fit.covariance, grad);
  return e;
}

}  // namespace antibunch::fit
