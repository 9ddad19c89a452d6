#pragma once

// Second-order correlation fits (CW and pulsed), normalization and the
// single-photon verdict.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "antibunch/core.hpp"
#include "antibunch/fit/levenberg_marquardt.hpp"
#include "antibunch/fit/models.hpp"

namespace antibunch::fit {

enum class FitErrc {
  empty_histogram,
  no_dip,
  unresolved_side_peaks,
  nonpositive_normalizer,
  not_converged,
  invalid_input,
};

inline const char* to_string(FitErrc c) {
  switch (c) {
    case FitErrc::empty_histogram: return "empty_histogram";
    case FitErrc::no_dip: return "no_dip";
    case FitErrc::unresolved_side_peaks: return "unresolved_side_peaks";
    case FitErrc::nonpositive_normalizer: return "nonpositive_normalizer";
    case FitErrc::not_converged: return "not_converged";
    case FitErrc::invalid_input: return "invalid_input";
  }
  return "unknown";
}

class FitError : public std::runtime_error {
 public:
  FitError(FitErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  FitErrc code() const { return code_; }

 private:
  FitErrc code_;
};

namespace detail {

struct Samples {
  std::vector<double> x, y, w;
};

// Bin centers in ns, counts, and Poisson weights 1 / max(y, 1).
inline Samples samples(const CoincidenceHistogram& h) {
  Samples s;
  const std::size_t n = h.counts.size();
  s.x.resize(n);
  s.y.resize(n);
  s.w.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    s.x[j] = h.bin_center_ns(j);
    s.y[j] = static_cast<double>(h.counts[j]);
    s.w[j] = 1.0 / std::max(s.y[j], 1.0);
  }
  return s;
}

inline std::vector<double> smooth3(const std::vector<double>& y) {
  std::vector<double> out(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) {
    const std::size_t lo = j > 0 ? j - 1 : 0;
    const std::size_t hi = std::min(j + 1, y.size() - 1);
    double s = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) s += y[k];
    out[j] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

// Least squares reweighted with 1 / max(model, 1) until the parameters settle.
// The fixed point solves the Poisson likelihood equations, which avoids the
// low bias that data weights give at a few counts per bin.
template <ParametricModel M>
FitResult<std::vector<double>> reweight(const M& model, const Samples& s, FitResult<std::vector<double>> raw,
                                        const std::vector<Bound>& bounds, const FitOptions& options) {
  std::vector<double> w(s.x.size());
  for (int r = 0; r < 30; ++r) {
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = 1.0 / std::max(model(s.x[j], raw.values), 1.0);
    auto next = levenberg_marquardt(model, s.x, s.y, w, raw.values, bounds, options);
    bool settled = true;
    for (std::size_t k = 0; k < next.values.size(); ++k)
      if (std::abs(next.values[k] - raw.values[k]) > 1e-12 * std::max(std::abs(raw.values[k]), 1e-3)) settled = false;
    raw = std::move(next);
    if (settled) break;
  }
  return raw;
}

// The model has a kink wherever |tau - tau0| vanishes at a bin center, and
// the optimum often sits on one. LM stalls there before the other parameters
// converge, so tau0 is pinned to that center and the rest refitted.
template <ParametricModel M>
FitResult<std::vector<double>> poisson_least_squares(const M& model, const Samples& s, std::vector<double> init,
                                                     std::vector<Bound> bounds, const FitOptions& options,
                                                     std::size_t tau0) {
  auto raw = reweight(model, s, levenberg_marquardt(model, s.x, s.y, s.w, std::move(init), bounds, options), bounds,
                      options);
  const double t = raw.values[tau0];
  const auto nearest = std::min_element(s.x.begin(), s.x.end(),
                                        [t](double a, double b) { return std::abs(a - t) < std::abs(b - t); });
  if (nearest == s.x.end() || std::abs(*nearest - t) > 1e-6) return raw;
  if (!(*nearest >= bounds[tau0].lo && *nearest <= bounds[tau0].hi)) return raw;
  bounds[tau0] = {*nearest, *nearest};
  raw.values[tau0] = *nearest;
  return reweight(model, s, std::move(raw), bounds, options);
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace detail

// Starting point for the CW fit, derived from the histogram shape.
inline G2CwParams initial_g2_cw(const CoincidenceHistogram& h) {
  const std::size_t n = h.counts.size();
  if (n == 0 || h.total() == 0) throw FitError(FitErrc::empty_histogram, "coincidence histogram is empty");
  const auto s = detail::samples(h);
  const std::size_t outer = std::max<std::size_t>(1, n / 10);
  double plateau = 0.0;
  for (std::size_t j = 0; j < outer; ++j) plateau += s.y[j] + s.y[n - 1 - j];
  plateau /= static_cast<double>(2 * outer);

  const auto smooth = detail::smooth3(s.y);
  const auto jmin = static_cast<std::size_t>(std::min_element(smooth.begin(), smooth.end()) - smooth.begin());
  G2CwParams p;
  p.a = plateau;
  p.b = plateau > 0.0 ? 1.0 - smooth[jmin] / plateau : 0.0;
  p.tau0 = s.x[jmin];
  if (!(p.b > 0.0)) throw FitError(FitErrc::no_dip, "no antibunching dip below the plateau");
  p.b = std::min(p.b, 1.0);

  // Half width at depth b/2; for the model this is tau_x * ln 2.
  const double level = plateau * (1.0 - p.b / 2.0);
  std::size_t left = jmin, right = jmin;
  while (left > 0 && smooth[left] < level) --left;
  while (right + 1 < n && smooth[right] < level) ++right;
  const double half_width = 0.5 * (s.x[right] - s.x[left]);
  const double bin_ns = ps_to_ns(h.bin_width);
  p.tau_x = std::max(half_width / std::log(2.0), bin_ns / 2.0);
  return p;
}

inline std::vector<Bound> g2_cw_bounds(const CoincidenceHistogram& h) {
  const double w_ns = ps_to_ns(h.window);
  const double bin_ns = ps_to_ns(h.bin_width);
  return {{0.0, std::numeric_limits<double>::infinity()},
          {0.0, 1.0},
          {-w_ns, w_ns},
          {bin_ns / 20.0, 2.0 * w_ns}};
}

inline FitResult<G2CwParams> fit_g2_cw(const CoincidenceHistogram& h, const G2CwParams& init,
                                       const FitOptions& options = {}) {
  const auto s = detail::samples(h);
  auto bounds = g2_cw_bounds(h);
  std::vector<double> p0{init.a, init.b, init.tau0, init.tau_x};
  for (std::size_t k = 0; k < p0.size(); ++k) p0[k] = std::clamp(p0[k], bounds[k].lo, bounds[k].hi);
  auto raw = detail::poisson_least_squares(G2CwModel{}, s, p0, bounds, options, G2CwModel::kTau0);
  FitResult<G2CwParams> out;
  out.params = {raw.values[0], raw.values[1], raw.values[2], raw.values[3]};
  out.values = std::move(raw.values);
  out.sigma = std::move(raw.sigma);
  out.covariance = std::move(raw.covariance);
  out.chi2 = raw.chi2;
  out.chi2_reduced = raw.chi2_reduced;
  out.converged = raw.converged;
  out.singular = raw.singular;
  out.iterations = raw.iterations;
  return out;
}

inline FitResult<G2CwParams> fit_g2_cw(const CoincidenceHistogram& h, const FitOptions& options = {}) {
  return fit_g2_cw(h, initial_g2_cw(h), options);
}

// Starting point for the pulsed fit: comb search for the peak train, peak
// heights above the inter-peak floor, tau_x from side-peak area / height.
inline G2PwParams initial_g2_pw(const CoincidenceHistogram& h, double period_ns, int side_peaks = 5) {
  if (!(period_ns > 0.0)) throw FitError(FitErrc::invalid_input, "pulse period must be positive");
  if (side_peaks < 1) throw FitError(FitErrc::invalid_input, "need at least one side peak per side");
  const double w_ns = ps_to_ns(h.window);
  if (w_ns < (side_peaks + 0.5) * period_ns)
    throw FitError(FitErrc::invalid_input, "window too narrow for the requested side peaks");
  if (h.counts.empty() || h.total() == 0) throw FitError(FitErrc::empty_histogram, "coincidence histogram is empty");

  const auto s = detail::samples(h);
  const double bin_ns = ps_to_ns(h.bin_width);
  const auto n_bins = static_cast<std::ptrdiff_t>(h.counts.size());
  auto index_of = [&](double tau) {
    return static_cast<std::ptrdiff_t>(std::floor((tau + w_ns) / bin_ns));
  };
  auto window_sum = [&](double tau, int half) {
    double sum = 0.0;
    const auto j = index_of(tau);
    for (std::ptrdiff_t k = j - half; k <= j + half; ++k)
      if (k >= 0 && k < n_bins) sum += s.y[static_cast<std::size_t>(k)];
    return sum;
  };
  auto window_max = [&](double tau, int half) {
    double best = 0.0;
    const auto j = index_of(tau);
    for (std::ptrdiff_t k = j - half; k <= j + half; ++k)
      if (k >= 0 && k < n_bins) best = std::max(best, s.y[static_cast<std::size_t>(k)]);
    return best;
  };

  // Comb alignment over one period, side peaks only (the center may be empty).
  double best_offset = 0.0, best_score = -1.0;
  for (double offset = -period_ns / 2.0; offset < period_ns / 2.0; offset += bin_ns) {
    double score = 0.0;
    for (int n = -side_peaks; n <= side_peaks; ++n)
      if (n != 0) score += window_sum(offset + n * period_ns, 1);
    if (score > best_score) {
      best_score = score;
      best_offset = offset;
    }
  }

  std::vector<double> floors;
  for (int n = -side_peaks; n < side_peaks; ++n) floors.push_back(window_sum(best_offset + (n + 0.5) * period_ns, 1) / 3.0);
  G2PwParams p;
  p.period = period_ns;
  p.tau0 = best_offset;
  p.a = detail::median(floors);
  p.heights.resize(static_cast<std::size_t>(2 * side_peaks + 1));
  for (int n = -side_peaks; n <= side_peaks; ++n)
    p.heights[static_cast<std::size_t>(n + side_peaks)] =
        std::max(0.0, window_max(best_offset + n * period_ns, 2) - p.a);

  const double noise = 3.0 * std::sqrt(std::max(p.a, 1.0));
  std::vector<double> widths;
  int resolvable = 0;
  for (int n = -side_peaks; n <= side_peaks; ++n) {
    if (n == 0) continue;
    const double b = p.height(n);
    if (b <= noise) continue;
    ++resolvable;
    const auto half = static_cast<int>(0.5 * period_ns / bin_ns) - 1;
    const double area = (window_sum(best_offset + n * period_ns, half) - p.a * (2 * half + 1)) * bin_ns;
    widths.push_back(area / (2.0 * b));
  }
  if (resolvable < 3)
    throw FitError(FitErrc::unresolved_side_peaks, "fewer than 3 side peaks rise above the floor");
  p.tau_x = std::clamp(detail::median(widths), bin_ns / 2.0, period_ns / 2.0);
  return p;
}

inline std::vector<Bound> g2_pw_bounds(const CoincidenceHistogram& h, const G2PwParams& init) {
  const double inf = std::numeric_limits<double>::infinity();
  const double bin_ns = ps_to_ns(h.bin_width);
  std::vector<Bound> b;
  b.push_back({0.0, inf});
  for (std::size_t k = 0; k < init.heights.size(); ++k) b.push_back({0.0, inf});
  b.push_back({init.tau0 - init.period / 4.0, init.tau0 + init.period / 4.0});
  b.push_back({bin_ns / 20.0, init.period});
  return b;
}

inline FitResult<G2PwParams> fit_g2_pw(const CoincidenceHistogram& h, const G2PwParams& init,
                                       const FitOptions& options = {}) {
  const int n_side = init.side_peaks();
  if (ps_to_ns(h.window) < (n_side + 0.5) * init.period)
    throw FitError(FitErrc::invalid_input, "window too narrow for the requested side peaks");
  const auto s = detail::samples(h);
  G2PwModel model{init.period, n_side};
  const auto bounds = g2_pw_bounds(h, init);
  std::vector<double> p0;
  p0.push_back(init.a);
  p0.insert(p0.end(), init.heights.begin(), init.heights.end());
  p0.push_back(init.tau0);
  p0.push_back(init.tau_x);
  for (std::size_t k = 0; k < p0.size(); ++k) p0[k] = std::clamp(p0[k], bounds[k].lo, bounds[k].hi);
  auto raw = detail::poisson_least_squares(model, s, p0, bounds, options, model.tau0_index());

  FitResult<G2PwParams> out;
  out.params.a = raw.values[0];
  out.params.heights.assign(raw.values.begin() + 1, raw.values.begin() + 1 + (2 * n_side + 1));
  out.params.tau0 = raw.values[model.tau0_index()];
  out.params.tau_x = raw.values[model.tau_x_index()];
  out.params.period = init.period;
  out.values = std::move(raw.values);
  out.sigma = std::move(raw.sigma);
  out.covariance = std::move(raw.covariance);
  out.chi2 = raw.chi2;
  out.chi2_reduced = raw.chi2_reduced;
  out.converged = raw.converged;
  out.singular = raw.singular;
  out.iterations = raw.iterations;
  return out;
}

inline FitResult<G2PwParams> fit_g2_pw(const CoincidenceHistogram& h, double period_ns, int side_peaks = 5,
                                       const FitOptions& options = {}) {
  return fit_g2_pw(h, initial_g2_pw(h, period_ns, side_peaks), options);
}

struct NormalizedG2 {
  CoincidenceHistogram histogram;  // with normalization and center_offset set
  std::vector<double> tau_ns;
  std::vector<double> value;
  std::vector<double> sigma;  // Poisson sigma of each normalized bin
  double normalizer = 0.0;
  Estimate g2_at_tau0;
};

namespace detail {

inline NormalizedG2 normalized_bins(const CoincidenceHistogram& h, double normalizer, double tau0_ns) {
  if (!(normalizer > 0.0)) throw FitError(FitErrc::nonpositive_normalizer, "g2 normalizer must be positive");
  NormalizedG2 out;
  out.histogram = h;
  out.histogram.normalization = normalizer;
  out.histogram.center_offset = ns_to_ps(tau0_ns);
  out.normalizer = normalizer;
  const std::size_t n = h.counts.size();
  out.tau_ns.resize(n);
  out.value.resize(n);
  out.sigma.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double c = static_cast<double>(h.counts[j]);
    out.tau_ns[j] = h.bin_center_ns(j);
    out.value[j] = c / normalizer;
    out.sigma[j] = std::sqrt(c) / normalizer;
  }
  return out;
}

}  // namespace detail

// CW: divide by the plateau a; g2(tau0) = 1 - b.
inline NormalizedG2 normalize_g2(const CoincidenceHistogram& h, const FitResult<G2CwParams>& fit) {
  if (!fit.converged) throw FitError(FitErrc::not_converged, "cannot normalize an unconverged fit");
  auto out = detail::normalized_bins(h, fit.params.a, fit.params.tau0);
  out.g2_at_tau0.value = 1.0 - fit.params.b;
  out.g2_at_tau0.sigma = fit.sigma.size() > G2CwModel::kB ? fit.sigma[G2CwModel::kB] : 0.0;
  return out;
}

// Pulsed: divide by the mean fitted side-peak height; g2(tau0) = (a + b0) / mean(b_n, n != 0).
inline NormalizedG2 normalize_g2(const CoincidenceHistogram& h, const FitResult<G2PwParams>& fit) {
  if (!fit.converged) throw FitError(FitErrc::not_converged, "cannot normalize an unconverged fit");
  const G2PwParams& p = fit.params;
  const double mean_side = p.mean_side_height();
  auto out = detail::normalized_bins(h, mean_side, p.tau0);
  const double center = p.a + p.center_height();
  out.g2_at_tau0.value = center / mean_side;

  const int n_side = p.side_peaks();
  G2PwModel model{p.period, n_side};
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.parameter_count()));
  grad[0] = 1.0 / mean_side;
  grad[static_cast<Eigen::Index>(model.height_index(0))] = 1.0 / mean_side;
  for (int n = -n_side; n <= n_side; ++n)
    if (n != 0)
      grad[static_cast<Eigen::Index>(model.height_index(n))] = -center / (mean_side * mean_side * 2.0 * n_side);
  if (fit.covariance.rows() == grad.size()) out.g2_at_tau0.sigma = propagate_sigma(fit.covariance, grad);
  return out;
}

enum class PhotonVerdict { single_photon, not_single, inconclusive };

inline const char* to_string(PhotonVerdict v) {
  switch (v) {
    case PhotonVerdict::single_photon: return "single_photon";
    case PhotonVerdict::not_single: return "not_single";
    case PhotonVerdict::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

// Threshold 0.5 with a 2-sigma margin on either side.
inline PhotonVerdict single_photon_verdict(const Estimate& g2_at_tau0) {
  if (g2_at_tau0.value + 2.0 * g2_at_tau0.sigma < 0.5) return PhotonVerdict::single_photon;
  if (g2_at_tau0.value - 2.0 * g2_at_tau0.sigma > 0.5) return PhotonVerdict::not_single;
  return PhotonVerdict::inconclusive;
}

}  // namespace antibunch::fit
