#pragma once

// Bounded, weighted Levenberg-Marquardt least squares.
//
// Minimizes sum_i w_i (y_i - f(x_i; p))^2 with Marquardt diagonal scaling.
// Parameters sitting on a bound whose gradient points outward are frozen for
// that iteration; trial points are projected back into the box.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace antibunch::fit {

template <class M>
concept ParametricModel = requires(const M& m, double x, std::span<const double> p) {
  { m.parameter_count() } -> std::convertible_to<std::size_t>;
  { m(x, p) } -> std::convertible_to<double>;
};

template <class M>
concept AnalyticGradient = ParametricModel<M> && requires(const M& m, double x, std::span<const double> p,
                                                          std::span<double> g) {
  m.gradient(x, p, g);
};

struct Bound {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

struct FitOptions {
  int max_iterations = 500;
  double relative_chi2_tolerance = 1e-9;
  double step_tolerance = 1e-12;
  double initial_lambda = 1e-3;
  int polish_steps = 20;
};

template <class Params>
struct FitResult {
  Params params{};
  std::vector<double> values;  // flat parameter vector, model order
  std::vector<double> sigma;   // sqrt(diag(covariance))
  Eigen::MatrixXd covariance;
  double chi2 = 0.0;
  double chi2_reduced = 0.0;
  bool converged = false;
  bool singular = false;  // normal matrix was rank deficient; pseudo-inverse used
  int iterations = 0;
};

namespace detail {

// Central differences; step scaled to the parameter magnitude.
template <ParametricModel M>
void numeric_gradient(const M& model, double x, std::span<const double> p, std::span<double> g) {
  std::vector<double> q(p.begin(), p.end());
  for (std::size_t k = 0; k < q.size(); ++k) {
    const double h = 1e-6 * std::max(std::abs(q[k]), 1e-3);
    const double keep = q[k];
    q[k] = keep + h;
    const double up = model(x, q);
    q[k] = keep - h;
    const double down = model(x, q);
    q[k] = keep;
    g[k] = (up - down) / (2.0 * h);
  }
}

template <ParametricModel M>
void model_gradient(const M& model, double x, std::span<const double> p, std::span<double> g) {
  if constexpr (AnalyticGradient<M>)
    model.gradient(x, p, g);
  else
    numeric_gradient(model, x, p, g);
}

// Moore-Penrose inverse of a symmetric PSD matrix; reports rank deficiency.
// The rank test runs on the unit-diagonal (correlation) form so that badly
// scaled but independent parameters are not mistaken for degenerate ones.
inline Eigen::MatrixXd symmetric_pinv(const Eigen::MatrixXd& a, bool& singular) {
  const Eigen::Index n = a.rows();
  singular = false;
  Eigen::VectorXd scale(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = a(i, i);
    if (d > 0.0) {
      scale[i] = 1.0 / std::sqrt(d);
    } else {
      scale[i] = 0.0;
      singular = true;
    }
  }
  const Eigen::MatrixXd c = scale.asDiagonal() * a * scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double largest = ev.cwiseAbs().maxCoeff();
  const double cutoff = largest * 1e-13 * static_cast<double>(n);
  Eigen::VectorXd inv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > cutoff && largest > 0.0) {
      inv[i] = 1.0 / ev[i];
    } else {
      inv[i] = 0.0;
      singular = true;
    }
  }
  return scale.asDiagonal() * (eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose()) *
         scale.asDiagonal();
}

}  // namespace detail

template <ParametricModel M>
FitResult<std::vector<double>> levenberg_marquardt(const M& model, std::span<const double> x,
                                                   std::span<const double> y, std::span<const double> w,
                                                   std::vector<double> init, std::vector<Bound> bounds = {},
                                                   const FitOptions& options = {}) {
  const std::size_t n = x.size();
  const std::size_t np = model.parameter_count();
  if (y.size() != n || w.size() != n) throw std::invalid_argument("x, y and weights must have equal length");
  if (init.size() != np) throw std::invalid_argument("initial parameter vector has the wrong length");
  if (n < np) throw std::invalid_argument("fewer data points than parameters");
  if (bounds.empty()) bounds.assign(np, Bound{});
  if (bounds.size() != np) throw std::invalid_argument("one bound per parameter required");
  for (std::size_t k = 0; k < np; ++k)
    if (!(init[k] >= bounds[k].lo && init[k] <= bounds[k].hi))
      throw std::invalid_argument("initial parameters must lie within bounds");

  Eigen::MatrixXd jac(n, np);
  Eigen::VectorXd resid(n);
  std::vector<double> g(np);

  auto chi2_at = [&](const std::vector<double>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - model(x[i], p);
      s += w[i] * r * r;
    }
    return s;
  };
  auto linearize = [&](const std::vector<double>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - model(x[i], p);
      resid[static_cast<Eigen::Index>(i)] = r;
      s += w[i] * r * r;
      detail::model_gradient(model, x[i], p, g);
      for (std::size_t k = 0; k < np; ++k) jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = g[k];
    }
    return s;
  };
  const Eigen::Map<const Eigen::VectorXd> weights(w.data(), static_cast<Eigen::Index>(n));

  std::vector<double> p = std::move(init);
  double chi2 = linearize(p);
  double lambda = options.initial_lambda;
  FitResult<std::vector<double>> result;

  int it = 0;
  bool converged = false;
  while (it < options.max_iterations && !converged) {
    ++it;
    if (chi2 == 0.0) {
      converged = true;
      break;
    }
    const Eigen::MatrixXd jw = jac.transpose() * weights.asDiagonal();
    const Eigen::MatrixXd alpha = jw * jac;
    const Eigen::VectorXd beta = jw * resid;

    // Freeze parameters pinned against a bound by the descent direction.
    std::vector<Eigen::Index> free;
    for (std::size_t k = 0; k < np; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const bool at_lo = p[k] <= bounds[k].lo && beta[kk] < 0.0;
      const bool at_hi = p[k] >= bounds[k].hi && beta[kk] > 0.0;
      if (!at_lo && !at_hi) free.push_back(kk);
    }
    if (free.empty()) {
      converged = true;
      break;
    }
    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd a_free(nf, nf);
    Eigen::VectorXd b_free(nf);
    for (Eigen::Index i = 0; i < nf; ++i) {
      b_free[i] = beta[free[static_cast<std::size_t>(i)]];
      for (Eigen::Index j = 0; j < nf; ++j)
        a_free(i, j) = alpha(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(j)]);
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = a_free;
      for (Eigen::Index i = 0; i < nf; ++i) {
        const double d = a_free(i, i);
        damped(i, i) = d + lambda * (d > 0.0 ? d : 1e-12);
      }
      const Eigen::VectorXd step = damped.ldlt().solve(b_free);
      std::vector<double> trial = p;
      double step_norm = 0.0, p_norm = 0.0;
      for (Eigen::Index i = 0; i < nf; ++i) {
        const auto k = static_cast<std::size_t>(free[static_cast<std::size_t>(i)]);
        const double v = std::clamp(p[k] + step[i], bounds[k].lo, bounds[k].hi);
        step_norm += (v - p[k]) * (v - p[k]);
        p_norm += p[k] * p[k];
        trial[k] = v;
      }
      step_norm = std::sqrt(step_norm);
      p_norm = std::sqrt(p_norm);
      const double trial_chi2 = chi2_at(trial);
      if (std::isfinite(trial_chi2) && trial_chi2 < chi2) {
        const double rel = (chi2 - trial_chi2) / chi2;
        p = std::move(trial);
        chi2 = linearize(p);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (rel < options.relative_chi2_tolerance || step_norm < options.step_tolerance * (p_norm + 1e-12))
          converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16 || step_norm < options.step_tolerance * (p_norm + 1e-12)) {
          // No downhill step exists at machine precision: a minimum.
          converged = true;
          break;
        }
      }
    }
  }

  // A few undamped steps so the result sits on the minimum to rounding
  // precision rather than wherever the chi2 test happened to stop.
  for (int polish = 0; converged && polish < options.polish_steps && chi2 > 0.0; ++polish) {
    const Eigen::MatrixXd jw = jac.transpose() * weights.asDiagonal();
    const Eigen::MatrixXd alpha = jw * jac;
    const Eigen::VectorXd beta = jw * resid;
    std::vector<Eigen::Index> free;
    for (std::size_t k = 0; k < np; ++k)
      if (p[k] > bounds[k].lo && p[k] < bounds[k].hi) free.push_back(static_cast<Eigen::Index>(k));
    if (free.empty()) break;
    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd a_free(nf, nf);
    Eigen::VectorXd b_free(nf);
    for (Eigen::Index i = 0; i < nf; ++i) {
      b_free[i] = beta[free[static_cast<std::size_t>(i)]];
      for (Eigen::Index j = 0; j < nf; ++j)
        a_free(i, j) = alpha(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(j)]);
    }
    const Eigen::VectorXd step = a_free.ldlt().solve(b_free);
    if (!step.allFinite()) break;
    std::vector<double> trial = p;
    bool inside = true;
    for (Eigen::Index i = 0; i < nf; ++i) {
      const auto k = static_cast<std::size_t>(free[static_cast<std::size_t>(i)]);
      trial[k] = p[k] + step[i];
      if (!(trial[k] > bounds[k].lo && trial[k] < bounds[k].hi)) inside = false;
    }
    if (!inside) break;
    // Near the minimum chi2 changes at rounding level while the step is
    // still well above it, so allow a rounding-sized increase.
    const double trial_chi2 = chi2_at(trial);
    if (!(trial_chi2 <= chi2 * (1.0 + 1e-13))) break;
    bool moved = false;
    for (std::size_t k = 0; k < np; ++k)
      if (std::abs(trial[k] - p[k]) > 1e-15 * std::abs(p[k])) moved = true;
    p = std::move(trial);
    chi2 = linearize(p);
    if (!moved) break;
  }

  const Eigen::MatrixXd jw = jac.transpose() * weights.asDiagonal();
  const Eigen::MatrixXd normal = jw * jac;
  bool singular = false;
  const Eigen::MatrixXd inv = detail::symmetric_pinv(normal, singular);
  const double dof = static_cast<double>(n > np ? n - np : 1);

  result.values = p;
  result.params = p;
  result.chi2 = chi2;
  result.chi2_reduced = chi2 / dof;
  result.covariance = inv * result.chi2_reduced;
  result.sigma.resize(np);
  for (std::size_t k = 0; k < np; ++k)
    result.sigma[k] = std::sqrt(std::max(0.0, result.covariance(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k))));
  result.converged = converged;
  result.singular = singular;
  result.iterations = it;
  return result;
}

// First-order propagation: sigma^2 = g^T C g.
inline double propagate_sigma(const Eigen::MatrixXd& covariance, const Eigen::VectorXd& gradient) {
  return std::sqrt(std::max(0.0, gradient.dot(covariance * gradient)));
}

}  // namespace antibunch::fit
