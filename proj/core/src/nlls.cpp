#include "qcw/nlls.hpp"

#include <algorithm>
#include <cmath>

namespace qcw {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Smooth transforms mapping an unconstrained internal coordinate u to the
// external parameter p. Derivatives never vanish at the starting point
// because one-sided transforms are re-scaled to place u0 at 0.
struct Transform {
  enum class Kind { identity, both, lower, upper } kind{Kind::identity};
  double lo{0.0}, hi{0.0}, scale{1.0};

  static Transform make(const ParamSpec& spec) {
    Transform t;
    const bool has_lo = spec.lower > -kInf;
    const bool has_hi = spec.upper < kInf;
    t.lo = spec.lower;
    t.hi = spec.upper;
    if (has_lo && has_hi)
      t.kind = Kind::both;
    else if (has_lo) {
      t.kind = Kind::lower;
      t.scale = std::max(spec.init - spec.lower,
                         1e-6 * std::max({1.0, std::abs(spec.lower), std::abs(spec.init)}));
    } else if (has_hi) {
      t.kind = Kind::upper;
      t.scale = std::max(spec.upper - spec.init,
                         1e-6 * std::max({1.0, std::abs(spec.upper), std::abs(spec.init)}));
    }
    return t;
  }

  double external(double u) const {
    switch (kind) {
      case Kind::identity: return u;
      case Kind::both: return lo + (hi - lo) * 0.5 * (std::sin(u) + 1.0);
      case Kind::lower: return lo + scale * (u + std::sqrt(u * u + 1.0));
      case Kind::upper: return hi - scale * (std::sqrt(u * u + 1.0) - u);
    }
    return u;
  }

  double internal(double p) const {
    switch (kind) {
      case Kind::identity: return p;
      case Kind::both: {
        const double s = std::clamp(2.0 * (p - lo) / (hi - lo) - 1.0, -1.0, 1.0);
        return std::asin(s);
      }
      case Kind::lower: {
        const double r = std::max((p - lo) / scale, 1e-300);
        return (r * r - 1.0) / (2.0 * r);
      }
      case Kind::upper: {
        const double r = std::max((hi - p) / scale, 1e-300);
        return (1.0 - r * r) / (2.0 * r);
      }
    }
    return p;
  }

  double derivative(double u) const {
    switch (kind) {
      case Kind::identity: return 1.0;
      case Kind::both: return (hi - lo) * 0.5 * std::cos(u);
      case Kind::lower: return scale * (1.0 + u / std::sqrt(u * u + 1.0));
      case Kind::upper: return scale * (1.0 - u / std::sqrt(u * u + 1.0));
    }
    return 1.0;
  }
};

// Cholesky solve of (A + lambda diag(A)) x = b; returns false when the
// factorization breaks down.
bool solve_damped(const std::vector<double>& a, const std::vector<double>& b, double lambda,
                  std::vector<double>& x, std::size_t m) {
  std::vector<double> l(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = a[i * m + j];
      if (i == j) sum += lambda * a[i * m + i];
      for (std::size_t k = 0; k < j; ++k) sum -= l[i * m + k] * l[j * m + k];
      if (i == j) {
        if (sum <= 0.0) return false;
        l[i * m + i] = std::sqrt(sum);
      } else {
        l[i * m + j] = sum / l[j * m + j];
      }
    }
  }
  x.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double sum = b[i];
    for (std::size_t k = 0; k < i; ++k) sum -= l[i * m + k] * x[k];
    x[i] = sum / l[i * m + i];
  }
  for (std::size_t ii = m; ii-- > 0;) {
    double sum = x[ii];
    for (std::size_t k = ii + 1; k < m; ++k) sum -= l[k * m + ii] * x[k];
    x[ii] = sum / l[ii * m + ii];
  }
  return true;
}

// Inverse of a symmetric positive definite matrix via Cholesky, with a tiny
// ridge fallback so covariance reporting survives near-singular fits.
bool invert_spd(std::vector<double> a, std::vector<double>& inv, std::size_t m) {
  inv.assign(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) inv[i * m + i] = 1.0;
  std::vector<double> col(m), x(m);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < m; ++i) col[i] = inv[i * m + j];
    if (!solve_damped(a, col, 0.0, x, m)) return false;
    for (std::size_t i = 0; i < m; ++i) inv[i * m + j] = x[i];
  }
  // symmetrize
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double v = 0.5 * (inv[i * m + j] + inv[j * m + i]);
      inv[i * m + j] = inv[j * m + i] = v;
    }
  return true;
}

}  // namespace

FitResult nlls_fit(const VectorModelFn& model, std::span<const double> y,
                   std::span<const double> w, std::vector<ParamSpec> params,
                   const NllsOptions& options) {
  const std::size_t n = y.size();
  if (w.size() != n) throw DomainError("nlls_fit: weight/data length mismatch");

  std::vector<std::size_t> free_idx;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& spec = params[i];
    if (!std::isfinite(spec.init)) throw DomainError("nlls_fit: non-finite initial value for " + spec.name);
    if (!spec.fixed && (spec.init < spec.lower || spec.init > spec.upper))
      throw DomainError("nlls_fit: initial value for " + spec.name + " outside bounds");
    if (!spec.fixed) free_idx.push_back(i);
  }
  const std::size_t m = free_idx.size();
  if (n < params.size() + 2)
    throw DomainError("nlls_fit: need at least #params + 2 data points");

  std::vector<Transform> transforms(m);
  std::vector<double> u(m);
  for (std::size_t j = 0; j < m; ++j) {
    transforms[j] = Transform::make(params[free_idx[j]]);
    u[j] = transforms[j].internal(params[free_idx[j]].init);
  }

  std::vector<double> p_ext(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) p_ext[i] = params[i].init;

  const auto to_external = [&](std::span<const double> uu, std::vector<double>& out) {
    out = p_ext;
    for (std::size_t j = 0; j < m; ++j) out[free_idx[j]] = transforms[j].external(uu[j]);
  };

  std::vector<double> yhat(n), p_try(params.size());
  const auto chi2_at = [&](std::span<const double> uu) {
    to_external(uu, p_try);
    model(p_try, yhat);
    double chi2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - yhat[i];
      chi2 += w[i] * r * r;
    }
    return chi2;
  };

  std::vector<double> residual(n);  // sqrt(w) * (y - f)
  const auto eval_residual = [&](std::span<const double> uu) {
    to_external(uu, p_try);
    model(p_try, yhat);
    double chi2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      residual[i] = std::sqrt(w[i]) * (y[i] - yhat[i]);
      chi2 += residual[i] * residual[i];
    }
    return chi2;
  };

  double chi2 = eval_residual(u);
  if (!std::isfinite(chi2)) throw DomainError("nlls_fit: model not finite at initial parameters");

  std::vector<double> jac(n * m);  // d f_i / d u_j * sqrt(w_i)
  std::vector<double> a(m * m), g(m), delta(m), u_try(m);
  std::vector<double> f_plus(n), f_minus(n);

  double lambda = options.lambda_init;
  int iter = 0;
  bool converged = false;

  for (; iter < options.max_iterations; ++iter) {
    // central-difference Jacobian in internal coordinates
    for (std::size_t j = 0; j < m; ++j) {
      const double h = 6e-6 * std::max(std::abs(u[j]), 1.0);
      u_try = u;
      u_try[j] = u[j] + h;
      to_external(u_try, p_try);
      model(p_try, f_plus);
      u_try[j] = u[j] - h;
      to_external(u_try, p_try);
      model(p_try, f_minus);
      for (std::size_t i = 0; i < n; ++i)
        jac[i * m + j] = std::sqrt(w[i]) * (f_plus[i] - f_minus[i]) / (2.0 * h);
    }

    // normal equations
    std::fill(a.begin(), a.end(), 0.0);
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const double jij = jac[i * m + j];
        g[j] += jij * residual[i];
        for (std::size_t k = 0; k <= j; ++k) a[j * m + k] += jij * jac[i * m + k];
      }
    }
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = j + 1; k < m; ++k) a[j * m + k] = a[k * m + j];

    for (std::size_t j = 0; j < m; ++j) {
      if (a[j * m + j] == 0.0) {
        // dead column at the starting point: the parameter cannot be fit.
        // later on it is a transient (a component pushed to an inactive
        // corner); freeze it for this iteration instead of aborting.
        if (iter == 0)
          throw DegenerateFitError("nlls_fit: parameter '" + params[free_idx[j]].name +
                                   "' has no effect on the model (singular normal matrix)");
        for (std::size_t k = 0; k < m; ++k) a[j * m + k] = a[k * m + j] = 0.0;
        a[j * m + j] = 1.0;
        g[j] = 0.0;
      }
    }

    double gmax = 0.0;
    for (double gj : g) gmax = std::max(gmax, std::abs(gj));
    if (gmax < options.grad_tol) {
      converged = true;
      break;
    }

    bool stepped = false;
    for (int attempt = 0; attempt < 30; ++attempt) {
      if (!solve_damped(a, g, lambda, delta, m)) {
        lambda *= 10.0;
        continue;
      }
      for (std::size_t j = 0; j < m; ++j) u_try[j] = u[j] + delta[j];
      const double chi2_try = chi2_at(u_try);
      if (std::isfinite(chi2_try) && chi2_try < chi2) {
        double unorm = 0.0, dnorm = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          unorm += u[j] * u[j];
          dnorm += delta[j] * delta[j];
        }
        u = u_try;
        chi2 = eval_residual(u);
        lambda = std::max(lambda / 3.0, 1e-12);
        stepped = true;
        if (std::sqrt(dnorm) < options.step_tol * (std::sqrt(unorm) + options.step_tol))
          converged = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!stepped) {
      // no acceptable step even with heavy damping: either converged or stuck
      converged = true;
      break;
    }
    if (converged) break;
  }

  FitResult result;
  to_external(u, p_try);
  result.names.reserve(params.size());
  result.values = p_try;
  for (const auto& spec : params) result.names.push_back(spec.name);
  result.iterations = iter + 1;
  result.converged = converged;
  const double dof = static_cast<double>(n > m ? n - m : 1);
  result.chi2_red = chi2 / dof;

  // covariance in external space: D (J^T J)^-1 D * chi2_red
  std::vector<double> cov_u;
  const std::size_t np = params.size();
  result.covariance.assign(np * np, 0.0);
  result.sigmas.assign(np, 0.0);
  std::vector<double> a_ridge = a;
  if (!invert_spd(a_ridge, cov_u, m)) {
    double dmax = 0.0;
    for (std::size_t j = 0; j < m; ++j) dmax = std::max(dmax, a[j * m + j]);
    for (std::size_t j = 0; j < m; ++j) a_ridge[j * m + j] += 1e-12 * dmax;
    if (!invert_spd(a_ridge, cov_u, m)) {
      result.notes.push_back("covariance unavailable (singular normal matrix)");
      cov_u.assign(m * m, 0.0);
    } else {
      result.notes.push_back("covariance regularized (near-singular normal matrix)");
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    const double dj = transforms[j].derivative(u[j]);
    for (std::size_t k = 0; k < m; ++k) {
      const double dk = transforms[k].derivative(u[k]);
      result.covariance[free_idx[j] * np + free_idx[k]] =
          cov_u[j * m + k] * dj * dk * result.chi2_red;
    }
  }
  for (std::size_t i = 0; i < np; ++i)
    result.sigmas[i] = std::sqrt(std::max(result.covariance[i * np + i], 0.0));
  return result;
}

FitResult nlls_fit(const ModelFn& model, std::span<const double> x, std::span<const double> y,
                   std::span<const double> w, std::vector<ParamSpec> params,
                   const NllsOptions& options) {
  if (x.size() != y.size()) throw DomainError("nlls_fit: x/y length mismatch");
  const VectorModelFn vec = [&model, x](std::span<const double> p, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = model(x[i], p);
  };
  return nlls_fit(vec, y, w, std::move(params), options);
}

}  // namespace qcw
