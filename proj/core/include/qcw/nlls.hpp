#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qcw/types.hpp"

// Damped least-squares (Levenberg-Marquardt) with numeric central-difference
// Jacobians. Bounds are enforced by smooth parameter transforms, so the
// solver itself is unconstrained. Written against std::vector linear algebra;
// parameter counts here are tiny (<= 12).

namespace qcw {

/// Normal matrix is singular: some free parameter has no influence on the model.
class DegenerateFitError : public Error {
public:
  using Error::Error;
};

struct ParamSpec {
  std::string name;
  double init{0.0};
  double lower{-std::numeric_limits<double>::infinity()};
  double upper{std::numeric_limits<double>::infinity()};
  bool fixed{false};

  static ParamSpec free_param(std::string name, double init) {
    return {std::move(name), init};
  }
  static ParamSpec bounded(std::string name, double init, double lo, double hi) {
    return {std::move(name), init, lo, hi};
  }
  static ParamSpec non_negative(std::string name, double init) {
    return {std::move(name), init, 0.0, std::numeric_limits<double>::infinity()};
  }
  static ParamSpec fixed_param(std::string name, double value) {
    return {std::move(name), value, -std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity(), true};
  }
};

struct NllsOptions {
  int max_iterations{500};
  double step_tol{1e-8};   // relative parameter step
  double grad_tol{1e-10};  // infinity norm of the gradient
  double lambda_init{1e-3};
};

/// Evaluates the model at every data point for one parameter vector.
/// Models with per-parameter setup cost (convolutions) implement this once.
using VectorModelFn = std::function<void(std::span<const double> params, std::span<double> out)>;

/// Point-wise model convenience form.
using ModelFn = std::function<double(double x, std::span<const double> params)>;

/// Core fit: y[i] ~ model(params)[i] with weights w[i] (chi2 = sum w (y-f)^2).
/// Covariance is (J^T W J)^-1 scaled by the reduced chi-square; sigmas are the
/// square roots of its diagonal. Non-convergence within max_iterations is
/// reported via converged=false, not an exception.
FitResult nlls_fit(const VectorModelFn& model, std::span<const double> y,
                   std::span<const double> w, std::vector<ParamSpec> params,
                   const NllsOptions& options = {});

FitResult nlls_fit(const ModelFn& model, std::span<const double> x, std::span<const double> y,
                   std::span<const double> w, std::vector<ParamSpec> params,
                   const NllsOptions& options = {});

}  // namespace qcw
