#include "qcw/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "qcw/faddeeva.hpp"
#include "qcw/lineshape.hpp"

namespace qcw {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSqrt2 = 1.4142135623730950488016887242096981;
constexpr double kSqrtPi = 1.7724538509055160272981674833411452;

// ---------------------------------------------------------------------------
// Piecewise-exponential functions and their exact Gaussian convolution.
//
// Every correlation model here is, after expanding the products of
// |tau|-exponentials, a sum of segments on which the model is
// sum_k coef_k exp(rate_k (x - ref_k)). Convolving one such atom with a
// Gaussian has the closed form
//   c e^{a(x-ref) + a^2 s^2/2} 1/2 [erfc(t_u) - erfc(t_l)],
//   t_e = (x + a s^2 - e) / (s sqrt2),
// which we evaluate through the scaled erfcx to stay bounded. Atom refs are
// chosen so the exponent is non-positive across the segment, which keeps
// every intermediate representable.
// ---------------------------------------------------------------------------

double erfcx_fast(double t) {
  // t >= 0 only. Above 6.5 the asymptotic series is cheaper and accurate to
  // ~1e-9 or better; below, exp(t^2) erfc(t) is exact to a few ulp.
  if (t >= 6.5) {
    const double u = 0.5 / (t * t);
    const double series = 1.0 - u * (1.0 - 3.0 * u * (1.0 - 5.0 * u * (1.0 - 7.0 * u * (1.0 - 9.0 * u))));
    return series / (t * kSqrtPi);
  }
  return std::exp(t * t) * std::erfc(t);
}

// 1/2 erfc(t) e^{lin} for t >= 0 via the scaled erfcx; the lin - t^2
// exponent is bounded above whenever the atom is anchored inside its
// segment, so this never overflows.
double half_erfc_pos(double t, double lin) {
  if (t == kInf) return 0.0;
  const double e = lin - t * t;
  if (e < -745.0) return 0.0;
  return 0.5 * erfcx_fast(t) * std::exp(e);
}

// e^{lin} (erfc(t_u) - erfc(t_l)) / 2 with t_l >= t_u, organized so the
// e^{lin} factor only ever appears where it is bounded: for x inside the
// segment it multiplies an O(1) bracket, outside it cancels analytically.
double erfc_window_scaled(double t_l, double t_u, double lin) {
  if (t_u >= 0.0) return half_erfc_pos(t_u, lin) - half_erfc_pos(t_l, lin);
  if (t_l <= 0.0) return half_erfc_pos(-t_l, lin) - half_erfc_pos(-t_u, lin);
  // t_u < 0 < t_l: x is inside the segment, lin is bounded by normalization
  return std::exp(lin) - half_erfc_pos(-t_u, lin) - half_erfc_pos(t_l, lin);
}

struct Atom {
  double coef;
  double rate;
  double ref;
};

struct PiecewiseExp {
  std::vector<double> breaks;                // sorted breakpoints
  std::vector<std::vector<Atom>> segments;   // breaks.size() + 1 segments

  static PiecewiseExp constant(double c) {
    PiecewiseExp f;
    f.segments.push_back({Atom{c, 0.0, 0.0}});
    return f;
  }

  // coef * exp(-|x - center| / t_scale)
  static PiecewiseExp exp_abs(double coef, double t_scale, double center) {
    PiecewiseExp f;
    f.breaks = {center};
    f.segments.resize(2);
    f.segments[0] = {Atom{coef, 1.0 / t_scale, center}};
    f.segments[1] = {Atom{coef, -1.0 / t_scale, center}};
    return f;
  }

  std::size_t segment_of(double x) const {
    return static_cast<std::size_t>(
        std::upper_bound(breaks.begin(), breaks.end(), x) - breaks.begin());
  }

  double lower_edge(std::size_t seg) const { return seg == 0 ? -kInf : breaks[seg - 1]; }
  double upper_edge(std::size_t seg) const {
    return seg == breaks.size() ? kInf : breaks[seg];
  }

  PiecewiseExp shifted(double s) const {
    PiecewiseExp out = *this;
    for (double& b : out.breaks) b += s;
    for (auto& seg : out.segments)
      for (Atom& atom : seg) atom.ref += s;
    return out;
  }

  PiecewiseExp scaled(double f) const {
    PiecewiseExp out = *this;
    for (auto& seg : out.segments)
      for (Atom& atom : seg) atom.coef *= f;
    return out;
  }

  double eval(double x) const {
    double acc = 0.0;
    for (const Atom& atom : segments[segment_of(x)])
      acc += atom.coef * std::exp(atom.rate * (x - atom.ref));
    return acc;
  }

  double conv_gauss(double x, double sigma) const {
    const double s2 = sigma * kSqrt2;
    const double ss = sigma * sigma;
    double acc = 0.0;
    for (std::size_t seg = 0; seg < segments.size(); ++seg) {
      const double lo = lower_edge(seg);
      const double hi = upper_edge(seg);
      for (const Atom& atom : segments[seg]) {
        const double lin = atom.rate * (x - atom.ref) + 0.5 * atom.rate * atom.rate * ss;
        const double shift = x + atom.rate * ss;
        const double t_u = hi == kInf ? -kInf : (shift - hi) / s2;
        const double t_l = lo == -kInf ? kInf : (shift - lo) / s2;
        acc += atom.coef * erfc_window_scaled(t_l, t_u, lin);
      }
    }
    return acc;
  }
};

// re-anchor atom refs so exponents stay <= 0 across the segment
void normalize_atom(Atom& atom, double lo, double hi) {
  double target = atom.ref;
  if (atom.rate > 0.0 && hi != kInf)
    target = hi;
  else if (atom.rate < 0.0 && lo != -kInf)
    target = lo;
  if (target != atom.ref) {
    atom.coef *= std::exp(atom.rate * (target - atom.ref));
    atom.ref = target;
  }
}

PiecewiseExp combine(const PiecewiseExp& a, const PiecewiseExp& b, bool multiply) {
  PiecewiseExp out;
  out.breaks.reserve(a.breaks.size() + b.breaks.size());
  std::merge(a.breaks.begin(), a.breaks.end(), b.breaks.begin(), b.breaks.end(),
             std::back_inserter(out.breaks));
  out.breaks.erase(std::unique(out.breaks.begin(), out.breaks.end()), out.breaks.end());
  out.segments.resize(out.breaks.size() + 1);
  for (std::size_t seg = 0; seg < out.segments.size(); ++seg) {
    const double lo = out.lower_edge(seg);
    const double hi = out.upper_edge(seg);
    double probe;  // interior representative of the merged segment
    if (lo == -kInf && hi == kInf)
      probe = 0.0;
    else if (lo == -kInf)
      probe = hi - 1.0;
    else if (hi == kInf)
      probe = lo + 1.0;
    else
      probe = 0.5 * (lo + hi);
    const auto& seg_a = a.segments[a.segment_of(probe)];
    const auto& seg_b = b.segments[b.segment_of(probe)];
    auto& dst = out.segments[seg];
    if (multiply) {
      dst.reserve(seg_a.size() * seg_b.size());
      for (const Atom& x : seg_a)
        for (const Atom& y : seg_b) {
          // anchor first, then evaluate both factors at the anchor: each
          // factor is bounded there, so the product coefficient cannot
          // overflow the way a re-anchor after multiplication can
          const double rate = x.rate + y.rate;
          double anchor;
          if (rate > 0.0)
            anchor = hi != kInf ? hi : (lo != -kInf ? lo : 0.0);
          else if (rate < 0.0)
            anchor = lo != -kInf ? lo : (hi != kInf ? hi : 0.0);
          else
            anchor = lo != -kInf ? lo : (hi != kInf ? hi : 0.0);
          const double coef = x.coef * std::exp(x.rate * (anchor - x.ref)) * y.coef *
                              std::exp(y.rate * (anchor - y.ref));
          if (coef != 0.0) dst.push_back(Atom{coef, rate, anchor});
        }
    } else {
      dst = seg_a;
      dst.insert(dst.end(), seg_b.begin(), seg_b.end());
      for (Atom& atom : dst) normalize_atom(atom, lo, hi);
    }
  }
  return out;
}

PiecewiseExp operator+(const PiecewiseExp& a, const PiecewiseExp& b) {
  return combine(a, b, false);
}
PiecewiseExp operator*(const PiecewiseExp& a, const PiecewiseExp& b) {
  return combine(a, b, true);
}

// ---------------------------------------------------------------------------
// model builders (time unit: ns)
// ---------------------------------------------------------------------------

HbtFitParams hbt_params_from(std::span<const double> p) {
  HbtFitParams out;
  out.a = p[0];
  out.b = p[1];
  out.tau0_ps = p[2];
  out.t_b_ns = p[3];
  out.c = {p[4], p[5], p[6]};
  out.t_c_ns = {p[7], p[8], p[9]};
  return out;
}

PiecewiseExp build_hbt_pe(const HbtFitParams& p) {
  const double tau0_ns = p.tau0_ps * 1e-3;
  PiecewiseExp model = PiecewiseExp::constant(p.a);
  model = model * (PiecewiseExp::constant(1.0) + PiecewiseExp::exp_abs(-p.b, p.t_b_ns, tau0_ns));
  for (int i = 0; i < 3; ++i) {
    if (p.c[i] == 0.0) continue;
    model = model *
            (PiecewiseExp::constant(1.0) + PiecewiseExp::exp_abs(p.c[i], p.t_c_ns[i], tau0_ns));
  }
  return model;
}

PiecewiseExp build_hom_pe(const HomFitParams& p, HomPolarization pol) {
  const PiecewiseExp g = build_hbt_pe(p.base);
  PiecewiseExp cross = g.shifted(p.delta_t_ns).scaled(0.25) +
                       g.shifted(-p.delta_t_ns).scaled(0.25) + g.scaled(0.5);
  if (pol == HomPolarization::cross) return cross;
  const double tau0_ns = p.base.tau0_ps * 1e-3;
  return cross *
         (PiecewiseExp::constant(1.0) + PiecewiseExp::exp_abs(-p.v, p.t_dip_ns, tau0_ns));
}

// ---------------------------------------------------------------------------
// shared fit helpers
// ---------------------------------------------------------------------------

struct HistData {
  std::vector<double> tau_ns;
  std::vector<double> g2;
  std::vector<double> weights;  // norm^2 / max(counts, 1)
};

HistData histogram_data(const Histogram& hist) {
  if (!hist.normalized()) throw DomainError("fit: histogram must be normalized first");
  HistData data;
  const std::size_t n = hist.size();
  data.tau_ns.resize(n);
  data.g2.resize(n);
  data.weights.resize(n);
  const double norm = hist.normalization;
  for (std::size_t i = 0; i < n; ++i) {
    data.tau_ns[i] = hist.tau_center_ps(i) * 1e-3;
    data.g2[i] = static_cast<double>(hist.counts[i]) / norm;
    data.weights[i] = norm * norm / std::max<double>(static_cast<double>(hist.counts[i]), 1.0);
  }
  return data;
}

std::vector<double> box_smooth(const std::vector<double>& y, std::size_t half) {
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t lo = i > half ? i - half : 0;
    const std::size_t hi = std::min(i + half + 1, y.size());
    double acc = 0.0;
    for (std::size_t j = lo; j < hi; ++j) acc += y[j];
    out[i] = acc / static_cast<double>(hi - lo);
  }
  return out;
}

// numeric gradient of a scalar function of the parameter vector
std::vector<double> scalar_gradient(const std::function<double(std::span<const double>)>& f,
                                    std::span<const double> p) {
  std::vector<double> grad(p.size(), 0.0);
  std::vector<double> work(p.begin(), p.end());
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double h = 6e-6 * std::max(std::abs(p[j]), 1e-3);
    const double saved = work[j];
    work[j] = saved + h;
    const double fp = f(work);
    work[j] = saved - h;
    const double fm = f(work);
    work[j] = saved;
    grad[j] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double quadratic_form(std::span<const double> grad, const FitResult& fit) {
  double acc = 0.0;
  const std::size_t n = fit.names.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) acc += grad[i] * fit.cov(i, j) * grad[j];
  return acc;
}

// width composition that tolerates the small negative excursions of
// finite-difference probing around a boundary fit
double safe_voigt_fwhm(double gamma_hom, double gamma_inhom) {
  const double fl = std::max(gamma_hom, 0.0);
  const double fg = std::max(gamma_inhom, 0.0);
  if (fl == 0.0 && fg == 0.0) return 0.0;
  return voigt_fwhm(fl, fg);
}

void permute_params(FitResult& fit, const std::vector<std::size_t>& order,
                    const std::vector<std::size_t>& slots) {
  // reorder values/sigmas at the given slots; covariance rows/cols follow
  const std::size_t n = fit.names.size();
  std::vector<std::size_t> map(n);
  std::iota(map.begin(), map.end(), 0);
  for (std::size_t k = 0; k < slots.size(); ++k) map[slots[k]] = slots[order[k]];
  std::vector<double> values(n), sigmas(n), cov(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = fit.values[map[i]];
    sigmas[i] = fit.sigmas[map[i]];
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cov[i * n + j] = fit.covariance[map[i] * n + map[j]];
  fit.values = std::move(values);
  fit.sigmas = std::move(sigmas);
  fit.covariance = std::move(cov);
}

}  // namespace

// ---------------------------------------------------------------------------
// model functions
// ---------------------------------------------------------------------------

HbtFitParams canonicalized(HbtFitParams p) {
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    if (p.t_c_ns[i] != p.t_c_ns[j]) return p.t_c_ns[i] < p.t_c_ns[j];
    return p.c[i] < p.c[j];
  });
  HbtFitParams out = p;
  for (int k = 0; k < 3; ++k) {
    out.c[k] = p.c[order[k]];
    out.t_c_ns[k] = p.t_c_ns[order[k]];
  }
  return out;
}

double hbt_model(double tau_ps, const HbtFitParams& p) {
  const double u = std::abs(tau_ps - p.tau0_ps) * 1e-3;  // ns
  double g2 = p.a * (1.0 - p.b * std::exp(-u / p.t_b_ns));
  for (int i = 0; i < 3; ++i) g2 *= 1.0 + p.c[i] * std::exp(-u / p.t_c_ns[i]);
  return g2;
}

double hom_model(double tau_ps, const HomFitParams& p, HomPolarization pol) {
  const double dt_ps = p.delta_t_ns * 1e3;
  const double cross = 0.25 * (hbt_model(tau_ps - dt_ps, p.base) +
                               hbt_model(tau_ps + dt_ps, p.base) + 2.0 * hbt_model(tau_ps, p.base));
  if (pol == HomPolarization::cross) return cross;
  const double u = std::abs(tau_ps - p.base.tau0_ps) * 1e-3;
  return cross * (1.0 - p.v * std::exp(-u / p.t_dip_ns));
}

double hbt_model_convolved(double tau_ps, const HbtFitParams& p, double irf_fwhm_ps) {
  if (irf_fwhm_ps <= 0.0) return hbt_model(tau_ps, p);
  const double sigma_ns = gaussian_sigma_from_fwhm(irf_fwhm_ps) * 1e-3;
  return build_hbt_pe(p).conv_gauss(tau_ps * 1e-3, sigma_ns);
}

double hom_model_convolved(double tau_ps, const HomFitParams& p, HomPolarization pol,
                           double irf_fwhm_ps) {
  if (irf_fwhm_ps <= 0.0) return hom_model(tau_ps, p, pol);
  const double sigma_ns = gaussian_sigma_from_fwhm(irf_fwhm_ps) * 1e-3;
  return build_hom_pe(p, pol).conv_gauss(tau_ps * 1e-3, sigma_ns);
}

double tcspc_model(double t_ns, const TcspcFitParams& p) {
  if (t_ns < p.t0_ns) return p.background;
  const double u = t_ns - p.t0_ns;
  const double rise = 1.0 - std::exp(-u / p.tau_rise_ns);
  const double decay = p.a1 * std::exp(-u / p.tau1_ns) + p.a2 * std::exp(-u / p.tau2_ns);
  return p.background + rise * decay;
}

// ---------------------------------------------------------------------------
// HBT fit
// ---------------------------------------------------------------------------

HbtFit fit_hbt(const Histogram& hist, double irf_fwhm_ps) {
  if (irf_fwhm_ps < 0.0) throw DomainError("fit_hbt: IRF FWHM must be non-negative");
  const HistData data = histogram_data(hist);
  const std::size_t n = data.g2.size();
  const double sigma_ns = gaussian_sigma_from_fwhm(irf_fwhm_ps) * 1e-3;

  // deterministic initialization from the smoothed histogram
  const std::vector<double> smooth = box_smooth(data.g2, 4);
  const double span_ns = (data.tau_ns.back() - data.tau_ns.front()) * 0.5;

  double wing_sum = 0.0;
  std::size_t wing_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(data.tau_ns[i]) >= 0.8 * span_ns) {
      wing_sum += data.g2[i];
      ++wing_count;
    }
  }
  const double a0 = std::max(wing_sum / std::max<std::size_t>(wing_count, 1), 1e-3);

  const std::size_t i_min =
      static_cast<std::size_t>(std::min_element(smooth.begin(), smooth.end()) - smooth.begin());
  const double tau0_ns = data.tau_ns[i_min];
  const double dip_min = std::max(smooth[i_min], 0.0);

  const auto value_near = [&](double tau_ns) {
    const auto it = std::lower_bound(data.tau_ns.begin(), data.tau_ns.end(), tau_ns);
    const std::size_t idx = std::min<std::size_t>(
        static_cast<std::size_t>(it - data.tau_ns.begin()), n - 1);
    return smooth[idx];
  };
  const double plateau = std::max(value_near(tau0_ns + 2.0), dip_min + 1e-3);
  const double b0 = std::clamp(1.0 - dip_min / plateau, 0.05, 1.0);

  double t_b0 = 0.5;
  for (std::size_t i = i_min; i < n; ++i) {
    if (smooth[i] >= dip_min + 0.63 * (plateau - dip_min)) {
      t_b0 = std::clamp(data.tau_ns[i] - tau0_ns, 0.05, 5.0);
      break;
    }
  }

  std::array<double, 3> t_c0{span_ns / 64.0, span_ns / 16.0, span_ns / 4.0};
  std::array<double, 3> c0;
  for (int i = 0; i < 3; ++i)
    c0[i] = std::clamp(value_near(tau0_ns + t_c0[i]) / a0 - 1.0, 0.02, 5.0);

  std::vector<ParamSpec> specs{
      ParamSpec::bounded("a", a0, 1e-6, 1e6),
      ParamSpec::bounded("b", std::min(b0, 0.98), 0.0, 1.0),
      ParamSpec::bounded("tau0_ps", tau0_ns * 1e3, (tau0_ns - 3.0) * 1e3, (tau0_ns + 3.0) * 1e3),
      ParamSpec::bounded("t_b_ns", t_b0, 0.02, 20.0),
      ParamSpec::bounded("c1", c0[0], 0.0, 100.0),
      ParamSpec::bounded("c2", c0[1], 0.0, 100.0),
      ParamSpec::bounded("c3", c0[2], 0.0, 100.0),
      ParamSpec::bounded("t_c1_ns", t_c0[0], 0.3, 10.0 * span_ns),
      ParamSpec::bounded("t_c2_ns", t_c0[1], 0.3, 10.0 * span_ns),
      ParamSpec::bounded("t_c3_ns", t_c0[2], 0.3, 10.0 * span_ns),
  };

  const VectorModelFn model = [&data, sigma_ns](std::span<const double> p, std::span<double> out) {
    const HbtFitParams params = hbt_params_from(p);
    if (sigma_ns > 0.0) {
      const PiecewiseExp pe = build_hbt_pe(params);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = pe.conv_gauss(data.tau_ns[i], sigma_ns);
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = hbt_model(data.tau_ns[i] * 1e3, params);
    }
  };

  HbtFit result;
  result.fit = nlls_fit(model, data.g2, data.weights, specs);
  result.fit.model = "hbt";

  // canonical ordering of the bunching components
  {
    const HbtFitParams raw = hbt_params_from(result.fit.values);
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int i, int j) {
      if (raw.t_c_ns[i] != raw.t_c_ns[j]) return raw.t_c_ns[i] < raw.t_c_ns[j];
      return raw.c[i] < raw.c[j];
    });
    permute_params(result.fit, {static_cast<std::size_t>(order[0]), static_cast<std::size_t>(order[1]),
                                static_cast<std::size_t>(order[2])},
                   {4, 5, 6});
    permute_params(result.fit, {static_cast<std::size_t>(order[0]), static_cast<std::size_t>(order[1]),
                                static_cast<std::size_t>(order[2])},
                   {7, 8, 9});
  }
  result.params = hbt_params_from(result.fit.values);

  const auto raw0 = [&](std::span<const double> p) {
    const HbtFitParams params = hbt_params_from(p);
    if (sigma_ns <= 0.0) return hbt_model(params.tau0_ps, params);
    return build_hbt_pe(params).conv_gauss(params.tau0_ps * 1e-3, sigma_ns);
  };
  const auto decon0 = [&](std::span<const double> p) {
    const HbtFitParams params = hbt_params_from(p);
    return hbt_model(params.tau0_ps, params);
  };
  result.g2_raw0.value = raw0(result.fit.values);
  result.g2_decon0.value = decon0(result.fit.values);
  result.g2_raw0.sigma =
      std::sqrt(std::max(quadratic_form(scalar_gradient(raw0, result.fit.values), result.fit), 0.0));
  result.g2_decon0.sigma = std::sqrt(
      std::max(quadratic_form(scalar_gradient(decon0, result.fit.values), result.fit), 0.0));
  return result;
}

// ---------------------------------------------------------------------------
// HOM fit
// ---------------------------------------------------------------------------

namespace {

HomFitParams hom_params_from(std::span<const double> p, double delta_t_ns) {
  HomFitParams out;
  out.base = hbt_params_from(p.subspan(0, 10));
  out.delta_t_ns = delta_t_ns;
  out.v = p.size() > 10 ? p[10] : 0.0;
  out.t_dip_ns = p.size() > 11 ? p[11] : 1.0;
  return out;
}

}  // namespace

ValueWithSigma hom_visibility(double g2_par0, double g2_perp0, double sigma_par,
                              double sigma_perp) {
  // undefined when the denominator is consistent with zero; an exploded
  // sigma (degenerate fit directions) must not trigger this by itself
  const bool sigma_usable = sigma_perp > 0.0 && sigma_perp < 1.0;
  if (!(g2_perp0 > 1e-9) || (sigma_usable && g2_perp0 <= 3.0 * sigma_perp))
    throw DomainError("hom_visibility: g2_perp(0) is consistent with zero; visibility undefined");
  ValueWithSigma out;
  out.value = 1.0 - g2_par0 / g2_perp0;
  const double d_par = sigma_par / g2_perp0;
  const double d_perp = g2_par0 * sigma_perp / (g2_perp0 * g2_perp0);
  out.sigma = std::sqrt(d_par * d_par + d_perp * d_perp);
  return out;
}

HomFit fit_hom(const Histogram& hist_co, const Histogram& hist_cross, double irf_fwhm_ps,
               double delta_t_ns, bool tie_dip_to_tb) {
  if (hist_co.bin_width_ps != hist_cross.bin_width_ps ||
      hist_co.tau_min_ps != hist_cross.tau_min_ps || hist_co.size() != hist_cross.size())
    throw DomainError("fit_hom: co/cross histograms must share the same tau grid");
  if (!(delta_t_ns > 0.0)) throw DomainError("fit_hom: delta_t must be positive");
  {
    const HistData cross_data = histogram_data(hist_cross);
    const HistData co_data = histogram_data(hist_co);
    const std::size_t n = cross_data.g2.size();
    const double sigma_ns = gaussian_sigma_from_fwhm(irf_fwhm_ps) * 1e-3;
    const double span_ns = (cross_data.tau_ns.back() - cross_data.tau_ns.front()) * 0.5;

    // --- cross fit: full base parameter set, delay fixed
    const std::vector<double> smooth = box_smooth(cross_data.g2, 4);
    double wing_sum = 0.0;
    std::size_t wing_count = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(cross_data.tau_ns[i]) >= 0.8 * span_ns) {
        wing_sum += cross_data.g2[i];
        ++wing_count;
      }
    const double a0 = std::max(wing_sum / std::max<std::size_t>(wing_count, 1), 1e-3);

    // central dip: search inside |tau| < delta_t/2
    std::size_t i_min = n / 2;
    double best = kInf;
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(cross_data.tau_ns[i]) < 0.5 * delta_t_ns && smooth[i] < best) {
        best = smooth[i];
        i_min = i;
      }
    const double tau0_ns = cross_data.tau_ns[i_min];
    const double dip_min = std::max(smooth[i_min], 0.0);
    const auto value_near = [&](double tau) {
      const auto it = std::lower_bound(cross_data.tau_ns.begin(), cross_data.tau_ns.end(), tau);
      return smooth[std::min<std::size_t>(static_cast<std::size_t>(it - cross_data.tau_ns.begin()),
                                          n - 1)];
    };
    const double plateau = std::max(value_near(tau0_ns + 0.4 * delta_t_ns), dip_min + 1e-3);
    const double b0 = std::clamp(2.0 * (1.0 - dip_min / plateau), 0.05, 0.98);
    double t_b0 = 0.5;
    for (std::size_t i = i_min; i < n; ++i)
      if (smooth[i] >= dip_min + 0.63 * (plateau - dip_min)) {
        t_b0 = std::clamp(cross_data.tau_ns[i] - tau0_ns, 0.05, 5.0);
        break;
      }
    std::array<double, 3> t_c0{span_ns / 64.0, span_ns / 16.0, span_ns / 4.0};
    std::array<double, 3> c0;
    for (int i = 0; i < 3; ++i)
      c0[i] = std::clamp(value_near(tau0_ns + t_c0[i]) / a0 - 1.0, 0.02, 5.0);

    std::vector<ParamSpec> cross_specs{
        ParamSpec::bounded("a", a0, 1e-6, 1e6),
        ParamSpec::bounded("b", std::min(b0, 0.98), 0.0, 1.0),
        ParamSpec::bounded("tau0_ps", tau0_ns * 1e3, (tau0_ns - 3.0) * 1e3, (tau0_ns + 3.0) * 1e3),
        ParamSpec::bounded("t_b_ns", t_b0, 0.02, 20.0),
        ParamSpec::bounded("c1", c0[0], 0.0, 100.0),
        ParamSpec::bounded("c2", c0[1], 0.0, 100.0),
        ParamSpec::bounded("c3", c0[2], 0.0, 100.0),
        ParamSpec::bounded("t_c1_ns", t_c0[0], 0.3, 10.0 * span_ns),
        ParamSpec::bounded("t_c2_ns", t_c0[1], 0.3, 10.0 * span_ns),
        ParamSpec::bounded("t_c3_ns", t_c0[2], 0.3, 10.0 * span_ns),
    };

    const VectorModelFn cross_model = [&cross_data, sigma_ns, delta_t_ns](
                                          std::span<const double> p, std::span<double> out) {
      const HomFitParams params = hom_params_from(p, delta_t_ns);
      const PiecewiseExp pe = build_hom_pe(params, HomPolarization::cross);
      if (sigma_ns > 0.0)
        for (std::size_t i = 0; i < out.size(); ++i)
          out[i] = pe.conv_gauss(cross_data.tau_ns[i], sigma_ns);
      else
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = pe.eval(cross_data.tau_ns[i]);
    };

    HomFit result;
    // stage 1: no bunching; stage 2 releases the bunching components and is
    // kept only when they are statistically significant
    std::vector<ParamSpec> stage1 = cross_specs;
    for (std::size_t i = 4; i <= 6; ++i) stage1[i] = ParamSpec::fixed_param(stage1[i].name, 0.0);
    for (std::size_t i = 7; i <= 9; ++i)
      stage1[i] = ParamSpec::fixed_param(stage1[i].name, stage1[i].init);
    FitResult plain = nlls_fit(cross_model, cross_data.g2, cross_data.weights, stage1);
    std::vector<ParamSpec> stage2 = cross_specs;
    for (std::size_t i = 0; i < 4; ++i) stage2[i].init = plain.values[i];
    FitResult bunched;
    bool use_bunched = false;
    try {
      bunched = nlls_fit(cross_model, cross_data.g2, cross_data.weights, stage2);
      bool significant = bunched.converged;
      for (int i = 4; i <= 6 && significant; ++i)
        significant = bunched.values[static_cast<std::size_t>(i)] >
                      bunched.sigmas[static_cast<std::size_t>(i)];
      use_bunched = significant && bunched.chi2_red < plain.chi2_red;
    } catch (const Error&) {
      use_bunched = false;
    }
    result.fit_cross = use_bunched ? bunched : plain;
    if (!use_bunched)
      result.fit_cross.notes.push_back("bunching components insignificant; held at zero");
    result.fit_cross.model = "hom_cross";

    // --- co fit: base fixed at the cross solution, v and t_dip free
    const std::vector<double>& base = result.fit_cross.values;
    const double t_b_fit = base[3];
    const std::vector<double> co_smooth = box_smooth(co_data.g2, 4);
    double co_min = kInf;
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(co_data.tau_ns[i] - tau0_ns) < 0.5 * delta_t_ns)
        co_min = std::min(co_min, co_smooth[i]);
    const double v0 = std::clamp(1.0 - co_min / std::max(dip_min, 1e-6), 0.1, 0.99);

    std::vector<ParamSpec> co_specs;
    for (std::size_t i = 0; i < 10; ++i)
      co_specs.push_back(ParamSpec::fixed_param(result.fit_cross.names[i], base[i]));
    co_specs.push_back(ParamSpec::bounded("v", v0, 0.0, 1.0));
    if (tie_dip_to_tb)
      co_specs.push_back(ParamSpec::fixed_param("t_dip_ns", t_b_fit));
    else
      co_specs.push_back(ParamSpec::bounded("t_dip_ns", t_b_fit, 0.02, 20.0));

    const VectorModelFn co_model = [&co_data, sigma_ns, delta_t_ns](std::span<const double> p,
                                                                    std::span<double> out) {
      const HomFitParams params = hom_params_from(p, delta_t_ns);
      const PiecewiseExp pe = build_hom_pe(params, HomPolarization::co);
      if (sigma_ns > 0.0)
        for (std::size_t i = 0; i < out.size(); ++i)
          out[i] = pe.conv_gauss(co_data.tau_ns[i], sigma_ns);
      else
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = pe.eval(co_data.tau_ns[i]);
    };

    result.fit_co = nlls_fit(co_model, co_data.g2, co_data.weights, co_specs);
    result.fit_co.model = "hom_co";
    result.params = hom_params_from(result.fit_co.values, delta_t_ns);
    result.dip_full_width_ns = 2.0 * result.params.t_dip_ns;

    // --- visibility with bunching zeroed, raw (convolved) and deconvolved
    const auto zero_c = [](HomFitParams p) {
      p.base.c = {0.0, 0.0, 0.0};
      return p;
    };
    const auto eval_zero = [&](const HomFitParams& p, HomPolarization pol, bool convolved) {
      const HomFitParams pz = zero_c(p);
      const double tau0 = pz.base.tau0_ps * 1e-3;
      if (!convolved || sigma_ns <= 0.0) return hom_model(pz.base.tau0_ps, pz, pol);
      return build_hom_pe(pz, pol).conv_gauss(tau0, sigma_ns);
    };

    // scalar functions of the cross / co parameter vectors for propagation
    const auto perp_fn = [&](bool convolved) {
      return [&, convolved](std::span<const double> p) {
        return eval_zero(hom_params_from(p, delta_t_ns), HomPolarization::cross, convolved);
      };
    };
    const auto par_fn = [&](bool convolved) {
      return [&, convolved](std::span<const double> p) {
        return eval_zero(hom_params_from(p, delta_t_ns), HomPolarization::co, convolved);
      };
    };

    for (const bool convolved : {true, false}) {
      const auto fperp = perp_fn(convolved);
      const auto fpar = par_fn(convolved);
      ValueWithSigma perp{fperp(result.fit_cross.values),
                          std::sqrt(std::max(
                              quadratic_form(scalar_gradient(fperp, result.fit_cross.values),
                                             result.fit_cross),
                              0.0))};
      // g2_par depends on base (cross fit) and on (v, t_dip) (co fit)
      const double par_value = fpar(result.fit_co.values);
      const double var_from_co =
          quadratic_form(scalar_gradient(fpar, result.fit_co.values), result.fit_co);
      // base contribution: vary the base inside the co parameter vector
      std::vector<double> joint(result.fit_co.values);
      const auto fpar_base = [&](std::span<const double> pbase) {
        std::vector<double> p(joint);
        for (std::size_t i = 0; i < 10; ++i) p[i] = pbase[i];
        return fpar(p);
      };
      const double var_from_cross = quadratic_form(
          scalar_gradient(fpar_base, std::span<const double>(base.data(), 10)), result.fit_cross);
      ValueWithSigma par{par_value, std::sqrt(std::max(var_from_co + var_from_cross, 0.0))};

      const ValueWithSigma v = hom_visibility(par.value, perp.value, par.sigma, perp.sigma);
      if (convolved) {
        result.g2_par0_raw = par;
        result.g2_perp0_raw = perp;
        result.v_raw = v;
      } else {
        result.g2_par0_decon = par;
        result.g2_perp0_decon = perp;
        result.v_decon = v;
      }
    }
    return result;
  }
}

// ---------------------------------------------------------------------------
// TCSPC fit
// ---------------------------------------------------------------------------

namespace {

TcspcFitParams tcspc_params_from(std::span<const double> p) {
  TcspcFitParams out;
  out.t0_ns = p[0];
  out.tau_rise_ns = p[1];
  out.a1 = p[2];
  out.a2 = p[3];
  out.tau1_ns = p[4];
  out.tau2_ns = p[5];
  out.background = p[6];
  return out;
}

FitResult run_tcspc_fit(const XySeries& decay, bool mono, const TcspcFitParams& init) {
  const std::size_t n = decay.x.size();
  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) weights[i] = 1.0 / std::max(decay.y[i], 1.0);

  const double t_span = decay.x.back() - decay.x.front();
  std::vector<ParamSpec> specs{
      ParamSpec::bounded("t0_ns", init.t0_ns, decay.x.front() - 0.2 * t_span,
                         decay.x.front() + 0.8 * t_span),
      ParamSpec::bounded("tau_rise_ns", init.tau_rise_ns, 1e-3, t_span),
      ParamSpec::bounded("a1", init.a1, 0.0, 1e12),
      mono ? ParamSpec::fixed_param("a2", 0.0) : ParamSpec::bounded("a2", init.a2, 0.0, 1e12),
      ParamSpec::bounded("tau1_ns", init.tau1_ns, 1e-3, 10.0 * t_span),
      mono ? ParamSpec::fixed_param("tau2_ns", init.tau2_ns)
           : ParamSpec::bounded("tau2_ns", init.tau2_ns, 1e-3, 10.0 * t_span),
      ParamSpec::bounded("background", init.background, 0.0, 1e12),
  };

  const ModelFn model = [](double t, std::span<const double> p) {
    return tcspc_model(t, tcspc_params_from(p));
  };
  FitResult fit = nlls_fit(model, decay.x, decay.y, weights, specs);
  fit.model = mono ? "tcspc_mono" : "tcspc";
  return fit;
}

}  // namespace

TcspcFit fit_tcspc(const XySeries& decay) {
  const std::size_t n = decay.x.size();
  if (n < 10) throw DomainError("fit_tcspc: need at least 10 points");
  if (!std::is_sorted(decay.x.begin(), decay.x.end()))
    throw DomainError("fit_tcspc: time axis must be sorted");

  // deterministic initialization
  const std::size_t i_peak = static_cast<std::size_t>(
      std::max_element(decay.y.begin(), decay.y.end()) - decay.y.begin());
  const double y_peak = decay.y[i_peak];
  double bg0 = 0.0;
  {
    const std::size_t n_pre = std::max<std::size_t>(n / 20, 2);
    for (std::size_t i = 0; i < n_pre; ++i) bg0 += decay.y[i];
    bg0 /= static_cast<double>(n_pre);
  }
  std::size_t i_rise = 0;
  for (std::size_t i = 0; i <= i_peak; ++i)
    if (decay.y[i] > bg0 + 0.2 * (y_peak - bg0)) {
      i_rise = i;
      break;
    }
  const double t0_0 = decay.x[i_rise > 0 ? i_rise - 1 : 0];
  const double tau_rise0 = std::max(0.5 * (decay.x[i_peak] - t0_0), 0.05);

  // fast-decay slope between the peak and one decade down
  double tau1_0 = 1.0;
  {
    std::size_t i_end = i_peak;
    for (std::size_t i = i_peak; i < n; ++i) {
      if (decay.y[i] - bg0 < 0.1 * (y_peak - bg0)) break;
      i_end = i;
    }
    if (i_end > i_peak) {
      const double dy = std::log(std::max(y_peak - bg0, 1.0)) -
                        std::log(std::max(decay.y[i_end] - bg0, 1.0));
      if (dy > 0.0) tau1_0 = std::max((decay.x[i_end] - decay.x[i_peak]) / dy, 0.05);
    }
  }

  TcspcFitParams init;
  init.t0_ns = t0_0;
  init.tau_rise_ns = tau_rise0;
  init.a1 = std::max(y_peak - bg0, 1.0) * 1.2;
  init.a2 = init.a1 / 50.0;
  init.tau1_ns = tau1_0;
  init.tau2_ns = 4.0 * tau1_0;
  init.background = std::max(bg0, 1e-3 * std::max(y_peak, 1.0));

  TcspcFit result;

  // stage 1: mono-exponential anchor fit (stable and nearly convex from the
  // heuristics); stage 2 releases the second component from that solution
  const FitResult mono = run_tcspc_fit(decay, true, init);

  // stage 2 from two deterministic starts: the extra component slower than
  // the mono anchor, or the mono anchor itself as the slow tail with a new
  // fast component (the mono fit tracks the tail when the fast part is
  // bright but short-lived)
  TcspcFitParams slow_start = tcspc_params_from(mono.values);
  slow_start.a2 = std::max(slow_start.a1 / 100.0, 1e-6);
  slow_start.tau2_ns = 4.0 * slow_start.tau1_ns;
  TcspcFitParams fast_start = tcspc_params_from(mono.values);
  fast_start.tau2_ns = fast_start.tau1_ns;
  fast_start.a2 = fast_start.a1 / 10.0;
  fast_start.tau1_ns = fast_start.tau1_ns / 4.0;

  bool use_double = false;
  FitResult full;
  for (const TcspcFitParams& start : {fast_start, slow_start}) {
    FitResult candidate;
    try {
      candidate = run_tcspc_fit(decay, false, start);
    } catch (const Error&) {
      continue;
    }
    if (!candidate.converged) continue;
    const std::size_t i_t1 = candidate.index("tau1_ns");
    const std::size_t i_t2 = candidate.index("tau2_ns");
    const std::size_t i_a1 = candidate.index("a1");
    const std::size_t i_a2 = candidate.index("a2");
    if (candidate.values[i_t1] > candidate.values[i_t2]) {
      permute_params(candidate, {1, 0}, {i_t1, i_t2});
      permute_params(candidate, {1, 0}, {i_a1, i_a2});
    }
    // keep a double fit only when both components are identified: the
    // ratio-error criterion (sigma(a2) >= a2) is the documented fallback
    const double a1 = candidate.value("a1");
    const double a2 = candidate.value("a2");
    const bool identified = a1 > candidate.sigma("a1") && a2 > candidate.sigma("a2") &&
                            a2 > 1e-6 * a1 &&
                            candidate.value("tau2_ns") > 1.05 * candidate.value("tau1_ns") &&
                            candidate.chi2_red < mono.chi2_red;
    if (identified && (!use_double || candidate.chi2_red < full.chi2_red)) {
      full = candidate;
      use_double = true;
    }
  }
  if (use_double) {
    result.fit = full;
  } else {
    result.fit = mono;
    result.fit.notes.push_back("second decay component unidentifiable; mono-exponential fit");
    result.mono_fallback = true;
  }

  result.params = tcspc_params_from(result.fit.values);
  const FourierLimit limit = fourier_limit(result.params.tau1_ns);
  result.summary.t1_ns = result.params.tau1_ns;
  result.summary.t2_ft_ns = limit.t2_ft_ns;
  result.summary.gamma_ft_ghz = limit.gamma_ft_ghz;
  result.summary.gamma_fwhm_ghz = limit.gamma_ft_ghz;
  result.summary.gamma_hom_ghz = limit.gamma_ft_ghz;
  result.summary.gamma_inhom_ghz = 0.0;
  result.summary.t2_ns = limit.t2_ft_ns;
  return result;
}

// ---------------------------------------------------------------------------
// Voigt scan fit
// ---------------------------------------------------------------------------

ScanFit fit_scan(const XySeries& scan) {
  const std::size_t n = scan.x.size();
  if (n < 15) throw DomainError("fit_scan: need at least 15 points");

  const std::vector<double> smooth = box_smooth(scan.y, 2);
  const std::size_t i_peak = static_cast<std::size_t>(
      std::max_element(smooth.begin(), smooth.end()) - smooth.begin());
  const double y_max = smooth[i_peak];
  const double y_min = *std::min_element(smooth.begin(), smooth.end());
  const double center0 = scan.x[i_peak];

  // half-max crossings for a width estimate
  const double half = y_min + 0.5 * (y_max - y_min);
  double x_lo = scan.x.front(), x_hi = scan.x.back();
  for (std::size_t i = i_peak; i-- > 0;)
    if (smooth[i] < half) {
      x_lo = scan.x[i];
      break;
    }
  for (std::size_t i = i_peak; i < n; ++i)
    if (smooth[i] < half) {
      x_hi = scan.x[i];
      break;
    }
  const double fwhm0 = std::max(x_hi - x_lo, (scan.x.back() - scan.x.front()) / 20.0);

  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) weights[i] = 1.0 / std::max(scan.y[i], 1.0);

  std::vector<ParamSpec> specs{
      ParamSpec::bounded("center_ghz", center0, scan.x.front(), scan.x.back()),
      ParamSpec::bounded("amplitude", std::max(y_max - y_min, 1.0), 0.0, 1e12),
      ParamSpec::bounded("offset", std::max(y_min, 1e-3 * (y_max - y_min) + 1e-9), 0.0, 1e12),
      ParamSpec::bounded("gamma_hom_ghz", 0.3 * fwhm0, 0.0, 1e4),
      ParamSpec::bounded("gamma_inhom_ghz", 0.8 * fwhm0, 0.0, 1e4),
  };

  const ModelFn model = [](double x, std::span<const double> p) {
    VoigtParams vp;
    vp.center_ghz = p[0];
    vp.amplitude = p[1];
    vp.offset = p[2];
    vp.gamma_hom_ghz = std::max(p[3], 0.0);
    vp.gamma_inhom_ghz = std::max(p[4], 1e-12);
    return voigt_eval(x, vp);
  };

  ScanFit result;
  result.fit = nlls_fit(model, scan.x, scan.y, weights, specs);
  result.fit.model = "scan";
  result.params.center_ghz = result.fit.value("center_ghz");
  result.params.amplitude = result.fit.value("amplitude");
  result.params.offset = result.fit.value("offset");
  result.params.gamma_hom_ghz = result.fit.value("gamma_hom_ghz");
  result.params.gamma_inhom_ghz = result.fit.value("gamma_inhom_ghz");

  const auto fwhm_fn = [](std::span<const double> p) { return safe_voigt_fwhm(p[3], p[4]); };
  result.fwhm_ghz.value = fwhm_fn(result.fit.values);
  result.fwhm_ghz.sigma = std::sqrt(
      std::max(quadratic_form(scalar_gradient(fwhm_fn, result.fit.values), result.fit), 0.0));
  return result;
}

// ---------------------------------------------------------------------------
// MI visibility fit
// ---------------------------------------------------------------------------

MiFit fit_mi(const XySeries& visibility) {
  const std::size_t n = visibility.x.size();
  if (n < 8) throw DomainError("fit_mi: need at least 8 points");
  const double y_tail = *std::min_element(visibility.y.begin(), visibility.y.end());
  if (y_tail > 0.2)
    throw DomainError("fit_mi: delays must cover the visibility decay below 0.2");

  const double amp0 = std::min(*std::max_element(visibility.y.begin(), visibility.y.end()), 1.0);
  // half-decay delay for a width scale
  double tau_half_ns = std::abs(visibility.x.back()) * 1e-3 * 0.2;
  for (std::size_t i = 0; i < n; ++i)
    if (visibility.y[i] < 0.5 * amp0) {
      tau_half_ns = std::max(std::abs(visibility.x[i]) * 1e-3, 1e-4);
      break;
    }

  std::vector<double> weights(n, 1.0);
  std::vector<ParamSpec> specs{
      ParamSpec::bounded("amplitude", amp0, 0.0, 1.5),
      ParamSpec::bounded("gamma_hom_ghz", 0.5 * kLn2 / (kPi * tau_half_ns), 0.0, 1e4),
      ParamSpec::bounded("gamma_inhom_ghz", kLn2 / (kPi * tau_half_ns), 0.0, 1e4),
  };

  const ModelFn model = [](double tau_ps, std::span<const double> p) {
    VoigtParams vp;
    vp.gamma_hom_ghz = std::max(p[1], 0.0);
    vp.gamma_inhom_ghz = std::max(p[2], 0.0);
    if (vp.gamma_hom_ghz == 0.0 && vp.gamma_inhom_ghz == 0.0) return p[0];
    return p[0] * g1_voigt(tau_ps, vp);
  };

  MiFit result;
  result.fit = nlls_fit(model, visibility.x, visibility.y, weights, specs);
  result.fit.model = "mi";
  result.params.amplitude = result.fit.value("amplitude");
  result.params.gamma_hom_ghz = result.fit.value("gamma_hom_ghz");
  result.params.gamma_inhom_ghz = result.fit.value("gamma_inhom_ghz");

  const auto fwhm_fn = [](std::span<const double> p) { return safe_voigt_fwhm(p[1], p[2]); };
  result.fwhm_ghz.value = fwhm_fn(result.fit.values);
  result.fwhm_ghz.sigma = std::sqrt(
      std::max(quadratic_form(scalar_gradient(fwhm_fn, result.fit.values), result.fit), 0.0));

  const auto t2_fn = [](std::span<const double> p) {
    VoigtParams vp;
    vp.gamma_hom_ghz = std::max(p[1], 1e-12);
    vp.gamma_inhom_ghz = std::max(p[2], 0.0);
    return coherence_time_ns(G1Curve::closed_form(vp));
  };
  result.t2_ns.value = t2_fn(result.fit.values);
  result.t2_ns.sigma = std::sqrt(
      std::max(quadratic_form(scalar_gradient(t2_fn, result.fit.values), result.fit), 0.0));
  return result;
}

}  // namespace qcw
