#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "t1noise/errors.hpp"
#include "fit_internal.hpp"
#include "t1noise/fitting.hpp"

namespace t1noise::fit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinTime = 1e-12;

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

LineFit least_squares_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  LineFit l;
  l.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  l.intercept = my - l.slope * mx;
  return l;
}

FitResult not_converged(std::vector<std::string> names, const VectorXd& p, std::string why) {
  FitResult f;
  f.names = std::move(names);
  f.parameters = p;
  const auto n = p.size();
  f.covariance = MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
  f.standard_errors = VectorXd::Constant(n, kInf);
  for (Eigen::Index i = 0; i < n; ++i) f.confidence_intervals.emplace_back(-kInf, kInf);
  f.message = std::move(why);
  return f;
}

}  // namespace

double stretched_exponential(double t, double eps0, double t1, double p) {
  return eps0 * std::exp(-std::pow(t / t1, p));
}

CurveModel stretched_exponential_model() {
  CurveModel m;
  m.names = {"eps0", "T1", "p"};
  m.value = [](double t, const VectorXd& q) { return stretched_exponential(t, q[0], q[1], q[2]); };
  m.gradient = [](double t, const VectorXd& q, Eigen::Ref<VectorXd> g) {
    const double eps0 = q[0], t1 = q[1], p = q[2];
    if (t <= 0.0) {
      g << 1.0, 0.0, 0.0;
      return;
    }
    const double ratio = t / t1;
    const double z = std::pow(ratio, p);
    const double e = std::exp(-z);
    g << e, eps0 * e * z * p / t1, -eps0 * e * z * std::log(ratio);
  };
  return m;
}

FitResult fit_stretched_exponential(const DecayCurve& curve, std::optional<double> fix_p) {
  curve.validate();
  if (curve.size() < 4) throw ValidationError("stretched-exponential fit needs >= 4 points");
  for (double s : curve.signals) {
    if (!(s > 0.0)) throw ValidationError("stretched-exponential fit needs positive signals");
  }
  if (fix_p && !(*fix_p > 0.0 && *fix_p <= kMaxStretch)) {
    throw DomainError("fixed stretch must lie in (0, 1.05]");
  }

  std::vector<double> logs(curve.size());
  std::transform(curve.signals.begin(), curve.signals.end(), logs.begin(),
                 [](double s) { return std::log(s); });
  const LineFit line = least_squares_line(curve.times_s, logs);
  const CurveModel full = stretched_exponential_model();
  VectorXd guess(3);
  guess << std::exp(line.intercept), line.slope < 0.0 ? -1.0 / line.slope : 1.0,
      fix_p.value_or(1.0);
  if (!(line.slope < 0.0)) return not_converged(full.names, guess, "signal does not decay");

  const double span = curve.times_s.back() - curve.times_s.front();
  FitResult result;
  if (fix_p) {
    CurveModel reduced;
    reduced.names = {"eps0", "T1"};
    const double p = *fix_p;
    reduced.value = [p](double t, const VectorXd& q) {
      return stretched_exponential(t, q[0], q[1], p);
    };
    reduced.gradient = [p, &full](double t, const VectorXd& q, Eigen::Ref<VectorXd> g) {
      VectorXd q3(3), g3(3);
      q3 << q[0], q[1], p;
      full.gradient(t, q3, g3);
      g = g3.head(2);
    };
    Bounds b{VectorXd(2), VectorXd(2)};
    b.lower << -kInf, kMinTime;
    b.upper << kInf, kInf;
    const FitResult r2 =
        fit_curve(reduced, curve.times_s, curve.signals, curve.sigma, guess.head(2), b);
    result = r2;
    result.names = full.names;
    result.parameters.conservativeResize(3);
    result.parameters[2] = p;
    result.standard_errors.conservativeResize(3);
    result.standard_errors[2] = 0.0;
    result.confidence_intervals.emplace_back(p, p);
    result.covariance = MatrixXd::Zero(3, 3);
    result.covariance.topLeftCorner(2, 2) = r2.covariance;
  } else {
    Bounds b{VectorXd(3), VectorXd(3)};
    b.lower << -kInf, kMinTime, 1e-3;
    b.upper << kInf, kInf, kMaxStretch;
    result = fit_curve(full, curve.times_s, curve.signals, curve.sigma, guess, b);
  }
  // A time constant far beyond the sampled window means no decay was resolved.
  if (result.parameters[1] > 1e4 * std::max(span, kMinTime)) {
    result.converged = false;
    result.message = "decay not resolved within the sampled window";
  }
  return result;
}

// ---- Buildup ----------------------------------------------------------------

CurveModel mono_buildup_model() {
  CurveModel m;
  m.names = {"A", "tau"};
  m.value = [](double t, const VectorXd& q) { return q[0] * -std::expm1(-t / q[1]); };
  m.gradient = [](double t, const VectorXd& q, Eigen::Ref<VectorXd> g) {
    const double e = std::exp(-t / q[1]);
    g << 1.0 - e, -q[0] * e * t / (q[1] * q[1]);
  };
  return m;
}

CurveModel bi_buildup_model() {
  CurveModel m;
  m.names = {"A1", "tau1", "A2", "tau2"};
  m.value = [](double t, const VectorXd& q) {
    return q[0] * -std::expm1(-t / q[1]) + q[2] * -std::expm1(-t / q[3]);
  };
  m.gradient = [](double t, const VectorXd& q, Eigen::Ref<VectorXd> g) {
    const double e1 = std::exp(-t / q[1]);
    const double e2 = std::exp(-t / q[3]);
    g << 1.0 - e1, -q[0] * e1 * t / (q[1] * q[1]), 1.0 - e2, -q[2] * e2 * t / (q[3] * q[3]);
  };
  return m;
}

double aicc(double chi2_or_rss, int n, int k, bool weighted) {
  if (n - k - 1 <= 0) return kInf;
  const double fit_term =
      weighted ? chi2_or_rss : n * std::log(std::max(chi2_or_rss, 1e-300) / n);
  return fit_term + 2.0 * k + 2.0 * k * (k + 1.0) / (n - k - 1.0);
}

namespace {

bool relative_error_wide(const FitResult& f, std::size_t i) {
  const double v = std::abs(f.parameters[static_cast<Eigen::Index>(i)]);
  const double se = f.standard_errors[static_cast<Eigen::Index>(i)];
  return !std::isfinite(se) || se > 0.5 * v;
}

FitResult fit_mono(const DecayCurve& c) {
  const double last = c.signals.back();
  // Time at which the signal first reaches (1 - 1/e) of its last value.
  double tau = c.times_s.back();
  const double target = (1.0 - std::exp(-1.0)) * last;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if ((last > 0.0 && c.signals[i] >= target) || (last < 0.0 && c.signals[i] <= target)) {
      tau = std::max(c.times_s[i], kMinTime);
      break;
    }
  }
  VectorXd guess(2);
  guess << (last == 0.0 ? 1.0 : last), tau;
  Bounds b{VectorXd(2), VectorXd(2)};
  b.lower << -kInf, kMinTime;
  b.upper << kInf, kInf;
  return fit_curve(mono_buildup_model(), c.times_s, c.signals, c.sigma, guess, b);
}

FitResult fit_bi(const DecayCurve& c, const FitResult& mono) {
  VectorXd guess(4);
  const double a = mono.parameters[0], tau = mono.parameters[1];
  guess << 0.5 * a, tau / 3.0, 0.5 * a, 3.0 * tau;
  Bounds b{VectorXd(4), VectorXd(4)};
  b.lower << -kInf, kMinTime, -kInf, kMinTime;
  b.upper << kInf, kInf, kInf, kInf;
  FitResult f = fit_curve(bi_buildup_model(), c.times_s, c.signals, c.sigma, guess, b);
  if (f.parameters[1] > f.parameters[3]) {
    detail::permute(f, {2, 3, 0, 1});
    f.names = bi_buildup_model().names;
  }
  return f;
}

bool bi_degenerate(const FitResult& f) {
  const double a1 = std::abs(f.parameters[0]), a2 = std::abs(f.parameters[2]);
  const double t1 = f.parameters[1], t2 = f.parameters[3];
  return !f.converged || std::abs(t2 - t1) < 0.05 * t2 || std::min(a1, a2) < 1e-3 * (a1 + a2);
}

}  // namespace

BuildupFit fit_buildup(const DecayCurve& curve, BuildupModel model) {
  curve.validate();
  const int n = static_cast<int>(curve.size());
  if (n < 5) throw ValidationError("buildup fit needs >= 5 points");
  if (model == BuildupModel::bi && n < 7) throw ValidationError("bi-exponential fit needs >= 7 points");

  const bool weighted = !curve.sigma.empty();
  BuildupFit out;
  const FitResult mono = fit_mono(curve);
  out.aicc_mono = aicc(mono.residual_norm * mono.residual_norm, n, 2, weighted);

  bool use_bi = false;
  FitResult bi;
  if (model != BuildupModel::mono && n >= 7) {
    bi = fit_bi(curve, mono);
    out.aicc_bi = aicc(bi.residual_norm * bi.residual_norm, n, 4, weighted);
    if (bi_degenerate(bi)) {
      out.collapsed = true;
    } else {
      use_bi = model == BuildupModel::bi || *out.aicc_bi < *out.aicc_mono;
    }
  }

  if (use_bi) {
    out.fit = bi;
    out.selected = BuildupModel::bi;
    out.time_constants_s = {bi.parameters[1], bi.parameters[3]};
    out.wide_ci = relative_error_wide(bi, 1) || relative_error_wide(bi, 3);
  } else {
    out.fit = mono;
    out.selected = BuildupModel::mono;
    out.time_constants_s = {mono.parameters[1]};
    out.wide_ci = relative_error_wide(mono, 1);
  }
  return out;
}

}  // namespace t1noise::fit
