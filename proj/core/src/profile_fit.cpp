#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "fit_internal.hpp"
#include "t1noise/errors.hpp"
#include "t1noise/fitting.hpp"

namespace t1noise::fit {

namespace {

using Profile = relax::TsallianProfile;
constexpr int kP = Profile::kParameterCount;
constexpr double kInf = std::numeric_limits<double>::infinity();
const std::vector<std::string> kNames = {"narrow_c1", "narrow_c2", "narrow_q", "broad_c1",
                                         "broad_c2",  "broad_q",   "offset"};

std::array<double, kP> to_array(const VectorXd& v) {
  std::array<double, kP> a{};
  for (int i = 0; i < kP; ++i) a[static_cast<std::size_t>(i)] = v[i];
  return a;
}

std::vector<double> log_sigmas(const RelaxometryProfile& prof) {
  std::vector<double> s(prof.size(), 1.0);
  if (prof.rate_errors.empty()) return s;
  double min_pos = kInf;
  for (std::size_t i = 0; i < prof.size(); ++i) {
    const double e = prof.rate_errors[i] / (prof.rates_per_s[i] * std::numbers::ln10);
    if (e > 0.0) min_pos = std::min(min_pos, e);
    s[i] = e;
  }
  if (!std::isfinite(min_pos)) return std::vector<double>(prof.size(), 1.0);
  // Points reported without an error get the tightest weight in the set.
  for (double& v : s) {
    if (!(v > 0.0)) v = min_pos;
  }
  return s;
}

// Residuals over the free subset of the 7 profile parameters; fixed entries
// come from `base`.
Problem masked_problem(const RelaxometryProfile& prof, const std::vector<double>& sig,
                       const std::vector<int>& free, const VectorXd& base) {
  Problem pr;
  for (int k : free) pr.names.push_back(kNames[static_cast<std::size_t>(k)]);
  pr.residual_count = static_cast<Eigen::Index>(prof.size());
  pr.residuals = [&prof, &sig, free, base](const VectorXd& p, VectorXd& r, MatrixXd* jac) {
    VectorXd full = base;
    for (std::size_t k = 0; k < free.size(); ++k) full[free[k]] = p[static_cast<Eigen::Index>(k)];
    const Profile model = Profile::from_vector(to_array(full));
    for (std::size_t i = 0; i < prof.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double f = model.rate(prof.fields_t[i]);
      if (!(f > 0.0)) {
        r[row] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      r[row] = (std::log10(f) - std::log10(prof.rates_per_s[i])) / sig[i];
      if (jac) {
        const auto g = model.gradient(prof.fields_t[i]);
        const double scale = 1.0 / (f * std::numbers::ln10 * sig[i]);
        for (std::size_t k = 0; k < free.size(); ++k) {
          (*jac)(row, static_cast<Eigen::Index>(k)) = g[static_cast<std::size_t>(free[k])] * scale;
        }
      }
    }
  };
  return pr;
}

struct Seed {
  VectorXd params;
  double cost = kInf;
};

// Non-negative least squares for three columns by enumerating active sets.
bool nnls3(const MatrixXd& a, const VectorXd& b, VectorXd& x) {
  double best = kInf;
  bool any = false;
  for (int mask = 1; mask < 8; ++mask) {
    std::vector<Eigen::Index> cols;
    for (int c = 0; c < 3; ++c) {
      if (mask & (1 << c)) cols.push_back(c);
    }
    MatrixXd sub(a.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = a.col(cols[c]);
    const VectorXd s = sub.colPivHouseholderQr().solve(b);
    if (!s.allFinite() || (s.array() < 0.0).any()) continue;
    const double cost = (sub * s - b).squaredNorm();
    if (cost < best) {
      best = cost;
      x = VectorXd::Zero(3);
      for (std::size_t c = 0; c < cols.size(); ++c) x[cols[c]] = s[static_cast<Eigen::Index>(c)];
      any = true;
    }
  }
  return any;
}

// Widths from a logarithmic scan; amplitudes and offset from a linear solve
// in relative units for each width pair.
Seed seed_from_width_scan(const RelaxometryProfile& prof, const std::vector<double>& sig,
                          const ProfileFitOptions& opt) {
  const double bmin = prof.fields_t.front(), bmax = prof.fields_t.back();
  const int k = std::max(opt.width_grid, 2);
  std::vector<double> widths(static_cast<std::size_t>(k));
  const double lo = std::log(bmin / 2.0), hi = std::log(bmax / 2.0);
  for (int i = 0; i < k; ++i) widths[static_cast<std::size_t>(i)] = std::exp(lo + (hi - lo) * i / (k - 1));

  const auto m = static_cast<Eigen::Index>(prof.size());
  VectorXd rhs = VectorXd::Ones(m);
  Seed best;
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      const double wa = widths[static_cast<std::size_t>(i)], wb = widths[static_cast<std::size_t>(j)];
      MatrixXd a(m, 3);
      for (Eigen::Index r = 0; r < m; ++r) {
        const auto ri = static_cast<std::size_t>(r);
        const double inv = 1.0 / prof.rates_per_s[ri];
        a(r, 0) = relax::tsallian_shape(prof.fields_t[ri] / wa, opt.initial_q) * inv;
        a(r, 1) = relax::tsallian_shape(prof.fields_t[ri] / wb, opt.initial_q) * inv;
        a(r, 2) = inv;
      }
      VectorXd x;
      if (!nnls3(a, rhs, x)) continue;
      VectorXd p(kP);
      p << x[0], wa, opt.initial_q, x[1], wb, opt.initial_q, x[2];
      const Profile model = Profile::from_vector(to_array(p));
      double cost = 0.0;
      for (std::size_t r = 0; r < prof.size(); ++r) {
        const double f = model.rate(prof.fields_t[r]);
        if (!(f > 0.0)) {
          cost = kInf;
          break;
        }
        const double d = (std::log10(f) - std::log10(prof.rates_per_s[r])) / sig[r];
        cost += d * d;
      }
      if (cost < best.cost) {
        best.cost = cost;
        best.params = p;
      }
    }
  }
  if (!std::isfinite(best.cost)) throw NumericalError("no admissible starting point for the profile fit");
  return best;
}

FitResult run_stage(const RelaxometryProfile& prof, const std::vector<double>& sig,
                    const std::vector<int>& free, const VectorXd& start, const Bounds& full_bounds) {
  const Problem pr = masked_problem(prof, sig, free, start);
  const auto n = static_cast<Eigen::Index>(free.size());
  VectorXd init(n);
  Bounds b{VectorXd(n), VectorXd(n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    const int f = free[static_cast<std::size_t>(k)];
    b.lower[k] = full_bounds.lower[f];
    b.upper[k] = full_bounds.upper[f];
    init[k] = std::clamp(start[f], b.lower[k], b.upper[k]);
  }
  return nlls_fit(pr, init, b);
}

}  // namespace

Problem profile_problem(const RelaxometryProfile& profile) {
  profile.validate();
  // The closure refers to the profile and sigmas; keep them alive with it.
  auto owned = std::make_shared<std::pair<RelaxometryProfile, std::vector<double>>>(
      profile, log_sigmas(profile));
  std::vector<int> all(kP);
  for (int i = 0; i < kP; ++i) all[static_cast<std::size_t>(i)] = i;
  Problem inner = masked_problem(owned->first, owned->second, all, VectorXd::Zero(kP));
  Problem out;
  out.names = inner.names;
  out.residual_count = inner.residual_count;
  out.residuals = [owned, fn = inner.residuals](const VectorXd& p, VectorXd& r, MatrixXd* j) {
    fn(p, r, j);
  };
  return out;
}

ProfileFit fit_relaxation_profile(const RelaxometryProfile& profile,
                                  const ProfileFitOptions& opt) {
  profile.validate();
  if (profile.size() < 9) throw ValidationError("profile fit needs >= 9 points");
  const double bmin = profile.fields_t.front(), bmax = profile.fields_t.back();
  if (bmax / bmin < 100.0) throw ValidationError("profile must span at least two decades of field");
  if (!(opt.q_min >= 1.0 && opt.q_max <= 2.0 && opt.q_min <= opt.initial_q &&
        opt.initial_q <= opt.q_max)) {
    throw ValidationError("invalid q bounds");
  }

  const auto sig = log_sigmas(profile);
  const double rmax = *std::max_element(profile.rates_per_s.begin(), profile.rates_per_s.end());

  Bounds bounds{VectorXd(kP), VectorXd(kP)};
  bounds.lower << 0.0, bmin * 1e-3, opt.q_min, 0.0, bmin * 1e-3, opt.q_min, 0.0;
  bounds.upper << kInf, bmax * 1e3, opt.q_max, kInf, bmax * 1e3, opt.q_max, kInf;

  Seed seed = seed_from_width_scan(profile, sig, opt);
  // Keep amplitudes off the bound so the optimizer can move them.
  for (int i : {0, 3}) seed.params[i] = std::max(seed.params[i], 1e-6 * rmax);

  // Stage 1 holds both shapes at the initial q; stage 2 frees everything.
  const FitResult stage1 = run_stage(profile, sig, {0, 1, 3, 4, 6}, seed.params, bounds);
  VectorXd start = seed.params;
  start[0] = stage1.parameters[0];
  start[1] = stage1.parameters[1];
  start[3] = stage1.parameters[2];
  start[4] = stage1.parameters[3];
  start[6] = stage1.parameters[4];
  FitResult fit = run_stage(profile, sig, {0, 1, 2, 3, 4, 5, 6}, start, bounds);
  fit.iterations += stage1.iterations;

  if (fit.parameters[4] < fit.parameters[1]) {
    detail::permute(fit, {3, 4, 5, 0, 1, 2, 6});
    fit.names = kNames;
  }

  ProfileFit out;
  out.profile = Profile::from_vector(to_array(fit.parameters));
  out.fit = std::move(fit);
  out.knees = relax::knee_fields(out.profile);
  return out;
}

}  // namespace t1noise::fit
