#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>

#include "t1noise/errors.hpp"
#include "t1noise/fitting.hpp"

namespace t1noise::fit {

namespace {

constexpr double kMaxDamping = 1e16;
constexpr double kMinDamping = 1e-15;

bool evaluate(const Problem& problem, const VectorXd& p, VectorXd& r, MatrixXd* j) {
  r.resize(problem.residual_count);
  if (j) j->resize(problem.residual_count, p.size());
  problem.residuals(p, r, j);
  if (!r.allFinite()) return false;
  return j == nullptr || j->allFinite();
}

VectorXd project(const VectorXd& p, const std::optional<Bounds>& b) {
  if (!b) return p;
  return p.cwiseMax(b->lower).cwiseMin(b->upper);
}

// Zeroes gradient components that point out of the feasible box.
VectorXd projected_gradient(const VectorXd& g, const VectorXd& p, const std::optional<Bounds>& b) {
  VectorXd pg = g;
  if (!b) return pg;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (p[i] <= b->lower[i] && g[i] > 0.0) pg[i] = 0.0;
    if (p[i] >= b->upper[i] && g[i] < 0.0) pg[i] = 0.0;
  }
  return pg;
}

void fill_statistics(FitResult& out, const MatrixXd& j, const VectorXd& r, double threshold) {
  const Eigen::Index n = out.parameters.size();
  const Eigen::Index m = r.size();
  out.residual_norm = r.norm();
  out.degrees_of_freedom = static_cast<int>(m - n);
  const double chi2 = r.squaredNorm();
  out.reduced_chi2 = out.degrees_of_freedom > 0 ? chi2 / out.degrees_of_freedom : 0.0;
  const double scale = out.degrees_of_freedom > 0 ? out.reduced_chi2 : 1.0;

  Eigen::JacobiSVD<MatrixXd> svd(j, Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  const MatrixXd& v = svd.matrixV();
  const double smax = s.size() > 0 ? s[0] : 0.0;
  VectorXd inv2 = VectorXd::Zero(n);
  VectorXd null_weight = VectorXd::Zero(n);
  bool singular = s.size() < n;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double sk = k < s.size() ? s[k] : 0.0;
    if (sk > threshold * smax && sk > 0.0) {
      inv2[k] = 1.0 / (sk * sk);
    } else {
      singular = true;
      null_weight += v.col(k).cwiseAbs2();
    }
  }
  out.covariance = scale * v * inv2.asDiagonal() * v.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  out.covariance_available = !singular;
  out.standard_errors.resize(n);
  out.confidence_intervals.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double se = std::sqrt(std::max(0.0, out.covariance(i, i)));
    if (null_weight[i] > 1e-6) se = std::numeric_limits<double>::infinity();
    out.standard_errors[i] = se;
    out.confidence_intervals[static_cast<std::size_t>(i)] = {out.parameters[i] - se,
                                                             out.parameters[i] + se};
  }
}

}  // namespace

std::size_t FitResult::index(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw ValidationError("unknown fit parameter '" + std::string(name) + "'");
}

double FitResult::value(std::string_view name) const {
  return parameters[static_cast<Eigen::Index>(index(name))];
}

double FitResult::error(std::string_view name) const {
  return standard_errors[static_cast<Eigen::Index>(index(name))];
}

FitResult nlls_fit(const Problem& problem, const VectorXd& initial,
                   const std::optional<Bounds>& bounds, const LmOptions& opt) {
  const Eigen::Index n = initial.size();
  if (static_cast<Eigen::Index>(problem.names.size()) != n) {
    throw ValidationError("parameter names do not match the initial guess");
  }
  if (problem.residual_count < n) {
    throw ValidationError("fewer data points than parameters");
  }
  if (bounds) {
    if (bounds->lower.size() != n || bounds->upper.size() != n) {
      throw ValidationError("bounds do not match the parameter count");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(initial[i] >= bounds->lower[i] && initial[i] <= bounds->upper[i])) {
        throw ValidationError("initial guess for '" + problem.names[static_cast<std::size_t>(i)] +
                              "' lies outside its bounds");
      }
    }
  }

  FitResult out;
  out.names = problem.names;
  VectorXd p = initial;
  VectorXd r;
  MatrixXd j;
  if (!evaluate(problem, p, r, &j)) {
    throw NumericalError("model is not finite at the initial guess");
  }
  double cost = 0.5 * r.squaredNorm();
  double lambda = opt.initial_damping;
  bool stalled = false;

  for (out.iterations = 0; out.iterations < opt.max_iterations; ++out.iterations) {
    const VectorXd g = j.transpose() * r;
    if (projected_gradient(g, p, bounds).lpNorm<Eigen::Infinity>() < opt.gradient_tolerance ||
        cost == 0.0) {
      out.converged = true;
      out.message = "gradient below tolerance";
      break;
    }
    const MatrixXd a = j.transpose() * j;
    VectorXd d = a.diagonal();
    const double dmax = std::max(d.maxCoeff(), 1e-300);
    d = d.cwiseMax(1e-12 * dmax);

    bool accepted = false;
    while (lambda <= kMaxDamping) {
      MatrixXd damped = a;
      damped.diagonal() += lambda * d;
      const VectorXd step = damped.ldlt().solve(-g);
      const VectorXd trial = project(p + step, bounds);
      VectorXd r_new;
      MatrixXd j_new;
      if (step.allFinite() && trial != p && evaluate(problem, trial, r_new, &j_new)) {
        const double cost_new = 0.5 * r_new.squaredNorm();
        if (cost_new < cost) {
          const double rel = (cost - cost_new) / cost;
          p = trial;
          r = std::move(r_new);
          j = std::move(j_new);
          cost = cost_new;
          lambda = std::max(lambda / 10.0, kMinDamping);
          accepted = true;
          if (rel < opt.cost_tolerance) {
            out.converged = true;
            out.message = "relative cost decrease below tolerance";
          }
          break;
        }
      }
      lambda *= 10.0;
    }
    if (out.converged) {
      ++out.iterations;
      break;
    }
    if (!accepted) {
      // No damping level lowers the cost any further.
      stalled = true;
      out.converged = true;
      out.message = "no further cost decrease";
      break;
    }
  }
  if (!out.converged && !stalled) out.message = "iteration limit reached";

  out.parameters = p;
  fill_statistics(out, j, r, opt.singular_threshold);
  return out;
}

FitResult fit_curve(const CurveModel& model, const std::vector<double>& x,
                    const std::vector<double>& y, const std::vector<double>& sigma,
                    const VectorXd& initial, const std::optional<Bounds>& bounds,
                    const LmOptions& options) {
  if (x.size() != y.size() || (!sigma.empty() && sigma.size() != x.size())) {
    throw ValidationError("curve data length mismatch");
  }
  Problem problem;
  problem.names = model.names;
  problem.residual_count = static_cast<Eigen::Index>(x.size());
  problem.residuals = [&](const VectorXd& p, VectorXd& r, MatrixXd* jac) {
    VectorXd grad(p.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double w = sigma.empty() ? 1.0 : 1.0 / sigma[i];
      r[row] = (model.value(x[i], p) - y[i]) * w;
      if (jac) {
        model.gradient(x[i], p, grad);
        jac->row(row) = grad.transpose() * w;
      }
    }
  };
  return nlls_fit(problem, initial, bounds, options);
}

MatrixXd numeric_jacobian(const ResidualFn& fn, const VectorXd& p, Eigen::Index m,
                          double rel_step) {
  MatrixXd jac(m, p.size());
  VectorXd rp(m), rm(m);
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double h = rel_step * std::max(std::abs(p[k]), 1e-12);
    VectorXd pp = p, pm = p;
    pp[k] += h;
    pm[k] -= h;
    fn(pp, rp, nullptr);
    fn(pm, rm, nullptr);
    jac.col(k) = (rp - rm) / (pp[k] - pm[k]);
  }
  return jac;
}

}  // namespace t1noise::fit
