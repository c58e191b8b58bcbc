#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "t1noise/data.hpp"
#include "t1noise/relaxmodel.hpp"

namespace t1noise::fit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Fills the residual vector and, when jacobian is non-null, d residual / d p.
using ResidualFn = std::function<void(const VectorXd& p, VectorXd& residuals, MatrixXd* jacobian)>;

struct Problem {
  std::vector<std::string> names;
  Eigen::Index residual_count = 0;
  ResidualFn residuals;
};

struct Bounds {
  VectorXd lower;
  VectorXd upper;
};

struct LmOptions {
  int max_iterations = 500;
  double cost_tolerance = 1e-10;      // relative decrease of 0.5 |r|^2
  double gradient_tolerance = 1e-10;  // infinity norm of the projected gradient
  double initial_damping = 1e-3;
  // Singular values below this fraction of the largest span the null space.
  double singular_threshold = 1e-9;
};

struct FitResult {
  std::vector<std::string> names;
  VectorXd parameters;
  MatrixXd covariance;
  bool covariance_available = false;
  VectorXd standard_errors;
  // 68% linearized intervals, (estimate - se, estimate + se).
  std::vector<std::pair<double, double>> confidence_intervals;
  double residual_norm = 0.0;
  double reduced_chi2 = 0.0;
  int degrees_of_freedom = 0;
  bool converged = false;
  int iterations = 0;
  std::string message;

  double value(std::string_view name) const;
  double error(std::string_view name) const;
  std::size_t index(std::string_view name) const;
};

// Bounded Levenberg-Marquardt. Parameters are projected onto the box after
// every step; the initial guess must already lie inside it.
FitResult nlls_fit(const Problem& problem, const VectorXd& initial,
                   const std::optional<Bounds>& bounds = std::nullopt,
                   const LmOptions& options = {});

// y = f(x; p) with analytic gradient df/dp, fitted with weights 1/sigma.
struct CurveModel {
  std::vector<std::string> names;
  std::function<double(double x, const VectorXd& p)> value;
  std::function<void(double x, const VectorXd& p, Eigen::Ref<VectorXd> grad)> gradient;
};

FitResult fit_curve(const CurveModel& model, const std::vector<double>& x,
                    const std::vector<double>& y, const std::vector<double>& sigma,
                    const VectorXd& initial, const std::optional<Bounds>& bounds = std::nullopt,
                    const LmOptions& options = {});

// Finite-difference Jacobian of a residual function (central differences).
MatrixXd numeric_jacobian(const ResidualFn& fn, const VectorXd& p, Eigen::Index m,
                          double rel_step = 1e-6);

// ---- Stretched exponential ------------------------------------------------

inline constexpr double kMaxStretch = 1.05;

// eps0 exp(-(t/T1)^p) and its gradient in (eps0, T1, p).
double stretched_exponential(double t, double eps0, double t1, double p);
CurveModel stretched_exponential_model();

// Parameters eps0, T1, p. With fix_p the stretch is held and reported with a
// zero standard error.
FitResult fit_stretched_exponential(const DecayCurve& curve,
                                    std::optional<double> fix_p = std::nullopt);

// ---- Buildup --------------------------------------------------------------

enum class BuildupModel { mono, bi, automatic };

// mono: A (1 - exp(-t/tau)); bi: A1 (1 - exp(-t/tau1)) + A2 (1 - exp(-t/tau2)).
CurveModel mono_buildup_model();
CurveModel bi_buildup_model();

struct BuildupFit {
  FitResult fit;
  BuildupModel selected = BuildupModel::mono;
  // Bi fit degenerated (equal time constants or vanishing amplitude) and was
  // replaced by the mono fit.
  bool collapsed = false;
  // Some time constant has a relative standard error above 50%.
  bool wide_ci = false;
  std::optional<double> aicc_mono;
  std::optional<double> aicc_bi;
  std::vector<double> time_constants_s;
};

BuildupFit fit_buildup(const DecayCurve& curve, BuildupModel model = BuildupModel::automatic);

// Small-sample corrected Akaike criterion from a chi-square (weighted) or
// residual sum of squares (unweighted) fit.
double aicc(double chi2_or_rss, int n, int k, bool weighted);

// ---- Relaxation profile ---------------------------------------------------

struct ProfileFit {
  FitResult fit;  // narrow_c1, narrow_c2, narrow_q, broad_c1, broad_c2, broad_q, offset
  relax::TsallianProfile profile;
  relax::KneeFields knees;
};

struct ProfileFitOptions {
  // Grid resolution for the width scan that seeds the optimizer.
  int width_grid = 16;
  double initial_q = 1.5;
  double q_min = 1.0 + 1e-6;
  double q_max = 2.0;
};

// Weighted least squares on log10(R1). Errors are propagated to log space as
// err / (R ln 10); without errors all points weigh the same.
ProfileFit fit_relaxation_profile(const RelaxometryProfile& profile,
                                  const ProfileFitOptions& options = {});

// Log-space residuals for a profile, exposed for Jacobian checks.
Problem profile_problem(const RelaxometryProfile& profile);

}  // namespace t1noise::fit
