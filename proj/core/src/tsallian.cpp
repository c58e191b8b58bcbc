#include "t1noise/tsallian.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "t1noise/errors.hpp"

namespace t1noise::relax {

namespace {

constexpr double kLn2 = std::numbers::ln2;
// Below this q - 1 the d/dq formula loses digits to cancellation and the
// first-order series is used instead.
constexpr double kSeriesThreshold = 1e-7;

bool is_gaussian(double q) { return q == 1.0; }

struct Shape {
  double g;      // shape value
  double dg_dx;  // derivative in x = B / C2
  double d2g_dx2;
};

// g(x) = (1 + c x^2)^(-n), n = 1/(q-1), c = 2^(q-1) - 1. With u = q - 1 we
// use nc = c/u, which tends to ln2 as q -> 1.
Shape shape_derivs(double x, double q) {
  if (is_gaussian(q)) {
    const double g = std::exp(-kLn2 * x * x);
    const double d1 = -2.0 * kLn2 * x * g;
    const double d2 = (4.0 * kLn2 * kLn2 * x * x - 2.0 * kLn2) * g;
    return {g, d1, d2};
  }
  const double u = q - 1.0;
  const double c = std::expm1(u * kLn2);
  const double nc = c / u;
  const double s = 1.0 + c * x * x;
  const double g = std::exp(-std::log1p(c * x * x) / u);
  // dg/dx = -2 nc x g / s
  const double d1 = -2.0 * nc * x * g / s;
  // d2g/dx2 = -2 nc g [1/s - 2 c x^2 / s^2] - 2 nc x (dg/dx) / s
  const double d2 = -2.0 * nc * g * (1.0 / s - 2.0 * c * x * x / (s * s)) - 2.0 * nc * x * d1 / s;
  return {g, d1, d2};
}

// d ln g / dq.
double dlng_dq(double x, double q) {
  const double x2 = x * x;
  const double u = q - 1.0;
  if (u < kSeriesThreshold) {
    // ln g = -ln2 x^2 - u ln2^2 (x^2 - x^4)/2 + O(u^2)
    return kLn2 * kLn2 * x2 * (x2 - 1.0) / 2.0;
  }
  const double c = std::expm1(u * kLn2);
  const double dc = (c + 1.0) * kLn2;
  return (std::log1p(c * x2) - u * dc * x2 / (1.0 + c * x2)) / (u * u);
}

double component(const TsallianParams& p, double field_t, int order) {
  const double x = field_t / p.c2;
  const Shape s = shape_derivs(x, p.q);
  switch (order) {
    case 0:
      return p.c1 * s.g + p.c3;
    case 1:
      return p.c1 * s.dg_dx / p.c2;
    case 2:
      return p.c1 * s.d2g_dx2 / (p.c2 * p.c2);
    default:
      throw DomainError("derivative order must be 0, 1 or 2");
  }
}

std::array<double, 4> component_gradient(const TsallianParams& p, double field_t) {
  const double x = field_t / p.c2;
  const Shape s = shape_derivs(x, p.q);
  return {s.g, -p.c1 * s.dg_dx * x / p.c2, 1.0, p.c1 * s.g * dlng_dq(x, p.q)};
}

// Profile components may carry a zero amplitude (nested-model fits).
void validate_component(const TsallianParams& p) {
  if (!(p.c1 >= 0.0) || !std::isfinite(p.c1)) throw DomainError("component C1 must be >= 0");
  if (!(p.c2 > 0.0) || !std::isfinite(p.c2)) throw DomainError("component C2 must be positive");
  if (!(p.q >= 1.0 && p.q <= 2.0)) throw DomainError("component q must lie in [1, 2]");
}

}  // namespace

void validate(const TsallianParams& p, QMode mode) {
  if (!(p.c1 > 0.0) || !std::isfinite(p.c1)) throw DomainError("Tsallian C1 must be positive");
  if (!(p.c2 > 0.0) || !std::isfinite(p.c2)) throw DomainError("Tsallian C2 must be positive");
  if (!(p.c3 >= 0.0) || !std::isfinite(p.c3)) throw DomainError("Tsallian C3 must be >= 0");
  const bool ok = (p.q > 1.0 && p.q <= 2.0) || (mode == QMode::gaussian_limit && p.q == 1.0);
  if (!ok) throw DomainError("Tsallian q must lie in (1, 2], got " + std::to_string(p.q));
}

double tsallian_shape(double x, double q) { return shape_derivs(x, q).g; }

double tsallian_eval(const TsallianParams& p, double field_t, int derivative_order, QMode mode) {
  validate(p, mode);
  return component(p, field_t, derivative_order);
}

std::array<double, 4> tsallian_param_gradient(const TsallianParams& p, double field_t, QMode mode) {
  validate(p, mode);
  return component_gradient(p, field_t);
}

std::array<double, TsallianProfile::kParameterCount> TsallianProfile::to_vector() const {
  return {narrow.c1, narrow.c2, narrow.q, broad.c1, broad.c2, broad.q, offset};
}

TsallianProfile TsallianProfile::from_vector(const std::array<double, kParameterCount>& v) {
  TsallianProfile p;
  p.narrow = {v[0], v[1], 0.0, v[2]};
  p.broad = {v[3], v[4], 0.0, v[5]};
  p.offset = v[6];
  return p;
}

double TsallianProfile::rate(double field_t, int derivative_order) const {
  TsallianParams a = narrow, b = broad;
  a.c3 = b.c3 = 0.0;
  validate_component(a);
  validate_component(b);
  const double base =
      component(a, field_t, derivative_order) + component(b, field_t, derivative_order);
  return derivative_order == 0 ? base + offset : base;
}

std::array<double, TsallianProfile::kParameterCount> TsallianProfile::gradient(
    double field_t) const {
  TsallianParams a = narrow, b = broad;
  a.c3 = b.c3 = 0.0;
  validate_component(a);
  validate_component(b);
  const auto ga = component_gradient(a, field_t);
  const auto gb = component_gradient(b, field_t);
  return {ga[0], ga[1], ga[3], gb[0], gb[1], gb[3], 1.0};
}

TsallianProfile TsallianProfile::canonical() const {
  TsallianProfile p = *this;
  if (p.broad.c2 < p.narrow.c2) std::swap(p.narrow, p.broad);
  return p;
}

}  // namespace t1noise::relax
