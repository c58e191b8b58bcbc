#include "t1noise/relaxmodel.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "t1noise/errors.hpp"

namespace t1noise::relax {

namespace {

constexpr double kKhz2ToHz2 = 1e6;

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string(what) + " must be positive");
}

void require_order(int k) {
  if (k < 0 || k > 2) throw DomainError("derivative order must be 0, 1 or 2");
}

// L(w) = A d / (w^2 + d^2) and its w-derivatives.
double lorentz(double w, double a, double d, int k) {
  const double den = w * w + d * d;
  switch (k) {
    case 0:
      return a * d / den;
    case 1:
      return -2.0 * a * d * w / (den * den);
    default:
      return -2.0 * a * d * (den - 4.0 * w * w) / (den * den * den);
  }
}

// G(w) = (A/d) exp(-w^2 / 2d^2) and its w-derivatives.
double gauss(double w, double a, double d, int k) {
  const double g = a / d * std::exp(-w * w / (2.0 * d * d));
  const double d2 = d * d;
  switch (k) {
    case 0:
      return g;
    case 1:
      return -w / d2 * g;
    default:
      return (w * w / (d2 * d2) - 1.0 / d2) * g;
  }
}

}  // namespace

double lorentzian_spectral_density(double omega, double tau_c_s) {
  require_positive(tau_c_s, "correlation time");
  return 2.0 * tau_c_s / (1.0 + omega * omega * tau_c_s * tau_c_s);
}

double p1_bath_rate(double omega_l_hz, double a2_khz2, double d_ee_hz) {
  require_positive(d_ee_hz, "d_ee");
  return lorentz(omega_l_hz, a2_khz2 * kKhz2ToHz2, d_ee_hz, 0);
}

double single_electron_rate(double omega_l_hz, double a2_khz2, double t1e_s) {
  require_positive(t1e_s, "T1e");
  const double x = omega_l_hz * t1e_s;
  return a2_khz2 * kKhz2ToHz2 * t1e_s / (1.0 + x * x);
}

double nuclear_dipolar_rate(double omega_l_hz, double a2_khz2, double d_cc_hz) {
  require_positive(d_cc_hz, "d_CC");
  return gauss(omega_l_hz, a2_khz2 * kKhz2ToHz2, d_cc_hz, 0);
}

double nuclear_dipolar_knee(double d_cc_hz, double gamma_n_hz_per_t) {
  require_positive(d_cc_hz, "d_CC");
  return d_cc_hz / (2.0 * gamma_n_hz_per_t);
}

std::string to_string(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::p1_bath:
      return "p1_bath";
    case ChannelKind::single_electron:
      return "single_electron";
    case ChannelKind::nuclear_dipolar:
      return "nuclear_dipolar";
    case ChannelKind::phonon_offset:
      return "phonon_offset";
  }
  return "unknown";
}

ChannelKind channel_kind_from_string(const std::string& name) {
  for (auto k : {ChannelKind::p1_bath, ChannelKind::single_electron, ChannelKind::nuclear_dipolar,
                 ChannelKind::phonon_offset}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("unknown channel kind '" + name + "'");
}

RateChannel RateChannel::p1_bath(double a2_khz2, double d_ee_hz, std::string name) {
  return {ChannelKind::p1_bath, std::move(name), a2_khz2, d_ee_hz, 0.0};
}

RateChannel RateChannel::single_electron(double a2_khz2, double t1e_s, std::string name) {
  require_positive(t1e_s, "T1e");
  return {ChannelKind::single_electron, std::move(name), a2_khz2, 1.0 / t1e_s, 0.0};
}

RateChannel RateChannel::nuclear_dipolar(double a2_khz2, double d_cc_hz, std::string name) {
  return {ChannelKind::nuclear_dipolar, std::move(name), a2_khz2, d_cc_hz, 0.0};
}

RateChannel RateChannel::phonon_offset(double rate, std::string name) {
  return {ChannelKind::phonon_offset, std::move(name), 0.0, 0.0, rate};
}

void RateChannel::validate() const {
  if (kind == ChannelKind::phonon_offset) {
    if (!(offset_rate >= 0.0) || !std::isfinite(offset_rate)) {
      throw ValidationError("channel '" + name + "': offset_rate must be >= 0");
    }
    return;
  }
  if (!(width_hz > 0.0) || !std::isfinite(width_hz)) {
    throw ValidationError("channel '" + name + "': width must be positive");
  }
  if (!(a2_khz2 >= 0.0) || !std::isfinite(a2_khz2)) {
    throw ValidationError("channel '" + name + "': A2 must be >= 0");
  }
}

double RateChannel::rate(double omega_l_hz, int derivative_order) const {
  require_order(derivative_order);
  const double a = a2_khz2 * kKhz2ToHz2;
  switch (kind) {
    case ChannelKind::p1_bath:
    case ChannelKind::single_electron:
      // A2 T1e / (1 + w^2 T1e^2) is the Lorentzian with d = 1/T1e.
      return lorentz(omega_l_hz, a, width_hz, derivative_order);
    case ChannelKind::nuclear_dipolar:
      return gauss(omega_l_hz, a, width_hz, derivative_order);
    case ChannelKind::phonon_offset:
      return derivative_order == 0 ? offset_rate : 0.0;
  }
  return 0.0;
}

void RateModel::validate() const {
  if (channels.empty()) throw ValidationError("rate model needs at least one channel");
  if (!(gamma_n_hz_per_t > 0.0)) throw ValidationError("gamma_n must be positive");
  bool positive = false;
  for (const auto& c : channels) {
    c.validate();
    // Every channel is positive at all B once its strength is nonzero, except
    // the Gaussian channel which underflows; the offset keeps the total positive.
    if ((c.kind == ChannelKind::phonon_offset && c.offset_rate > 0.0) ||
        (c.kind != ChannelKind::phonon_offset && c.a2_khz2 > 0.0)) {
      positive = true;
    }
  }
  if (!positive) throw ValidationError("rate model total is zero");
}

double RateModel::rate(double field_t, int derivative_order) const {
  require_order(derivative_order);
  const double w = gamma_n_hz_per_t * field_t;
  const double scale = derivative_order == 0   ? 1.0
                       : derivative_order == 1 ? gamma_n_hz_per_t
                                               : gamma_n_hz_per_t * gamma_n_hz_per_t;
  double sum = 0.0;
  for (const auto& c : channels) sum += c.rate(w, derivative_order);
  return sum * scale;
}

double RateModel::channel_rate(std::size_t index, double field_t) const {
  return channels.at(index).rate(gamma_n_hz_per_t * field_t);
}

const RateChannel* RateModel::first_of(ChannelKind kind) const {
  for (const auto& c : channels) {
    if (c.kind == kind) return &c;
  }
  return nullptr;
}

double total_rate(const RateModel& model, double field_t) { return model.rate(field_t); }

double profile_rate(const ProfileModel& model, double field_t, int derivative_order) {
  return std::visit([&](const auto& m) { return m.rate(field_t, derivative_order); }, model);
}

double bisect_field(const ProfileModel& model, double target, double lo, double hi, double tol_t) {
  double flo = profile_rate(model, lo) - target;
  const double fhi = profile_rate(model, hi) - target;
  if (!std::isfinite(flo) || !std::isfinite(fhi)) throw NumericalError("non-finite rate");
  if ((flo > 0.0) == (fhi > 0.0) && flo != 0.0 && fhi != 0.0) {
    throw NumericalError("bisection interval does not bracket a root");
  }
  for (int it = 0; it < 200 && hi - lo > tol_t; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = profile_rate(model, mid) - target;
    if (!std::isfinite(fm)) throw NumericalError("non-finite rate during bisection");
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

namespace {

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g(static_cast<std::size_t>(n));
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (n - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

double bisect_second_derivative(const ProfileModel& m, double lo, double hi, double tol) {
  double flo = profile_rate(m, lo, 2);
  for (int it = 0; it < 200 && hi - lo > tol * std::max(1.0, lo); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = profile_rate(m, mid, 2);
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

KneeFields knee_fields(const ProfileModel& model, const KneeOptions& opt) {
  if (const auto* rm = std::get_if<RateModel>(&model)) rm->validate();
  if (opt.grid_points < 2 || !(opt.grid_min_t > 0.0) || !(opt.grid_max_t > opt.grid_min_t)) {
    throw ValidationError("invalid knee search grid");
  }
  KneeFields out;
  const double bsat = opt.saturation_field_t;
  out.saturation_rate = profile_rate(model, bsat);
  if (!std::isfinite(out.saturation_rate)) throw NumericalError("non-finite saturation rate");

  const auto grid = log_grid(opt.grid_min_t, opt.grid_max_t, opt.grid_points);

  // Twice-saturation knee: only meaningful when the rate has flattened out.
  const double slope = out.saturation_rate > 0.0
                           ? std::abs(profile_rate(model, bsat, 1) * bsat / out.saturation_rate)
                           : INFINITY;
  if (out.saturation_rate > 0.0 && slope < opt.saturation_slope) {
    const double target = 2.0 * out.saturation_rate;
    // Highest-field crossing: scan down from the top of the grid.
    double prev_b = grid.back();
    double prev_f = profile_rate(model, prev_b) - target;
    for (auto it = grid.rbegin() + 1; it != grid.rend(); ++it) {
      const double f = profile_rate(model, *it) - target;
      if ((f > 0.0) != (prev_f > 0.0)) {
        out.twice_saturation_t = bisect_field(model, target, *it, prev_b, opt.bisection_tol_t);
        out.twice_saturation_status = KneeStatus::found;
        break;
      }
      prev_b = *it;
      prev_f = f;
    }
  }

  double prev = profile_rate(model, grid.front(), 2);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double cur = profile_rate(model, grid[i], 2);
    if (!std::isfinite(cur)) throw NumericalError("non-finite second derivative");
    if (prev != 0.0 && cur != 0.0 && (cur > 0.0) != (prev > 0.0)) {
      out.inflection_fields_t.push_back(
          bisect_second_derivative(model, grid[i - 1], grid[i], opt.bisection_tol_t));
    }
    prev = cur;
  }

  if (const auto* rm = std::get_if<RateModel>(&model)) {
    if (const auto* p1 = rm->first_of(ChannelKind::p1_bath)) {
      out.analytic_bk1_t = p1->width_hz / (2.0 * rm->gamma_n_hz_per_t);
    }
    const RateChannel* low = rm->first_of(ChannelKind::nuclear_dipolar);
    if (!low) low = rm->first_of(ChannelKind::single_electron);
    if (low) out.analytic_bk2_t = low->width_hz / (2.0 * rm->gamma_n_hz_per_t);
  }
  return out;
}

double phase_noise(const ProfileModel& model, double omega0_field_t, double field_t) {
  const double r0 = profile_rate(model, omega0_field_t);
  const double r = profile_rate(model, field_t);
  if (!(r0 > 0.0) || !(r > 0.0)) throw DomainError("phase noise needs positive rates");
  return 10.0 * std::log10(r0 / r);
}

ReservoirFrequencies reservoir_frequencies(const ReservoirInputs& in) {
  if (!(in.field_t >= 0.0)) throw DomainError("field must be >= 0");
  if (in.m_i < -1 || in.m_i > 1) throw DomainError("m_I must be -1, 0 or 1");
  const double ge_b = in.gamma_e_hz_per_t * in.field_t;
  const double cn = std::cos(in.theta_nv_rad), sn = std::sin(in.theta_nv_rad);
  const double cp = std::cos(in.theta_p1_rad), sp = std::sin(in.theta_p1_rad);
  ReservoirFrequencies f;
  f.omega_nv_plus_hz = std::hypot(in.zero_field_splitting_hz + ge_b * cn, ge_b * sn);
  f.omega_nv_minus_hz = std::hypot(in.zero_field_splitting_hz - ge_b * cn, ge_b * sn);
  f.omega_e_hz =
      std::hypot(ge_b + in.m_i * in.a_parallel_hz * cp, in.m_i * in.a_perpendicular_hz * sp);
  f.omega_l_hz = in.gamma_n_hz_per_t * in.field_t;
  return f;
}

Crossover crossover_field(const ProfileModel& a, const ProfileModel& b, double lo_t, double hi_t,
                          int grid_points, double tol_t) {
  if (!(lo_t > 0.0) || !(hi_t > lo_t) || grid_points < 2) {
    throw ValidationError("invalid crossover search interval");
  }
  const auto grid = log_grid(lo_t, hi_t, grid_points);
  auto diff = [&](double bf) { return profile_rate(a, bf) - profile_rate(b, bf); };
  Crossover out;
  double prev = diff(grid.front());
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double cur = diff(grid[i]);
    if ((cur > 0.0) != (prev > 0.0)) {
      ++out.sign_changes;
      if (!out.found) {
        double lo = grid[i - 1], hi = grid[i], flo = prev;
        while (hi - lo > tol_t) {
          const double mid = 0.5 * (lo + hi);
          const double fm = diff(mid);
          if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
          } else {
            hi = mid;
          }
        }
        out.field_t = 0.5 * (lo + hi);
        out.found = true;
      }
    }
    prev = cur;
  }
  return out;
}

ZeroFieldRate zero_field_rate(const RateChannel& c) {
  if (c.kind != ChannelKind::p1_bath) throw DomainError("zero-field rate needs a p1_bath channel");
  c.validate();
  const double a = c.a2_khz2 * kKhz2ToHz2;
  return {a / c.width_hz, a / (c.width_hz * 1e-3)};
}

}  // namespace t1noise::relax
