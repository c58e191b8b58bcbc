#include "t1noise/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

// Boost 1.74 pchip calls isnan unqualified.
using std::isnan;
#include <boost/math/interpolators/pchip.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "t1noise/errors.hpp"
#include "t1noise/fitting.hpp"
#include "t1noise/rng.hpp"

namespace t1noise::acq {

// ---- FieldMap ---------------------------------------------------------------

struct FieldMap::Impl {
  std::optional<boost::math::interpolators::pchip<std::vector<double>>> pchip;
};

FieldMap::FieldMap(std::vector<double> positions_mm, std::vector<double> fields_t)
    : positions_(std::move(positions_mm)), fields_(std::move(fields_t)) {
  if (positions_.size() != fields_.size()) throw ValidationError("field map: length mismatch");
  if (positions_.size() < 2) throw ValidationError("field map: need at least 2 knots");
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    if (!std::isfinite(positions_[i]) || !(fields_[i] > 0.0) || !std::isfinite(fields_[i])) {
      throw ValidationError("field map: positions must be finite and fields positive");
    }
    if (i > 0 && !(positions_[i] > positions_[i - 1])) {
      throw ValidationError("field map: positions must be strictly increasing");
    }
  }
  auto impl = std::make_shared<Impl>();
  if (positions_.size() >= 4) {
    impl->pchip.emplace(std::vector<double>(positions_), std::vector<double>(fields_));
  }
  impl_ = std::move(impl);
}

double FieldMap::field_at(double x) const {
  if (!(x >= positions_.front() && x <= positions_.back())) {
    throw DomainError("position " + std::to_string(x) + " mm is outside the field map");
  }
  if (impl_->pchip) return (*impl_->pchip)(x);
  const auto it = std::upper_bound(positions_.begin(), positions_.end(), x);
  const std::size_t k = std::min<std::size_t>(
      static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - positions_.begin(), 1)),
      positions_.size() - 1);
  const double w = (x - positions_[k - 1]) / (positions_[k] - positions_[k - 1]);
  return fields_[k - 1] + w * (fields_[k] - fields_[k - 1]);
}

double FieldMap::position_for_field(double field_t, std::optional<double> lo_mm,
                                    std::optional<double> hi_mm) const {
  double lo = lo_mm.value_or(positions_.front());
  double hi = hi_mm.value_or(positions_.back());
  if (!lo_mm && !hi_mm) {
    // First knot interval that brackets the requested field.
    bool found = false;
    for (std::size_t k = 1; k < positions_.size(); ++k) {
      const double a = fields_[k - 1] - field_t, b = fields_[k] - field_t;
      if (a == 0.0) return positions_[k - 1];
      if ((a > 0.0) != (b > 0.0)) {
        lo = positions_[k - 1];
        hi = positions_[k];
        found = true;
        break;
      }
    }
    if (!found) {
      if (fields_.back() == field_t) return positions_.back();
      throw DomainError("field " + std::to_string(field_t) + " T is not reached by the map");
    }
  }
  double flo = field_at(lo) - field_t;
  const double fhi = field_at(hi) - field_t;
  if ((flo > 0.0) == (fhi > 0.0) && flo != 0.0 && fhi != 0.0) {
    throw DomainError("field is not bracketed on the requested interval");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-9; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = field_at(mid) - field_t;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double field_at_position(const FieldMap& map, double position_mm) {
  return map.field_at(position_mm);
}

FieldMap demo_field_map() {
  const double b_det = 7.0, b_pol = 0.030, x_pol = 928.0;
  const double x0 = x_pol / std::cbrt(b_det / b_pol - 1.0);
  std::vector<double> x, b;
  for (int i = 0; i <= 75; ++i) {
    const double xi = 16.0 * i;
    x.push_back(xi);
    b.push_back(b_det / (1.0 + std::pow(xi / x0, 3)));
  }
  return FieldMap(std::move(x), std::move(b));
}

// ---- Shuttle ----------------------------------------------------------------

void ShuttleProfile::validate() const {
  if (!(transfer_time_s > 0.0)) throw ValidationError("shuttle transfer time must be positive");
  if (!(time_jitter_s >= 0.0)) throw ValidationError("shuttle jitter must be >= 0");
  if (!std::isfinite(start_mm) || !std::isfinite(end_mm)) {
    throw ValidationError("shuttle positions must be finite");
  }
}

ShuttleProfile ShuttleProfile::main_text(double start_mm, double end_mm) {
  return {start_mm, end_mm, 0.648, 0.004};
}

ShuttleProfile ShuttleProfile::supplementary(double start_mm, double end_mm) {
  return {start_mm, end_mm, 0.648, 0.0006};
}

DecayCurve simulate_decay(double t1_s, double p, double eps0, const std::vector<double>& times_s,
                          double noise_sd, std::uint64_t seed, double field_t) {
  if (!(t1_s > 0.0) || !(p > 0.0) || !(noise_sd >= 0.0)) {
    throw DomainError("simulate_decay needs T1 > 0, p > 0 and noise_sd >= 0");
  }
  Rng rng(seed);
  DecayCurve c;
  c.field_t = field_t;
  c.times_s = times_s;
  c.signals.reserve(times_s.size());
  for (double t : times_s) {
    double v = eps0 * std::exp(-std::pow(t / t1_s, p));
    if (noise_sd > 0.0) v += rng.normal(0.0, noise_sd);
    c.signals.push_back(v);
  }
  if (noise_sd > 0.0) c.sigma.assign(times_s.size(), noise_sd);
  c.validate();
  return c;
}

double simulate_shuttle_loss(const FieldMap& map, const ShuttleProfile& shuttle,
                             const relax::ProfileModel& rate_model,
                             std::optional<double> transfer_time_s) {
  shuttle.validate();
  const double t_total = transfer_time_s.value_or(shuttle.transfer_time_s);
  if (!(t_total >= 0.0)) throw DomainError("transfer time must be >= 0");
  if (t_total == 0.0 || shuttle.start_mm == shuttle.end_mm) {
    if (t_total == 0.0) return 1.0;
  }
  const double x0 = shuttle.start_mm, x1 = shuttle.end_mm;
  auto rate_at = [&](double t) {
    const double x = x0 + (x1 - x0) * (t / t_total);
    return relax::profile_rate(rate_model, map.field_at(std::clamp(x, std::min(x0, x1),
                                                                   std::max(x0, x1))));
  };
  map.field_at(x0);
  map.field_at(x1);
  const double integral =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(rate_at, 0.0, t_total, 15, 1e-12);
  return std::exp(-integral);
}

// ---- Reconstruction and accounting --------------------------------------------

double reconstruct_r1(double eps_tw, double eps0, double p, double t_w_s) {
  if (!(t_w_s > 0.0)) throw DomainError("wait time must be positive");
  if (!(p > 0.0 && p <= fit::kMaxStretch)) throw DomainError("stretch must lie in (0, 1.05]");
  if (!(eps0 > 0.0) || !(eps_tw > 0.0)) throw DomainError("signals must be positive");
  if (eps_tw >= eps0) throw DomainError("no decay contrast: eps(t_w) >= eps0");
  return std::pow(std::log(eps0 / eps_tw), 1.0 / p) / t_w_s;
}

double dynamic_wait_time(double t1_est_s, double p) {
  if (!(t1_est_s > 0.0) || !(p > 0.0)) throw DomainError("dynamic wait needs T1 > 0 and p > 0");
  return t1_est_s * std::pow(std::log(2.0), 1.0 / p);
}

double time_gain(int n_fields, int n_samples, double dt_s, double t_w_s, int n_calibration) {
  if (n_fields < 1 || n_samples < 1 || n_calibration < 1 || !(dt_s > 0.0) || !(t_w_s >= 0.0)) {
    throw DomainError("time_gain needs positive counts and durations");
  }
  const double nn1 = static_cast<double>(n_samples) * (n_samples + 1.0);
  return n_fields * dt_s * nn1 / (2.0 * n_fields * t_w_s + n_calibration * dt_s * nn1);
}

PropagatedRate propagate_errors(const ErrorInputs& in) {
  PropagatedRate out;
  out.r1 = reconstruct_r1(in.eps_tw, in.eps0, in.p, in.t_w_s);
  const double l = std::log(in.eps0 / in.eps_tw);
  const double common = std::pow(l, 1.0 / in.p - 1.0) / (in.p * in.t_w_s);
  const double d_eps = -common / in.eps_tw;
  const double d_eps0 = common / in.eps0;
  const double d_p = -out.r1 * std::log(l) / (in.p * in.p);
  const double d_t = -out.r1 / in.t_w_s;
  out.d_r1 = std::sqrt(std::pow(d_eps * in.d_eps_tw, 2) + std::pow(d_eps0 * in.d_eps0, 2) +
                       std::pow(d_p * in.d_p, 2) + std::pow(d_t * in.d_t_s, 2));
  out.relative_error = out.d_r1 / out.r1;
  out.unreliable = !(out.relative_error <= 1.0);
  return out;
}

// ---- Plans --------------------------------------------------------------------

std::string to_string(Strategy s) { return s == Strategy::full_2d ? "full_2D" : "accelerated_1D"; }

Strategy strategy_from_string(const std::string& s) {
  if (s == "full_2D") return Strategy::full_2d;
  if (s == "accelerated_1D") return Strategy::accelerated_1d;
  throw ValidationError("unknown strategy '" + s + "'");
}

double TruthStretch::at(double field_t) const {
  const double z = std::log10(field_t / transition_t) / width_decades;
  return low + (high - low) / (1.0 + std::exp(-z));
}

void AcquisitionPlan::validate() const {
  if (fields_t.empty()) throw ValidationError("plan needs at least one field");
  for (std::size_t i = 0; i < fields_t.size(); ++i) {
    if (!(fields_t[i] > 0.0)) throw ValidationError("plan fields must be positive");
    if (i > 0 && !(fields_t[i] > fields_t[i - 1])) {
      throw ValidationError("plan fields must be strictly increasing");
    }
  }
  if (decay_samples < 1 || calibration_fields < 1 || shots_per_point < 1) {
    throw ValidationError("plan counts N, n, N_d and shots must be >= 1");
  }
  if (!(time_step_s > 0.0)) throw ValidationError("time step must be positive");
  if (wait_time_s && !(*wait_time_s > 0.0)) throw ValidationError("wait time must be positive");
  if (!(eps0 > 0.0) || !(noise_sd >= 0.0)) throw ValidationError("eps0 > 0 and noise_sd >= 0");
  if (!(polarization_time_s >= 0.0) || !(coil_threshold_t > 0.0)) {
    throw ValidationError("invalid overhead or coil threshold");
  }
  if (!(stretch.low > 0.0 && stretch.low <= fit::kMaxStretch && stretch.high > 0.0 &&
        stretch.high <= fit::kMaxStretch && stretch.transition_t > 0.0 &&
        stretch.width_decades > 0.0)) {
    throw ValidationError("invalid truth stretch");
  }
}

namespace {

constexpr std::uint64_t kCalibrationStream = 1ULL << 62;

std::uint64_t stream_id(std::size_t field, std::size_t sample, std::size_t shot) {
  return (static_cast<std::uint64_t>(field) << 32) | (static_cast<std::uint64_t>(sample) << 12) |
         static_cast<std::uint64_t>(shot);
}

struct Context {
  const AcquisitionPlan& plan;
  const relax::ProfileModel& truth;
  const FieldMap& map;
  const ShuttleProfile& shuttle;
  std::uint64_t seed;
  double speed_mm_per_s;
  Accounting acc;
};

struct Site {
  double relax_position_mm;
  bool coil;
};

Site site_for(const Context& ctx, double field_t) {
  if (field_t < ctx.plan.coil_threshold_t) return {ctx.plan.polarization_position_mm, true};
  try {
    return {ctx.map.position_for_field(field_t), false};
  } catch (const DomainError&) {
    throw PlanningError("field " + std::to_string(field_t) + " T is outside the field map");
  }
}

double trip_time(const Context& ctx, double from, double to, Rng& rng) {
  const double nominal = std::abs(to - from) / ctx.speed_mm_per_s;
  if (nominal == 0.0) return 0.0;
  const double jitter = ctx.shuttle.time_jitter_s > 0.0 ? rng.normal(0.0, ctx.shuttle.time_jitter_s) : 0.0;
  return std::max(0.0, nominal + jitter);
}

double leg_loss(const Context& ctx, double from, double to, double time) {
  if (time == 0.0 || from == to) return 1.0;
  ShuttleProfile leg{from, to, time, 0.0};
  return simulate_shuttle_loss(ctx.map, leg, ctx.truth, time);
}

// One detected signal: polarize, travel, wait, travel back, detect. Averages
// `shots` repetitions and charges their time to the accounting.
double measure(Context& ctx, std::size_t field_index, std::size_t sample, double field_t,
               double wait_s, std::uint64_t stream_base) {
  const auto& plan = ctx.plan;
  const Site site = site_for(ctx, field_t);
  const double r1 = relax::profile_rate(ctx.truth, field_t);
  const double t1 = 1.0 / r1;
  const double p = plan.stretch.at(field_t);
  double sum = 0.0;
  for (int s = 0; s < plan.shots_per_point; ++s) {
    Rng rng(ctx.seed, stream_base | stream_id(field_index, sample, static_cast<std::size_t>(s)));
    double gain = 1.0;
    double overhead = plan.polarization_time_s;
    if (plan.include_transit) {
      const double t_in = site.coil ? 0.0 : trip_time(ctx, plan.polarization_position_mm,
                                                      site.relax_position_mm, rng);
      const double t_out = trip_time(ctx, site.relax_position_mm, plan.detection_position_mm, rng);
      gain = leg_loss(ctx, plan.polarization_position_mm, site.relax_position_mm, t_in) *
             leg_loss(ctx, site.relax_position_mm, plan.detection_position_mm, t_out);
      overhead += t_in + t_out;
    }
    double v = plan.eps0 * gain * std::exp(-std::pow(wait_s / t1, p));
    if (plan.noise_sd > 0.0) v += rng.normal(0.0, plan.noise_sd);
    sum += v;
    ctx.acc.relaxation_wait_s += wait_s;
    ctx.acc.overhead_s += overhead;
    ++ctx.acc.shots;
  }
  return sum / plan.shots_per_point;
}

DecayRecord full_curve(Context& ctx, std::size_t field_index, double field_t,
                       std::uint64_t stream_base, bool calibration) {
  const auto& plan = ctx.plan;
  DecayRecord rec;
  rec.calibration = calibration;
  rec.curve.field_t = field_t;
  for (int k = 1; k <= plan.decay_samples; ++k) {
    const double t = k * plan.time_step_s;
    rec.curve.times_s.push_back(t);
    rec.curve.signals.push_back(
        measure(ctx, field_index, static_cast<std::size_t>(k), field_t, t, stream_base));
  }
  const double sd = plan.noise_sd / std::sqrt(static_cast<double>(plan.shots_per_point));
  if (sd > 0.0) rec.curve.sigma.assign(rec.curve.times_s.size(), sd);

  // Points lost in the noise floor carry no information about the decay.
  DecayCurve usable;
  usable.field_t = field_t;
  for (std::size_t i = 0; i < rec.curve.size(); ++i) {
    if (rec.curve.signals[i] > 0.0) {
      usable.times_s.push_back(rec.curve.times_s[i]);
      usable.signals.push_back(rec.curve.signals[i]);
      if (sd > 0.0) usable.sigma.push_back(sd);
    }
  }
  if (usable.size() < 4) return rec;
  const fit::FitResult f = fit::fit_stretched_exponential(usable);
  rec.converged = f.converged;
  rec.eps0 = f.parameters[0];
  rec.t1_s = f.parameters[1];
  rec.p = f.parameters[2];
  rec.d_eps0 = f.standard_errors[0];
  rec.d_t1 = f.standard_errors[1];
  rec.d_p = f.standard_errors[2];
  return rec;
}

std::vector<std::size_t> calibration_indices(std::size_t n, int n_d) {
  std::vector<std::size_t> idx;
  if (static_cast<std::size_t>(n_d) >= n) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }
  if (n_d == 1) return {n / 2};
  for (int i = 0; i < n_d; ++i) {
    idx.push_back(static_cast<std::size_t>(
        std::lround(static_cast<double>(i) * static_cast<double>(n - 1) / (n_d - 1))));
  }
  return idx;
}

}  // namespace

ExperimentRecord run_plan(const AcquisitionPlan& plan, const relax::ProfileModel& truth,
                          const FieldMap& map, const ShuttleProfile& shuttle, std::uint64_t seed) {
  plan.validate();
  shuttle.validate();
  const double travel = shuttle.travel_distance_mm();
  if (!(travel > 0.0)) throw ValidationError("shuttle travel distance must be positive");
  if (plan.calibration_fields > static_cast<int>(plan.fields_t.size())) {
    throw PlanningError("more calibration fields than relaxation fields");
  }

  Context ctx{plan, truth, map, shuttle, seed, travel / shuttle.transfer_time_s, {}};
  ExperimentRecord rec;
  rec.plan = plan;
  rec.seed = seed;
  const std::size_t n = plan.fields_t.size();
  for (double b : plan.fields_t) site_for(ctx, b);

  auto reported = [&](double b) {
    return b < plan.coil_threshold_t ? b : b + plan.shuttled_field_offset_t;
  };

  if (plan.strategy == Strategy::full_2d) {
    for (std::size_t i = 0; i < n; ++i) {
      const double b = plan.fields_t[i];
      DecayRecord d = full_curve(ctx, i, b, 0, false);
      PointRecord pt;
      pt.field_t = b;
      pt.reported_field_t = reported(b);
      pt.coil_driven = b < plan.coil_threshold_t;
      pt.true_r1 = relax::profile_rate(truth, b);
      pt.provenance = Provenance::full_curve;
      if (d.converged && d.t1_s > 0.0) {
        pt.rate.r1 = 1.0 / d.t1_s;
        pt.rate.d_r1 = d.d_t1 / (d.t1_s * d.t1_s);
        pt.rate.relative_error = pt.rate.d_r1 / pt.rate.r1;
        pt.rate.unreliable = !(pt.rate.relative_error <= 1.0);
      } else {
        pt.rate.r1 = std::nan("");
        pt.rate.unreliable = true;
      }
      rec.points.push_back(pt);
      rec.decays.push_back(std::move(d));
    }
  } else {
    const auto cal = calibration_indices(n, plan.calibration_fields);
    for (std::size_t c : cal) {
      rec.decays.push_back(full_curve(ctx, c, plan.fields_t[c], kCalibrationStream, true));
    }
    double t1_prev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double b = plan.fields_t[i];
      // Nearest calibration field in log B supplies (eps0, p).
      std::size_t best = 0;
      for (std::size_t k = 1; k < cal.size(); ++k) {
        if (std::abs(std::log(plan.fields_t[cal[k]] / b)) <
            std::abs(std::log(plan.fields_t[cal[best]] / b))) {
          best = k;
        }
      }
      const DecayRecord& cd = rec.decays[best];
      PointRecord pt;
      pt.field_t = b;
      pt.reported_field_t = reported(b);
      pt.coil_driven = b < plan.coil_threshold_t;
      pt.true_r1 = relax::profile_rate(truth, b);
      pt.provenance = Provenance::accelerated;
      pt.calibration_index = static_cast<int>(best);
      if (!cd.converged) {
        pt.rate.r1 = std::nan("");
        pt.rate.unreliable = true;
        rec.points.push_back(pt);
        continue;
      }
      // Dynamic waits follow the previous field's estimate, seeded by the
      // calibration curve.
      const double t1_est = t1_prev > 0.0 ? t1_prev : cd.t1_s;
      pt.wait_time_s = plan.wait_time_s ? *plan.wait_time_s : dynamic_wait_time(t1_est, cd.p);
      pt.signal = measure(ctx, i, 0, b, pt.wait_time_s, 0);
      try {
        ErrorInputs in;
        in.eps_tw = pt.signal;
        in.d_eps_tw = plan.noise_sd / std::sqrt(static_cast<double>(plan.shots_per_point));
        in.eps0 = cd.eps0;
        in.d_eps0 = cd.d_eps0;
        in.p = std::min(cd.p, fit::kMaxStretch);
        in.d_p = cd.d_p;
        in.t_w_s = pt.wait_time_s;
        pt.rate = propagate_errors(in);
        t1_prev = 1.0 / pt.rate.r1;
      } catch (const DomainError&) {
        pt.rate.r1 = std::nan("");
        pt.rate.unreliable = true;
      }
      rec.points.push_back(pt);
    }
  }

  rec.accounting = ctx.acc;
  rec.accounting.total_s = ctx.acc.relaxation_wait_s + ctx.acc.overhead_s;
  if (plan.time_budget_s && rec.accounting.total_s > *plan.time_budget_s) {
    throw PlanningError("plan needs " + std::to_string(rec.accounting.total_s) +
                        " s, above the budget of " + std::to_string(*plan.time_budget_s) + " s");
  }

  std::vector<const PointRecord*> good;
  for (const auto& pt : rec.points) {
    if (std::isfinite(pt.rate.r1) && pt.rate.r1 > 0.0 && !pt.rate.unreliable) good.push_back(&pt);
  }
  std::stable_sort(good.begin(), good.end(), [](const PointRecord* a, const PointRecord* b) {
    return a->reported_field_t < b->reported_field_t;
  });
  for (const PointRecord* pt : good) {
    if (!rec.profile.fields_t.empty() && !(pt->reported_field_t > rec.profile.fields_t.back())) {
      continue;
    }
    rec.profile.fields_t.push_back(pt->reported_field_t);
    rec.profile.rates_per_s.push_back(pt->rate.r1);
    rec.profile.rate_errors.push_back(pt->rate.d_r1);
    rec.profile.provenance.push_back(pt->provenance);
  }
  return rec;
}

}  // namespace t1noise::acq
