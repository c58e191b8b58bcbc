#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "t1noise/data.hpp"
#include "t1noise/relaxmodel.hpp"

namespace t1noise::acq {

// Position (mm) to field (T) table with monotone piecewise-cubic (PCHIP)
// interpolation; tables with fewer than 4 knots fall back to linear.
class FieldMap {
 public:
  FieldMap(std::vector<double> positions_mm, std::vector<double> fields_t);

  double field_at(double position_mm) const;
  // Position at which the field equals field_t, searched on [lo, hi]
  // (defaults to the whole map). Requires a bracketing interval.
  double position_for_field(double field_t, std::optional<double> lo_mm = std::nullopt,
                            std::optional<double> hi_mm = std::nullopt) const;

  const std::vector<double>& positions_mm() const { return positions_; }
  const std::vector<double>& fields_t() const { return fields_; }
  double min_position() const { return positions_.front(); }
  double max_position() const { return positions_.back(); }

 private:
  struct Impl;
  std::vector<double> positions_;
  std::vector<double> fields_;
  std::shared_ptr<const Impl> impl_;
};

double field_at_position(const FieldMap& map, double position_mm);

// Synthetic fringe-field map B(x) = 7 T / (1 + (x/x0)^3) sampled every 16 mm
// on [0, 1200] mm, with x0 chosen so that B(928 mm) = 30 mT.
FieldMap demo_field_map();

struct ShuttleProfile {
  double start_mm = 0.0;
  double end_mm = 0.0;
  double transfer_time_s = 0.648;
  double time_jitter_s = 0.004;

  double travel_distance_mm() const {
    return end_mm > start_mm ? end_mm - start_mm : start_mm - end_mm;
  }
  void validate() const;

  // 648 +- 4 ms and 648 +- 0.6 ms transfer-time spreads.
  static ShuttleProfile main_text(double start_mm, double end_mm);
  static ShuttleProfile supplementary(double start_mm, double end_mm);
};

// eps0 exp(-(t/T1)^p) + N(0, noise_sd) at each time. sigma is filled with
// noise_sd when it is positive.
DecayCurve simulate_decay(double t1_s, double p, double eps0, const std::vector<double>& times_s,
                          double noise_sd, std::uint64_t seed, double field_t = 0.0);

// exp(-integral of R1(B(x(t))) dt) for constant-speed motion from start to
// end; transfer_time overrides the profile's nominal time.
double simulate_shuttle_loss(const FieldMap& map, const ShuttleProfile& shuttle,
                             const relax::ProfileModel& rate_model,
                             std::optional<double> transfer_time_s = std::nullopt);

// ln(eps0/eps_tw)^(1/p) / t_w.
double reconstruct_r1(double eps_tw, double eps0, double p, double t_w_s);

// T1 (ln 2)^(1/p): the wait at which half the initial signal remains.
double dynamic_wait_time(double t1_est_s, double p);

// N dt n(n+1) / (2 N t_w + N_d dt n(n+1)).
double time_gain(int n_fields, int n_samples, double dt_s, double t_w_s, int n_calibration);

inline constexpr double kWaitTimeError_s = 2.0;

struct ErrorInputs {
  double eps_tw = 0.0;
  double d_eps_tw = 0.0;
  double eps0 = 0.0;
  double d_eps0 = 0.0;
  double p = 1.0;
  double d_p = 0.0;
  double t_w_s = 0.0;
  double d_t_s = kWaitTimeError_s;
};

struct PropagatedRate {
  double r1 = 0.0;
  double d_r1 = 0.0;
  double relative_error = 0.0;
  bool unreliable = false;  // relative error above 100%
};

// First-order propagation through reconstruct_r1.
PropagatedRate propagate_errors(const ErrorInputs& in);

enum class Strategy { full_2d, accelerated_1d };
std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

// Stretch factor of the simulated truth: low below transition_t, high above,
// with a smooth logistic step in log10 B.
struct TruthStretch {
  double low = 0.75;
  double high = 1.0;
  double transition_t = 0.1;
  double width_decades = 0.25;
  double at(double field_t) const;
};

struct AcquisitionPlan {
  Strategy strategy = Strategy::accelerated_1d;
  std::vector<double> fields_t;  // N relaxation fields, ascending
  int decay_samples = 40;        // n
  double time_step_s = 10.0;     // dt
  // Fixed wait for the 1D strategy; dynamic waits when empty.
  std::optional<double> wait_time_s = 30.0;
  int calibration_fields = 4;  // N_d
  int shots_per_point = 1;
  double eps0 = 372.0;
  double noise_sd = 372.0 / 400.0;
  TruthStretch stretch{};

  // Experiment geometry and overheads.
  double polarization_position_mm = 928.0;
  double detection_position_mm = 0.0;
  double coil_threshold_t = 20.8e-3;  // below: field set by the coil at the polarization position
  double shuttled_field_offset_t = 0.0;
  double polarization_time_s = 0.0;
  bool include_transit = true;  // shuttle time in the accounting and transit loss in the signal
  std::optional<double> time_budget_s;

  void validate() const;
};

struct PointRecord {
  double field_t = 0.0;           // true relaxation field
  double reported_field_t = 0.0;  // with the shuttled-field offset applied
  bool coil_driven = false;
  double wait_time_s = 0.0;
  double signal = 0.0;
  double true_r1 = 0.0;
  PropagatedRate rate;
  Provenance provenance = Provenance::full_curve;
  int calibration_index = -1;  // calibration curve supplying (eps0, p); -1 for full curves
};

struct DecayRecord {
  DecayCurve curve;
  double eps0 = 0.0;
  double t1_s = 0.0;
  double p = 0.0;
  double d_eps0 = 0.0;
  double d_t1 = 0.0;
  double d_p = 0.0;
  bool converged = false;
  bool calibration = false;
};

struct Accounting {
  double relaxation_wait_s = 0.0;
  double overhead_s = 0.0;
  double total_s = 0.0;
  long shots = 0;
};

struct ExperimentRecord {
  AcquisitionPlan plan;
  std::uint64_t seed = 0;
  std::vector<DecayRecord> decays;
  std::vector<PointRecord> points;
  RelaxometryProfile profile;  // reported fields; unreliable and failed points omitted
  Accounting accounting;
};

ExperimentRecord run_plan(const AcquisitionPlan& plan, const relax::ProfileModel& truth,
                          const FieldMap& map, const ShuttleProfile& shuttle, std::uint64_t seed);

}  // namespace t1noise::acq
