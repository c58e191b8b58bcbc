#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "t1noise/constants.hpp"
#include "t1noise/tsallian.hpp"

namespace t1noise::relax {

// Coupling strengths A2 are in kHz^2 and converted to Hz^2 internally; widths
// and Larmor frequencies are linear frequencies in Hz.

// S(w) = 2 tau / (1 + w^2 tau^2).
double lorentzian_spectral_density(double omega, double tau_c_s);

// A2 d / (w^2 + d^2).
double p1_bath_rate(double omega_l_hz, double a2_khz2, double d_ee_hz);
// A2 T1e / (1 + w^2 T1e^2).
double single_electron_rate(double omega_l_hz, double a2_khz2, double t1e_s);
// (A2 / d) exp(-w^2 / 2 d^2). The dipolar lineshape is not pinned down beyond
// "more Gaussian"; this form shares the p1_bath zero-field scale A2/d.
double nuclear_dipolar_rate(double omega_l_hz, double a2_khz2, double d_cc_hz);

// B_K^(2) ~ d_CC / (2 gamma_n).
double nuclear_dipolar_knee(double d_cc_hz, double gamma_n_hz_per_t = kGammaCarbonHzPerT);

enum class ChannelKind { p1_bath, single_electron, nuclear_dipolar, phonon_offset };

std::string to_string(ChannelKind kind);
ChannelKind channel_kind_from_string(const std::string& name);

struct RateChannel {
  ChannelKind kind = ChannelKind::p1_bath;
  std::string name;
  double a2_khz2 = 0.0;
  // d_ee (p1_bath), 1/T1e (single_electron) or d_CC (nuclear_dipolar), in Hz.
  double width_hz = 0.0;
  double offset_rate = 0.0;  // phonon_offset only, 1/s

  static RateChannel p1_bath(double a2_khz2, double d_ee_hz, std::string name = "p1_bath");
  static RateChannel single_electron(double a2_khz2, double t1e_s,
                                     std::string name = "single_electron");
  static RateChannel nuclear_dipolar(double a2_khz2, double d_cc_hz,
                                     std::string name = "nuclear_dipolar");
  static RateChannel phonon_offset(double rate, std::string name = "phonon_offset");

  void validate() const;
  // Rate at Larmor frequency omega (Hz), or its k-th derivative in omega.
  double rate(double omega_l_hz, int derivative_order = 0) const;
};

struct RateModel {
  std::vector<RateChannel> channels;
  double gamma_n_hz_per_t = kGammaCarbonHzPerT;

  void validate() const;
  // Total rate at field B (T), or d^k R / dB^k for k = 1, 2.
  double rate(double field_t, int derivative_order = 0) const;
  double channel_rate(std::size_t index, double field_t) const;
  const RateChannel* first_of(ChannelKind kind) const;
};

// Pure function of (model, B).
double total_rate(const RateModel& model, double field_t);

// Anything that yields R1(B) with analytic first and second field derivatives.
using ProfileModel = std::variant<RateModel, TsallianProfile>;

double profile_rate(const ProfileModel& model, double field_t, int derivative_order = 0);

enum class KneeStatus { found, not_found };

struct KneeOptions {
  double saturation_field_t = 7.0;
  double grid_min_t = 1e-4;
  double grid_max_t = 7.0;
  int grid_points = 2000;
  double bisection_tol_t = 1e-6;
  // The rate counts as saturated at the saturation field when its
  // logarithmic slope |d ln R / d ln B| there is below this value.
  double saturation_slope = 0.1;
};

struct KneeFields {
  KneeStatus twice_saturation_status = KneeStatus::not_found;
  double twice_saturation_t = 0.0;  // B_K^(1), where R = 2 R(saturation field)
  double saturation_rate = 0.0;
  // Zeros of d^2 R / dB^2, ascending.
  std::vector<double> inflection_fields_t;
  // d_ee / (2 gamma_n) from the first p1_bath channel.
  std::optional<double> analytic_bk1_t;
  // From the first nuclear_dipolar or single_electron channel.
  std::optional<double> analytic_bk2_t;
};

KneeFields knee_fields(const ProfileModel& model, const KneeOptions& options = {});

// Bisection for R(B) = target on [lo, hi], assuming a sign change.
double bisect_field(const ProfileModel& model, double target, double lo, double hi, double tol_t);

// 10 log10(R(B0) / R(B)); positive where the rate at B is below that at B0.
double phase_noise(const ProfileModel& model, double omega0_field_t, double field_t);

struct ReservoirInputs {
  double field_t = 0.0;
  double theta_nv_rad = 0.0;
  double theta_p1_rad = 0.0;
  int m_i = 0;
  double zero_field_splitting_hz = kNvZeroFieldSplittingHz;
  double a_parallel_hz = kP1HyperfineParallelHz;
  double a_perpendicular_hz = kP1HyperfinePerpendicularHz;
  double gamma_e_hz_per_t = kGammaElectronHzPerT;
  double gamma_n_hz_per_t = kGammaCarbonHzPerT;
};

struct ReservoirFrequencies {
  double omega_nv_plus_hz = 0.0;   // Delta + gamma_e B cos(theta) branch
  double omega_nv_minus_hz = 0.0;  // Delta - gamma_e B cos(theta) branch
  double omega_e_hz = 0.0;
  double omega_l_hz = 0.0;
};

ReservoirFrequencies reservoir_frequencies(const ReservoirInputs& in);

struct Crossover {
  bool found = false;
  double field_t = 0.0;
  int sign_changes = 0;  // on the scan grid; 1 means the crossing is unique there
};

// Field where R_a(B) = R_b(B) within [lo, hi]: log-grid scan, then bisection.
Crossover crossover_field(const ProfileModel& a, const ProfileModel& b, double lo_t, double hi_t,
                          int grid_points = 2000, double tol_t = 1e-9);

// A2/d_ee of a p1_bath channel under the Hz convention (d_ee as stored) and
// under the reading where the printed kHz figure is taken literally
// (d_ee / 1000).
struct ZeroFieldRate {
  double hz_convention = 0.0;
  double printed_khz_convention = 0.0;
};
ZeroFieldRate zero_field_rate(const RateChannel& p1_channel);

}  // namespace t1noise::relax
