#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "t1noise/constants.hpp"

namespace t1noise::lattice {

using Vec3 = Eigen::Vector3d;

// Randomly populated diamond lattice in a cube of side lattice_size_nm
// centred on the origin (open boundaries). Enrichment is fractional: 0.011 is
// natural abundance. The percentage-form density N_C = 0.92 * eta[%]
// is carbon_density_per_nm3() below.
struct LatticeConfig {
  double enrichment = 0.011;
  double electron_ppm = 0.0;
  double lattice_size_nm = 10.0;
  Vec3 field_direction = Vec3::UnitZ();
  std::uint64_t seed = 1;
  int realizations = 20;
  // Forces an electron onto the origin site (P1 or NV under study).
  bool central_electron = false;
  PhysicalConstants constants{};
  // Worker threads used by ensemble estimators; 0 means hardware concurrency.
  // Results do not depend on this value.
  unsigned threads = 0;

  void validate() const;
  double carbon_density_per_nm3() const {
    return enrichment * constants.site_density_per_nm3();
  }
};

struct SpinLattice {
  std::vector<Vec3> carbon_positions;
  std::vector<Vec3> electron_positions;
  // Set when build_lattice placed an electron on the origin site; always the
  // first entry of electron_positions.
  std::optional<Vec3> central_electron;
  LatticeConfig config;
  std::size_t realization = 0;

  // For hand-built lattices (tests, imported geometries). Positions are taken
  // as given; duplicates are rejected.
  static SpinLattice from_positions(std::vector<Vec3> carbons, std::vector<Vec3> electrons,
                                    const LatticeConfig& config,
                                    std::optional<Vec3> central_electron = std::nullopt);

  double box_volume_nm3() const;
};

// All site positions of the diamond lattice inside a cube of the given side,
// in deterministic order.
std::vector<Vec3> diamond_sites(double side_nm, const PhysicalConstants& constants);

// Realization `realization` of the ensemble described by config. The random
// stream is derived from (config.seed, realization) only.
SpinLattice build_lattice(const LatticeConfig& config, std::size_t realization = 0);

// Ensemble estimate with spread over lattice realizations.
struct Estimate {
  double value = 0.0;
  double sd = 0.0;
  int n_realizations = 0;
  std::uint64_t seed = 0;
  double lattice_size_nm = 0.0;
};

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

// ---- Closed-form electron-bath statistics --------------------------------

// Distance at which the probability of finding no other electron is 1/2:
// (3 ln2 / 4 pi)^(1/3) N_e^(-1/3), N_e = 4e-6 P_e / a^3 (per nm^3).
double poisson_interspin_distance(double concentration_ppm,
                                  const PhysicalConstants& constants = {});

// M_2e = 43.65 P_e^2 mG^2.
double electron_second_moment_mg2(double concentration_ppm);

// gamma_e sqrt(8/pi) sqrt(M_2e), in Hz (about 10.54 P_e mG).
double electron_linewidth_hz(double concentration_ppm, const PhysicalConstants& constants = {});

// r0 = (prefactor / df_det)^(1/3): inside r0 the hyperfine shift exceeds the
// NMR detection linewidth.
double detection_barrier_radius(double detection_linewidth_hz,
                                const PhysicalConstants& constants = {});

struct BathStatistics {
  double mean_interspin_distance_nm = 0.0;
  double second_moment_mg2 = 0.0;
  double linewidth_hz = 0.0;
  double hyperfine_second_moment_khz2 = 0.0;
  double barrier_radius_nm = 0.0;
};

BathStatistics electron_bath_statistics(double concentration_ppm, double detection_linewidth_hz,
                                        const PhysicalConstants& constants = {});

// ---- P1 hyperfine second moment -----------------------------------------

// <A_zx^2> = K^2 (6/5) r_e^-3 (r0^-3 - r_e^-3), in kHz^2. Throws
// DegenerateInputError when r0 >= r_e.
double p1_hyperfine_second_moment_analytic(double mean_distance_nm, double barrier_radius_nm,
                                           const PhysicalConstants& constants = {});
double p1_hyperfine_second_moment_analytic_ppm(double concentration_ppm,
                                               double detection_linewidth_hz,
                                               const PhysicalConstants& constants = {});

struct ObservedHyperfine {
  double second_moment_khz2 = 0.0;  // mean A_zx^2 over observed carbons
  std::size_t observed = 0;
  std::size_t hidden = 0;
};

// Mean of A_zx,j^2 over carbons with |A_zx,j| below the detection linewidth,
// measured from the lattice's central electron.
ObservedHyperfine observed_hyperfine_second_moment(const SpinLattice& lattice,
                                                   double detection_linewidth_hz);

struct HyperfineSimConfig {
  double enrichment = 0.011;
  double electron_ppm = 17.0;
  double detection_linewidth_hz = 2e3;
  std::uint64_t seed = 1;
  int realizations = 20;
  Vec3 field_direction = Vec3::UnitZ();
  PhysicalConstants constants{};
  unsigned threads = 0;
};

struct HyperfineEstimate {
  Estimate second_moment_khz2;  // <A_zx^2>
  Estimate rms_khz;             // <A_zx^obs> = sqrt of the per-realization moment
  double mean_observed = 0.0;
};

// Numeric mode: one electron at the origin of a box of half-width <r_e>.
HyperfineEstimate p1_hyperfine_second_moment_numeric(const HyperfineSimConfig& config);

// ---- 13C reservoir -------------------------------------------------------

// Secular dipolar coupling (Hz) between two carbons separated by r (nm).
double carbon_dipolar_coupling(const Vec3& r, const Vec3& field_direction,
                               const PhysicalConstants& constants = {});

// Per-spin root-sum-square of couplings, averaged over spins (sd over spins).
MeanSd carbon_second_moment(const SpinLattice& lattice);
Estimate carbon_second_moment(const LatticeConfig& config);

// Distance to the partner with the largest |coupling|, averaged over spins.
MeanSd nearest_neighbor_distance(const SpinLattice& lattice);

// <r_n> = [2 <d_CC> / ((mu0/4pi) hbar gamma_n^2)]^(-1/3).
double coupling_derived_distance(double mean_coupling_hz, const PhysicalConstants& constants = {});

struct NearestNeighborEstimate {
  Estimate lattice_nm;
  Estimate coupling_derived_nm;
  Estimate mean_coupling_hz;
};
NearestNeighborEstimate nearest_neighbor_distance(const LatticeConfig& config);

struct NvHyperfine {
  double rms_khz = 0.0;
  std::size_t direct_count = 0;
  double direct_fraction = 0.0;  // direct_count / number of carbons
  std::size_t carbons = 0;
};

// Full hyperfine coupling of every carbon to the central electron, with
// direction cosines taken against nv_axis.
NvHyperfine nv_hyperfine_and_direct_fraction(const SpinLattice& lattice, double threshold_khz,
                                             const Vec3& nv_axis);

struct NvHyperfineEstimate {
  Estimate rms_khz;
  Estimate direct_count;
  Estimate direct_fraction;
};
NvHyperfineEstimate nv_hyperfine_and_direct_fraction(const LatticeConfig& config,
                                                     double threshold_khz, const Vec3& nv_axis);

struct DiffusionEstimate {
  double diffusion_constant_nm2_per_s = 0.0;
  double diffusion_length_nm = 0.0;
  double t2n_used_s = 0.0;
  double r_n_used_nm = 0.0;
};

// D = r_n^2 / (30 T2n) with T2n = 1/d_CC; sigma = sqrt(2 D T1).
DiffusionEstimate spin_diffusion(double r_n_nm, double d_cc_hz, double t1_s);

struct ConvergenceSeries {
  std::vector<double> sizes_nm;
  std::vector<double> estimates;
  // residuals[i] = |estimates[i+1] - estimates[i]|
  std::vector<double> residuals;
};

using LatticeEstimator = std::function<double(const LatticeConfig&)>;

ConvergenceSeries convergence_sweep(const LatticeConfig& config, const LatticeEstimator& estimator,
                                    std::span<const double> sizes_nm);

// Runs fn(realization) for 0..n-1 across threads; the result order is by
// realization index regardless of scheduling.
std::vector<double> map_realizations(int n, unsigned threads,
                                     const std::function<double(std::size_t)>& fn);

MeanSd mean_sd(std::span<const double> values);

}  // namespace t1noise::lattice
