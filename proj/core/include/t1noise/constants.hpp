#pragma once

#include <cmath>

namespace t1noise {

// Gyromagnetic ratios are linear frequencies (Hz/T); every spectral width in
// the library is a linear frequency in Hz.
inline constexpr double kGammaCarbonHzPerT = 10.705e6;
inline constexpr double kGammaElectronHzPerT = 28.02e9;

// (mu0/4pi) gamma_e gamma_n hbar, in kHz nm^3.
inline constexpr double kHyperfinePrefactorKHzNm3 = 19.79;

inline constexpr double kNvZeroFieldSplittingHz = 2.87e9;
inline constexpr double kP1HyperfineParallelHz = 114e6;
inline constexpr double kP1HyperfinePerpendicularHz = 86e6;

inline constexpr double kGaussPerTesla = 1e4;

struct PhysicalConstants {
  double gamma_n_hz_per_t = kGammaCarbonHzPerT;
  double gamma_e_hz_per_t = kGammaElectronHzPerT;
  double hyperfine_prefactor_khz_nm3 = kHyperfinePrefactorKHzNm3;
  // Lattice convention: atoms_per_cell sites per cube of edge
  // lattice_constant_nm. The default (4 per 0.35 nm) gives 93.3 sites/nm^3,
  // i.e. N_C = 0.933 * (enrichment in percent) spins/nm^3.
  double lattice_constant_nm = 0.35;
  int atoms_per_cell = 4;

  double gamma_e_hz_per_gauss() const { return gamma_e_hz_per_t / kGaussPerTesla; }

  // (mu0/4pi) hbar gamma_n^2 in Hz nm^3, scaled from the electron-nuclear
  // prefactor so both couplings share one unit convention.
  double carbon_dipolar_prefactor_hz_nm3() const {
    return hyperfine_prefactor_khz_nm3 * 1e3 * gamma_n_hz_per_t / gamma_e_hz_per_t;
  }

  double site_density_per_nm3() const {
    return atoms_per_cell / (lattice_constant_nm * lattice_constant_nm * lattice_constant_nm);
  }

  // Edge of the 8-site conventional diamond cell with the same site density.
  double conventional_cell_edge_nm() const {
    return lattice_constant_nm * std::cbrt(8.0 / atoms_per_cell);
  }
};

}  // namespace t1noise
