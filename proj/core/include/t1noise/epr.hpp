#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "t1noise/data.hpp"
#include "t1noise/fitting.hpp"

namespace t1noise::epr {

// Half-open index range [begin, end) into a spectrum.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const IndexRange&) const = default;
};

struct SegmentOptions {
  double prominence_factor = 3.0;  // threshold in units of the robust edge noise sd
  double edge_fraction = 0.05;     // first and last fraction of points used for the noise sd
  int min_lobe_points = 3;         // consecutive points beyond threshold that make a lobe
};

// Ranges bounded by the midpoints between consecutive extremum pairs. The
// outermost ranges extend to the spectrum ends. Empty when no max/min pair.
std::vector<IndexRange> segment_peaks(const EprSpectrum& spectrum, const SegmentOptions& opt = {});

// Derivative of a Tsallian absorption line h g((B - B0)/w; q), with w the half
// width at half maximum. q = 1 is the Gaussian limit, q = 2 a Lorentzian.
double derivative_tsallian(double field_g, double height, double center_g, double hwhm_g,
                           double q);

struct PeakFit {
  IndexRange range;
  double center_g = 0.0;
  double fwhm_g = 0.0;  // NaN when the fit did not converge
  double height = 0.0;  // absorption peak height, a.u.
  double q = 1.5;
  double baseline_offset = 0.0;
  bool converged = false;
  fit::FitResult fit;
};

// Subtracts the median over the range (plus an optional manual offset) and
// fits derivative_tsallian with parameters (height, center, hwhm, q).
PeakFit fit_peak(const EprSpectrum& spectrum, const IndexRange& range,
                 double extra_offset = 0.0);

struct DoubleIntegral {
  std::vector<double> field_g;         // concatenated range axes
  std::vector<double> first_integral;  // per-range cumulative trapezoid, concatenated
  std::vector<double> second_integral;
  std::vector<double> step_heights;  // plateau increment per range
};

// baselines[i] is subtracted from range i before integrating; empty means no
// correction. Overlapping or unsorted ranges raise DomainError.
DoubleIntegral double_integrate(const EprSpectrum& spectrum, const std::vector<IndexRange>& ranges,
                                const std::vector<double>& baselines = {});

// Sum(fwhm h) / Sum(h) over converged peaks, with h = |height|.
double weighted_linewidth(const std::vector<PeakFit>& peaks);

struct EprOptions {
  SegmentOptions segment;
  std::map<std::size_t, double> offset_overrides;  // range index -> manual extra offset
  double reference_scale = 1.0;                    // spins per unit double-integral area
};

struct EprResult {
  std::vector<IndexRange> ranges;
  std::vector<PeakFit> peaks;
  DoubleIntegral integral;
  double weighted_linewidth_g = 0.0;  // NaN when no peak converged
  double total_area = 0.0;
  double spin_count = 0.0;  // total_area * reference_scale
};

EprResult process_spectrum(const EprSpectrum& spectrum, const EprOptions& opt = {});

struct SyntheticLine {
  double center_g = 0.0;
  double fwhm_g = 1.0;
  double height = 1.0;
  double q = 1.0;
};

// Sum of derivative lines on a uniform axis, plus a constant baseline and
// Gaussian noise.
EprSpectrum synthesize_spectrum(double field_min_g, double field_max_g, std::size_t points,
                                const std::vector<SyntheticLine>& lines, double noise_sd = 0.0,
                                std::uint64_t seed = 1, double baseline = 0.0);

}  // namespace t1noise::epr
