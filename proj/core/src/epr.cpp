#include "t1noise/epr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "t1noise/errors.hpp"
#include "t1noise/rng.hpp"

namespace t1noise::epr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

// dg/dx for g = (1 + c x^2)^(-1/u), c = 2^u - 1, u = q - 1, and its x-derivative.
struct ShapeDerivative {
  double d1 = 0.0;
  double d2 = 0.0;
};

ShapeDerivative shape_derivative(double x, double q) {
  const double u = q - 1.0;
  if (u == 0.0) {
    const double l = std::numbers::ln2;
    const double e = std::exp(-l * x * x);
    return {-2.0 * l * x * e, -2.0 * l * e * (1.0 - 2.0 * l * x * x)};
  }
  const double c = std::expm1(u * std::numbers::ln2);
  const double s = 1.0 + c * x * x;
  const double g = std::exp(-std::log1p(c * x * x) / u);
  const double k = 2.0 * c / u;
  return {-k * x * g / s, -k * (g / s) * (1.0 - 2.0 * c * x * x * (1.0 / u + 1.0) / s)};
}

void check_shape(double hwhm, double q) {
  if (!(hwhm > 0.0)) throw DomainError("line width must be positive");
  if (!(q >= 1.0 && q <= 2.0)) throw DomainError("q must lie in [1, 2]");
}

fit::CurveModel derivative_model() {
  fit::CurveModel m;
  m.names = {"height", "center_G", "hwhm_G", "q"};
  m.value = [](double b, const fit::VectorXd& p) {
    return p[0] / p[2] * shape_derivative((b - p[1]) / p[2], p[3]).d1;
  };
  m.gradient = [](double b, const fit::VectorXd& p, Eigen::Ref<fit::VectorXd> g) {
    const double h = p[0], w = p[2], q = p[3];
    const double x = (b - p[1]) / w;
    const ShapeDerivative sd = shape_derivative(x, q);
    // q enters only through the shape; a central difference is adequate there.
    const double dq = 1e-6;
    const double qa = std::max(1.0, q - dq), qb = std::min(2.0, q + dq);
    const double dshape_dq =
        (shape_derivative(x, qb).d1 - shape_derivative(x, qa).d1) / (qb - qa);
    g << sd.d1 / w, -h * sd.d2 / (w * w), -h * sd.d1 / (w * w) - h * sd.d2 * x / (w * w),
        h / w * dshape_dq;
  };
  return m;
}

}  // namespace

double derivative_tsallian(double field_g, double height, double center_g, double hwhm_g,
                           double q) {
  check_shape(hwhm_g, q);
  return height / hwhm_g * shape_derivative((field_g - center_g) / hwhm_g, q).d1;
}

std::vector<IndexRange> segment_peaks(const EprSpectrum& spectrum, const SegmentOptions& opt) {
  spectrum.validate();
  const std::size_t n = spectrum.size();
  if (n < 5) throw ValidationError("peak segmentation needs >= 5 points");
  if (!(opt.edge_fraction > 0.0 && opt.edge_fraction < 0.5) || !(opt.prominence_factor >= 0.0) ||
      opt.min_lobe_points < 1) {
    throw ValidationError("invalid segmentation options");
  }
  const auto& y = spectrum.signal;
  const std::size_t k =
      std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(opt.edge_fraction * n)));
  std::vector<double> edge(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(k));
  edge.insert(edge.end(), y.end() - static_cast<std::ptrdiff_t>(k), y.end());
  const double base = median(edge);
  std::vector<double> dev(edge.size());
  std::transform(edge.begin(), edge.end(), dev.begin(), [base](double v) { return std::abs(v - base); });
  const double robust_sd = 1.4826 * median(dev);
  double peak = 0.0;
  for (double v : y) peak = std::max(peak, std::abs(v - base));
  const double thr = std::max(opt.prominence_factor * robust_sd, 1e-6 * peak);

  struct Extremum {
    std::size_t index;
    int sign;
    double magnitude;
  };
  std::vector<Extremum> ext;
  std::size_t i = 0;
  while (i < n) {
    const double v = y[i] - base;
    const int sign = v > thr ? 1 : (v < -thr ? -1 : 0);
    if (sign == 0) {
      ++i;
      continue;
    }
    std::size_t j = i, best = i;
    while (j < n && (y[j] - base) * sign > thr) {
      if ((y[j] - base) * sign > (y[best] - base) * sign) best = j;
      ++j;
    }
    // Extrema on the spectrum ends are monotone edges, not lobes.
    if (static_cast<int>(j - i) >= opt.min_lobe_points && best != 0 && best != n - 1) {
      const double mag = std::abs(y[best] - base);
      if (!ext.empty() && ext.back().sign == sign) {
        if (mag > ext.back().magnitude) ext.back() = {best, sign, mag};
      } else {
        ext.push_back({best, sign, mag});
      }
    }
    i = j;
  }

  const std::size_t pairs = ext.size() / 2;
  std::vector<IndexRange> ranges;
  std::size_t begin = 0;
  for (std::size_t p = 0; p < pairs; ++p) {
    const std::size_t end =
        p + 1 < pairs ? (ext[2 * p + 1].index + ext[2 * p + 2].index) / 2 : n;
    ranges.push_back({begin, end});
    begin = end;
  }
  return ranges;
}

PeakFit fit_peak(const EprSpectrum& spectrum, const IndexRange& range, double extra_offset) {
  spectrum.validate();
  if (range.end > spectrum.size() || range.begin >= range.end) {
    throw ValidationError("peak range lies outside the spectrum");
  }
  if (range.size() < 7) throw ValidationError("peak fit needs >= 7 points in range");

  const auto b0 = spectrum.field_g.begin() + static_cast<std::ptrdiff_t>(range.begin);
  const auto b1 = spectrum.field_g.begin() + static_cast<std::ptrdiff_t>(range.end);
  const auto y0 = spectrum.signal.begin() + static_cast<std::ptrdiff_t>(range.begin);
  const auto y1 = spectrum.signal.begin() + static_cast<std::ptrdiff_t>(range.end);
  std::vector<double> x(b0, b1);
  std::vector<double> y(y0, y1);

  PeakFit out;
  out.range = range;
  out.fwhm_g = kNaN;
  out.baseline_offset = median(y) + extra_offset;
  for (double& v : y) v -= out.baseline_offset;

  const auto imax = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  const auto imin = static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
  if (!(y[imax] > y[imin]) || imax == imin) {
    out.fit.message = "no derivative lobes in range";
    return out;
  }
  const double bpp = std::abs(x[imax] - x[imin]);
  const double span = x.back() - x.front();
  const double step = span / static_cast<double>(x.size() - 1);
  const double center = 0.5 * (x[imax] + x[imin]);
  const double w = std::max(0.75 * bpp, step);
  const double q = 1.5;

  // Height from a one-parameter linear solve at the initial shape.
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = shape_derivative((x[i] - center) / w, q).d1 / w;
    num += y[i] * d;
    den += d * d;
  }
  const double height = den > 0.0 ? num / den : 0.0;

  fit::VectorXd init(4);
  init << height, center, w, q;
  fit::Bounds bounds{fit::VectorXd(4), fit::VectorXd(4)};
  const double inf = std::numeric_limits<double>::infinity();
  bounds.lower << -inf, x.front(), step * 1e-3, 1.0;
  bounds.upper << inf, x.back(), span * 10.0, 2.0;
  init[2] = std::clamp(init[2], bounds.lower[2], bounds.upper[2]);

  try {
    out.fit = fit::fit_curve(derivative_model(), x, y, {}, init, bounds);
  } catch (const NumericalError& e) {
    out.fit.message = e.what();
    return out;
  }
  out.height = out.fit.parameters[0];
  out.center_g = out.fit.parameters[1];
  out.q = out.fit.parameters[3];
  const double hwhm = out.fit.parameters[2];
  out.converged = out.fit.converged && std::isfinite(hwhm) && hwhm > 0.0 && out.height != 0.0;
  if (out.converged) out.fwhm_g = 2.0 * hwhm;
  return out;
}

DoubleIntegral double_integrate(const EprSpectrum& spectrum, const std::vector<IndexRange>& ranges,
                                const std::vector<double>& baselines) {
  spectrum.validate();
  if (!baselines.empty() && baselines.size() != ranges.size()) {
    throw ValidationError("one baseline per range is required");
  }
  for (std::size_t r = 0; r < ranges.size(); ++r) {
    if (ranges[r].begin >= ranges[r].end || ranges[r].end > spectrum.size()) {
      throw DomainError("integration range lies outside the spectrum");
    }
    if (r > 0 && ranges[r].begin < ranges[r - 1].end) {
      throw DomainError("integration ranges overlap or are unsorted");
    }
  }
  const auto& bx = spectrum.field_g;
  const auto& by = spectrum.signal;
  DoubleIntegral out;
  for (std::size_t r = 0; r < ranges.size(); ++r) {
    const double base = baselines.empty() ? 0.0 : baselines[r];
    double acc = 0.0;
    for (std::size_t i = ranges[r].begin; i < ranges[r].end; ++i) {
      if (i > ranges[r].begin) {
        acc += 0.5 * ((by[i] - base) + (by[i - 1] - base)) * (bx[i] - bx[i - 1]);
      }
      out.field_g.push_back(bx[i]);
      out.first_integral.push_back(acc);
    }
  }
  out.second_integral.assign(out.field_g.size(), 0.0);
  for (std::size_t i = 1; i < out.field_g.size(); ++i) {
    out.second_integral[i] =
        out.second_integral[i - 1] + 0.5 * (out.first_integral[i] + out.first_integral[i - 1]) *
                                         (out.field_g[i] - out.field_g[i - 1]);
  }
  std::size_t pos = 0;
  double prev = 0.0;
  for (const auto& r : ranges) {
    pos += r.size();
    const double level = out.second_integral[pos - 1];
    out.step_heights.push_back(level - prev);
    prev = level;
  }
  return out;
}

double weighted_linewidth(const std::vector<PeakFit>& peaks) {
  double num = 0.0, den = 0.0;
  for (const auto& p : peaks) {
    if (!p.converged) continue;
    num += p.fwhm_g * std::abs(p.height);
    den += std::abs(p.height);
  }
  if (!(den > 0.0)) throw DomainError("no converged peak to weight");
  return num / den;
}

EprResult process_spectrum(const EprSpectrum& spectrum, const EprOptions& opt) {
  EprResult out;
  out.ranges = segment_peaks(spectrum, opt.segment);
  std::vector<double> baselines;
  for (std::size_t r = 0; r < out.ranges.size(); ++r) {
    const auto it = opt.offset_overrides.find(r);
    const double extra = it == opt.offset_overrides.end() ? 0.0 : it->second;
    out.peaks.push_back(fit_peak(spectrum, out.ranges[r], extra));
    baselines.push_back(out.peaks.back().baseline_offset);
  }
  out.integral = double_integrate(spectrum, out.ranges, baselines);
  for (double h : out.integral.step_heights) out.total_area += h;
  out.spin_count = out.total_area * opt.reference_scale;
  out.weighted_linewidth_g = kNaN;
  if (std::any_of(out.peaks.begin(), out.peaks.end(), [](const PeakFit& p) { return p.converged; })) {
    out.weighted_linewidth_g = weighted_linewidth(out.peaks);
  }
  return out;
}

EprSpectrum synthesize_spectrum(double field_min_g, double field_max_g, std::size_t points,
                                const std::vector<SyntheticLine>& lines, double noise_sd,
                                std::uint64_t seed, double baseline) {
  if (points < 3 || !(field_max_g > field_min_g)) {
    throw ValidationError("synthetic spectrum needs >= 3 points on an increasing axis");
  }
  if (!(noise_sd >= 0.0)) throw ValidationError("noise sd must be >= 0");
  Rng rng(seed);
  EprSpectrum s;
  s.field_g.resize(points);
  s.signal.assign(points, baseline);
  const double step = (field_max_g - field_min_g) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) {
    s.field_g[i] = field_min_g + step * static_cast<double>(i);
    for (const auto& l : lines) {
      s.signal[i] += derivative_tsallian(s.field_g[i], l.height, l.center_g, 0.5 * l.fwhm_g, l.q);
    }
    if (noise_sd > 0.0) s.signal[i] += rng.normal(0.0, noise_sd);
  }
  return s;
}

}  // namespace t1noise::epr
