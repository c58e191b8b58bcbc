#include <cmath>
#include <numbers>

#include "doctest.h"
#include "generators.hpp"
#include "t1noise/epr.hpp"
#include "t1noise/errors.hpp"

using namespace t1noise;
using namespace t1noise::epr;
using t1noise::testing::for_all;
using t1noise::testing::Gen;
using t1noise::testing::rel_err;

namespace {

std::vector<SyntheticLine> triplet(double fwhm, double q = 1.0) {
  return {{3330.0, fwhm, 1.0, q}, {3350.0, fwhm, 1.0, q}, {3370.0, fwhm, 1.0, q}};
}

// Exact second integral over [a, b] of a derivative line of Lorentzian shape,
// integrated from a: h w (atan xb - atan xa) - (b - a) h g(xa).
double lorentzian_double_integral(double h, double c, double w, double a, double b) {
  const double xa = (a - c) / w, xb = (b - c) / w;
  return h * w * (std::atan(xb) - std::atan(xa)) - (b - a) * h / (1.0 + xa * xa);
}

}  // namespace

TEST_SUITE("epr") {
  TEST_CASE("a single derivative line gives one range over the whole peak") {
    const auto s = synthesize_spectrum(3340, 3360, 801, {{3350.0, 1.0, 1.0, 1.0}});
    const auto r = segment_peaks(s);
    REQUIRE(r.size() == 1);
    CHECK(r[0].begin == 0);
    CHECK(r[0].end == s.size());
  }

  TEST_CASE("a triplet gives three contiguous ranges around the centers") {
    const auto s = synthesize_spectrum(3320, 3380, 3001, triplet(1.0), 0.005, 2);
    const auto r = segment_peaks(s);
    REQUIRE(r.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
      const double lo = s.field_g[r[k].begin], hi = s.field_g[r[k].end - 1];
      const double c = 3330.0 + 20.0 * static_cast<double>(k);
      CHECK(lo < c);
      CHECK(hi > c);
      if (k > 0) CHECK(r[k].begin == r[k - 1].end);
    }
  }

  TEST_CASE("monotone and flat signals have no peaks") {
    EprSpectrum s;
    for (int i = 0; i < 100; ++i) {
      s.field_g.push_back(i);
      s.signal.push_back(0.1 * i);
    }
    CHECK(segment_peaks(s).empty());
    s.signal.assign(100, 2.0);
    CHECK(segment_peaks(s).empty());
  }

  TEST_CASE("segmentation is invariant under negation") {
    for_all(20, 51, [](Gen& g, int) {
      std::vector<SyntheticLine> lines;
      const int n = g.integer(1, 3);
      for (int k = 0; k < n; ++k) {
        lines.push_back({3330.0 + 20.0 * k + g.uniform(-2, 2), g.uniform(0.5, 3), g.uniform(0.3, 2),
                         g.uniform(1, 2)});
      }
      auto s = synthesize_spectrum(3310, 3390, 2001, lines, g.uniform(0, 0.01),
                                   static_cast<std::uint64_t>(g.integer(1, 1000)));
      const auto a = segment_peaks(s);
      for (auto& v : s.signal) v = -v;
      CHECK(segment_peaks(s) == a);
    });
  }

  TEST_CASE("noiseless derivative Lorentzian gives the exact width") {
    const auto s = synthesize_spectrum(3300, 3400, 4001, {{3350.0, 1.7, 0.8, 2.0}});
    const auto f = fit_peak(s, {0, s.size()});
    REQUIRE(f.converged);
    CHECK(rel_err(f.fwhm_g, 1.7) < 1e-6);
    CHECK(f.center_g == doctest::Approx(3350.0).epsilon(1e-9));
    CHECK(rel_err(f.height, 0.8) < 1e-6);
  }

  TEST_CASE("forward model recovery for random shapes") {
    for_all(10, 52, [](Gen& g, int) {
      const double fw = g.uniform(0.5, 3), q = g.uniform(1.05, 2.0), h = g.uniform(0.2, 3);
      const auto s = synthesize_spectrum(3320, 3380, 2401, {{3350.0, fw, h, q}});
      const auto f = fit_peak(s, {0, s.size()});
      REQUIRE(f.converged);
      CHECK(rel_err(f.fwhm_g, fw) < 1e-5);
      CHECK(f.q == doctest::Approx(q).epsilon(1e-4));
    });
  }

  TEST_CASE("a constant signal does not converge") {
    EprSpectrum s;
    for (int i = 0; i < 50; ++i) {
      s.field_g.push_back(3300 + i);
      s.signal.push_back(0.3);
    }
    const auto f = fit_peak(s, {0, 50});
    CHECK_FALSE(f.converged);
    CHECK(std::isnan(f.fwhm_g));
    CHECK_THROWS_AS(fit_peak(s, {0, 5}), ValidationError);
  }

  TEST_CASE("noisy triplet widths") {
    // Peak derivative amplitude for q = 1, h = 1, FWHM 1 G is about 1.43.
    const auto s = synthesize_spectrum(3320, 3380, 3001, triplet(1.0), 0.0143, 3);
    const auto res = process_spectrum(s);
    REQUIRE(res.peaks.size() == 3);
    for (const auto& p : res.peaks) {
      REQUIRE(p.converged);
      CHECK(rel_err(p.fwhm_g, 1.0) < 0.05);
    }
  }

  TEST_CASE("unit-area Gaussian derivative integrates to one") {
    const double fwhm = 2.0, w = 1.0;
    const double h = 1.0 / (w * std::sqrt(std::numbers::pi / std::log(2.0)));
    const auto s = synthesize_spectrum(3330, 3370, 10000, {{3350.0, fwhm, h, 1.0}});
    const auto di = double_integrate(s, {{0, s.size()}});
    CHECK(di.second_integral.back() == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(di.step_heights[0] == doctest::Approx(1.0).epsilon(1e-3));
  }

  TEST_CASE("zero signal gives zero steps") {
    EprSpectrum s;
    for (int i = 0; i < 40; ++i) {
      s.field_g.push_back(i);
      s.signal.push_back(0.0);
    }
    const auto di = double_integrate(s, {{0, 20}, {20, 40}});
    CHECK(di.step_heights == std::vector<double>{0.0, 0.0});
  }

  TEST_CASE("identical peaks give equal steps") {
    const auto s = synthesize_spectrum(3300, 3400, 8001, {{3330.0, 2.0, 1.0, 1.5}, {3370.0, 2.0, 1.0, 1.5}});
    const auto r = segment_peaks(s);
    REQUIRE(r.size() == 2);
    const auto di = double_integrate(s, r);
    CHECK(rel_err(di.step_heights[0], di.step_heights[1]) < 0.01);
  }

  TEST_CASE("overlapping ranges are rejected") {
    const auto s = synthesize_spectrum(3300, 3400, 101, {{3350.0, 2.0, 1.0, 1.5}});
    CHECK_THROWS_AS(double_integrate(s, {{0, 60}, {50, 101}}), DomainError);
    CHECK_THROWS_AS(double_integrate(s, {{50, 101}, {0, 40}}), DomainError);
  }

  TEST_CASE("double integration error falls as h squared") {
    const double a = 3340, b = 3360, c = 3350.3, w = 0.8, h = 1.0;
    const double exact = lorentzian_double_integral(h, c, w, a, b);
    double prev = 0.0;
    for (std::size_t n : {101u, 201u, 401u, 801u}) {
      const auto s = synthesize_spectrum(a, b, n, {{c, 2 * w, h, 2.0}});
      const double err = std::abs(double_integrate(s, {{0, n}}).second_integral.back() - exact);
      if (prev > 0.0) {
        CHECK(prev / err > 3.5);
        CHECK(prev / err < 4.5);
      }
      prev = err;
    }
  }

  TEST_CASE("weighted linewidth") {
    PeakFit a, b, bad;
    a.converged = b.converged = true;
    a.fwhm_g = 1.0;
    b.fwhm_g = 3.0;
    a.height = b.height = 2.0;
    bad.fwhm_g = std::nan("");
    CHECK(weighted_linewidth({a, b}) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(weighted_linewidth({a}) == 1.0);
    b.height = -6.0;
    CHECK(weighted_linewidth({a, b, bad}) == doctest::Approx((2.0 + 18.0) / 8.0).epsilon(1e-15));
    CHECK_THROWS_AS(weighted_linewidth({bad}), DomainError);
    CHECK_THROWS_AS(weighted_linewidth({}), DomainError);
  }

  TEST_CASE("linewidth ratio between two spectra") {
    const auto narrow = synthesize_spectrum(3300, 3400, 4001, triplet(1.0), 0.0143, 4);
    auto lines = triplet(2.97);
    for (auto& l : lines) l.height = 0.4;
    const auto broad = synthesize_spectrum(3300, 3400, 4001, lines, 0.0143 * 0.4 / 2.97, 5);
    const double ratio =
        process_spectrum(broad).weighted_linewidth_g / process_spectrum(narrow).weighted_linewidth_g;
    CHECK(rel_err(ratio, 2.97) < 0.05);
  }

  TEST_CASE("linewidth ratio is invariant under common scaling and shift") {
    const auto a = synthesize_spectrum(3300, 3400, 3001, triplet(1.0, 1.4), 0.0, 1);
    const auto b = synthesize_spectrum(3300, 3400, 3001, triplet(2.0, 1.4), 0.0, 1);
    const double base = process_spectrum(b).weighted_linewidth_g / process_spectrum(a).weighted_linewidth_g;
    for_all(5, 53, [&](Gen& g, int) {
      const double k = g.log_uniform(0.01, 100), d = g.uniform(-500, 500);
      auto a2 = a, b2 = b;
      for (auto* s : {&a2, &b2}) {
        for (auto& v : s->signal) v *= k;
        for (auto& x : s->field_g) x += d;
      }
      const double r = process_spectrum(b2).weighted_linewidth_g / process_spectrum(a2).weighted_linewidth_g;
      CHECK(rel_err(r, base) < 1e-6);
    });
  }

  TEST_CASE("offset overrides and reference scale") {
    const auto s = synthesize_spectrum(3330, 3370, 4001, {{3350.0, 2.0, 1.0, 1.0}}, 0.0, 1, 0.05);
    EprOptions opt;
    opt.reference_scale = 3.0;
    const auto r = process_spectrum(s, opt);
    CHECK(r.spin_count == doctest::Approx(3.0 * r.total_area).epsilon(1e-15));
    opt.offset_overrides[0] = 0.01;
    const auto shifted = process_spectrum(s, opt);
    CHECK(shifted.peaks[0].baseline_offset == doctest::Approx(r.peaks[0].baseline_offset + 0.01));
    CHECK(shifted.total_area != r.total_area);
  }
}
