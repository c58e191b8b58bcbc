#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "generators.hpp"
#include "t1noise/acquisition.hpp"
#include "t1noise/errors.hpp"
#include "t1noise/fitting.hpp"

using namespace t1noise;
using namespace t1noise::acq;
using t1noise::testing::for_all;
using t1noise::testing::Gen;
using t1noise::testing::rel_err;

namespace {

std::vector<double> sample_times(int n, double dt) {
  std::vector<double> t;
  for (int k = 1; k <= n; ++k) t.push_back(k * dt);
  return t;
}

relax::RateModel uniform_rate(double r) {
  relax::RateModel m;
  m.channels.push_back(relax::RateChannel::phonon_offset(r));
  return m;
}

relax::RateModel demo_truth() {
  relax::RateModel m;
  m.channels.push_back(relax::RateChannel::p1_bath(0.39, 0.5e6));
  m.channels.push_back(relax::RateChannel::phonon_offset(1.0 / 600.0));
  return m;
}

AcquisitionPlan quiet_plan(Strategy s, std::vector<double> fields) {
  AcquisitionPlan plan;
  plan.strategy = s;
  plan.fields_t = std::move(fields);
  plan.include_transit = false;
  plan.polarization_time_s = 0.0;
  return plan;
}

}  // namespace

TEST_SUITE("acquisition") {
  TEST_CASE("field map is exact at knots and monotone between them") {
    const auto map = demo_field_map();
    const auto& x = map.positions_mm();
    const auto& b = map.fields_t();
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(field_at_position(map, x[i]) == b[i]);
    for (std::size_t i = 1; i < x.size(); ++i) {
      const double mid = field_at_position(map, 0.5 * (x[i - 1] + x[i]));
      CHECK(mid <= std::max(b[i - 1], b[i]));
      CHECK(mid >= std::min(b[i - 1], b[i]));
    }
    CHECK_THROWS_AS(field_at_position(map, -1.0), DomainError);
    CHECK_THROWS_AS(field_at_position(map, 1201.0), DomainError);
  }

  TEST_CASE("demo map spans the polarization and detection fields") {
    const auto map = demo_field_map();
    CHECK(field_at_position(map, 928.0) == doctest::Approx(0.030).epsilon(0.02));
    CHECK(field_at_position(map, 0.0) == doctest::Approx(7.0).epsilon(1e-12));
  }

  TEST_CASE("random monotone maps interpolate monotonically") {
    for_all(30, 41, [](Gen& g, int) {
      const int n = g.integer(2, 12);
      std::vector<double> x, b;
      double xi = 0.0, bi = g.uniform(5, 8);
      for (int i = 0; i < n; ++i) {
        x.push_back(xi);
        b.push_back(bi);
        xi += g.uniform(1, 50);
        bi *= g.uniform(0.2, 0.99);
      }
      const FieldMap map(x, b);
      double prev = map.field_at(x.front());
      for (int k = 1; k <= 400; ++k) {
        const double v = map.field_at(std::min(x.back(), x.front() + (x.back() - x.front()) * k / 400.0));
        CHECK(v <= prev + 1e-12);
        prev = v;
      }
      const double target = 0.5 * (b.front() + b.back());
      CHECK(map.field_at(map.position_for_field(target)) == doctest::Approx(target).epsilon(1e-6));
    });
  }

  TEST_CASE("field map validation") {
    CHECK_THROWS_AS(FieldMap({0, 1, 1}, {1, 2, 3}), ValidationError);
    CHECK_THROWS_AS(FieldMap({0, 1}, {1, -2}), ValidationError);
    CHECK_THROWS_AS(FieldMap({0}, {1}), ValidationError);
  }

  TEST_CASE("simulate_decay special values and determinism") {
    const auto c = simulate_decay(50.0, 1.0, 372.0, {0.0, 50.0}, 0.0, 1);
    CHECK(c.signals[0] == 372.0);
    CHECK(c.signals[1] == doctest::Approx(372.0 / std::exp(1.0)).epsilon(1e-14));
    const auto a = simulate_decay(50.0, 0.8, 372.0, sample_times(40, 10), 3.0, 9);
    const auto b = simulate_decay(50.0, 0.8, 372.0, sample_times(40, 10), 3.0, 9);
    CHECK(a.signals == b.signals);
  }

  TEST_CASE("stretched fits cover the truth at the nominal rate") {
    const auto t = sample_times(40, 10);
    int n = 0, hits_eps0 = 0, hits_t1 = 0, hits_p = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      const auto f = fit::fit_stretched_exponential(simulate_decay(120.0, 0.75, 372.0, t, 3.72, seed));
      if (!f.converged) continue;
      ++n;
      auto inside = [&](const char* name, double truth) {
        const auto [lo, hi] = f.confidence_intervals[f.index(name)];
        return lo <= truth && truth <= hi;
      };
      hits_eps0 += inside("eps0", 372.0);
      hits_t1 += inside("T1", 120.0);
      hits_p += inside("p", 0.75);
    }
    REQUIRE(n >= 95);
    CHECK(hits_eps0 >= 0.6 * n);
    CHECK(hits_t1 >= 0.6 * n);
    CHECK(hits_p >= 0.6 * n);
  }

  TEST_CASE("shuttle loss") {
    const auto map = demo_field_map();
    const auto sh = ShuttleProfile::main_text(928.0, 0.0);
    CHECK(simulate_shuttle_loss(map, sh, uniform_rate(0.0)) == 1.0);
    CHECK(simulate_shuttle_loss(map, sh, uniform_rate(1.0 / 60.0)) ==
          doctest::Approx(std::exp(-0.0108)).epsilon(1e-9));

    const FieldMap flat({0.0, 100.0, 200.0, 300.0}, {0.5, 0.5, 0.5, 0.5});
    const auto model = demo_truth();
    const ShuttleProfile leg{0.0, 300.0, 0.648, 0.0};
    CHECK(simulate_shuttle_loss(flat, leg, model) ==
          doctest::Approx(std::exp(-0.648 * model.rate(0.5))).epsilon(1e-9));

    double prev = 1.0;
    for (double t = 0.1; t < 5.0; t += 0.1) {
      const double f = simulate_shuttle_loss(map, sh, model, t);
      CHECK(f <= prev);
      CHECK(f > 0.0);
      prev = f;
    }
  }

  TEST_CASE("reconstruct_r1 inverts the stretched exponential") {
    CHECK(reconstruct_r1(372.0 / std::exp(1.0), 372.0, 1.0, 80.0) ==
          doctest::Approx(1.0 / 80.0).epsilon(1e-14));
    for_all(55, 42, [](Gen& g, int) {
      const double t1 = g.log_uniform(0.1, 2000.0), p = g.uniform(0.5, 1.0);
      const double tw = t1 * g.uniform(0.2, 2.0);
      const auto c = simulate_decay(t1, p, 372.0, {tw}, 0.0, 1);
      CHECK(rel_err(reconstruct_r1(c.signals[0], 372.0, p, tw), 1.0 / t1) <= 1e-9);
    });
    CHECK_THROWS_AS(reconstruct_r1(372.0, 372.0, 1.0, 10.0), DomainError);
    CHECK_THROWS_AS(reconstruct_r1(400.0, 372.0, 1.0, 10.0), DomainError);
    CHECK_THROWS_AS(reconstruct_r1(100.0, 372.0, 1.2, 10.0), DomainError);
  }

  TEST_CASE("calibration stretch reproduces the full-curve rate within noise") {
    const auto t = sample_times(40, 10);
    const auto cal = fit::fit_stretched_exponential(simulate_decay(120.0, 0.75, 372.0, t, 0.93, 12));
    const double tw = dynamic_wait_time(cal.value("T1"), cal.value("p"));
    const auto shot = simulate_decay(120.0, 0.75, 372.0, {tw}, 0.93, 13);
    ErrorInputs in;
    in.eps_tw = shot.signals[0];
    in.d_eps_tw = 0.93;
    in.eps0 = cal.value("eps0");
    in.d_eps0 = cal.error("eps0");
    in.p = cal.value("p");
    in.d_p = cal.error("p");
    in.t_w_s = tw;
    const auto r = propagate_errors(in);
    CHECK(std::abs(r.r1 - 1.0 / 120.0) <= 2.0 * r.d_r1);
  }

  TEST_CASE("dynamic wait time") {
    CHECK(dynamic_wait_time(100.0, 1.0) == doctest::Approx(100.0 * std::log(2.0)).epsilon(1e-15));
    CHECK(dynamic_wait_time(100.0, 0.5) ==
          doctest::Approx(100.0 * std::pow(std::log(2.0), 2)).epsilon(1e-15));
    for_all(50, 43, [](Gen& g, int) {
      const double t1 = g.log_uniform(0.1, 2000), p = g.uniform(0.3, 1.05);
      const double tw = dynamic_wait_time(t1, p);
      CHECK(std::abs(std::exp(-std::pow(tw / t1, p)) - 0.5) < 1e-12);
    });
    CHECK_THROWS_AS(dynamic_wait_time(0.0, 1.0), DomainError);
  }

  TEST_CASE("time gain") {
    const double g = time_gain(100, 40, 10.0, 30.0, 4);
    CHECK(g == doctest::Approx(100.0 * 10 * 1640 / (2.0 * 100 * 30 + 4.0 * 10 * 1640)).epsilon(1e-15));
    CHECK(g >= 22.5);
    CHECK(g <= 23.5);
    CHECK(time_gain(50, 20, 5.0, 0.0, 50) == doctest::Approx(1.0).epsilon(1e-15));
    for_all(30, 44, [](Gen& gen, int) {
      const int nf = gen.integer(1, 200), nd = gen.integer(1, nf);
      const double dt = gen.uniform(1, 20), tw = gen.uniform(0, 100);
      double prev = 0.0;
      for (int n = 1; n <= 80; ++n) {
        const double v = time_gain(nf, n, dt, tw, nd);
        CHECK(v >= prev);
        prev = v;
      }
    });
    CHECK_THROWS_AS(time_gain(0, 40, 10.0, 30.0, 4), DomainError);
  }

  TEST_CASE("error propagation") {
    ErrorInputs in;
    in.eps_tw = 150.0;
    in.eps0 = 372.0;
    in.p = 0.8;
    in.t_w_s = 40.0;
    in.d_t_s = 0.0;
    const auto zero = propagate_errors(in);
    CHECK(zero.d_r1 == 0.0);
    CHECK_FALSE(zero.unreliable);

    // p = 1: R = ln(eps0/eps)/t_w, so dR/dt_w = -R/t_w.
    in.p = 1.0;
    in.d_t_s = 2.0;
    const auto only_t = propagate_errors(in);
    CHECK(only_t.relative_error == doctest::Approx(2.0 / 40.0).epsilon(1e-12));

    in.d_t_s = 0.0;
    in.eps_tw = 371.0;
    in.d_eps_tw = 5.0;
    CHECK(propagate_errors(in).unreliable);
  }

  TEST_CASE("propagated error tracks Monte-Carlo scatter") {
    const double t1 = 100.0, eps0 = 372.0, sd = 3.72;
    const double tw = dynamic_wait_time(t1, 1.0);
    std::vector<double> r;
    for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
      const auto c = simulate_decay(t1, 1.0, eps0, {tw}, sd, seed);
      r.push_back(reconstruct_r1(c.signals[0], eps0, 1.0, tw));
    }
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / r.size();
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    const double mc = std::sqrt(var / (r.size() - 1));
    ErrorInputs in;
    in.eps_tw = eps0 / 2.0;
    in.d_eps_tw = sd;
    in.eps0 = eps0;
    in.p = 1.0;
    in.t_w_s = tw;
    in.d_t_s = 0.0;
    const double prop = propagate_errors(in).d_r1;
    CHECK(prop / mc < 2.0);
    CHECK(mc / prop < 2.0);
  }

  TEST_CASE("full 2D on noiseless truth reproduces the rates") {
    auto plan = quiet_plan(Strategy::full_2d, {0.5, 1.0, 2.0, 4.0});
    plan.noise_sd = 0.0;
    plan.calibration_fields = 1;
    const auto truth = demo_truth();
    const auto map = demo_field_map();
    const auto rec = run_plan(plan, truth, map, ShuttleProfile::main_text(928.0, 0.0), 3);
    REQUIRE(rec.points.size() == 4);
    for (const auto& pt : rec.points) CHECK(rel_err(pt.rate.r1, truth.rate(pt.field_t)) < 1e-6);
  }

  TEST_CASE("accelerated and full strategies agree within propagated errors") {
    Gen g(45);
    auto fields = g.sorted_log_grid(0.5, 6.5, 20);
    auto plan2 = quiet_plan(Strategy::full_2d, fields);
    auto plan1 = quiet_plan(Strategy::accelerated_1d, fields);
    plan1.wait_time_s.reset();
    plan2.noise_sd = plan1.noise_sd = 0.02 * 372.0;
    const auto truth = demo_truth();
    const auto map = demo_field_map();
    const auto sh = ShuttleProfile::main_text(928.0, 0.0);
    const auto a = run_plan(plan2, truth, map, sh, 5);
    const auto b = run_plan(plan1, truth, map, sh, 5);
    int agree = 0;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const auto& x = a.points[i].rate;
      const auto& y = b.points[i].rate;
      const double tol = 2.0 * std::hypot(x.d_r1, y.d_r1);
      if (std::isfinite(x.r1) && std::isfinite(y.r1) && std::abs(x.r1 - y.r1) <= tol) ++agree;
    }
    CHECK(agree >= 0.9 * static_cast<double>(fields.size()));
  }

  TEST_CASE("zero-overhead accounting matches the time-gain formula") {
    Gen g(46);
    const auto fields = g.sorted_log_grid(0.3, 6.0, 12);
    auto p2 = quiet_plan(Strategy::full_2d, fields);
    auto p1 = quiet_plan(Strategy::accelerated_1d, fields);
    p1.wait_time_s = 30.0;
    p1.calibration_fields = 3;
    p2.noise_sd = p1.noise_sd = 0.0;
    const auto truth = demo_truth();
    const auto map = demo_field_map();
    const auto sh = ShuttleProfile::main_text(928.0, 0.0);
    const auto a = run_plan(p2, truth, map, sh, 1);
    const auto b = run_plan(p1, truth, map, sh, 1);
    const double nn1 = 40.0 * 41.0;
    CHECK(a.accounting.total_s == doctest::Approx(12 * 10.0 * nn1 / 2).epsilon(1e-12));
    CHECK(b.accounting.total_s == doctest::Approx(3 * 10.0 * nn1 / 2 + 12 * 30.0).epsilon(1e-12));
    CHECK(a.accounting.total_s / b.accounting.total_s ==
          doctest::Approx(time_gain(12, 40, 10.0, 30.0, 3)).epsilon(1e-12));
    CHECK(a.accounting.overhead_s == 0.0);
  }

  TEST_CASE("planning errors") {
    const auto truth = demo_truth();
    const auto map = demo_field_map();
    const auto sh = ShuttleProfile::main_text(928.0, 0.0);
    auto plan = quiet_plan(Strategy::accelerated_1d, {0.5, 1.0, 2.0, 4.0});
    plan.time_budget_s = 100.0;
    CHECK_THROWS_AS(run_plan(plan, truth, map, sh, 1), PlanningError);
    auto outside = quiet_plan(Strategy::accelerated_1d, {0.5, 1.0, 8.0});
    outside.calibration_fields = 1;
    CHECK_THROWS_AS(run_plan(outside, truth, map, sh, 1), PlanningError);
    auto too_many = quiet_plan(Strategy::accelerated_1d, {0.5, 1.0});
    CHECK_THROWS_AS(run_plan(too_many, truth, map, sh, 1), PlanningError);
    auto bad = quiet_plan(Strategy::accelerated_1d, {1.0, 0.5});
    CHECK_THROWS_AS(run_plan(bad, truth, map, sh, 1), ValidationError);
  }

  TEST_CASE("run_plan is reproducible per seed") {
    Gen g(47);
    auto plan = quiet_plan(Strategy::accelerated_1d, g.sorted_log_grid(0.3, 6.0, 10));
    plan.include_transit = true;
    plan.wait_time_s.reset();
    plan.calibration_fields = 2;
    const auto truth = demo_truth();
    const auto map = demo_field_map();
    const auto sh = ShuttleProfile::main_text(928.0, 0.0);
    const auto a = run_plan(plan, truth, map, sh, 77);
    const auto b = run_plan(plan, truth, map, sh, 77);
    const auto c = run_plan(plan, truth, map, sh, 78);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
      CHECK(a.points[i].signal == b.points[i].signal);
      CHECK(a.points[i].wait_time_s == b.points[i].wait_time_s);
    }
    CHECK(a.accounting.total_s == b.accounting.total_s);
    CHECK(a.points[0].signal != c.points[0].signal);
  }

  TEST_CASE("coil-driven points and the shuttled-field offset") {
    auto plan = quiet_plan(Strategy::accelerated_1d, {0.005, 0.01, 0.5, 1.0});
    plan.calibration_fields = 2;
    plan.shuttled_field_offset_t = 0.015;
    const auto rec = run_plan(plan, demo_truth(), demo_field_map(),
                              ShuttleProfile::main_text(928.0, 0.0), 2);
    CHECK(rec.points[0].coil_driven);
    CHECK(rec.points[0].reported_field_t == 0.005);
    CHECK_FALSE(rec.points[2].coil_driven);
    CHECK(rec.points[2].reported_field_t == doctest::Approx(0.515).epsilon(1e-15));
  }
}
