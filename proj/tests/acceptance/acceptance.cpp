// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails. Lattice sizes and realization counts are chosen to keep the
// whole run within a few minutes on one core.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "generators.hpp"
#include "t1noise/acquisition.hpp"
#include "t1noise/config.hpp"
#include "t1noise/csv_io.hpp"
#include "t1noise/epr.hpp"
#include "t1noise/fitting.hpp"
#include "t1noise/lattice.hpp"
#include "t1noise/manifest.hpp"
#include "t1noise/pipeline.hpp"
#include "t1noise/relaxmodel.hpp"

namespace fs = std::filesystem;
using namespace t1noise;
using t1noise::testing::Gen;
using t1noise::testing::rel_err;
using lattice::Vec3;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail << (ok ? "" : "!") << what << "; ";
  }
};

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.5g", v);
  return buf;
}

double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  const double cov = sxy - sx * sy / n, vx = sxx - sx * sx / n, vy = syy - sy * sy / n;
  return cov * cov / (vx * vy);
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (sxy - sx * sy / n) / (sxx - sx * sx / n);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

const std::vector<double> kEtaGrid{0.011, 0.03, 0.1, 0.25, 0.5, 1.0};

// ---- 1 ---------------------------------------------------------------------
void c1(Outcome& o) {
  const std::pair<double, double> cases[] = {{1, 12.12}, {100, 2.61}, {17, 4.8}, {48, 3.39}};
  for (const auto& [ppm, want] : cases) {
    const double got = lattice::poisson_interspin_distance(ppm);
    o.require(rel_err(got, want) <= 0.01,
              fmt_num(ppm) + " ppm " + fmt_num(got) + " nm vs " + fmt_num(want));
  }
}

// ---- 2 ---------------------------------------------------------------------
void c2(Outcome& o) {
  const double a = lattice::electron_linewidth_hz(1), b = lattice::electron_linewidth_hz(100);
  o.require(rel_err(a, 29.52e3) <= 0.01, "1 ppm " + fmt_num(a) + " Hz");
  o.require(rel_err(b, 2.95e6) <= 0.01, "100 ppm " + fmt_num(b) + " Hz");
  std::vector<double> x, y;
  for (double p = 1; p <= 200; p += 1) {
    x.push_back(p);
    y.push_back(lattice::electron_linewidth_hz(p));
  }
  const double r2 = r_squared(x, y);
  o.require(r2 > 0.9999, "R2 " + fmt_num(r2));
}

// ---- 3 ---------------------------------------------------------------------
void c3(Outcome& o) {
  const double gamma_e_hz_per_g = 2.8e6;
  const std::pair<double, std::pair<double, double>> cases[] = {{17, {46.7e-3, 23.5e-3}},
                                                                {48, {131.9e-3, 66.2e-3}}};
  for (const auto& [ppm, want] : cases) {
    const double d_ee = 10.5e-3 * ppm * gamma_e_hz_per_g;
    relax::RateModel m;
    m.channels.push_back(relax::RateChannel::p1_bath(0.39, d_ee));
    // Field-profile width: half-maximum field of the bath rate.
    const double r0 = m.rate(0.0);
    const double width = relax::bisect_field(m, 0.5 * r0, 1e-4, 7.0, 1e-9);
    const auto knees = relax::knee_fields(m);
    o.require(rel_err(width, want.first) <= 0.02,
              fmt_num(ppm) + " ppm width " + fmt_num(width * 1e3) + " mT");
    o.require(knees.analytic_bk1_t && rel_err(*knees.analytic_bk1_t, want.second) <= 0.02,
              fmt_num(ppm) + " ppm B_K1 " + fmt_num(knees.analytic_bk1_t.value_or(0) * 1e3) + " mT");
  }
}

// ---- 4 ---------------------------------------------------------------------
void c4(Outcome& o) {
  const std::pair<double, double> cases[] = {{17, 0.39}, {48, 0.45}};
  for (const auto& [ppm, want] : cases) {
    const double got =
        lattice::p1_hyperfine_second_moment_analytic(lattice::poisson_interspin_distance(ppm), 2.15);
    o.require(rel_err(got, want) <= 0.05, fmt_num(ppm) + " ppm " + fmt_num(got) + " kHz^2");
  }
}

// ---- 5 ---------------------------------------------------------------------
void c5(Outcome& o) {
  const std::pair<double, double> cases[] = {{17, 1.4}, {48, 1.55}, {1, 1.04}};
  for (const auto& [ppm, want] : cases) {
    lattice::HyperfineSimConfig c;
    c.enrichment = 0.011;
    c.electron_ppm = ppm;
    c.realizations = 100;
    c.seed = 5;
    const auto e = lattice::p1_hyperfine_second_moment_numeric(c);
    o.require(rel_err(e.rms_khz.value, want) <= 0.20,
              fmt_num(ppm) + " ppm " + fmt_num(e.rms_khz.value) + " kHz");
  }
  std::vector<lattice::Estimate> est;
  for (double eta : {0.011, 0.1, 1.0}) {
    lattice::HyperfineSimConfig c;
    c.enrichment = eta;
    c.electron_ppm = 17;
    c.realizations = 30;
    c.seed = 6;
    est.push_back(lattice::p1_hyperfine_second_moment_numeric(c).rms_khz);
  }
  for (std::size_t i = 0; i < est.size(); ++i) {
    for (std::size_t j = i + 1; j < est.size(); ++j) {
      const auto se = [](const lattice::Estimate& e) { return e.sd / std::sqrt(double(e.n_realizations)); };
      const double tol = 2.0 * std::hypot(se(est[i]), se(est[j]));
      o.require(std::abs(est[i].value - est[j].value) <= tol,
                "eta pair " + fmt_num(est[i].value) + "/" + fmt_num(est[j].value) + " tol " + fmt_num(tol));
    }
  }
}

// ---- 6 ---------------------------------------------------------------------
double brute_force_rss(const std::vector<Vec3>& pos, const Vec3& b) {
  const PhysicalConstants k;
  const double pref = k.hyperfine_prefactor_khz_nm3 * 1e3 * k.gamma_n_hz_per_t / k.gamma_e_hz_per_t;
  double sum = 0.0;
  for (std::size_t j = 0; j < pos.size(); ++j) {
    double s2 = 0.0;
    for (std::size_t m = 0; m < pos.size(); ++m) {
      if (m == j) continue;
      const Vec3 d = pos[m] - pos[j];
      const double r = d.norm(), c = d.dot(b) / r;
      s2 += std::pow(pref * (3 * c * c - 1) / (r * r * r), 2);
    }
    sum += std::sqrt(s2);
  }
  return sum / static_cast<double>(pos.size());
}

void c6(Outcome& o) {
  std::vector<double> lx, ly;
  for (double eta : kEtaGrid) {
    lattice::LatticeConfig c;
    c.enrichment = eta;
    c.lattice_size_nm = eta < 0.1 ? 8.0 : 5.0;
    c.realizations = eta < 0.1 ? 20 : 6;
    c.seed = 7;
    const auto e = lattice::carbon_second_moment(c);
    lx.push_back(std::log(eta));
    ly.push_back(std::log(e.value));
    if (eta == 0.011) o.require(rel_err(e.value, 850.0) <= 0.15, "eta 0.011 " + fmt_num(e.value) + " Hz");
  }
  const double k = slope(lx, ly);
  o.require(std::abs(k - 0.5) <= 0.1, "exponent " + fmt_num(k));

  const PhysicalConstants pc;
  const double a = pc.conventional_cell_edge_nm();
  const double frac[8][3] = {{0, 0, 0},       {0, .5, .5},     {.5, 0, .5},     {.5, .5, 0},
                             {.25, .25, .25}, {.25, .75, .75}, {.75, .25, .75}, {.75, .75, .25}};
  std::vector<Vec3> pos;
  for (const auto& f : frac) pos.emplace_back(f[0] * a, f[1] * a, f[2] * a);
  lattice::LatticeConfig c;
  c.enrichment = 1.0;
  c.field_direction = Vec3(1, 2, 3).normalized();
  const auto lat = lattice::SpinLattice::from_positions(pos, {}, c);
  const double got = lattice::carbon_second_moment(lat).mean;
  const double want = brute_force_rss(pos, c.field_direction);
  o.require(rel_err(got, want) <= 1e-12, "8-site oracle rel " + fmt_num(rel_err(got, want)));
}

// ---- 7 ---------------------------------------------------------------------
void c7(Outcome& o) {
  std::vector<double> x, y;
  for (double eta : kEtaGrid) {
    lattice::LatticeConfig c;
    c.enrichment = eta;
    c.electron_ppm = 0.0;
    c.central_electron = true;
    c.lattice_size_nm = 6.0;
    c.realizations = 20;
    c.seed = 8;
    const auto e = lattice::nv_hyperfine_and_direct_fraction(c, 200.0, Vec3(1, 1, 1).normalized());
    x.push_back(eta);
    y.push_back(e.direct_fraction.value);
    o.require(rel_err(e.direct_fraction.value, 4.3 * eta) <= 0.25,
              "eta " + fmt_num(eta) + " " + fmt_num(e.direct_fraction.value));
  }
  const double r2 = r_squared(x, y);
  o.require(r2 > 0.95, "R2 " + fmt_num(r2));
}

// ---- 8 ---------------------------------------------------------------------
void c8(Outcome& o) {
  const double g = acq::time_gain(100, 40, 10.0, 30.0, 4);
  o.require(g >= 22.5 && g <= 23.5, "time_gain " + fmt_num(g));

  relax::RateModel truth;
  truth.channels.push_back(relax::RateChannel::p1_bath(0.39, 0.5e6));
  truth.channels.push_back(relax::RateChannel::phonon_offset(1.0 / 600.0));
  Gen gen(8);
  acq::AcquisitionPlan p2;
  p2.fields_t = gen.sorted_log_grid(0.05, 6.5, 100);
  p2.include_transit = false;
  p2.polarization_time_s = 0.0;
  p2.noise_sd = 0.0;
  p2.calibration_fields = 4;
  p2.wait_time_s = 30.0;
  acq::AcquisitionPlan p1 = p2;
  p2.strategy = acq::Strategy::full_2d;
  p1.strategy = acq::Strategy::accelerated_1d;
  const auto map = acq::demo_field_map();
  const auto sh = acq::ShuttleProfile::main_text(928.0, 0.0);
  const auto a = acq::run_plan(p2, truth, map, sh, 1);
  const auto b = acq::run_plan(p1, truth, map, sh, 1);
  const double nn1 = 40.0 * 41.0;
  const double t2d = 100 * 10.0 * nn1 / 2.0, t1d = 4 * 10.0 * nn1 / 2.0 + 100 * 30.0;
  o.require(std::abs(a.accounting.total_s - t2d) < 1e-6, "2D " + fmt_num(a.accounting.total_s) + " s");
  o.require(std::abs(b.accounting.total_s - t1d) < 1e-6, "1D " + fmt_num(b.accounting.total_s) + " s");
  o.require(rel_err(a.accounting.total_s / b.accounting.total_s, g) < 1e-12, "ratio");
}

// ---- 9 ---------------------------------------------------------------------
void c9(Outcome& o) {
  Gen g(9);
  double worst = 0.0;
  for (int i = 0; i < 55; ++i) {
    const double t1 = g.log_uniform(0.1, 2000.0), p = g.uniform(0.5, 1.0);
    const double tw = acq::dynamic_wait_time(t1, p) * g.uniform(0.3, 3.0);
    const auto c = acq::simulate_decay(t1, p, 372.0, {tw}, 0.0, static_cast<std::uint64_t>(i));
    worst = std::max(worst, rel_err(acq::reconstruct_r1(c.signals[0], 372.0, p, tw), 1.0 / t1));
  }
  o.require(worst <= 1e-9, "worst rel " + fmt_num(worst));
}

// ---- 10 --------------------------------------------------------------------
double jacobian_mismatch(const fit::Problem& prob, const fit::VectorXd& p) {
  fit::VectorXd r(prob.residual_count);
  fit::MatrixXd j(prob.residual_count, p.size());
  prob.residuals(p, r, &j);
  const fit::MatrixXd fd = fit::numeric_jacobian(prob.residuals, p, prob.residual_count);
  double worst = 0.0;
  for (Eigen::Index c = 0; c < p.size(); ++c) {
    const double scale = std::max(fd.col(c).cwiseAbs().maxCoeff(), 1e-300);
    worst = std::max(worst, (j.col(c) - fd.col(c)).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

fit::Problem curve_problem(const fit::CurveModel& m, const std::vector<double>& x) {
  fit::Problem prob;
  prob.names = m.names;
  prob.residual_count = static_cast<Eigen::Index>(x.size());
  prob.residuals = [m, x](const fit::VectorXd& p, fit::VectorXd& r, fit::MatrixXd* jac) {
    fit::VectorXd g(p.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      r[static_cast<Eigen::Index>(i)] = m.value(x[i], p);
      if (jac) {
        m.gradient(x[i], p, g);
        jac->row(static_cast<Eigen::Index>(i)) = g.transpose();
      }
    }
  };
  return prob;
}

void c10(Outcome& o) {
  relax::TsallianProfile truth;
  truth.narrow = {0.6, 0.012, 0.0, 1.3};
  truth.broad = {0.15, 0.25, 0.0, 1.8};
  truth.offset = 0.002;
  const auto want = truth.to_vector();
  const auto kt = relax::knee_fields(truth);
  std::vector<std::vector<double>> errs(want.size());
  std::vector<double> knee_err, infl_err;
  double jac = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Gen g(seed, 10);
    RelaxometryProfile prof;
    prof.fields_t = g.sorted_log_grid(1e-3, 7.0, 55);
    for (double b : prof.fields_t) {
      const double r = truth.rate(b);
      prof.rates_per_s.push_back(r * (1.0 + 0.02 * g.normal()));
      prof.rate_errors.push_back(0.02 * r);
    }
    const auto f = fit::fit_relaxation_profile(prof);
    const auto got = f.profile.to_vector();
    for (std::size_t i = 0; i < want.size(); ++i) errs[i].push_back(rel_err(got[i], want[i]));
    knee_err.push_back(f.knees.twice_saturation_status == relax::KneeStatus::found
                           ? rel_err(f.knees.twice_saturation_t, kt.twice_saturation_t)
                           : 1.0);
    infl_err.push_back(!f.knees.inflection_fields_t.empty()
                           ? rel_err(f.knees.inflection_fields_t.front(), kt.inflection_fields_t.front())
                           : 1.0);
    fit::VectorXd p(7);
    for (int i = 0; i < 7; ++i) p[i] = want[static_cast<std::size_t>(i)];
    jac = std::max(jac, jacobian_mismatch(fit::profile_problem(prof), p));
  }
  const char* names[] = {"narrow_c1", "narrow_c2", "narrow_q", "broad_c1", "broad_c2", "broad_q", "offset"};
  for (std::size_t i = 0; i < want.size(); ++i) {
    const double m = median(errs[i]);
    o.require(m < 0.05, std::string(names[i]) + " " + fmt_num(m));
  }
  o.require(median(knee_err) < 0.05, "B_K1 " + fmt_num(median(knee_err)));
  o.require(median(infl_err) < 0.05, "inflection " + fmt_num(median(infl_err)));

  fit::VectorXd s(3), m2(2), m4(4);
  s << 372, 120, 0.75;
  m2 << 100, 40;
  m4 << 60, 20, 60, 100;
  std::vector<double> t;
  for (int i = 1; i <= 40; ++i) t.push_back(10.0 * i);
  jac = std::max(jac, jacobian_mismatch(curve_problem(fit::stretched_exponential_model(), t), s));
  jac = std::max(jac, jacobian_mismatch(curve_problem(fit::mono_buildup_model(), t), m2));
  jac = std::max(jac, jacobian_mismatch(curve_problem(fit::bi_buildup_model(), t), m4));
  o.require(jac <= 1e-6, "Jacobian rel " + fmt_num(jac));
}

// ---- 11 --------------------------------------------------------------------
void c11(Outcome& o) {
  const auto models = workbench::reference_models();
  const auto x = relax::crossover_field(models.at(0).model, models.at(1).model, 0.02, 0.12);
  o.require(x.found, "found");
  o.require(x.sign_changes == 1, "sign changes " + std::to_string(x.sign_changes));
  o.require(x.field_t >= 0.02 && x.field_t <= 0.12, "field " + fmt_num(x.field_t * 1e3) + " mT");
  o.require(x.field_t / 0.05 <= 2.5 && 0.05 / x.field_t <= 2.5, "vs 50 mT");
}

// ---- 12 --------------------------------------------------------------------
void c12(Outcome& o) {
  auto triplet = [](double fwhm, double h) {
    return std::vector<epr::SyntheticLine>{
        {3330.0, fwhm, h, 1.0}, {3350.0, fwhm, h, 1.0}, {3370.0, fwhm, h, 1.0}};
  };
  const auto narrow = epr::synthesize_spectrum(3300, 3400, 4001, triplet(1.0, 1.0), 0.0143, 12);
  const auto broad = epr::synthesize_spectrum(3300, 3400, 4001, triplet(2.97, 0.4), 0.0019, 13);
  const double ratio = epr::process_spectrum(broad).weighted_linewidth_g /
                       epr::process_spectrum(narrow).weighted_linewidth_g;
  o.require(rel_err(ratio, 2.97) <= 0.05, "ratio " + fmt_num(ratio));

  const double w = 1.0, h = 1.0 / (w * std::sqrt(std::numbers::pi / std::log(2.0)));
  const auto g = epr::synthesize_spectrum(3330, 3370, 10000, {{3350.0, 2 * w, h, 1.0}});
  const auto di = epr::double_integrate(g, {{0, g.size()}});
  o.require(rel_err(di.step_heights[0], 1.0) <= 1e-3, "area " + fmt_num(di.step_heights[0]));
}

// ---- 13 --------------------------------------------------------------------
void c13(Outcome& o) {
  for (const auto& nm : workbench::reference_models()) {
    const auto* rm = std::get_if<relax::RateModel>(&nm.model);
    if (!rm) continue;
    const auto* p1 = rm->first_of(relax::ChannelKind::p1_bath);
    if (!p1) continue;
    for (double frac : {0.01, 0.05, 0.10}) {
      relax::RateModel m;
      m.channels.push_back(*p1);
      m.channels.push_back(relax::RateChannel::phonon_offset(frac * p1->rate(0.0)));
      const auto k = relax::knee_fields(m);
      const bool ok = k.twice_saturation_status == relax::KneeStatus::found && k.analytic_bk1_t &&
                      rel_err(k.twice_saturation_t, *k.analytic_bk1_t) <= 0.10;
      o.require(ok, nm.name + " offset " + fmt_num(frac) + ": " +
                        fmt_num(k.twice_saturation_t * 1e3) + " vs " +
                        fmt_num(k.analytic_bk1_t.value_or(0) * 1e3) + " mT");
    }
  }
}

// ---- 14 --------------------------------------------------------------------
void c14(Outcome& o) {
  const fs::path data = T1NOISE_ACCEPTANCE_DATA_DIR;
  const fs::path root = fs::temp_directory_path() / "t1noise-acceptance";
  fs::remove_all(root);
  struct Case {
    std::string name;
    std::string json;
  };
  const std::vector<Case> cases{
      {"lattice-stats",
       R"({"pipeline": "lattice-stats", "lattice": {"lattice_size_nm": 4, "realizations": 3,
           "electron_ppm": [17], "enrichments": [0.011, 0.1],
           "estimators": ["bath", "carbon", "nearest_neighbor", "nv", "p1_hyperfine"],
           "hyperfine_realizations": 3}})"},
      {"model-eval", R"({"pipeline": "model-eval"})"},
      {"profile-fit", R"({"pipeline": "profile-fit", "inputs": {"profile": ")" +
                          (data / "sample_profile.csv").string() + R"("}})"},
      {"decay-fit", R"({"pipeline": "decay-fit", "inputs": {"decay": ")" +
                        (data / "sample_decay.csv").string() + R"("}})"},
      {"acquisition-sim", workbench::config_to_json(workbench::parse_config(
                              io::read_text_file(data / "acq_demo.json")))},
      {"epr-process", R"({"pipeline": "epr-process", "inputs": {"spectra": [")" +
                          (data / "epr_narrow.csv").string() + R"(", ")" +
                          (data / "epr_broad.csv").string() + R"("]}})"},
      {"paper-repro", R"({"pipeline": "paper-repro", "lattice": {"lattice_size_nm": 4,
           "realizations": 3, "hyperfine_realizations": 3}})"},
  };
  for (const auto& c : cases) {
    auto cfg = workbench::parse_config(c.json);
    cfg.output_dir = (root / c.name / "a").string();
    const auto a = workbench::run_pipeline(cfg);
    auto again = workbench::config_from_manifest(a.output_dir / "manifest.json");
    again.output_dir = (root / c.name / "b").string();
    const auto b = workbench::run_pipeline(again);
    bool same = a.manifest.outputs.size() == b.manifest.outputs.size();
    for (const auto& f : a.manifest.outputs) {
      same = same && io::read_text_file(a.output_dir / f.path) == io::read_text_file(b.output_dir / f.path);
    }
    same = same && workbench::strip_timing(io::read_text_file(a.output_dir / "manifest.json")) ==
                       workbench::strip_timing(io::read_text_file(b.output_dir / "manifest.json"));
    o.require(same, c.name + " (" + std::to_string(a.manifest.outputs.size()) + " files)");
  }
  fs::remove_all(root);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"poisson distances", c1},
      {"electron linewidths", c2},
      {"knee and width chain", c3},
      {"analytic hyperfine", c4},
      {"Monte-Carlo hyperfine", c5},
      {"carbon dipolar", c6},
      {"direct-polarization fraction", c7},
      {"time gain and accounting", c8},
      {"reconstruction identity", c9},
      {"profile fit recovery", c10},
      {"model crossover", c11},
      {"EPR linewidth ratio and area", c12},
      {"knee-field definitions", c13},
      {"determinism", c14},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failed += o.pass ? 0 : 1;
    std::printf("C%-2zu %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
