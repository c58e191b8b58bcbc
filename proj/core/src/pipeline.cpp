#include "t1noise/pipeline.hpp"

#include <fmt/format.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <limits>
#include <system_error>

#include "t1noise/acquisition.hpp"
#include "t1noise/csv_io.hpp"
#include "t1noise/epr.hpp"
#include "t1noise/errors.hpp"
#include "t1noise/fitting.hpp"
#include "t1noise/lattice.hpp"
#include "t1noise/relaxmodel.hpp"
#include "t1noise/rng.hpp"

namespace t1noise::workbench {

namespace fs = std::filesystem;
using io::CsvTable;
using Cells = std::vector<std::variant<double, std::string>>;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Runs f, prefixing any library error with the stage name while keeping its type.
template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  const std::string p = "[" + name + "] ";
  try {
    return f();
  } catch (const ParseError& e) {
    throw e.prefixed(p);
  } catch (const ValidationError& e) {
    throw ValidationError(p + e.what());
  } catch (const DomainError& e) {
    throw DomainError(p + e.what());
  } catch (const DegenerateInputError& e) {
    throw DegenerateInputError(p + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(p + e.what());
  } catch (const PlanningError& e) {
    throw PlanningError(p + e.what());
  } catch (const IoError& e) {
    throw IoError(p + e.what());
  }
}

template <class T>
T load(const std::string& path, io::DatasetKind kind, PipelineRun& run) {
  if (path.empty()) throw ValidationError("inputs." + io::to_string(kind) + " is required");
  run.input_paths.push_back(path);
  return std::get<T>(io::ingest_dataset(path, kind));
}

lattice::LatticeConfig base_lattice(const RunConfig& c, double enrichment) {
  lattice::LatticeConfig lc;
  lc.enrichment = enrichment;
  lc.electron_ppm = 0.0;
  lc.lattice_size_nm = c.lattice.lattice_size_nm;
  lc.field_direction = lattice::Vec3(c.lattice.field_direction[0], c.lattice.field_direction[1],
                                     c.lattice.field_direction[2]);
  lc.seed = c.seed;
  lc.realizations = c.lattice.realizations;
  lc.threads = c.lattice.threads;
  return lc;
}

bool wants(const RunConfig& c, const std::string& estimator) {
  for (const auto& e : c.lattice.estimators) {
    if (e == estimator) return true;
  }
  return false;
}

void lattice_stats(const RunConfig& c, PipelineRun& run) {
  const auto& lb = c.lattice;
  if (lb.enrichments.empty()) throw ValidationError("lattice.enrichments is empty");

  if (wants(c, "bath")) {
    CsvTable t({"electron_ppm", "mean_interspin_distance_nm", "second_moment_mG2", "linewidth_hz",
                "barrier_radius_nm", "hyperfine_second_moment_khz2"});
    for (double ppm : lb.electron_ppm) {
      double a2 = kNaN;
      try {
        a2 = lattice::p1_hyperfine_second_moment_analytic_ppm(ppm, lb.detection_linewidth_hz);
      } catch (const DegenerateInputError&) {
        // r0 >= <r_e>: the analytic moment is undefined at this concentration.
      }
      t.row({ppm, lattice::poisson_interspin_distance(ppm), lattice::electron_second_moment_mg2(ppm),
             lattice::electron_linewidth_hz(ppm), lattice::detection_barrier_radius(lb.detection_linewidth_hz),
             a2});
    }
    run.outputs["bath.csv"] = t.str();
  }

  const bool carbon = wants(c, "carbon");
  const bool nn = wants(c, "nearest_neighbor");
  CsvTable carbon_t({"enrichment", "carbon_density_per_nm3", "d_cc_hz", "d_cc_sd_hz", "realizations"});
  CsvTable nn_t({"enrichment", "lattice_distance_nm", "lattice_distance_sd_nm", "coupling_distance_nm",
                 "coupling_distance_sd_nm"});
  CsvTable diff_t({"enrichment", "r_n_nm", "d_cc_hz", "t1_s", "diffusion_nm2_per_s", "diffusion_length_nm"});
  CsvTable nv_t({"enrichment", "threshold_khz", "rms_khz", "rms_sd_khz", "direct_count", "direct_count_sd",
                 "direct_fraction", "direct_fraction_sd"});
  CsvTable hf_t({"electron_ppm", "enrichment", "second_moment_khz2", "second_moment_sd_khz2", "rms_khz",
                 "rms_sd_khz", "mean_observed"});
  for (double eta : lb.enrichments) {
    const auto lc = base_lattice(c, eta);
    lattice::Estimate dcc{};
    if (carbon) {
      dcc = lattice::carbon_second_moment(lc);
      carbon_t.row({eta, lc.carbon_density_per_nm3(), dcc.value, dcc.sd,
                    static_cast<double>(dcc.n_realizations)});
    }
    if (nn) {
      const auto e = lattice::nearest_neighbor_distance(lc);
      nn_t.row({eta, e.lattice_nm.value, e.lattice_nm.sd, e.coupling_derived_nm.value,
                e.coupling_derived_nm.sd});
      if (carbon) {
        const auto d = lattice::spin_diffusion(e.coupling_derived_nm.value, dcc.value, lb.diffusion_t1_s);
        diff_t.row({eta, d.r_n_used_nm, dcc.value, lb.diffusion_t1_s, d.diffusion_constant_nm2_per_s,
                    d.diffusion_length_nm});
      }
    }
    if (wants(c, "nv")) {
      const auto e = lattice::nv_hyperfine_and_direct_fraction(lc, lb.nv_threshold_khz, lc.field_direction);
      nv_t.row({eta, lb.nv_threshold_khz, e.rms_khz.value, e.rms_khz.sd, e.direct_count.value,
                e.direct_count.sd, e.direct_fraction.value, e.direct_fraction.sd});
    }
    if (wants(c, "p1_hyperfine")) {
      for (double ppm : lb.electron_ppm) {
        lattice::HyperfineSimConfig h;
        h.enrichment = eta;
        h.electron_ppm = ppm;
        h.detection_linewidth_hz = lb.detection_linewidth_hz;
        h.seed = c.seed;
        h.realizations = lb.hyperfine_realizations;
        h.field_direction = lc.field_direction;
        h.threads = lb.threads;
        const auto e = lattice::p1_hyperfine_second_moment_numeric(h);
        hf_t.row({ppm, eta, e.second_moment_khz2.value, e.second_moment_khz2.sd, e.rms_khz.value,
                  e.rms_khz.sd, e.mean_observed});
      }
    }
  }
  if (carbon) run.outputs["carbon.csv"] = carbon_t.str();
  if (nn) run.outputs["nearest_neighbor.csv"] = nn_t.str();
  if (carbon && nn) run.outputs["diffusion.csv"] = diff_t.str();
  if (wants(c, "nv")) run.outputs["nv.csv"] = nv_t.str();
  if (wants(c, "p1_hyperfine")) run.outputs["p1_hyperfine.csv"] = hf_t.str();

  if (!lb.convergence_sizes_nm.empty()) {
    const auto lc = base_lattice(c, lb.enrichments.front());
    const auto series = lattice::convergence_sweep(
        lc, [](const lattice::LatticeConfig& x) { return lattice::carbon_second_moment(x).value; },
        lb.convergence_sizes_nm);
    CsvTable t({"lattice_size_nm", "d_cc_hz", "residual_hz"});
    for (std::size_t i = 0; i < series.sizes_nm.size(); ++i) {
      t.row({series.sizes_nm[i], series.estimates[i], i == 0 ? kNaN : series.residuals[i - 1]});
    }
    run.outputs["convergence.csv"] = t.str();
  }
}

std::vector<std::string> model_header(const std::vector<NamedModel>& models, const std::string& first) {
  std::vector<std::string> h{first};
  for (const auto& m : models) h.push_back(m.name);
  return h;
}

void require_models(const RunConfig& c) {
  if (c.model.models.empty()) throw ValidationError("model.models is empty");
  for (const auto& m : c.model.models) {
    if (m.name.empty()) throw ValidationError("every model needs a name");
    if (const auto* rm = std::get_if<relax::RateModel>(&m.model)) rm->validate();
  }
}

std::string curves_csv(const std::vector<NamedModel>& models, const std::vector<double>& grid) {
  CsvTable t(model_header(models, "B_T"));
  for (double b : grid) {
    std::vector<double> row{b};
    for (const auto& m : models) row.push_back(relax::profile_rate(m.model, b));
    t.row(row);
  }
  return t.str();
}

std::string phase_noise_csv(const std::vector<NamedModel>& models, const std::vector<double>& grid,
                            double reference_t) {
  CsvTable t(model_header(models, "B_T"));
  for (double b : grid) {
    std::vector<double> row{b};
    for (const auto& m : models) row.push_back(relax::phase_noise(m.model, reference_t, b));
    t.row(row);
  }
  return t.str();
}

std::string join_fields(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ';';
    s += io::format_number(v[i]);
  }
  return s;
}

std::string knees_csv(const std::vector<NamedModel>& models, const relax::KneeOptions& opt) {
  CsvTable t({"model", "twice_saturation_found", "twice_saturation_T", "saturation_rate_per_s",
              "analytic_bk1_T", "analytic_bk2_T", "inflection_fields_T"});
  for (const auto& m : models) {
    const auto k = relax::knee_fields(m.model, opt);
    const bool found = k.twice_saturation_status == relax::KneeStatus::found;
    t.row(Cells{m.name, found ? "true" : "false", found ? k.twice_saturation_t : kNaN,
                k.saturation_rate, k.analytic_bk1_t.value_or(kNaN), k.analytic_bk2_t.value_or(kNaN),
                join_fields(k.inflection_fields_t)});
  }
  return t.str();
}

std::string crossover_csv(const std::vector<NamedModel>& models, const std::vector<double>& grid) {
  CsvTable t({"model_a", "model_b", "found", "field_T", "sign_changes"});
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = i + 1; j < models.size(); ++j) {
      const auto x = relax::crossover_field(models[i].model, models[j].model, grid.front(), grid.back());
      t.row(Cells{models[i].name, models[j].name, x.found ? "true" : "false", x.found ? x.field_t : kNaN,
                  static_cast<double>(x.sign_changes)});
    }
  }
  return t.str();
}

std::string zero_field_csv(const std::vector<NamedModel>& models) {
  CsvTable t({"model", "zero_field_rate_per_s", "zero_field_rate_printed_khz_per_s"});
  for (const auto& m : models) {
    const auto* rm = std::get_if<relax::RateModel>(&m.model);
    if (!rm) continue;
    const auto* p1 = rm->first_of(relax::ChannelKind::p1_bath);
    if (!p1) continue;
    const auto z = relax::zero_field_rate(*p1);
    t.row(Cells{m.name, z.hz_convention, z.printed_khz_convention});
  }
  return t.str();
}

void model_eval(const RunConfig& c, PipelineRun& run) {
  require_models(c);
  const auto grid = c.model.grid.values();
  run.outputs["rates.csv"] = curves_csv(c.model.models, grid);
  run.outputs["phase_noise.csv"] = phase_noise_csv(c.model.models, grid, c.model.phase_noise_reference_t);
  run.outputs["knees.csv"] = knees_csv(c.model.models, c.model.knees);
  run.outputs["zero_field.csv"] = zero_field_csv(c.model.models);
  if (c.model.models.size() >= 2 && grid.size() >= 2) {
    run.outputs["crossover.csv"] = crossover_csv(c.model.models, grid);
  }
}

std::string parameters_csv(const fit::FitResult& f) {
  CsvTable t({"name", "value", "se", "ci_low", "ci_high"});
  for (std::size_t i = 0; i < f.names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    t.row(Cells{f.names[i], f.parameters[k], f.standard_errors[k], f.confidence_intervals[i].first,
                f.confidence_intervals[i].second});
  }
  return t.str();
}

std::string fit_summary_csv(const fit::FitResult& f) {
  CsvTable t({"converged", "iterations", "residual_norm", "reduced_chi2", "degrees_of_freedom",
              "covariance_available", "message"});
  t.row(Cells{f.converged ? "true" : "false", static_cast<double>(f.iterations), f.residual_norm,
              f.reduced_chi2, static_cast<double>(f.degrees_of_freedom),
              f.covariance_available ? "true" : "false", "\"" + f.message + "\""});
  return t.str();
}

void profile_fit(const RunConfig& c, PipelineRun& run) {
  const auto prof = stage("ingest", [&] { return load<RelaxometryProfile>(c.inputs.profile, io::DatasetKind::profile, run); });
  const auto pf = stage("fit", [&] { return fit::fit_relaxation_profile(prof, c.fit.profile); });
  run.outputs["fit_parameters.csv"] = parameters_csv(pf.fit);
  run.outputs["fit_summary.csv"] = fit_summary_csv(pf.fit);

  CsvTable curve({"B_T", "R1_fit_per_s", "narrow_per_s", "broad_per_s", "offset_per_s"});
  const double lo = std::log(prof.fields_t.front()), hi = std::log(prof.fields_t.back());
  const int n = 200;
  relax::TsallianProfile narrow = pf.profile, broad = pf.profile;
  narrow.broad.c1 = 0.0;
  narrow.offset = 0.0;
  broad.narrow.c1 = 0.0;
  broad.offset = 0.0;
  for (int i = 0; i < n; ++i) {
    const double b = std::exp(lo + (hi - lo) * i / (n - 1));
    curve.row({b, pf.profile.rate(b), narrow.rate(b), broad.rate(b), pf.profile.offset});
  }
  run.outputs["fit_curve.csv"] = curve.str();

  CsvTable res({"B_T", "R1_per_s", "R1_fit_per_s", "log10_residual"});
  for (std::size_t i = 0; i < prof.size(); ++i) {
    const double f = pf.profile.rate(prof.fields_t[i]);
    res.row({prof.fields_t[i], prof.rates_per_s[i], f, std::log10(f) - std::log10(prof.rates_per_s[i])});
  }
  run.outputs["residuals.csv"] = res.str();
  run.outputs["knees.csv"] = knees_csv({{"fit", pf.profile}}, c.model.knees);
}

void decay_fit(const RunConfig& c, PipelineRun& run) {
  const auto curve = stage("ingest", [&] { return load<DecayCurve>(c.inputs.decay, io::DatasetKind::decay, run); });
  CsvTable fitted({"t_s", "signal", "fit"});
  if (c.fit.decay_model == DecayModel::stretched) {
    const auto f = stage("fit", [&] { return fit::fit_stretched_exponential(curve, c.fit.fix_p); });
    run.outputs["decay_parameters.csv"] = parameters_csv(f);
    run.outputs["fit_summary.csv"] = fit_summary_csv(f);
    for (std::size_t i = 0; i < curve.size(); ++i) {
      fitted.row({curve.times_s[i], curve.signals[i],
                  fit::stretched_exponential(curve.times_s[i], f.parameters[0], f.parameters[1], f.parameters[2])});
    }
  } else {
    const auto mode = c.fit.decay_model == DecayModel::mono ? fit::BuildupModel::mono
                      : c.fit.decay_model == DecayModel::bi ? fit::BuildupModel::bi
                                                             : fit::BuildupModel::automatic;
    const auto b = stage("fit", [&] { return fit::fit_buildup(curve, mode); });
    run.outputs["decay_parameters.csv"] = parameters_csv(b.fit);
    run.outputs["fit_summary.csv"] = fit_summary_csv(b.fit);
    CsvTable sel({"selected", "collapsed", "wide_ci", "aicc_mono", "aicc_bi"});
    sel.row(Cells{std::string(b.selected == fit::BuildupModel::bi ? "bi" : "mono"), b.collapsed ? "true" : "false",
                  b.wide_ci ? "true" : "false", b.aicc_mono.value_or(kNaN), b.aicc_bi.value_or(kNaN)});
    run.outputs["model_selection.csv"] = sel.str();
    const auto model = b.selected == fit::BuildupModel::bi ? fit::bi_buildup_model() : fit::mono_buildup_model();
    for (std::size_t i = 0; i < curve.size(); ++i) {
      fitted.row({curve.times_s[i], curve.signals[i], model.value(curve.times_s[i], b.fit.parameters)});
    }
  }
  run.outputs["decay_curve.csv"] = fitted.str();
}

void acquisition_sim(const RunConfig& c, PipelineRun& run) {
  const acq::FieldMap map = stage("ingest", [&] {
    return c.inputs.fieldmap.empty() ? acq::demo_field_map()
                                     : load<acq::FieldMap>(c.inputs.fieldmap, io::DatasetKind::fieldmap, run);
  });
  const NamedModel truth = c.acquisition.truth
                               ? *c.acquisition.truth
                               : (c.model.models.empty() ? throw ValidationError("no truth model configured")
                                                         : c.model.models.front());
  acq::AcquisitionPlan plan = c.acquisition.plan;
  plan.fields_t = stage("plan", [&] { return c.acquisition.fields.values(); });
  acq::ShuttleProfile shuttle{plan.polarization_position_mm, plan.detection_position_mm,
                              c.acquisition.transfer_time_s, c.acquisition.time_jitter_s};
  const auto rec = stage("simulate", [&] { return acq::run_plan(plan, truth.model, map, shuttle, c.seed); });

  CsvTable decays({"field_T", "calibration", "t_s", "signal"});
  for (const auto& d : rec.decays) {
    for (std::size_t i = 0; i < d.curve.size(); ++i) {
      decays.row(Cells{d.curve.field_t, d.calibration ? "true" : "false", d.curve.times_s[i], d.curve.signals[i]});
    }
  }
  run.outputs["decays.csv"] = decays.str();

  CsvTable fits({"field_T", "calibration", "converged", "eps0", "eps0_se", "T1_s", "T1_se_s", "p", "p_se"});
  for (const auto& d : rec.decays) {
    fits.row(Cells{d.curve.field_t, d.calibration ? "true" : "false", d.converged ? "true" : "false", d.eps0,
                   d.d_eps0, d.t1_s, d.d_t1, d.p, d.d_p});
  }
  run.outputs["decay_fits.csv"] = fits.str();

  CsvTable points({"field_T", "reported_field_T", "coil_driven", "wait_time_s", "signal", "true_R1_per_s",
                   "R1_per_s", "err", "relative_error", "unreliable", "provenance", "calibration_index"});
  for (const auto& p : rec.points) {
    points.row(Cells{p.field_t, p.reported_field_t, p.coil_driven ? "true" : "false", p.wait_time_s, p.signal,
                     p.true_r1, p.rate.r1, p.rate.d_r1, p.rate.relative_error,
                     p.rate.unreliable ? "true" : "false", to_string(p.provenance),
                     static_cast<double>(p.calibration_index)});
  }
  run.outputs["points.csv"] = points.str();
  run.outputs["profile.csv"] = io::profile_csv(rec.profile);

  const auto& a = rec.accounting;
  CsvTable acc({"relaxation_wait_s", "overhead_s", "total_s", "shots"});
  acc.row({a.relaxation_wait_s, a.overhead_s, a.total_s, static_cast<double>(a.shots)});
  run.outputs["accounting.csv"] = acc.str();
  run.outputs["fieldmap.csv"] = io::fieldmap_csv(map);
}

void epr_process(const RunConfig& c, PipelineRun& run) {
  if (c.inputs.spectra.empty()) throw ValidationError("inputs.spectra is empty");
  CsvTable summary({"spectrum", "path", "peaks", "converged_peaks", "weighted_linewidth_G", "total_area",
                    "spin_count"});
  std::vector<double> widths;
  for (std::size_t s = 0; s < c.inputs.spectra.size(); ++s) {
    const auto& path = c.inputs.spectra[s];
    const auto spec = stage("ingest", [&] { return load<EprSpectrum>(path, io::DatasetKind::spectrum, run); });
    const auto r = stage("epr", [&] { return epr::process_spectrum(spec, c.epr); });
    CsvTable peaks({"peak", "range_begin", "range_end", "center_G", "fwhm_G", "height", "q", "baseline",
                    "converged", "step_height"});
    for (std::size_t k = 0; k < r.peaks.size(); ++k) {
      const auto& p = r.peaks[k];
      peaks.row(Cells{static_cast<double>(k), static_cast<double>(p.range.begin), static_cast<double>(p.range.end),
                      p.center_g, p.fwhm_g, p.height, p.q, p.baseline_offset, p.converged ? "true" : "false",
                      r.integral.step_heights[k]});
    }
    run.outputs[fmt::format("peaks_{}.csv", s)] = peaks.str();
    CsvTable integ({"field_G", "first_integral", "second_integral"});
    for (std::size_t i = 0; i < r.integral.field_g.size(); ++i) {
      integ.row({r.integral.field_g[i], r.integral.first_integral[i], r.integral.second_integral[i]});
    }
    run.outputs[fmt::format("integral_{}.csv", s)] = integ.str();
    double conv = 0.0;
    for (const auto& p : r.peaks) conv += p.converged ? 1.0 : 0.0;
    summary.row(Cells{static_cast<double>(s), path, static_cast<double>(r.peaks.size()), conv,
                      r.weighted_linewidth_g, r.total_area, r.spin_count});
    widths.push_back(r.weighted_linewidth_g);
  }
  run.outputs["summary.csv"] = summary.str();
  if (widths.size() >= 2) {
    CsvTable ratios({"spectrum", "linewidth_ratio_to_first"});
    for (std::size_t s = 0; s < widths.size(); ++s) ratios.row({static_cast<double>(s), widths[s] / widths[0]});
    run.outputs["linewidth_ratios.csv"] = ratios.str();
  }
}

void paper_repro(const RunConfig& c, PipelineRun& run) {
  require_models(c);
  const auto grid = c.model.grid.values();
  run.outputs["model_curves.csv"] = curves_csv(c.model.models, grid);
  run.outputs["phase_noise.csv"] = phase_noise_csv(c.model.models, grid, c.model.phase_noise_reference_t);
  run.outputs["knees.csv"] = knees_csv(c.model.models, c.model.knees);
  run.outputs["zero_field.csv"] = zero_field_csv(c.model.models);
  if (c.model.models.size() >= 2) run.outputs["crossover.csv"] = crossover_csv(c.model.models, grid);

  const PhysicalConstants k{};
  CsvTable chains({"quantity", "electron_ppm", "value", "unit"});
  for (double ppm : {1.0, 17.0, 48.0, 100.0}) {
    chains.row(Cells{"poisson_interspin_distance", ppm, lattice::poisson_interspin_distance(ppm), "nm"});
  }
  for (double ppm : {1.0, 17.0, 48.0, 100.0}) {
    chains.row(Cells{"electron_linewidth", ppm, lattice::electron_linewidth_hz(ppm), "Hz"});
  }
  for (double ppm : {17.0, 48.0}) {
    const double d = 10.5e-3 * ppm * k.gamma_e_hz_per_gauss();
    chains.row(Cells{"d_ee_from_10.5_mG_per_ppm", ppm, d, "Hz"});
    chains.row(Cells{"field_profile_width", ppm, d / k.gamma_n_hz_per_t, "T"});
    chains.row(Cells{"analytic_bk1", ppm, d / (2.0 * k.gamma_n_hz_per_t), "T"});
    const double re = lattice::poisson_interspin_distance(ppm);
    chains.row(Cells{"analytic_hyperfine_second_moment_r0_2.15nm", ppm,
                     lattice::p1_hyperfine_second_moment_analytic(re, 2.15), "kHz^2"});
  }
  chains.row(Cells{"time_gain_N100_n40_dt10_tw30_Nd4", 0.0, acq::time_gain(100, 40, 10.0, 30.0, 4), "1"});
  run.outputs["chains.csv"] = chains.str();
}

// Units by column-name suffix.
std::string unit_for(const std::string& col) {
  static const std::vector<std::pair<std::string, std::string>> suffixes = {
      {"_per_s", "1/s"}, {"_nm2_per_s", "nm^2/s"}, {"_khz2", "kHz^2"}, {"_mG2", "mG^2"},
      {"_khz", "kHz"},   {"_hz", "Hz"},            {"_nm3", "1/nm^3"}, {"_nm", "nm"},
      {"_mm", "mm"},     {"_T", "T"},              {"_G", "G"},        {"_s", "s"}};
  std::string best = "1";
  std::size_t best_len = 0;
  for (const auto& [suf, unit] : suffixes) {
    if (col.size() >= suf.size() && col.compare(col.size() - suf.size(), suf.size(), suf) == 0 &&
        suf.size() > best_len) {
      best = unit;
      best_len = suf.size();
    }
  }
  return best;
}

std::string units_report(const OutputSet& outputs) {
  CsvTable t({"file", "column", "unit"});
  for (const auto& [name, content] : outputs) {
    if (name.size() < 4 || name.compare(name.size() - 4, 4, ".csv") != 0) continue;
    const std::string header = content.substr(0, content.find('\n'));
    std::size_t start = 0;
    while (start <= header.size()) {
      const auto pos = header.find(',', start);
      const std::string col = header.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
      t.row(Cells{name, col, unit_for(col)});
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
  }
  return t.str();
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ExitCode exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const DomainError*>(&e)) {
    return ExitCode::validation;
  }
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const DegenerateInputError*>(&e)) {
    return ExitCode::numerical;
  }
  if (dynamic_cast<const IoError*>(&e)) return ExitCode::io;
  if (dynamic_cast<const PlanningError*>(&e)) return ExitCode::planning;
  return ExitCode::failure;
}

fs::path default_output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  if (env && *env) return fs::path(env);
  return fs::path("t1noise-out");
}

fs::path resolve_output_dir(const RunConfig& config) {
  if (!config.output_dir.empty()) return fs::path(config.output_dir);
  return default_output_root() / to_string(config.pipeline);
}

PipelineRun execute_pipeline(const RunConfig& c) {
  PipelineRun run;
  const std::string name = to_string(c.pipeline);
  switch (c.pipeline) {
    case PipelineKind::lattice_stats: stage(name, [&] { lattice_stats(c, run); }); break;
    case PipelineKind::model_eval: stage(name, [&] { model_eval(c, run); }); break;
    case PipelineKind::profile_fit: stage(name, [&] { profile_fit(c, run); }); break;
    case PipelineKind::decay_fit: stage(name, [&] { decay_fit(c, run); }); break;
    case PipelineKind::acquisition_sim: stage(name, [&] { acquisition_sim(c, run); }); break;
    case PipelineKind::epr_process: stage(name, [&] { epr_process(c, run); }); break;
    case PipelineKind::paper_repro: stage(name, [&] { paper_repro(c, run); }); break;
  }
  if (c.units_report) run.outputs["units.csv"] = units_report(run.outputs);
  return run;
}

PipelineResult run_pipeline(const RunConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  const PipelineRun run = execute_pipeline(config);

  RunConfig recorded = config;
  recorded.output_dir.clear();
  RunManifest m;
  m.version = tool_version();
  m.pipeline = to_string(config.pipeline);
  m.config_json = config_to_json(recorded);
  m.config_sha256 = sha256_hex(m.config_json);
  m.seeds = {config.seed};
  m.rng_algorithm = std::string(Rng::kAlgorithm);
  for (const auto& p : run.input_paths) m.inputs.push_back({p, sha256_file(p)});
  for (const auto& [name, content] : run.outputs) m.outputs.push_back({name, sha256_hex(content)});
  m.started_utc = started;

  const fs::path out = resolve_output_dir(config);
  const fs::path parent = out.has_parent_path() ? out.parent_path() : fs::path(".");
  const fs::path staging =
      parent / fmt::format(".{}.staging-{}", out.filename().string(), static_cast<long>(::getpid()));
  std::error_code ec;
  try {
    fs::create_directories(parent, ec);
    if (ec) throw IoError("cannot create '" + parent.string() + "': " + ec.message());
    fs::remove_all(staging, ec);
    if (!fs::create_directory(staging, ec) || ec) {
      throw IoError("cannot create staging directory '" + staging.string() + "'");
    }
    for (const auto& [name, content] : run.outputs) io::write_text_file(staging / name, content);
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    io::write_text_file(staging / "manifest.json", manifest_to_json(m));

    if (fs::exists(out)) {
      const bool ours = fs::exists(out / "manifest.json");
      if (!ours && !fs::is_empty(out)) {
        throw IoError("refusing to replace '" + out.string() + "': not a t1noise output directory");
      }
      fs::remove_all(out, ec);
      if (ec) throw IoError("cannot remove previous output '" + out.string() + "'");
    }
    fs::rename(staging, out, ec);
    if (ec) throw IoError("cannot move outputs into '" + out.string() + "': " + ec.message());
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
  return {out, m};
}

}  // namespace t1noise::workbench
