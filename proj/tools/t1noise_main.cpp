// t1noise: command-line front end for the relaxometry workbench.
//
// Every subcommand resolves a RunConfig from three layers, lowest first:
// built-in defaults, command-line flags, then --config FILE (the file wins).
// --from-manifest replays a previous run exactly.

#include <deque>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "t1noise/csv_io.hpp"
#include "t1noise/errors.hpp"
#include "t1noise/pipeline.hpp"

namespace wb = t1noise::workbench;
using json = nlohmann::ordered_json;

namespace {

struct Common {
  std::string config_file;
  std::string manifest_file;
  std::string output;
  std::uint64_t seed = 1;
  bool units_report = false;
  bool print_config = false;
};

// Flags collected into a JSON patch; only flags given on the command line
// are applied.
struct Patch {
  json j = json::object();
  void set(const CLI::Option* opt, const json::json_pointer& ptr, const json& value) {
    if (opt->count() > 0) j[ptr] = value;
  }
};

struct Command {
  CLI::App* app = nullptr;
  wb::PipelineKind kind{};
  Common common;
  Patch patch;
  std::vector<std::function<void()>> collect;
};

void add_common(Command& c) {
  auto* app = c.app;
  app->add_option("-c,--config", c.common.config_file, "JSON config file; overrides flags");
  app->add_option("--from-manifest", c.common.manifest_file,
                  "Replay the configuration recorded in a manifest.json");
  app->add_option("-o,--output", c.common.output,
                  std::string("Output directory (default: $") + wb::kOutputRootEnv + "/<pipeline>)");
  auto* seed = app->add_option("--seed", c.common.seed, "Random seed")->capture_default_str();
  auto* units = app->add_flag("--units-report", c.common.units_report, "Also write units.csv");
  app->add_flag("--print-config", c.common.print_config, "Print the resolved config and exit");
  c.collect.push_back([&c, seed, units] {
    c.patch.set(seed, "/seed"_json_pointer, c.common.seed);
    c.patch.set(units, "/units_report"_json_pointer, c.common.units_report);
  });
}

std::string slurp(const std::string& path) { return t1noise::io::read_text_file(path); }

int run(Command& c) {
  for (auto& f : c.collect) f();
  wb::RunConfig cfg;
  if (!c.common.manifest_file.empty()) {
    cfg = wb::config_from_manifest(c.common.manifest_file);
  } else {
    c.patch.j["pipeline"] = wb::to_string(c.kind);
    std::vector<std::pair<std::string, std::string>> layers{{"<flags>", c.patch.j.dump()}};
    if (!c.common.config_file.empty()) {
      layers.emplace_back(c.common.config_file, slurp(c.common.config_file));
    }
    cfg = wb::parse_config_layers(layers);
    if (cfg.pipeline != c.kind) {
      throw t1noise::ValidationError("config selects pipeline '" + wb::to_string(cfg.pipeline) +
                                     "' but the subcommand is '" + wb::to_string(c.kind) + "'");
    }
  }
  if (!c.common.output.empty()) cfg.output_dir = c.common.output;
  if (c.common.print_config) {
    std::cout << wb::config_to_json(cfg);
    return 0;
  }
  const auto result = wb::run_pipeline(cfg);
  std::cout << result.output_dir.string() << '\n';
  for (const auto& o : result.manifest.outputs) std::cout << "  " << o.path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"t1noise: field-dependent nuclear T1 relaxation models, simulations and fits"};
  app.set_version_flag("--version", wb::tool_version());
  app.require_subcommand(1);
  app.footer(std::string("Environment: ") + wb::kOutputRootEnv +
             " sets the default output root (./t1noise-out when unset).\n"
             "Exit codes: 0 ok, 2 validation, 3 numerical, 4 I/O, 5 planning, 1 other.");

  const wb::RunConfig defaults;
  std::vector<std::unique_ptr<Command>> commands;
  auto make = [&](const char* name, const char* help, wb::PipelineKind kind) -> Command& {
    auto c = std::make_unique<Command>();
    c->app = app.add_subcommand(name, help);
    c->kind = kind;
    add_common(*c);
    commands.push_back(std::move(c));
    return *commands.back();
  };

  // lattice-stats
  {
    auto& c = make("lattice-stats", "Monte-Carlo lattice statistics and electron-bath chains",
                   wb::PipelineKind::lattice_stats);
    static auto lb = defaults.lattice;
    auto* eta = c.app->add_option("--enrichment", lb.enrichments, "13C enrichment fractions")
                    ->capture_default_str();
    auto* ppm = c.app->add_option("--ppm", lb.electron_ppm, "Electron concentrations (ppm)")
                    ->capture_default_str();
    auto* size = c.app->add_option("--size-nm", lb.lattice_size_nm, "Lattice cube side (nm)")
                     ->capture_default_str();
    auto* real = c.app->add_option("--realizations", lb.realizations, "Lattice realizations")
                     ->capture_default_str();
    auto* est = c.app->add_option("--estimators", lb.estimators,
                                  "bath, carbon, nearest_neighbor, nv, p1_hyperfine")
                    ->capture_default_str();
    auto* thr = c.app->add_option("--nv-threshold-khz", lb.nv_threshold_khz,
                                  "Direct-polarization hyperfine threshold (kHz)")
                    ->capture_default_str();
    auto* conv = c.app->add_option("--convergence-sizes", lb.convergence_sizes_nm,
                                   "Lattice sizes (nm) for a convergence sweep");
    auto* threads = c.app->add_option("--threads", lb.threads, "Worker threads (0 = all)")
                        ->capture_default_str();
    c.collect.push_back([&c, eta, ppm, size, real, est, thr, conv, threads] {
      c.patch.set(eta, "/lattice/enrichments"_json_pointer, lb.enrichments);
      c.patch.set(ppm, "/lattice/electron_ppm"_json_pointer, lb.electron_ppm);
      c.patch.set(size, "/lattice/lattice_size_nm"_json_pointer, lb.lattice_size_nm);
      c.patch.set(real, "/lattice/realizations"_json_pointer, lb.realizations);
      c.patch.set(est, "/lattice/estimators"_json_pointer, lb.estimators);
      c.patch.set(thr, "/lattice/nv_threshold_khz"_json_pointer, lb.nv_threshold_khz);
      c.patch.set(conv, "/lattice/convergence_sizes_nm"_json_pointer, lb.convergence_sizes_nm);
      c.patch.set(threads, "/lattice/threads"_json_pointer, lb.threads);
    });
  }

  // model-eval and paper-repro share the field-grid flags.
  auto grid_flags = [&](Command& c) {
    static std::deque<wb::FieldGrid> grids;
    grids.push_back(defaults.model.grid);
    auto& g = grids.back();
    static std::deque<std::string> model_files;
    model_files.emplace_back();
    auto& model_file = model_files.back();
    auto* bmin = c.app->add_option("--bmin", g.min_t, "Lowest field (T)")->capture_default_str();
    auto* bmax = c.app->add_option("--bmax", g.max_t, "Highest field (T)")->capture_default_str();
    auto* pts = c.app->add_option("--points", g.points, "Grid points")->capture_default_str();
    auto* mf = c.app->add_option("--models", model_file,
                                 "JSON file with {\"models\": [...]} (default: 17/48 ppm p1_bath)");
    c.collect.push_back([&c, &g, &model_file, bmin, bmax, pts, mf] {
      c.patch.set(bmin, "/model/grid/min_t"_json_pointer, g.min_t);
      c.patch.set(bmax, "/model/grid/max_t"_json_pointer, g.max_t);
      c.patch.set(pts, "/model/grid/points"_json_pointer, g.points);
      if (mf->count() > 0) {
        const json m = json::parse(slurp(model_file));
        if (!m.is_object() || !m.contains("models")) {
          throw t1noise::ValidationError(model_file + ": expected an object with a 'models' list");
        }
        c.patch.j["model"]["models"] = m["models"];
      }
    });
  };
  grid_flags(make("model-eval", "Evaluate rate models: curves, knees, phase noise, crossover",
                  wb::PipelineKind::model_eval));
  grid_flags(make("paper-repro", "Regenerate the reference model curves and derived tables",
                  wb::PipelineKind::paper_repro));

  // profile-fit
  {
    auto& c = make("profile-fit", "Fit two Tsallians plus offset to an R1(B) profile CSV",
                   wb::PipelineKind::profile_fit);
    static std::string input;
    auto* in = c.app->add_option("-i,--input", input, "Profile CSV (B_T,R1_per_s[,err[,provenance]])");
    c.collect.push_back([&c, in] { c.patch.set(in, "/inputs/profile"_json_pointer, input); });
  }

  // decay-fit
  {
    auto& c = make("decay-fit", "Fit a stretched-exponential decay or a buildup curve",
                   wb::PipelineKind::decay_fit);
    static std::string input;
    static std::string model = wb::to_string(defaults.fit.decay_model);
    static double fix_p = 1.0;
    auto* in = c.app->add_option("-i,--input", input, "Decay CSV (t_s,signal[,sigma])");
    auto* m = c.app->add_option("--model", model, "stretched, mono, bi or auto")
                  ->check(CLI::IsMember({"stretched", "mono", "bi", "auto"}))
                  ->capture_default_str();
    auto* fp = c.app->add_option("--fix-p", fix_p, "Hold the stretch factor fixed");
    c.collect.push_back([&c, in, m, fp] {
      c.patch.set(in, "/inputs/decay"_json_pointer, input);
      c.patch.set(m, "/fit/decay_model"_json_pointer, model);
      c.patch.set(fp, "/fit/fix_p"_json_pointer, fix_p);
    });
  }

  // acq-sim
  {
    auto& c = make("acq-sim", "Simulate a field-cycling acquisition plan (full 2D or accelerated 1D)",
                   wb::PipelineKind::acquisition_sim);
    static std::string fieldmap;
    static std::string strategy = t1noise::acq::to_string(defaults.acquisition.plan.strategy);
    static std::string wait = "30";
    static auto plan = defaults.acquisition.plan;
    auto* fm = c.app->add_option("--fieldmap", fieldmap, "Field map CSV (default: built-in demo map)");
    auto* st = c.app->add_option("--strategy", strategy, "full_2D or accelerated_1D")
                   ->check(CLI::IsMember({"full_2D", "accelerated_1D"}))
                   ->capture_default_str();
    auto* w = c.app->add_option("--wait", wait, "1D wait time in s, or 'dynamic'")->capture_default_str();
    auto* noise = c.app->add_option("--noise-sd", plan.noise_sd, "Signal noise sd")->capture_default_str();
    auto* shots = c.app->add_option("--shots", plan.shots_per_point, "Shots per point")->capture_default_str();
    auto* nd = c.app->add_option("--calibration-fields", plan.calibration_fields, "N_d")->capture_default_str();
    c.collect.push_back([&c, fm, st, w, noise, shots, nd] {
      c.patch.set(fm, "/inputs/fieldmap"_json_pointer, fieldmap);
      c.patch.set(st, "/acquisition/strategy"_json_pointer, strategy);
      if (w->count() > 0) {
        if (wait == "dynamic") {
          c.patch.j["acquisition"]["wait_time_s"] = "dynamic";
        } else {
          try {
            c.patch.j["acquisition"]["wait_time_s"] = std::stod(wait);
          } catch (const std::exception&) {
            throw t1noise::ValidationError("--wait must be a number or 'dynamic'");
          }
        }
      }
      c.patch.set(noise, "/acquisition/noise_sd"_json_pointer, plan.noise_sd);
      c.patch.set(shots, "/acquisition/shots_per_point"_json_pointer, plan.shots_per_point);
      c.patch.set(nd, "/acquisition/calibration_fields"_json_pointer, plan.calibration_fields);
    });
  }

  // epr
  {
    auto& c = make("epr", "Segment, fit and double-integrate derivative EPR spectra",
                   wb::PipelineKind::epr_process);
    static std::vector<std::string> inputs;
    static double prominence = defaults.epr.segment.prominence_factor;
    auto* in = c.app->add_option("-i,--input", inputs, "Spectrum CSVs (field_G,signal)");
    auto* pr = c.app->add_option("--prominence", prominence, "Extremum threshold in noise sd units")
                   ->capture_default_str();
    c.collect.push_back([&c, in, pr] {
      c.patch.set(in, "/inputs/spectra"_json_pointer, inputs);
      c.patch.set(pr, "/epr/prominence_factor"_json_pointer, prominence);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(wb::ExitCode::validation);
  }

  for (auto& c : commands) {
    if (!c->app->parsed()) continue;
    try {
      return run(*c);
    } catch (const std::exception& e) {
      std::cerr << "t1noise " << c->app->get_name() << ": " << e.what() << '\n';
      return static_cast<int>(wb::exit_code_for(e));
    }
  }
  return static_cast<int>(wb::ExitCode::failure);
}
