#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "t1noise/acquisition.hpp"
#include "t1noise/epr.hpp"
#include "t1noise/fitting.hpp"
#include "t1noise/relaxmodel.hpp"

namespace t1noise::workbench {

enum class PipelineKind {
  lattice_stats,
  model_eval,
  profile_fit,
  decay_fit,
  acquisition_sim,
  epr_process,
  paper_repro,
};

// Pipeline names: lattice-stats, model-eval, profile-fit, decay-fit,
// acquisition-sim, epr-process, paper-repro. The CLI spellings acq-sim and
// epr are accepted as aliases.
std::string to_string(PipelineKind kind);
PipelineKind pipeline_from_string(const std::string& name);

// Either explicit values or a min/max/points grid.
struct FieldGrid {
  double min_t = 1e-3;
  double max_t = 7.0;
  int points = 200;
  bool log_spacing = true;
  std::optional<std::vector<double>> values_t;

  std::vector<double> values() const;  // validates
};

struct LatticeBlock {
  std::vector<double> enrichments{0.011};
  std::vector<double> electron_ppm{17.0, 48.0};
  double lattice_size_nm = 10.0;
  int realizations = 20;
  double nv_threshold_khz = 200.0;
  double detection_linewidth_hz = 2e3;
  int hyperfine_realizations = 20;
  std::vector<double> convergence_sizes_nm;  // empty: no convergence sweep
  double diffusion_t1_s = 60.0;
  std::array<double, 3> field_direction{0.0, 0.0, 1.0};
  unsigned threads = 0;
  // Subset of: carbon, nearest_neighbor, nv, p1_hyperfine, bath.
  std::vector<std::string> estimators{"bath", "carbon", "nearest_neighbor", "nv"};
};

struct NamedModel {
  std::string name;
  relax::ProfileModel model;
};

struct ModelBlock {
  std::vector<NamedModel> models;
  FieldGrid grid{};
  double phase_noise_reference_t = 1e-3;
  relax::KneeOptions knees{};
};

enum class DecayModel { stretched, mono, bi, automatic };
std::string to_string(DecayModel m);
DecayModel decay_model_from_string(const std::string& s);

struct FitBlock {
  fit::ProfileFitOptions profile{};
  DecayModel decay_model = DecayModel::stretched;
  std::optional<double> fix_p;
};

struct AcquisitionBlock {
  acq::AcquisitionPlan plan{};
  FieldGrid fields{1e-3, 7.0, 100, true, std::nullopt};
  double transfer_time_s = 0.648;
  double time_jitter_s = 0.004;
  std::optional<NamedModel> truth;  // defaults to the first model block entry
};

struct InputsBlock {
  std::string profile;
  std::string decay;
  std::string fieldmap;
  std::vector<std::string> spectra;
};

struct RunConfig {
  PipelineKind pipeline = PipelineKind::paper_repro;
  std::uint64_t seed = 1;
  std::string output_dir;  // empty: <output root>/<pipeline>
  bool units_report = false;
  LatticeBlock lattice{};
  ModelBlock model{};
  FitBlock fit{};
  AcquisitionBlock acquisition{};
  epr::EprOptions epr{};
  InputsBlock inputs{};
};

// Each layer is (source name, JSON text); later layers override earlier ones
// key by key (RFC 7386 merge). Unknown keys anywhere are a ValidationError.
RunConfig parse_config_layers(const std::vector<std::pair<std::string, std::string>>& layers);
RunConfig parse_config(std::string_view json_text, const std::string& source = "<config>");

// Fully resolved configuration, with every default spelled out, in a stable
// key order.
std::string config_to_json(const RunConfig& config);

// p1_bath models of the 17 ppm and 48 ppm samples (d_ee 0.5 and 1.42 MHz).
std::vector<NamedModel> reference_models();

}  // namespace t1noise::workbench
