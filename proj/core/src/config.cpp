#include "t1noise/config.hpp"

#include <cmath>
#include <set>

#include "json.hpp"
#include "t1noise/errors.hpp"

namespace t1noise::workbench {

using json = nlohmann::ordered_json;

namespace {

// Reads keys of one JSON object and rejects the ones nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError("'" + path_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ValidationError("'" + where(key) + "' has the wrong type");
    }
  }

  template <class T>
  void get(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out.reset();
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ValidationError("unknown key '" + k + "' in '" + path_ + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_grid(const json& j, const std::string& path, FieldGrid& g) {
  ObjectReader r(j, path);
  r.get("min_t", g.min_t);
  r.get("max_t", g.max_t);
  r.get("points", g.points);
  std::string spacing = g.log_spacing ? "log" : "linear";
  r.get("spacing", spacing);
  if (spacing != "log" && spacing != "linear") {
    throw ValidationError("'" + r.where("spacing") + "' must be 'log' or 'linear'");
  }
  g.log_spacing = spacing == "log";
  if (const json* v = r.child("values_t")) {
    try {
      g.values_t = v->get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ValidationError("'" + r.where("values_t") + "' must be a list of numbers");
    }
  }
  r.finish();
}

json grid_json(const FieldGrid& g) {
  json j;
  j["min_t"] = g.min_t;
  j["max_t"] = g.max_t;
  j["points"] = g.points;
  j["spacing"] = g.log_spacing ? "log" : "linear";
  j["values_t"] = g.values_t ? json(*g.values_t) : json(nullptr);
  return j;
}

relax::TsallianParams read_component(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  relax::TsallianParams p;
  r.get("c1", p.c1);
  r.get("c2", p.c2);
  r.get("q", p.q);
  r.finish();
  return p;
}

NamedModel read_model(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  NamedModel m;
  r.get("name", m.name);
  const json* channels = r.child("channels");
  const json* tsallian = r.child("tsallian");
  double gamma_n = kGammaCarbonHzPerT;
  r.get("gamma_n_hz_per_t", gamma_n);
  if ((channels == nullptr) == (tsallian == nullptr)) {
    throw ValidationError("'" + path + "' needs exactly one of 'channels' or 'tsallian'");
  }
  if (channels) {
    if (!channels->is_array()) throw ValidationError("'" + r.where("channels") + "' must be a list");
    relax::RateModel rm;
    rm.gamma_n_hz_per_t = gamma_n;
    for (std::size_t i = 0; i < channels->size(); ++i) {
      const std::string cp = r.where("channels") + "[" + std::to_string(i) + "]";
      ObjectReader c((*channels)[i], cp);
      relax::RateChannel ch;
      std::string kind;
      c.get("kind", kind);
      try {
        ch.kind = relax::channel_kind_from_string(kind);
      } catch (const Error&) {
        throw ValidationError("'" + c.where("kind") + "': unknown channel kind '" + kind + "'");
      }
      ch.name = kind;
      c.get("name", ch.name);
      c.get("a2_khz2", ch.a2_khz2);
      c.get("width_hz", ch.width_hz);
      c.get("offset_rate", ch.offset_rate);
      c.finish();
      rm.channels.push_back(ch);
    }
    rm.validate();
    m.model = rm;
  } else {
    ObjectReader t(*tsallian, r.where("tsallian"));
    relax::TsallianProfile p;
    if (const json* n = t.child("narrow")) p.narrow = read_component(*n, t.where("narrow"));
    if (const json* b = t.child("broad")) p.broad = read_component(*b, t.where("broad"));
    t.get("offset", p.offset);
    t.finish();
    m.model = p;
  }
  r.finish();
  return m;
}

json model_json(const NamedModel& m) {
  json j;
  j["name"] = m.name;
  if (const auto* rm = std::get_if<relax::RateModel>(&m.model)) {
    j["gamma_n_hz_per_t"] = rm->gamma_n_hz_per_t;
    json chans = json::array();
    for (const auto& c : rm->channels) {
      json cj;
      cj["kind"] = relax::to_string(c.kind);
      cj["name"] = c.name;
      cj["a2_khz2"] = c.a2_khz2;
      cj["width_hz"] = c.width_hz;
      cj["offset_rate"] = c.offset_rate;
      chans.push_back(cj);
    }
    j["channels"] = chans;
  } else {
    const auto& p = std::get<relax::TsallianProfile>(m.model);
    auto comp = [](const relax::TsallianParams& c) {
      json cj;
      cj["c1"] = c.c1;
      cj["c2"] = c.c2;
      cj["q"] = c.q;
      return cj;
    };
    json t;
    t["narrow"] = comp(p.narrow);
    t["broad"] = comp(p.broad);
    t["offset"] = p.offset;
    j["tsallian"] = t;
  }
  return j;
}

void read_lattice(const json& j, LatticeBlock& b) {
  ObjectReader r(j, "lattice");
  r.get("enrichments", b.enrichments);
  r.get("electron_ppm", b.electron_ppm);
  r.get("lattice_size_nm", b.lattice_size_nm);
  r.get("realizations", b.realizations);
  r.get("nv_threshold_khz", b.nv_threshold_khz);
  r.get("detection_linewidth_hz", b.detection_linewidth_hz);
  r.get("hyperfine_realizations", b.hyperfine_realizations);
  r.get("convergence_sizes_nm", b.convergence_sizes_nm);
  r.get("diffusion_t1_s", b.diffusion_t1_s);
  r.get("field_direction", b.field_direction);
  r.get("threads", b.threads);
  r.get("estimators", b.estimators);
  r.finish();
  static const std::set<std::string> known{"bath", "carbon", "nearest_neighbor", "nv",
                                           "p1_hyperfine"};
  for (const auto& e : b.estimators) {
    if (!known.count(e)) throw ValidationError("'lattice.estimators': unknown estimator '" + e + "'");
  }
}

json lattice_json(const LatticeBlock& b) {
  json j;
  j["enrichments"] = b.enrichments;
  j["electron_ppm"] = b.electron_ppm;
  j["lattice_size_nm"] = b.lattice_size_nm;
  j["realizations"] = b.realizations;
  j["nv_threshold_khz"] = b.nv_threshold_khz;
  j["detection_linewidth_hz"] = b.detection_linewidth_hz;
  j["hyperfine_realizations"] = b.hyperfine_realizations;
  j["convergence_sizes_nm"] = b.convergence_sizes_nm;
  j["diffusion_t1_s"] = b.diffusion_t1_s;
  j["field_direction"] = b.field_direction;
  j["threads"] = b.threads;
  j["estimators"] = b.estimators;
  return j;
}

void read_model_block(const json& j, ModelBlock& b) {
  ObjectReader r(j, "model");
  if (const json* ms = r.child("models")) {
    if (!ms->is_array()) throw ValidationError("'model.models' must be a list");
    b.models.clear();
    for (std::size_t i = 0; i < ms->size(); ++i) {
      b.models.push_back(read_model((*ms)[i], "model.models[" + std::to_string(i) + "]"));
    }
  }
  if (const json* g = r.child("grid")) read_grid(*g, "model.grid", b.grid);
  r.get("phase_noise_reference_t", b.phase_noise_reference_t);
  if (const json* k = r.child("knees")) {
    ObjectReader kr(*k, "model.knees");
    kr.get("saturation_field_t", b.knees.saturation_field_t);
    kr.get("grid_min_t", b.knees.grid_min_t);
    kr.get("grid_max_t", b.knees.grid_max_t);
    kr.get("grid_points", b.knees.grid_points);
    kr.get("bisection_tol_t", b.knees.bisection_tol_t);
    kr.get("saturation_slope", b.knees.saturation_slope);
    kr.finish();
  }
  r.finish();
}

json model_block_json(const ModelBlock& b) {
  json j;
  json ms = json::array();
  for (const auto& m : b.models) ms.push_back(model_json(m));
  j["models"] = ms;
  j["grid"] = grid_json(b.grid);
  j["phase_noise_reference_t"] = b.phase_noise_reference_t;
  json k;
  k["saturation_field_t"] = b.knees.saturation_field_t;
  k["grid_min_t"] = b.knees.grid_min_t;
  k["grid_max_t"] = b.knees.grid_max_t;
  k["grid_points"] = b.knees.grid_points;
  k["bisection_tol_t"] = b.knees.bisection_tol_t;
  k["saturation_slope"] = b.knees.saturation_slope;
  j["knees"] = k;
  return j;
}

void read_fit(const json& j, FitBlock& b) {
  ObjectReader r(j, "fit");
  if (const json* p = r.child("profile")) {
    ObjectReader pr(*p, "fit.profile");
    pr.get("width_grid", b.profile.width_grid);
    pr.get("initial_q", b.profile.initial_q);
    pr.get("q_min", b.profile.q_min);
    pr.get("q_max", b.profile.q_max);
    pr.finish();
  }
  std::string dm = to_string(b.decay_model);
  r.get("decay_model", dm);
  b.decay_model = decay_model_from_string(dm);
  r.get("fix_p", b.fix_p);
  r.finish();
}

json fit_json(const FitBlock& b) {
  json j;
  json p;
  p["width_grid"] = b.profile.width_grid;
  p["initial_q"] = b.profile.initial_q;
  p["q_min"] = b.profile.q_min;
  p["q_max"] = b.profile.q_max;
  j["profile"] = p;
  j["decay_model"] = to_string(b.decay_model);
  j["fix_p"] = b.fix_p ? json(*b.fix_p) : json(nullptr);
  return j;
}

void read_acquisition(const json& j, AcquisitionBlock& b) {
  ObjectReader r(j, "acquisition");
  auto& p = b.plan;
  std::string strategy = acq::to_string(p.strategy);
  r.get("strategy", strategy);
  p.strategy = acq::strategy_from_string(strategy);
  if (const json* f = r.child("fields")) read_grid(*f, "acquisition.fields", b.fields);
  r.get("decay_samples", p.decay_samples);
  r.get("time_step_s", p.time_step_s);
  if (const json* w = r.child("wait_time_s")) {
    if (w->is_string()) {
      if (w->get<std::string>() != "dynamic") {
        throw ValidationError("'acquisition.wait_time_s' must be a number or \"dynamic\"");
      }
      p.wait_time_s.reset();
    } else {
      r.get("wait_time_s", p.wait_time_s);
    }
  }
  r.get("calibration_fields", p.calibration_fields);
  r.get("shots_per_point", p.shots_per_point);
  r.get("eps0", p.eps0);
  r.get("noise_sd", p.noise_sd);
  if (const json* s = r.child("stretch")) {
    ObjectReader sr(*s, "acquisition.stretch");
    sr.get("low", p.stretch.low);
    sr.get("high", p.stretch.high);
    sr.get("transition_t", p.stretch.transition_t);
    sr.get("width_decades", p.stretch.width_decades);
    sr.finish();
  }
  r.get("polarization_position_mm", p.polarization_position_mm);
  r.get("detection_position_mm", p.detection_position_mm);
  r.get("coil_threshold_t", p.coil_threshold_t);
  r.get("shuttled_field_offset_t", p.shuttled_field_offset_t);
  r.get("polarization_time_s", p.polarization_time_s);
  r.get("include_transit", p.include_transit);
  r.get("time_budget_s", p.time_budget_s);
  r.get("transfer_time_s", b.transfer_time_s);
  r.get("time_jitter_s", b.time_jitter_s);
  if (const json* t = r.child("truth")) b.truth = read_model(*t, "acquisition.truth");
  r.finish();
}

json acquisition_json(const AcquisitionBlock& b) {
  const auto& p = b.plan;
  json j;
  j["strategy"] = acq::to_string(p.strategy);
  j["fields"] = grid_json(b.fields);
  j["decay_samples"] = p.decay_samples;
  j["time_step_s"] = p.time_step_s;
  j["wait_time_s"] = p.wait_time_s ? json(*p.wait_time_s) : json("dynamic");
  j["calibration_fields"] = p.calibration_fields;
  j["shots_per_point"] = p.shots_per_point;
  j["eps0"] = p.eps0;
  j["noise_sd"] = p.noise_sd;
  json s;
  s["low"] = p.stretch.low;
  s["high"] = p.stretch.high;
  s["transition_t"] = p.stretch.transition_t;
  s["width_decades"] = p.stretch.width_decades;
  j["stretch"] = s;
  j["polarization_position_mm"] = p.polarization_position_mm;
  j["detection_position_mm"] = p.detection_position_mm;
  j["coil_threshold_t"] = p.coil_threshold_t;
  j["shuttled_field_offset_t"] = p.shuttled_field_offset_t;
  j["polarization_time_s"] = p.polarization_time_s;
  j["include_transit"] = p.include_transit;
  j["time_budget_s"] = p.time_budget_s ? json(*p.time_budget_s) : json(nullptr);
  j["transfer_time_s"] = b.transfer_time_s;
  j["time_jitter_s"] = b.time_jitter_s;
  j["truth"] = b.truth ? model_json(*b.truth) : json(nullptr);
  return j;
}

void read_epr(const json& j, epr::EprOptions& o) {
  ObjectReader r(j, "epr");
  r.get("prominence_factor", o.segment.prominence_factor);
  r.get("edge_fraction", o.segment.edge_fraction);
  r.get("min_lobe_points", o.segment.min_lobe_points);
  r.get("reference_scale", o.reference_scale);
  if (const json* ov = r.child("offset_overrides")) {
    if (!ov->is_object()) throw ValidationError("'epr.offset_overrides' must map range index to offset");
    o.offset_overrides.clear();
    for (const auto& [k, v] : ov->items()) {
      std::size_t idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoul(k, &used);
        if (used != k.size()) throw std::invalid_argument(k);
      } catch (const std::exception&) {
        throw ValidationError("'epr.offset_overrides': key '" + k + "' is not a range index");
      }
      if (!v.is_number()) throw ValidationError("'epr.offset_overrides." + k + "' must be a number");
      o.offset_overrides[idx] = v.get<double>();
    }
  }
  r.finish();
}

json epr_json(const epr::EprOptions& o) {
  json j;
  j["prominence_factor"] = o.segment.prominence_factor;
  j["edge_fraction"] = o.segment.edge_fraction;
  j["min_lobe_points"] = o.segment.min_lobe_points;
  j["reference_scale"] = o.reference_scale;
  json ov = json::object();
  for (const auto& [k, v] : o.offset_overrides) ov[std::to_string(k)] = v;
  j["offset_overrides"] = ov;
  return j;
}

void read_inputs(const json& j, InputsBlock& b) {
  ObjectReader r(j, "inputs");
  r.get("profile", b.profile);
  r.get("decay", b.decay);
  r.get("fieldmap", b.fieldmap);
  r.get("spectra", b.spectra);
  r.finish();
}

json inputs_json(const InputsBlock& b) {
  json j;
  j["profile"] = b.profile;
  j["decay"] = b.decay;
  j["fieldmap"] = b.fieldmap;
  j["spectra"] = b.spectra;
  return j;
}

RunConfig from_json(const json& j) {
  RunConfig c;
  c.model.models = reference_models();
  ObjectReader r(j, "");
  std::string pipeline = to_string(c.pipeline);
  r.get("pipeline", pipeline);
  c.pipeline = pipeline_from_string(pipeline);
  r.get("seed", c.seed);
  r.get("output_dir", c.output_dir);
  r.get("units_report", c.units_report);
  if (const json* x = r.child("lattice")) read_lattice(*x, c.lattice);
  if (const json* x = r.child("model")) read_model_block(*x, c.model);
  if (const json* x = r.child("fit")) read_fit(*x, c.fit);
  if (const json* x = r.child("acquisition")) read_acquisition(*x, c.acquisition);
  if (const json* x = r.child("epr")) read_epr(*x, c.epr);
  if (const json* x = r.child("inputs")) read_inputs(*x, c.inputs);
  r.finish();
  return c;
}

json parse_json(std::string_view text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(source + ": invalid JSON: " + e.what());
  }
}

}  // namespace

std::string to_string(PipelineKind kind) {
  switch (kind) {
    case PipelineKind::lattice_stats: return "lattice-stats";
    case PipelineKind::model_eval: return "model-eval";
    case PipelineKind::profile_fit: return "profile-fit";
    case PipelineKind::decay_fit: return "decay-fit";
    case PipelineKind::acquisition_sim: return "acquisition-sim";
    case PipelineKind::epr_process: return "epr-process";
    case PipelineKind::paper_repro: return "paper-repro";
  }
  return "unknown";
}

PipelineKind pipeline_from_string(const std::string& name) {
  if (name == "acq-sim") return PipelineKind::acquisition_sim;
  if (name == "epr") return PipelineKind::epr_process;
  for (auto k : {PipelineKind::lattice_stats, PipelineKind::model_eval, PipelineKind::profile_fit,
                 PipelineKind::decay_fit, PipelineKind::acquisition_sim, PipelineKind::epr_process,
                 PipelineKind::paper_repro}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("unknown pipeline '" + name + "'");
}

std::string to_string(DecayModel m) {
  switch (m) {
    case DecayModel::stretched: return "stretched";
    case DecayModel::mono: return "mono";
    case DecayModel::bi: return "bi";
    case DecayModel::automatic: return "auto";
  }
  return "unknown";
}

DecayModel decay_model_from_string(const std::string& s) {
  for (auto m : {DecayModel::stretched, DecayModel::mono, DecayModel::bi, DecayModel::automatic}) {
    if (to_string(m) == s) return m;
  }
  throw ValidationError("unknown decay model '" + s + "'");
}

std::vector<double> FieldGrid::values() const {
  if (values_t) {
    if (values_t->empty()) throw ValidationError("field grid is empty");
    for (std::size_t i = 0; i < values_t->size(); ++i) {
      const double v = (*values_t)[i];
      if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("field grid values must be positive");
      if (i > 0 && !(v > (*values_t)[i - 1])) {
        throw ValidationError("field grid values must be strictly increasing");
      }
    }
    return *values_t;
  }
  if (points < 1) throw ValidationError("field grid is empty");
  if (!(min_t > 0.0) || !(max_t >= min_t) || (points > 1 && !(max_t > min_t))) {
    throw ValidationError("field grid needs 0 < min_t < max_t");
  }
  std::vector<double> out(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    const double f = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
    out[static_cast<std::size_t>(i)] =
        log_spacing ? std::exp(std::log(min_t) + f * (std::log(max_t) - std::log(min_t)))
                    : min_t + f * (max_t - min_t);
  }
  out.front() = min_t;
  out.back() = max_t;
  return out;
}

RunConfig parse_config_layers(const std::vector<std::pair<std::string, std::string>>& layers) {
  json merged = json::object();
  for (const auto& [source, text] : layers) {
    const json layer = parse_json(text, source);
    if (!layer.is_object()) throw ValidationError(source + ": top level must be an object");
    merged.merge_patch(layer);
  }
  return from_json(merged);
}

RunConfig parse_config(std::string_view json_text, const std::string& source) {
  return from_json(parse_json(json_text, source));
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["pipeline"] = to_string(c.pipeline);
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["units_report"] = c.units_report;
  j["lattice"] = lattice_json(c.lattice);
  j["model"] = model_block_json(c.model);
  j["fit"] = fit_json(c.fit);
  j["acquisition"] = acquisition_json(c.acquisition);
  j["epr"] = epr_json(c.epr);
  j["inputs"] = inputs_json(c.inputs);
  return j.dump(2) + "\n";
}

std::vector<NamedModel> reference_models() {
  relax::RateModel m17;
  m17.channels.push_back(relax::RateChannel::p1_bath(0.39, 0.5e6, "p1_bath"));
  relax::RateModel m48;
  m48.channels.push_back(relax::RateChannel::p1_bath(0.45, 1.42e6, "p1_bath"));
  return {{"17ppm", m17}, {"48ppm", m48}};
}

}  // namespace t1noise::workbench
