#include "t1noise/lattice.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numbers>
#include <set>
#include <thread>
#include <tuple>

#include "t1noise/errors.hpp"
#include "t1noise/rng.hpp"

namespace t1noise::lattice {

namespace {

constexpr double kSiteTolerance = 1e-9;

void require_unit(const Vec3& v, const char* what) {
  if (!v.allFinite() || std::abs(v.norm() - 1.0) > 1e-12) {
    throw ValidationError(std::string(what) + " must be a unit vector");
  }
}

struct PairPass {
  std::vector<double> rss_coupling_hz;
  std::vector<double> nn_distance_nm;
};

// One sweep over all carbon pairs: per-spin root-sum-square coupling and the
// distance to the partner of largest |coupling| (ties go to the closer spin).
PairPass carbon_pair_pass(const SpinLattice& lattice) {
  const auto& pos = lattice.carbon_positions;
  const std::size_t n = pos.size();
  if (n < 2) throw DegenerateInputError("carbon estimators need at least 2 carbon spins");
  const Vec3 b = lattice.config.field_direction;
  const double k = lattice.config.constants.carbon_dipolar_prefactor_hz_nm3();

  std::vector<double> sum2(n, 0.0);
  std::vector<double> best_abs(n, -1.0);
  std::vector<double> best_r(n, 0.0);
  auto consider = [&](std::size_t j, double abs_d, double r) {
    if (abs_d > best_abs[j] || (abs_d == best_abs[j] && r < best_r[j])) {
      best_abs[j] = abs_d;
      best_r[j] = r;
    }
  };
  for (std::size_t j = 0; j < n; ++j) {
    const Vec3 pj = pos[j];
    for (std::size_t m = j + 1; m < n; ++m) {
      const Vec3 d = pos[m] - pj;
      const double r2 = d.squaredNorm();
      const double r = std::sqrt(r2);
      const double c = d.dot(b) / r;
      const double coupling = k * (3.0 * c * c - 1.0) / (r2 * r);
      const double c2 = coupling * coupling;
      sum2[j] += c2;
      sum2[m] += c2;
      const double a = std::abs(coupling);
      consider(j, a, r);
      consider(m, a, r);
    }
  }
  PairPass out;
  out.rss_coupling_hz.resize(n);
  for (std::size_t j = 0; j < n; ++j) out.rss_coupling_hz[j] = std::sqrt(sum2[j]);
  out.nn_distance_nm = std::move(best_r);
  return out;
}

Estimate make_estimate(std::span<const double> per_realization, const LatticeConfig& config) {
  const MeanSd ms = mean_sd(per_realization);
  return {ms.mean, ms.sd, static_cast<int>(per_realization.size()), config.seed,
          config.lattice_size_nm};
}

Vec3 central_electron_of(const SpinLattice& lattice) {
  if (!lattice.central_electron) {
    throw DegenerateInputError("estimator requires a lattice with a central electron");
  }
  return *lattice.central_electron;
}

}  // namespace

void LatticeConfig::validate() const {
  if (!(enrichment > 0.0 && enrichment <= 1.0)) {
    throw ValidationError("enrichment must lie in (0, 1]");
  }
  if (!(electron_ppm >= 0.0) || !std::isfinite(electron_ppm)) {
    throw ValidationError("electron_ppm must be >= 0");
  }
  if (!(lattice_size_nm > 2.0 * constants.lattice_constant_nm) || !std::isfinite(lattice_size_nm)) {
    throw ValidationError("lattice_size_nm must exceed twice the lattice constant");
  }
  require_unit(field_direction, "field_direction");
  if (realizations < 1) throw ValidationError("realizations must be >= 1");
  if (!(constants.lattice_constant_nm > 0.0) || constants.atoms_per_cell < 1) {
    throw ValidationError("lattice constant and atoms_per_cell must be positive");
  }
}

double SpinLattice::box_volume_nm3() const {
  const double l = config.lattice_size_nm;
  return l * l * l;
}

SpinLattice SpinLattice::from_positions(std::vector<Vec3> carbons, std::vector<Vec3> electrons,
                                        const LatticeConfig& config,
                                        std::optional<Vec3> central_electron) {
  require_unit(config.field_direction, "field_direction");
  std::set<std::tuple<double, double, double>> seen;
  auto add = [&](const Vec3& p) {
    if (!p.allFinite()) throw ValidationError("non-finite spin position");
    if (!seen.emplace(p.x(), p.y(), p.z()).second) {
      throw ValidationError("duplicate spin position");
    }
  };
  for (const auto& p : carbons) add(p);
  for (const auto& p : electrons) add(p);
  SpinLattice out;
  if (central_electron) {
    auto it = std::find(electrons.begin(), electrons.end(), *central_electron);
    if (it == electrons.end()) {
      add(*central_electron);
      electrons.insert(electrons.begin(), *central_electron);
    } else {
      std::rotate(electrons.begin(), it, it + 1);
    }
  }
  out.carbon_positions = std::move(carbons);
  out.electron_positions = std::move(electrons);
  out.central_electron = central_electron;
  out.config = config;
  return out;
}

std::vector<Vec3> diamond_sites(double side_nm, const PhysicalConstants& constants) {
  static const double kBasis[8][3] = {
      {0.0, 0.0, 0.0},    {0.0, 0.5, 0.5},    {0.5, 0.0, 0.5},    {0.5, 0.5, 0.0},
      {0.25, 0.25, 0.25}, {0.25, 0.75, 0.75}, {0.75, 0.25, 0.75}, {0.75, 0.75, 0.25}};
  const double c = constants.conventional_cell_edge_nm();
  const double h = 0.5 * side_nm;
  const double tol = kSiteTolerance * c;
  const int lo = static_cast<int>(std::floor(-h / c)) - 1;
  const int hi = static_cast<int>(std::ceil(h / c)) + 1;
  std::vector<Vec3> sites;
  const double est = constants.site_density_per_nm3() * side_nm * side_nm * side_nm;
  sites.reserve(static_cast<std::size_t>(est * 1.1) + 16);
  for (int i = lo; i <= hi; ++i) {
    for (int j = lo; j <= hi; ++j) {
      for (int k = lo; k <= hi; ++k) {
        for (const auto& b : kBasis) {
          const Vec3 p{(i + b[0]) * c, (j + b[1]) * c, (k + b[2]) * c};
          if (std::abs(p.x()) <= h + tol && std::abs(p.y()) <= h + tol &&
              std::abs(p.z()) <= h + tol) {
            sites.push_back(p);
          }
        }
      }
    }
  }
  return sites;
}

SpinLattice build_lattice(const LatticeConfig& config, std::size_t realization) {
  config.validate();
  const auto sites = diamond_sites(config.lattice_size_nm, config.constants);
  if (sites.size() < 2) throw DegenerateInputError("box holds fewer than 2 lattice sites");

  Rng rng(config.seed, realization);
  const double p_e = config.electron_ppm * 1e-6;
  SpinLattice out;
  out.config = config;
  out.realization = realization;
  const double est = static_cast<double>(sites.size());
  out.carbon_positions.reserve(static_cast<std::size_t>(est * config.enrichment * 1.2) + 8);
  if (config.central_electron) {
    out.central_electron = Vec3::Zero();
    out.electron_positions.push_back(Vec3::Zero());
  }
  for (const auto& s : sites) {
    // One draw per site keeps the stream aligned across configurations that
    // differ only in enrichment or electron density.
    const double u = rng.uniform();
    if (config.central_electron && s.isZero()) continue;
    if (u < config.enrichment) {
      out.carbon_positions.push_back(s);
    } else if (u < config.enrichment + p_e) {
      out.electron_positions.push_back(s);
    }
  }
  return out;
}

// ---- Closed forms ---------------------------------------------------------

double poisson_interspin_distance(double concentration_ppm, const PhysicalConstants& constants) {
  if (!(concentration_ppm > 0.0) || !std::isfinite(concentration_ppm)) {
    throw DomainError("concentration must be positive");
  }
  const double a = constants.lattice_constant_nm;
  const double n_e = 4e-6 * concentration_ppm / (a * a * a);
  return std::cbrt(3.0 * std::numbers::ln2 / (4.0 * std::numbers::pi)) / std::cbrt(n_e);
}

double electron_second_moment_mg2(double concentration_ppm) {
  if (!(concentration_ppm > 0.0)) throw DomainError("concentration must be positive");
  return 43.65 * concentration_ppm * concentration_ppm;
}

double electron_linewidth_hz(double concentration_ppm, const PhysicalConstants& constants) {
  const double m2_g2 = electron_second_moment_mg2(concentration_ppm) * 1e-6;
  return constants.gamma_e_hz_per_gauss() * std::sqrt(8.0 / std::numbers::pi) * std::sqrt(m2_g2);
}

double detection_barrier_radius(double detection_linewidth_hz, const PhysicalConstants& constants) {
  if (!(detection_linewidth_hz > 0.0)) throw DomainError("detection linewidth must be positive");
  return std::cbrt(constants.hyperfine_prefactor_khz_nm3 / (detection_linewidth_hz * 1e-3));
}

BathStatistics electron_bath_statistics(double concentration_ppm, double detection_linewidth_hz,
                                        const PhysicalConstants& constants) {
  BathStatistics s;
  s.mean_interspin_distance_nm = poisson_interspin_distance(concentration_ppm, constants);
  s.second_moment_mg2 = electron_second_moment_mg2(concentration_ppm);
  s.linewidth_hz = electron_linewidth_hz(concentration_ppm, constants);
  s.barrier_radius_nm = detection_barrier_radius(detection_linewidth_hz, constants);
  s.hyperfine_second_moment_khz2 = p1_hyperfine_second_moment_analytic(
      s.mean_interspin_distance_nm, s.barrier_radius_nm, constants);
  return s;
}

double p1_hyperfine_second_moment_analytic(double mean_distance_nm, double barrier_radius_nm,
                                           const PhysicalConstants& constants) {
  if (!(mean_distance_nm > 0.0) || !(barrier_radius_nm > 0.0)) {
    throw DomainError("distances must be positive");
  }
  if (barrier_radius_nm >= mean_distance_nm) {
    throw DegenerateInputError("detection barrier r0 is not smaller than <r_e>");
  }
  const double k = constants.hyperfine_prefactor_khz_nm3;
  const double re3 = mean_distance_nm * mean_distance_nm * mean_distance_nm;
  const double r03 = barrier_radius_nm * barrier_radius_nm * barrier_radius_nm;
  return k * k * (6.0 / 5.0) / re3 * (1.0 / r03 - 1.0 / re3);
}

double p1_hyperfine_second_moment_analytic_ppm(double concentration_ppm,
                                               double detection_linewidth_hz,
                                               const PhysicalConstants& constants) {
  return p1_hyperfine_second_moment_analytic(
      poisson_interspin_distance(concentration_ppm, constants),
      detection_barrier_radius(detection_linewidth_hz, constants), constants);
}

// ---- P1 numeric -----------------------------------------------------------

ObservedHyperfine observed_hyperfine_second_moment(const SpinLattice& lattice,
                                                   double detection_linewidth_hz) {
  if (!(detection_linewidth_hz > 0.0)) throw DomainError("detection linewidth must be positive");
  const Vec3 e = central_electron_of(lattice);
  const Vec3 b = lattice.config.field_direction;
  const double k = lattice.config.constants.hyperfine_prefactor_khz_nm3;
  const double threshold_khz = detection_linewidth_hz * 1e-3;
  ObservedHyperfine out;
  double sum = 0.0;
  for (const auto& p : lattice.carbon_positions) {
    const Vec3 d = p - e;
    const double r = d.norm();
    const double c = d.dot(b) / r;
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double azx = k * 3.0 * s * c / (r * r * r);
    if (std::abs(azx) < threshold_khz) {
      sum += azx * azx;
      ++out.observed;
    } else {
      ++out.hidden;
    }
  }
  if (out.observed > 0) out.second_moment_khz2 = sum / static_cast<double>(out.observed);
  return out;
}

HyperfineEstimate p1_hyperfine_second_moment_numeric(const HyperfineSimConfig& sim) {
  if (!(sim.electron_ppm > 0.0)) throw DomainError("electron concentration must be positive");
  if (sim.realizations < 1) throw ValidationError("realizations must be >= 1");
  LatticeConfig cfg;
  cfg.enrichment = sim.enrichment;
  cfg.electron_ppm = 0.0;
  cfg.lattice_size_nm = 2.0 * poisson_interspin_distance(sim.electron_ppm, sim.constants);
  cfg.field_direction = sim.field_direction;
  cfg.seed = sim.seed;
  cfg.realizations = sim.realizations;
  cfg.central_electron = true;
  cfg.constants = sim.constants;
  cfg.threads = sim.threads;
  cfg.validate();

  const int n = sim.realizations;
  std::vector<double> moments(static_cast<std::size_t>(n));
  std::vector<double> counts(static_cast<std::size_t>(n));
  const auto m = map_realizations(n, sim.threads, [&](std::size_t i) {
    const auto obs = observed_hyperfine_second_moment(build_lattice(cfg, i),
                                                      sim.detection_linewidth_hz);
    if (obs.observed == 0) throw DegenerateInputError("realization has no observable carbons");
    counts[i] = static_cast<double>(obs.observed);
    return obs.second_moment_khz2;
  });
  std::vector<double> rms(m.size());
  std::transform(m.begin(), m.end(), rms.begin(), [](double v) { return std::sqrt(v); });

  HyperfineEstimate out;
  out.second_moment_khz2 = make_estimate(m, cfg);
  out.rms_khz = make_estimate(rms, cfg);
  out.mean_observed = mean_sd(counts).mean;
  return out;
}

// ---- 13C reservoir --------------------------------------------------------

double carbon_dipolar_coupling(const Vec3& r, const Vec3& field_direction,
                               const PhysicalConstants& constants) {
  const double d = r.norm();
  if (!(d > 0.0)) throw DegenerateInputError("coincident spins");
  const double c = r.dot(field_direction) / d;
  return constants.carbon_dipolar_prefactor_hz_nm3() * (3.0 * c * c - 1.0) / (d * d * d);
}

MeanSd carbon_second_moment(const SpinLattice& lattice) {
  const auto pass = carbon_pair_pass(lattice);
  return mean_sd(pass.rss_coupling_hz);
}

Estimate carbon_second_moment(const LatticeConfig& config) {
  config.validate();
  const auto v = map_realizations(config.realizations, config.threads, [&](std::size_t i) {
    return carbon_second_moment(build_lattice(config, i)).mean;
  });
  return make_estimate(v, config);
}

MeanSd nearest_neighbor_distance(const SpinLattice& lattice) {
  const auto pass = carbon_pair_pass(lattice);
  return mean_sd(pass.nn_distance_nm);
}

double coupling_derived_distance(double mean_coupling_hz, const PhysicalConstants& constants) {
  if (!(mean_coupling_hz > 0.0)) throw DomainError("mean coupling must be positive");
  return std::cbrt(constants.carbon_dipolar_prefactor_hz_nm3() / (2.0 * mean_coupling_hz));
}

NearestNeighborEstimate nearest_neighbor_distance(const LatticeConfig& config) {
  config.validate();
  const auto n = static_cast<std::size_t>(config.realizations);
  std::vector<PairPass> passes(n);
  map_realizations(config.realizations, config.threads, [&](std::size_t i) {
    passes[i] = carbon_pair_pass(build_lattice(config, i));
    return 0.0;
  });
  // Lattice estimate pools the NN distances of every spin of every realization.
  std::vector<double> pooled;
  std::vector<double> coupling(n), derived(n);
  for (std::size_t i = 0; i < n; ++i) {
    pooled.insert(pooled.end(), passes[i].nn_distance_nm.begin(), passes[i].nn_distance_nm.end());
    coupling[i] = mean_sd(passes[i].rss_coupling_hz).mean;
    derived[i] = coupling_derived_distance(coupling[i], config.constants);
  }
  NearestNeighborEstimate out;
  const MeanSd p = mean_sd(pooled);
  out.lattice_nm = {p.mean, p.sd, config.realizations, config.seed, config.lattice_size_nm};
  out.coupling_derived_nm = make_estimate(derived, config);
  out.mean_coupling_hz = make_estimate(coupling, config);
  return out;
}

NvHyperfine nv_hyperfine_and_direct_fraction(const SpinLattice& lattice, double threshold_khz,
                                             const Vec3& nv_axis) {
  if (!(threshold_khz > 0.0)) throw DomainError("threshold must be positive");
  require_unit(nv_axis, "nv_axis");
  const Vec3 e = central_electron_of(lattice);
  const double k = lattice.config.constants.hyperfine_prefactor_khz_nm3;
  NvHyperfine out;
  out.carbons = lattice.carbon_positions.size();
  if (out.carbons == 0) return out;
  double sum = 0.0;
  for (const auto& p : lattice.carbon_positions) {
    const Vec3 d = p - e;
    const double r = d.norm();
    const double c = d.dot(nv_axis) / r;
    // (3c^2 - 1)^2 + 9c^2(1 - c^2) = 1 + 3c^2 for the full dipolar tensor row.
    const double a = k * std::sqrt(1.0 + 3.0 * c * c) / (r * r * r);
    sum += a * a;
    if (a > threshold_khz) ++out.direct_count;
  }
  const double n = static_cast<double>(out.carbons);
  out.rms_khz = std::sqrt(sum / n);
  out.direct_fraction = static_cast<double>(out.direct_count) / n;
  return out;
}

NvHyperfineEstimate nv_hyperfine_and_direct_fraction(const LatticeConfig& config,
                                                     double threshold_khz, const Vec3& nv_axis) {
  LatticeConfig cfg = config;
  cfg.central_electron = true;
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.realizations);
  std::vector<NvHyperfine> r(n);
  map_realizations(cfg.realizations, cfg.threads, [&](std::size_t i) {
    r[i] = nv_hyperfine_and_direct_fraction(build_lattice(cfg, i), threshold_khz, nv_axis);
    return 0.0;
  });
  std::vector<double> rms(n), count(n), frac(n);
  for (std::size_t i = 0; i < n; ++i) {
    rms[i] = r[i].rms_khz;
    count[i] = static_cast<double>(r[i].direct_count);
    frac[i] = r[i].direct_fraction;
  }
  return {make_estimate(rms, cfg), make_estimate(count, cfg), make_estimate(frac, cfg)};
}

DiffusionEstimate spin_diffusion(double r_n_nm, double d_cc_hz, double t1_s) {
  if (!(r_n_nm > 0.0) || !(d_cc_hz > 0.0)) {
    throw DomainError("r_n and d_CC must be positive");
  }
  if (!(t1_s >= 0.0)) throw DomainError("T1 must be non-negative");
  DiffusionEstimate out;
  out.r_n_used_nm = r_n_nm;
  out.t2n_used_s = 1.0 / d_cc_hz;
  out.diffusion_constant_nm2_per_s = r_n_nm * r_n_nm / (30.0 * out.t2n_used_s);
  out.diffusion_length_nm = std::sqrt(2.0 * out.diffusion_constant_nm2_per_s * t1_s);
  return out;
}

ConvergenceSeries convergence_sweep(const LatticeConfig& config, const LatticeEstimator& estimator,
                                    std::span<const double> sizes_nm) {
  for (std::size_t i = 1; i < sizes_nm.size(); ++i) {
    if (!(sizes_nm[i] > sizes_nm[i - 1])) throw DomainError("lattice-size grid must be increasing");
  }
  ConvergenceSeries out;
  out.sizes_nm.assign(sizes_nm.begin(), sizes_nm.end());
  for (double l : sizes_nm) {
    LatticeConfig c = config;
    c.lattice_size_nm = l;
    out.estimates.push_back(estimator(c));
  }
  for (std::size_t i = 1; i < out.estimates.size(); ++i) {
    out.residuals.push_back(std::abs(out.estimates[i] - out.estimates[i - 1]));
  }
  return out;
}

std::vector<double> map_realizations(int n, unsigned threads,
                                     const std::function<double(std::size_t)>& fn) {
  if (n < 0) throw ValidationError("negative realization count");
  const auto count = static_cast<std::size_t>(n);
  std::vector<double> out(count);
  std::vector<std::exception_ptr> errors(count);
  unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  // Lowest failing realization wins so the reported error is deterministic.
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

MeanSd mean_sd(std::span<const double> values) {
  MeanSd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

}  // namespace t1noise::lattice
