#pragma once

#include <string>
#include <vector>

namespace t1noise {

// Signal (enhancement) versus time at one relaxation field. An empty sigma
// means unweighted.
struct DecayCurve {
  double field_t = 0.0;
  std::vector<double> times_s;
  std::vector<double> signals;
  std::vector<double> sigma;

  void validate() const;
  std::size_t size() const { return times_s.size(); }
};

enum class Provenance { full_curve, accelerated };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

// R1 versus field. rate_errors may be empty (unweighted); provenance may be
// empty (all full_curve).
struct RelaxometryProfile {
  std::vector<double> fields_t;
  std::vector<double> rates_per_s;
  std::vector<double> rate_errors;
  std::vector<Provenance> provenance;

  void validate() const;
  std::size_t size() const { return fields_t.size(); }
};

// First-derivative spectrum on a strictly increasing field axis.
struct EprSpectrum {
  std::vector<double> field_g;
  std::vector<double> signal;
  double modulation_amplitude_g = 0.0;  // informational
  int sweeps = 1;                       // informational

  void validate() const;
  std::size_t size() const { return field_g.size(); }
};

}  // namespace t1noise
