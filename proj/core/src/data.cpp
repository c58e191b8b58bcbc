#include "t1noise/data.hpp"

#include <cmath>

#include "t1noise/errors.hpp"

namespace t1noise {

namespace {

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

void DecayCurve::validate() const {
  if (signals.size() != times_s.size()) throw ValidationError("decay curve: length mismatch");
  if (!sigma.empty() && sigma.size() != times_s.size()) {
    throw ValidationError("decay curve: sigma length mismatch");
  }
  if (!all_finite(times_s) || !all_finite(signals)) {
    throw ValidationError("decay curve: non-finite values");
  }
  for (std::size_t i = 0; i < times_s.size(); ++i) {
    if (times_s[i] < 0.0) throw ValidationError("decay curve: negative time");
    if (i > 0 && !(times_s[i] > times_s[i - 1])) {
      throw ValidationError("decay curve: times must be strictly increasing");
    }
  }
  for (double s : sigma) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("decay curve: sigma must be > 0");
  }
}

std::string to_string(Provenance p) {
  return p == Provenance::full_curve ? "full_curve" : "accelerated";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "full_curve") return Provenance::full_curve;
  if (s == "accelerated") return Provenance::accelerated;
  throw ValidationError("unknown provenance '" + s + "'");
}

void RelaxometryProfile::validate() const {
  const std::size_t n = fields_t.size();
  if (rates_per_s.size() != n) throw ValidationError("profile: length mismatch");
  if (!rate_errors.empty() && rate_errors.size() != n) {
    throw ValidationError("profile: error length mismatch");
  }
  if (!provenance.empty() && provenance.size() != n) {
    throw ValidationError("profile: provenance length mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(fields_t[i] > 0.0) || !std::isfinite(fields_t[i])) {
      throw ValidationError("profile: fields must be positive");
    }
    if (i > 0 && !(fields_t[i] > fields_t[i - 1])) {
      throw ValidationError("profile: fields must be strictly increasing");
    }
    if (!(rates_per_s[i] > 0.0) || !std::isfinite(rates_per_s[i])) {
      throw ValidationError("profile: rates must be positive");
    }
  }
  for (double e : rate_errors) {
    if (!(e >= 0.0) || !std::isfinite(e)) throw ValidationError("profile: errors must be >= 0");
  }
}

void EprSpectrum::validate() const {
  if (signal.size() != field_g.size()) throw ValidationError("spectrum: length mismatch");
  if (field_g.size() < 3) throw ValidationError("spectrum: need at least 3 points");
  if (!all_finite(field_g) || !all_finite(signal)) {
    throw ValidationError("spectrum: non-finite values");
  }
  for (std::size_t i = 1; i < field_g.size(); ++i) {
    if (!(field_g[i] > field_g[i - 1])) {
      throw ValidationError("spectrum: field axis must be strictly increasing");
    }
  }
}

}  // namespace t1noise
