#pragma once

#include <array>

namespace t1noise::relax {

// R(B) = C1 [1 + (2^(q-1) - 1)(B/C2)^2]^(-1/(q-1)) + C3.
// C2 is the half width at half maximum for every q; q = 2 is a Lorentzian and
// q -> 1 the Gaussian C1 exp(-ln2 (B/C2)^2).
struct TsallianParams {
  double c1 = 1.0;  // 1/s
  double c2 = 0.1;  // T
  double c3 = 0.0;  // 1/s
  double q = 1.5;
};

enum class QMode {
  strict,          // q must lie in (1, 2]
  gaussian_limit,  // q = 1 is accepted and evaluated as the Gaussian limit
};

void validate(const TsallianParams& p, QMode mode = QMode::strict);

// Value (order 0) or d^k R/dB^k for k = 1, 2. Even in B.
double tsallian_eval(const TsallianParams& p, double field_t, int derivative_order = 0,
                     QMode mode = QMode::strict);

// Gradient of R(B) with respect to (c1, c2, c3, q).
std::array<double, 4> tsallian_param_gradient(const TsallianParams& p, double field_t,
                                              QMode mode = QMode::strict);

// Shape part g(B) in [0, 1] with g(0) = 1, shared by the evaluators above.
double tsallian_shape(double x, double q);

// Sum of a narrow and a broad component with one shared offset. The c3 fields
// of the components are ignored.
struct TsallianProfile {
  TsallianParams narrow;
  TsallianParams broad;
  double offset = 0.0;

  static constexpr int kParameterCount = 7;
  // Parameter order: narrow c1, c2, q; broad c1, c2, q; offset.
  std::array<double, kParameterCount> to_vector() const;
  static TsallianProfile from_vector(const std::array<double, kParameterCount>& v);

  double rate(double field_t, int derivative_order = 0) const;
  std::array<double, kParameterCount> gradient(double field_t) const;
  // Swaps components so that narrow.c2 <= broad.c2.
  TsallianProfile canonical() const;
};

}  // namespace t1noise::relax
