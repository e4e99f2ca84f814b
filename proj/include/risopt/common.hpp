// SPDX-License-Identifier: Apache-2.0
//
// Shared scalar/matrix aliases, unit conversions and the seeded random
// stream used across the toolkit.

#ifndef RISOPT_COMMON_HPP
#define RISOPT_COMMON_HPP

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <stdexcept>
#include <string>

namespace risopt {

using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w / 1e-3); }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

/// Reduce an angle to [0, 2*pi).
inline double wrap_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return r;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Vec2& a, const Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// Deterministic random stream. Gaussian draws use Box-Muller over the raw
/// 64-bit stream so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // splitmix-style warmup so nearby seeds decorrelate
    next_u64();
    next_u64();
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal.
  double gaussian() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  /// Circularly symmetric complex Gaussian, unit variance (E|z|^2 = 1).
  Complex cgaussian() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-std::log(u1));
    return std::polar(r, kTwoPi * u2);
  }

  CMat cgaussian_matrix(Eigen::Index rows, Eigen::Index cols) {
    CMat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = cgaussian();
    return m;
  }

 private:
  std::uint64_t state_;
};

/// Stable seed derivation: adding sweep points or samples never perturbs
/// the seeds of existing ones.
inline std::uint64_t derive_seed(std::uint64_t master, double sweep_value,
                                 std::uint64_t sample_index) {
  auto mix = [](std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(sweep_value));
  std::memcpy(&bits, &sweep_value, sizeof(bits));
  return mix(mix(master ^ 0x8f1bbcdcbfa53e0bULL) ^ mix(bits) ^ mix(sample_index + 0x2545f4914f6cdd1dULL));
}

}  // namespace risopt

#endif  // RISOPT_COMMON_HPP
