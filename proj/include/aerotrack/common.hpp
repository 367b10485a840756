#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace aerotrack {

using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;
using Rng = std::mt19937_64;

/// Base of every error thrown by the library. `code()` is a stable short
/// identifier usable from the CLI and tests.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(code + ": " + what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define AEROTRACK_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(#Name, what) {}    \
  };

AEROTRACK_DEFINE_ERROR(InvalidSpec)
AEROTRACK_DEFINE_ERROR(SeedOccupied)
AEROTRACK_DEFINE_ERROR(FitDiverged)
AEROTRACK_DEFINE_ERROR(IndexOutOfRange)
AEROTRACK_DEFINE_ERROR(InsufficientData)
AEROTRACK_DEFINE_ERROR(QPInfeasible)
AEROTRACK_DEFINE_ERROR(OutOfDomain)
AEROTRACK_DEFINE_ERROR(StartOccupied)
AEROTRACK_DEFINE_ERROR(NoPath)
AEROTRACK_DEFINE_ERROR(CorridorFailed)
AEROTRACK_DEFINE_ERROR(SingularSystem)
AEROTRACK_DEFINE_ERROR(BarrierDomainViolated)
AEROTRACK_DEFINE_ERROR(InvalidScenario)

#undef AEROTRACK_DEFINE_ERROR

inline double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace aerotrack
