#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace lanmdp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Pseudo-random stream threaded explicitly through every stochastic operation.
using Rng = std::mt19937_64;

/// Raised when a numerical quantity (gradient, parameter, weight) becomes non-finite
/// or otherwise unusable. Carries a human-readable location in what().
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a loaded or user-supplied object violates a structural invariant
/// (shape mismatch in a file, probability rows not summing to one, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SplitMix64 finalizer; used to derive independent child seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace lanmdp
