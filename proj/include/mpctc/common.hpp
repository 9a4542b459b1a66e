#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace mpctc {

// Seeded generator injected into every stochastic operation; callers own one
// generator per worker.
using Rng = std::mt19937_64;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Precondition or invariant violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// Operand dimensions do not match an operation's requirements.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration value (weight out of range, missing field, ...).
struct ConfigError : Error {
  using Error::Error;
};

// An exhaustive test oracle was asked to enumerate beyond its guard.
struct OracleTooLargeError : Error {
  using Error::Error;
};

// Operation requested on a model that lacks the required component.
struct CapabilityError : Error {
  using Error::Error;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)), with -inf absorbing.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = a > b ? a : b;
  double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace mpctc
