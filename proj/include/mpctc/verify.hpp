#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace mpctc {

// One verified property: an exhaustive oracle, an equivalence bound or a
// finite-difference suite, with the observed worst case and its tolerance.
struct PropertyResult {
  std::string name;
  bool pass = false;
  double observed = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyReport {
  std::vector<PropertyResult> properties;

  bool all_pass() const;
  nlohmann::json to_json() const;
};

// Runs every derived-value oracle shipped with the library: alignment
// enumeration against the lattice losses, path counting, gradient suites,
// masking algebra and kernel parity. Deterministic given the seed.
VerifyReport verify_oracles(uint64_t seed = 20240101);

}  // namespace mpctc
