#pragma once

#include <string>

#include "mpctc/autodiff.hpp"

namespace mpctc {

// Checkpoint file: JSON mapping parameter name -> shape + row-major entries,
// with a format-version header. Doubles round-trip exactly.

void save_parameters(const ParameterSet& params, const std::string& path);

// Loads entries into an already-constructed parameter set; shapes must match.
void load_parameters(ParameterSet& params, const std::string& path);

// Full optimizer snapshot for bitwise resume: parameters, velocity buffers,
// generator state and step counter.
struct TrainSnapshot {
  int step = 0;
  std::string rng_state;
  SgdState optimizer;
};

void save_snapshot(const ParameterSet& params, const TrainSnapshot& snap,
                   const std::string& path);
TrainSnapshot load_snapshot(ParameterSet& params, const std::string& path);

}  // namespace mpctc
