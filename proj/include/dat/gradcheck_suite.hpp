#pragma once

// Finite-difference checks over every differentiable building block and the
// full model at toy scale, all in double precision.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dat/config.hpp"
#include "dat/grad_check.hpp"

namespace dat {

/// d = 8, two heads, window of 4 frames (core 2, context 1), small feature
/// widths, dropout off.
ModelConfig toy_model_config();

struct GradCheckEntry {
  std::string name;
  GradCheckResult result;
  double seconds = 0.0;
};

struct GradCheckSuiteResult {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  bool passed = true;
};

GradCheckSuiteResult run_gradcheck_suite(std::uint64_t seed, double tolerance = 1e-4, std::ostream* log = nullptr);

/// Full-model check only (both roles). Dropout is forced off. `samples` > 0
/// probes that many random coordinates instead of every parameter.
GradCheckEntry gradcheck_full_model(const ModelConfig& cfg, std::uint64_t seed, double tolerance = 1e-4,
                                    Index samples = 0);

}  // namespace dat
