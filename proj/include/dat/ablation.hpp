#pragma once

// Module ablation: the four on/off arms of modality-group fusion (MGF) and the
// dialogue-aware encoder (DAE), plus a depth-matched pair that compares an
// MGF model without DAE at encoder depth 2 against the DAE model at depth 1.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dat/config.hpp"
#include "dat/data_io.hpp"

namespace dat {

struct AblationArm {
  std::string name;
  ModelConfig model;
  std::string same_as;  // non-empty: identical config to that arm, result reused
};

/// baseline, +DAE, +MGF, +MGF+DAE, nodae-depth2, dae-depth1, +MGF+DAE-nopos.
std::vector<AblationArm> ablation_arms(const ModelConfig& base);

struct AblationRow {
  std::string arm;
  Index params = 0;
  double val_ccc = 0.0;
  std::uint64_t seed = 0;
};

struct AblationOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::filesystem::path out_dir;  // per-run histories when set
  std::ostream* log = nullptr;
};

/// Trains every arm for every seed (model init and data order both follow the
/// seed) and records the best validation CCC of the EMA weights.
std::vector<AblationRow> run_ablation(const RunConfig& cfg, const std::vector<SessionRecord>& train_sessions,
                                      const std::vector<SessionRecord>& val_sessions, const AblationOptions& options);

/// Header `arm,params,val_ccc,seed`.
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct ArmSummary {
  std::string arm;
  Index params = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single seed
  Index runs = 0;
};

std::vector<ArmSummary> summarize(const std::vector<AblationRow>& rows);
/// Header `arm,params,mean_val_ccc,sd_val_ccc,runs`.
std::string summary_csv(const std::vector<ArmSummary>& summary);

}  // namespace dat
