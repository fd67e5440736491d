#include "dat/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "dat/training.hpp"

namespace dat {

std::vector<AblationArm> ablation_arms(const ModelConfig& base) {
  auto arm = [&](std::string name, bool mgf, bool dae, Index depth, std::string same_as = {}) {
    ModelConfig m = base;
    m.variant = ModelVariant::dat;
    m.use_mgf = mgf;
    m.use_dae = dae;
    m.encoder_depth = depth;
    return AblationArm{std::move(name), m, std::move(same_as)};
  };
  AblationArm no_positional = arm("+MGF+DAE-nopos", true, true, 1);
  no_positional.model.use_positional = false;
  return {arm("baseline", false, false, 1),       arm("+DAE", false, true, 1),
          arm("+MGF", true, false, 1),            arm("+MGF+DAE", true, true, 1),
          arm("nodae-depth2", true, false, 2),    arm("dae-depth1", true, true, 1, "+MGF+DAE"),
          no_positional};
}

std::vector<AblationRow> run_ablation(const RunConfig& cfg, const std::vector<SessionRecord>& train_sessions,
                                      const std::vector<SessionRecord>& val_sessions, const AblationOptions& options) {
  if (val_sessions.empty()) throw UsageError("ablation needs validation sessions");
  if (options.seeds.empty()) throw UsageError("ablation needs at least one seed");
  const auto arms = ablation_arms(cfg.model);
  std::vector<AblationRow> rows;
  for (const std::uint64_t seed : options.seeds) {
    std::vector<AblationRow> seed_rows;
    for (const auto& arm : arms) {
      AblationRow row{arm.name, param_count(arm.model), 0.0, seed};
      if (!arm.same_as.empty()) {
        for (const auto& r : seed_rows)
          if (r.arm == arm.same_as) row.val_ccc = r.val_ccc;
        seed_rows.push_back(row);
        continue;
      }
      ModelConfig model_cfg = arm.model;
      model_cfg.init_seed = seed;
      TrainConfig train_cfg = cfg.train;
      train_cfg.seed = seed;
      if (options.log) *options.log << "ablate: arm " << arm.name << " seed " << seed << " params " << row.params << '\n';
      DatModel<TrainScalar> model(model_cfg);
      TrainOptions topts;
      if (!options.out_dir.empty()) topts.out_dir = options.out_dir / (arm.name + "_seed" + std::to_string(seed));
      const TrainResult result = train(model, train_sessions, val_sessions, train_cfg, topts);
      row.val_ccc = result.best_val_ccc;
      if (options.log) {
        *options.log << "ablate: arm " << arm.name << " seed " << seed << " best val_ccc " << row.val_ccc
                     << " (epoch " << result.best_epoch << ")\n";
      }
      seed_rows.push_back(row);
    }
    rows.insert(rows.end(), seed_rows.begin(), seed_rows.end());
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "arm,params,val_ccc,seed\n";
  for (const auto& r : rows) os << r.arm << ',' << r.params << ',' << r.val_ccc << ',' << r.seed << '\n';
  return os.str();
}

std::vector<ArmSummary> summarize(const std::vector<AblationRow>& rows) {
  std::vector<ArmSummary> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const ArmSummary& s) { return s.arm == r.arm; });
    if (it == out.end()) {
      out.push_back({r.arm, r.params, 0.0, 0.0, 0});
      it = out.end() - 1;
    }
    it->mean += r.val_ccc;
    ++it->runs;
  }
  for (auto& s : out) {
    s.mean /= static_cast<double>(s.runs);
    double sq = 0.0;
    for (const auto& r : rows)
      if (r.arm == s.arm) sq += (r.val_ccc - s.mean) * (r.val_ccc - s.mean);
    s.sd = s.runs > 1 ? std::sqrt(sq / static_cast<double>(s.runs - 1)) : 0.0;
  }
  return out;
}

std::string summary_csv(const std::vector<ArmSummary>& summary) {
  std::ostringstream os;
  os.precision(10);
  os << "arm,params,mean_val_ccc,sd_val_ccc,runs\n";
  for (const auto& s : summary) os << s.arm << ',' << s.params << ',' << s.mean << ',' << s.sd << ',' << s.runs << '\n';
  return os.str();
}

}  // namespace dat
