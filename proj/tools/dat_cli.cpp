// dat: synthetic data, training, evaluation, prediction, gradient checks and
// ablations for the dialogue-aware engagement model.
//
// Exit codes: 0 ok, 1 usage, 2 data/format, 3 numerical.
// Errors go to stderr as "error[usage|data|numerical]: message".

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dat/ablation.hpp"
#include "dat/gradcheck_suite.hpp"
#include "dat/training.hpp"

namespace fs = std::filesystem;
using namespace dat;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct RunFlags {
  std::string preset = "desk";
  std::string config_file;
  std::vector<std::string> settings;
  std::int64_t seed = -1;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--preset", f.preset, "paper-noxi | paper-mpiigi | desk")->capture_default_str();
  cmd->add_option("--config", f.config_file, "key = value file applied after the preset");
  cmd->add_option("--set", f.settings, "key=value override, repeatable; applied last");
  cmd->add_option("--seed", f.seed, "training and init seed (overrides config)");
}

// preset <- feature dims from data <- config file <- --set <- --seed
RunConfig resolve(const RunFlags& f, const std::vector<SessionRecord>& data) {
  RunConfig cfg = preset(f.preset);
  if (!data.empty()) cfg.model.feature_dims = data.front().feature_dims;
  if (!f.config_file.empty()) apply_config_file(cfg, f.config_file);
  for (const auto& kv : f.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed >= 0) {
    cfg.train.seed = static_cast<std::uint64_t>(f.seed);
    cfg.model.init_seed = static_cast<std::uint64_t>(f.seed);
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

void check_dims(const ModelConfig& cfg, const std::vector<SessionRecord>& sessions) {
  for (const auto& s : sessions) {
    if (s.feature_dims != cfg.feature_dims) {
      std::ostringstream os;
      os << "session " << s.id << " feature dims differ from the model (";
      for (std::size_t i = 0; i < kStreamCount; ++i) {
        os << (i ? ", " : "") << kStreamKeys[i] << " " << s.feature_dims[i] << " vs " << cfg.feature_dims[i];
      }
      os << ")";
      throw FormatError(os.str());
    }
  }
}

void print_resolved(const RunConfig& cfg) {
  std::cout << "# resolved config\n" << to_key_values(cfg) << "# seed " << cfg.train.seed << '\n' << std::flush;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

int cmd_synth(const fs::path& out, SynthConfig sc, Index first, const std::string& dims) {
  if (!dims.empty()) {
    std::stringstream ss(dims);
    std::string item;
    std::size_t i = 0;
    while (std::getline(ss, item, ',')) {
      if (i >= kStreamCount) throw UsageError("--dims takes five comma-separated widths");
      try {
        sc.feature_dims[i++] = std::stol(item);
      } catch (const std::exception&) {
        throw UsageError("--dims: cannot parse '" + item + "'");
      }
    }
    if (i != kStreamCount) throw UsageError("--dims takes five comma-separated widths");
  }
  sc.validate();
  std::cout << "# synth config\n"
            << "sessions = " << sc.sessions << "\nframes = " << sc.frames << "\nkappa = " << sc.kappa
            << "\nsigma_latent = " << sc.sigma_latent << "\nsmooth_window = " << sc.smooth_window
            << "\npartner_coupling = " << sc.partner_coupling << "\nsigma_obs = " << sc.sigma_obs
            << "\nquantize_levels = " << sc.quantize_levels << "\nfeature_gain = " << sc.feature_gain << "\ndims = ";
  for (std::size_t i = 0; i < kStreamCount; ++i) std::cout << (i ? "," : "") << sc.feature_dims[i];
  std::cout << "\nfirst = " << first << "\n# seed " << sc.seed << '\n';
  if (first < 0) throw UsageError("--first must be >= 0");
  for (Index i = first; i < first + sc.sessions; ++i) {
    const SessionRecord s = synth_session(sc, i);
    write_session(out / s.id, s);
    std::cout << "wrote " << (out / s.id).string() << " (" << s.frames << " frames)\n";
  }
  return kOk;
}

int cmd_train(const fs::path& data, const fs::path& val, const fs::path& out, const RunFlags& flags) {
  const auto train_sessions = load_sessions(data);
  const std::vector<SessionRecord> val_sessions = val.empty() ? std::vector<SessionRecord>{} : load_sessions(val);
  const RunConfig cfg = resolve(flags, train_sessions);
  check_dims(cfg.model, train_sessions);
  check_dims(cfg.model, val_sessions);
  print_resolved(cfg);
  fs::create_directories(out);
  write_text(out / "config.cfg", to_key_values(cfg));

  DatModel<TrainScalar> model(cfg.model);
  std::cout << "parameters " << model.parameters().count() << '\n';
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(model, train_sessions, val_sessions, cfg.train, {out, &std::cout});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "best val_ccc " << r.best_val_ccc << " at epoch " << r.best_epoch << " (" << secs << " s)\n"
            << "checkpoints " << (out / "best.json").string() << ", " << (out / "last.json").string() << '\n';
  return kOk;
}

WindowPredictor load_predictor(const fs::path& ckpt, std::optional<DatModel<TrainScalar>>& holder,
                               WindowGeometry& geometry) {
  if (checkpoint_kind(ckpt) == "oracle") {
    geometry = WindowGeometry{};
    return label_oracle();
  }
  holder.emplace(load_checkpoint<TrainScalar>(ckpt));
  geometry = holder->config().window;
  return model_predictor(*holder);
}

int cmd_eval(const fs::path& data, const fs::path& ckpt, const fs::path& report, fs::path csv) {
  const auto sessions = load_sessions(data);
  std::optional<DatModel<TrainScalar>> model;
  WindowGeometry geometry;
  const WindowPredictor predictor = load_predictor(ckpt, model, geometry);
  if (model) check_dims(model->config(), sessions);
  std::cout << "# checkpoint " << ckpt.string() << " (" << checkpoint_kind(ckpt) << ")\n";
  if (model) std::cout << "# model config\n" << std::setw(1) << to_json(model->config()) << '\n';
  const EvalReport r = evaluate_sessions(predictor, sessions, geometry, &std::cerr);
  for (const auto& s : r.sessions) {
    std::cout << s.session_id << " ccc " << s.ccc << " mse " << s.mse << (s.degenerate ? " (degenerate)" : "") << '\n';
  }
  std::cout << "mean_ccc " << r.mean_ccc << "\nmean_mse " << r.mean_mse << '\n';
  if (!report.empty()) {
    write_text(report, r.to_json().dump(2) + "\n");
    if (csv.empty()) csv = fs::path(report).replace_extension(".csv");
  }
  if (!csv.empty()) write_text(csv, r.to_csv());
  return kOk;
}

int cmd_predict(const fs::path& session_dir, const fs::path& ckpt, const fs::path& out) {
  const SessionRecord session = load_session(session_dir);
  std::optional<DatModel<TrainScalar>> model;
  WindowGeometry geometry;
  const WindowPredictor predictor = load_predictor(ckpt, model, geometry);
  if (model) check_dims(model->config(), {session});
  const std::vector<double> series = predict_series(predictor, session, geometry);
  std::ostringstream os;
  os.precision(9);
  os << "frame_index,prediction\n";
  for (std::size_t t = 0; t < series.size(); ++t) os << t << ',' << series[t] << '\n';
  write_text(out, os.str());
  std::cout << "wrote " << series.size() << " predictions to " << out.string() << '\n';
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance, const std::string& preset_name, Index samples) {
  std::cout << "# gradcheck seed " << seed << " tolerance " << tolerance << " (float64, five-point differences)\n";
  const ModelConfig toy = toy_model_config();
  std::cout << "# toy model config\n" << to_key_values(RunConfig{toy, {}});
  GradCheckSuiteResult r = run_gradcheck_suite(seed, tolerance, &std::cout);
  if (!preset_name.empty()) {
    if (samples < 1) throw UsageError("--samples must be >= 1");
    const ModelConfig cfg = preset(preset_name).model;
    std::cout << "# " << preset_name << " model config\n" << to_key_values(RunConfig{cfg, {}});
    const GradCheckEntry e = gradcheck_full_model(cfg, seed, tolerance, samples);
    std::cout << e.name << ": max_rel_err " << e.result.max_rel_err << " (worst " << e.result.worst << ", "
              << e.seconds << " s) " << (e.result.passed ? "ok" : "FAIL") << '\n';
    r.max_rel_err = std::max(r.max_rel_err, e.result.max_rel_err);
    r.passed = r.passed && e.result.passed;
  }
  std::cout << "max rel err " << r.max_rel_err << '\n';
  if (!r.passed) {
    std::cerr << "error[numerical]: gradient check breach, max rel err " << r.max_rel_err << " >= " << tolerance
              << '\n';
    return kNumerical;
  }
  return kOk;
}

int cmd_ablate(const fs::path& data, const fs::path& val, const fs::path& out, const RunFlags& flags,
               std::vector<std::uint64_t> seeds) {
  const auto train_sessions = load_sessions(data);
  const auto val_sessions = load_sessions(val);
  const RunConfig cfg = resolve(flags, train_sessions);
  check_dims(cfg.model, train_sessions);
  check_dims(cfg.model, val_sessions);
  print_resolved(cfg);
  std::cout << "# seeds";
  for (auto s : seeds) std::cout << ' ' << s;
  std::cout << '\n';
  fs::create_directories(out);
  write_text(out / "config.cfg", to_key_values(cfg));
  const auto rows = run_ablation(cfg, train_sessions, val_sessions, {seeds, out / "runs", &std::cout});
  const auto summary = summarize(rows);
  write_text(out / "ablation.csv", ablation_csv(rows));
  write_text(out / "summary.csv", summary_csv(summary));
  std::cout << '\n' << std::left << std::setw(14) << "arm" << std::setw(12) << "params" << "val_ccc (mean ± sd)\n";
  for (const auto& s : summary) {
    std::cout << std::setw(14) << s.arm << std::setw(12) << s.params << std::fixed << std::setprecision(4) << s.mean
              << " ± " << s.sd << std::defaultfloat << '\n';
  }
  std::cout << "wrote " << (out / "ablation.csv").string() << " and " << (out / "summary.csv").string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dialogue-aware transformer for frame-level engagement estimation"};
  app.require_subcommand(1);

  SynthConfig sc;
  fs::path synth_out;
  std::string synth_dims;
  Index synth_first = 0;
  auto* synth = app.add_subcommand("synth", "write synthetic dyadic sessions");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--sessions", sc.sessions)->capture_default_str();
  synth->add_option("--frames", sc.frames)->capture_default_str();
  synth->add_option("--seed", sc.seed, "generator seed; sessions sharing it share feature loadings")->capture_default_str();
  synth->add_option("--first", synth_first, "index of the first session (held-out sets: same seed, later index)")
      ->capture_default_str();
  synth->add_option("--quantize-levels", sc.quantize_levels, "0 = continuous labels")->capture_default_str();
  synth->add_option("--partner-coupling", sc.partner_coupling)->capture_default_str();
  synth->add_option("--sigma-obs", sc.sigma_obs)->capture_default_str();
  synth->add_option("--dims", synth_dims, "E,W,C,OF,OP feature widths");

  fs::path data, val, out, ckpt, report, csv, session_dir;
  RunFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--data", data, "training session directory")->required();
  train_cmd->add_option("--val", val, "validation session directory");
  train_cmd->add_option("--out", out, "run directory")->required();
  add_run_flags(train_cmd, train_flags);

  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on labelled sessions");
  eval_cmd->add_option("--data", data)->required();
  eval_cmd->add_option("--ckpt", ckpt)->required();
  eval_cmd->add_option("--report", report, "JSON report path (a CSV is written next to it)");
  eval_cmd->add_option("--csv", csv, "CSV report path");

  auto* predict_cmd = app.add_subcommand("predict", "per-frame predictions for one session");
  predict_cmd->add_option("--session", session_dir)->required();
  predict_cmd->add_option("--ckpt", ckpt)->required();
  predict_cmd->add_option("--out", out, "CSV path")->required();

  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-4;
  std::string gc_preset;
  Index gc_samples = 200;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc_cmd->add_option("--preset", gc_preset, "also check this preset's full model on sampled coordinates");
  gc_cmd->add_option("--samples", gc_samples, "coordinates probed for --preset")->capture_default_str();
  gc_cmd->add_option("--seed", gc_seed)->capture_default_str();
  gc_cmd->add_option("--tolerance", gc_tol)->capture_default_str();

  RunFlags ablate_flags;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  auto* ablate_cmd = app.add_subcommand("ablate", "train the MGF/DAE ablation arms");
  ablate_cmd->add_option("--data", data)->required();
  ablate_cmd->add_option("--val", val)->required();
  ablate_cmd->add_option("--out", out)->required();
  ablate_cmd->add_option("--seeds", seeds, "seed list")->delimiter(',')->capture_default_str();
  add_run_flags(ablate_cmd, ablate_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_out, sc, synth_first, synth_dims);
    if (*train_cmd) return cmd_train(data, val, out, train_flags);
    if (*eval_cmd) return cmd_eval(data, ckpt, report, csv);
    if (*predict_cmd) return cmd_predict(session_dir, ckpt, out);
    if (*gc_cmd) return cmd_gradcheck(gc_seed, gc_tol, gc_preset, gc_samples);
    if (*ablate_cmd) {
      if (seeds.empty()) throw UsageError("--seeds needs at least one seed");
      return cmd_ablate(data, val, out, ablate_flags, seeds);
    }
  } catch (const UsageError& e) {
    std::cerr << "error[usage]: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "error[numerical]: " << e.what() << '\n';
    return kNumerical;
  } catch (const FormatError& e) {
    std::cerr << "error[data]: " << e.what() << '\n';
    return kData;
  } catch (const DimensionError& e) {
    std::cerr << "error[data]: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error[data]: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error[data]: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
