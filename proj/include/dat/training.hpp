#pragma once

// Adam, EMA shadow weights and the segment-level training loop.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dat/checkpoint.hpp"
#include "dat/losses.hpp"
#include "dat/windows.hpp"

namespace dat {

/// Scalar type used for training and inference by the CLI and ablations.
#ifdef DAT_TRAIN_DOUBLE
using TrainScalar = double;
#else
using TrainScalar = float;
#endif

struct AdamHyper {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

inline AdamHyper adam_hyper(const TrainConfig& cfg) {
  return {cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};
}

/// Learning rate for 0-based `step` out of `total_steps`.
inline double scheduled_lr(const TrainConfig& cfg, Index step, Index total_steps) {
  if (cfg.lr_schedule == LrSchedule::constant || total_steps <= 1) return cfg.lr;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * cfg.lr * (1.0 + std::cos(3.141592653589793 * progress));
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(ParameterStore<Scalar>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params.entries())
    if (p.tensor.has_grad()) sq += static_cast<double>(p.tensor.grad().squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto factor = static_cast<Scalar>(max_norm / norm);
    for (auto& p : params.entries())
      if (p.tensor.has_grad()) p.tensor.mutable_grad() *= factor;
  }
  return norm;
}

template <typename Scalar>
struct AdamState {
  std::vector<Vector<Scalar>> first;
  std::vector<Vector<Scalar>> second;
  Index step = 0;

  explicit AdamState(const ParameterStore<Scalar>& params) {
    for (const auto& p : params.entries()) {
      first.push_back(Vector<Scalar>::Zero(p.tensor.size()));
      second.push_back(Vector<Scalar>::Zero(p.tensor.size()));
    }
  }
};

/// One bias-corrected Adam update from the accumulated gradients. Parameters
/// that never received a gradient are treated as having a zero gradient.
/// Throws NumericalError naming the first parameter with a non-finite
/// gradient; nothing is updated in that case.
template <typename Scalar>
void adam_step(ParameterStore<Scalar>& params, AdamState<Scalar>& state, const AdamHyper& hyper) {
  auto& entries = params.entries();
  if (state.first.size() != entries.size()) throw std::logic_error("Adam state does not match parameters");
  for (const auto& p : entries) {
    if (p.tensor.has_grad() && !p.tensor.grad().allFinite()) {
      throw NumericalError("non-finite gradient in parameter " + p.name);
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(hyper.beta1);
  const auto b2 = static_cast<Scalar>(hyper.beta2);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& t = entries[i].tensor;
    auto& m = state.first[i];
    auto& v = state.second[i];
    if (t.has_grad()) {
      const auto& g = t.grad();
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    } else {
      m *= b1;
      v *= b2;
    }
    const auto step_size = static_cast<Scalar>(hyper.lr / bc1);
    const auto root_bc2 = static_cast<Scalar>(std::sqrt(bc2));
    if (hyper.weight_decay > 0.0) t.mutable_value() *= static_cast<Scalar>(1.0 - hyper.lr * hyper.weight_decay);
    t.mutable_value().array() -=
        step_size * m.array() / ((v.array().sqrt() / root_bc2) + static_cast<Scalar>(hyper.eps));
  }
}

/// Shadow weights: shadow <- decay·shadow + (1 - decay)·θ.
template <typename Scalar>
class Ema {
 public:
  Ema(const ParameterStore<Scalar>& params, double decay) : decay_(decay) {
    if (!(decay >= 0.0 && decay < 1.0)) throw UsageError("EMA decay must be in [0, 1)");
    for (const auto& p : params.entries()) shadow_.push_back(p.tensor.value());
  }

  void update(const ParameterStore<Scalar>& params) {
    check(params);
    const auto d = static_cast<Scalar>(decay_);
    for (std::size_t i = 0; i < shadow_.size(); ++i) {
      shadow_[i] = d * shadow_[i] + (Scalar(1) - d) * params.entries()[i].tensor.value();
    }
  }

  /// Exchanges θ and the shadow in place; calling twice restores both.
  void swap(ParameterStore<Scalar>& params) {
    check(params);
    for (std::size_t i = 0; i < shadow_.size(); ++i) shadow_[i].swap(params.entries()[i].tensor.mutable_value());
  }

  double decay() const { return decay_; }
  const std::vector<Vector<Scalar>>& shadow() const { return shadow_; }

 private:
  void check(const ParameterStore<Scalar>& params) const {
    if (params.entries().size() != shadow_.size()) throw DimensionError("EMA shadow does not match parameters");
    for (std::size_t i = 0; i < shadow_.size(); ++i) {
      if (params.entries()[i].tensor.size() != shadow_[i].size()) {
        throw DimensionError("EMA shadow shape drift at " + params.entries()[i].name);
      }
    }
  }

  double decay_;
  std::vector<Vector<Scalar>> shadow_;
};

/// Swaps the EMA weights in for the scope's lifetime.
template <typename Scalar>
class EmaSwap {
 public:
  EmaSwap(ParameterStore<Scalar>& params, Ema<Scalar>& ema) : params_(params), ema_(ema) { ema_.swap(params_); }
  ~EmaSwap() { ema_.swap(params_); }
  EmaSwap(const EmaSwap&) = delete;
  EmaSwap& operator=(const EmaSwap&) = delete;

 private:
  ParameterStore<Scalar>& params_;
  Ema<Scalar>& ema_;
};

template <typename Scalar>
EvalReport evaluate_model(const DatModel<Scalar>& model, const std::vector<SessionRecord>& sessions,
                          std::ostream* notices = nullptr) {
  return evaluate_sessions(model_predictor(model), sessions, model.config().window, notices);
}

/// Evaluates with the shadow weights; θ is bitwise unchanged afterwards.
template <typename Scalar>
EvalReport evaluate_with_ema(DatModel<Scalar>& model, Ema<Scalar>& ema, const std::vector<SessionRecord>& sessions,
                             std::ostream* notices = nullptr) {
  EmaSwap<Scalar> swap(model.parameters(), ema);
  return evaluate_model(model, sessions, notices);
}

struct EpochRecord {
  Index epoch = 0;
  double train_loss = 0.0;
  double val_ccc = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

/// Header `epoch,train_loss,val_ccc`; values printed round-trip exact.
inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loss,val_ccc\n";
  for (const auto& r : history) os << r.epoch << ',' << r.train_loss << ',' << r.val_ccc << '\n';
  return os.str();
}

struct TrainResult {
  std::vector<EpochRecord> history;
  double best_val_ccc = -std::numeric_limits<double>::infinity();
  Index best_epoch = 0;
};

/// One window of the training set.
struct WindowRef {
  std::size_t session = 0;
  Segment segment;
};

inline std::vector<WindowRef> enumerate_windows(const std::vector<SessionRecord>& sessions, const WindowGeometry& g) {
  std::vector<WindowRef> out;
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    for (const auto& seg : make_segments(sessions[s].frames, g)) out.push_back({s, seg});
  }
  return out;
}

/// Loss over the concatenated real core frames of a batch of windows, taped
/// on the active tape. With `ccc_per_window` the CCC loss is taken per window
/// (windows with fewer than two core frames skipped) and averaged.
template <typename Scalar>
Tensor<Scalar> batch_loss(const DatModel<Scalar>& model, const std::vector<SessionRecord>& sessions,
                          std::span<const WindowRef> batch, const ForwardContext& ctx, bool ccc_per_window = false) {
  std::vector<Tensor<Scalar>> cores;
  std::vector<Tensor<Scalar>> window_losses;
  std::vector<Scalar> labels;
  for (const auto& w : batch) {
    const SessionRecord& session = sessions[w.session];
    const auto target = extract_window<Scalar>(session, w.segment, Role::target);
    FeatureBundle<Scalar> partner;
    if (model.uses_partner()) partner = extract_window<Scalar>(session, w.segment, Role::partner);
    const Tensor<Scalar> pred = model.forward(target, partner, ctx);
    const std::vector<Index> rows = w.segment.core_rows();
    cores.push_back(gather_rows(pred, rows));
    const Vector<Scalar> window_labels = extract_labels<Scalar>(session, w.segment);
    for (Index r : rows) labels.push_back(window_labels[r]);
    if (ccc_per_window && model.config().loss == LossKind::ccc && rows.size() >= 2) {
      window_losses.push_back(ccc_loss(pred, window_labels, rows));
    }
  }
  if (!window_losses.empty()) {
    Tensor<Scalar> total = window_losses.front();
    for (std::size_t i = 1; i < window_losses.size(); ++i) total = add(total, window_losses[i]);
    return scale(total, Scalar(1) / static_cast<Scalar>(window_losses.size()));
  }
  const Tensor<Scalar> pred = cores.size() == 1 ? cores.front() : concat(std::span<const Tensor<Scalar>>(cores), 0);
  const Vector<Scalar> y = Eigen::Map<const Vector<Scalar>>(labels.data(), static_cast<Index>(labels.size()));
  std::vector<Index> all(labels.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Index>(i);
  return model.config().loss == LossKind::mse ? mse_loss(pred, y, all) : ccc_loss(pred, y, all);
}

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: keep nothing on disk
  std::ostream* log = nullptr;
};

/// Per epoch: seeded shuffle of all windows, batches with dropout, loss on
/// core frames, Adam, EMA; then validation CCC with the EMA weights. Writes
/// best.json / last.json (EMA weights) and history.csv into out_dir.
template <typename Scalar>
TrainResult train(DatModel<Scalar>& model, const std::vector<SessionRecord>& train_sessions,
                  const std::vector<SessionRecord>& val_sessions, const TrainConfig& cfg,
                  const TrainOptions& options = {}) {
  cfg.validate();
  for (const auto& s : train_sessions) {
    if (!s.has_labels()) throw FormatError("training session " + s.id + " has no labels");
  }
  if (train_sessions.empty()) throw FormatError("no training sessions");
  namespace fs = std::filesystem;
  if (!options.out_dir.empty()) fs::create_directories(options.out_dir);

  std::mt19937_64 rng(cfg.seed);
  std::vector<WindowRef> windows = enumerate_windows(train_sessions, model.config().window);
  auto& params = model.parameters();
  AdamState<Scalar> adam(params);
  Ema<Scalar> ema(params, cfg.ema_decay);
  AdamHyper hyper = adam_hyper(cfg);
  const auto batches_per_epoch =
      static_cast<Index>((windows.size() + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size));
  const Index total_steps = batches_per_epoch * cfg.epochs;
  Index step = 0;
  TrainResult result;

  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(windows.begin(), windows.end(), rng);
    double loss_sum = 0.0;
    Index batches = 0;
    for (std::size_t begin = 0; begin < windows.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(windows.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const WindowRef> batch(windows.data() + begin, end - begin);
      params.zero_grad();
      double loss_value = 0.0;
      try {
        Tape<Scalar> tape;
        TapeScope<Scalar> scope(tape);
        const Tensor<Scalar> loss =
            batch_loss(model, train_sessions, batch, ForwardContext{true, &rng}, cfg.ccc_per_window);
        loss_value = static_cast<double>(loss.item());
        if (!std::isfinite(loss_value)) throw NumericalError("non-finite loss");
        tape.backward(loss);
        if (cfg.grad_clip > 0.0) clip_grad_norm(params, cfg.grad_clip);
        hyper.lr = scheduled_lr(cfg, step++, total_steps);
        adam_step(params, adam, hyper);
      } catch (const NumericalError& e) {
        throw NumericalError("diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches + 1) +
                             ": " + e.what());
      }
      ema.update(params);
      loss_sum += loss_value;
      ++batches;
      if (options.log && cfg.report_interval > 0 && batches % cfg.report_interval == 0) {
        *options.log << "epoch " << epoch << " batch " << batches << " loss " << loss_value << '\n';
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
    rec.val_ccc = val_sessions.empty() ? 0.0 : evaluate_with_ema(model, ema, val_sessions).mean_ccc;
    result.history.push_back(rec);
    if (options.log) {
      *options.log << "epoch " << epoch << " train_loss " << rec.train_loss << " val_ccc " << rec.val_ccc << '\n';
    }
    if (rec.val_ccc > result.best_val_ccc) {
      result.best_val_ccc = rec.val_ccc;
      result.best_epoch = epoch;
      if (!options.out_dir.empty()) {
        EmaSwap<Scalar> swap(params, ema);
        save_checkpoint(options.out_dir / "best.json", model);
      }
    }
  }
  if (!options.out_dir.empty()) {
    {
      EmaSwap<Scalar> swap(params, ema);
      save_checkpoint(options.out_dir / "last.json", model);
    }
    std::ofstream(options.out_dir / "history.csv", std::ios::trunc) << history_csv(result.history);
  }
  return result;
}

}  // namespace dat
