#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"

#include "dat/tensor.hpp"

namespace dat {

/// The five pre-extracted feature streams, in model order.
enum class Stream : int { E = 0, W = 1, C = 2, OF = 3, OP = 4 };
inline constexpr std::size_t kStreamCount = 5;

/// On-disk file stem of each stream, indexed by Stream.
inline constexpr std::array<std::string_view, kStreamCount> kStreamFiles = {"opensmile", "w2vbert", "clip", "openface",
                                                                           "openpose"};
inline constexpr std::array<std::string_view, kStreamCount> kStreamKeys = {"E", "W", "C", "OF", "OP"};

/// Prosodic audio 88, speech representation 1024, visual embedding 512,
/// facial behaviour 714, body pose 139: 2477 in total.
inline constexpr std::array<Index, kStreamCount> kDefaultFeatureDims = {88, 1024, 512, 714, 139};

enum class LossKind { mse, ccc };
enum class ModelVariant { dat, six_encoder };

std::string_view to_string(LossKind kind);
std::string_view to_string(ModelVariant variant);
LossKind parse_loss_kind(std::string_view text);
ModelVariant parse_model_variant(std::string_view text);

/// Window geometry: `core` predicted frames (the stride s) flanked by
/// `context` frames (l) on each side.
struct WindowGeometry {
  Index core = 32;
  Index context = 32;
  Index length() const { return core + 2 * context; }
  bool operator==(const WindowGeometry&) const = default;
};

struct ModelConfig {
  ModelVariant variant = ModelVariant::dat;
  Index d = 512;            // unified projection width
  Index dae_layers = 1;     // N
  Index encoder_depth = 1;  // layers per per-feature / group / fusion encoder
  Index heads = 8;
  Index ffn_mult = 4;
  Index head_hidden = 0;  // 0 means d
  double dropout = 0.2;
  double layer_norm_eps = 1e-5;
  Index max_len = 1024;
  WindowGeometry window;
  std::array<Index, kStreamCount> feature_dims = kDefaultFeatureDims;
  bool use_mgf = true;
  bool use_dae = true;
  bool share_mgf_weights = false;
  bool use_positional = true;
  LossKind loss = LossKind::mse;
  std::uint64_t init_seed = 0;

  Index head_width() const { return head_hidden > 0 ? head_hidden : d; }
  Index audio_width() const { return 2 * d; }
  Index video_width() const { return 3 * d; }
  Index fused_width() const { return 5 * d; }

  /// Throws UsageError naming the first violated constraint.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class LrSchedule { constant, cosine };
std::string_view to_string(LrSchedule schedule);
LrSchedule parse_lr_schedule(std::string_view text);

struct TrainConfig {
  double lr = 5e-5;
  LrSchedule lr_schedule = LrSchedule::constant;  // cosine decays to 0 over all steps
  double grad_clip = 0.0;                         // global L2 norm cap; 0 = off
  double weight_decay = 0.0;                      // decoupled, applied as θ -= lr·wd·θ
  bool ccc_per_window = false;                    // CCC loss per window, averaged, instead of over the batch
  Index batch_size = 128;
  Index epochs = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double ema_decay = 0.999;
  std::uint64_t seed = 0;
  Index report_interval = 0;  // batches between progress lines; 0 = per epoch only
  bool verbose = false;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  bool operator==(const RunConfig&) const = default;
};

/// "paper-noxi", "paper-mpiigi" or "desk".
RunConfig preset(std::string_view name);

/// Sets one documented key (see README). Throws UsageError on unknown keys
/// or unparsable values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

/// Reads `key = value` lines; '#' starts a comment.
void apply_config_file(RunConfig& cfg, const std::string& path);

/// Resolved configuration as `key = value` lines, re-readable by apply_config_file.
std::string to_key_values(const RunConfig& cfg);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace dat
