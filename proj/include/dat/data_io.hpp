#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dat/config.hpp"

namespace dat {

using FeatureMatrix = Matrix<float>;
using LabelVector = Vector<float>;

// ---------------------------------------------------------------------------
// DATF matrix container
//
//   offset  size  field
//   0       4     magic "DATF" (0x44 0x41 0x54 0x46)
//   4       4     u32 LE version (= 1)
//   8       4     u32 LE rows
//   12      4     u32 LE cols
//   16      4·n   float32 LE payload, row-major, n = rows·cols
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kDatfVersion = 1;
inline constexpr std::size_t kDatfHeaderBytes = 16;

std::string encode_matrix(const FeatureMatrix& m);
/// `source` names the blob in error messages.
FeatureMatrix decode_matrix(std::string_view bytes, const std::string& source = "<memory>");

void write_matrix(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix read_matrix(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

enum class Role { target, partner };
std::string_view to_string(Role role);

/// Five frame-aligned streams for one participant, plus optional labels.
struct RoleStreams {
  std::array<FeatureMatrix, kStreamCount> streams;
  std::optional<LabelVector> labels;

  const FeatureMatrix& operator[](Stream s) const { return streams[static_cast<std::size_t>(s)]; }
  bool operator==(const RoleStreams& other) const;
};

struct SessionRecord {
  std::string id;
  double frame_rate_hz = 25.0;
  Index frames = 0;
  std::array<Index, kStreamCount> feature_dims = kDefaultFeatureDims;
  RoleStreams target;
  std::optional<RoleStreams> partner;

  const RoleStreams& role(Role r) const;
  bool has_labels() const { return target.labels.has_value(); }

  /// Row counts, widths, finiteness and label range; throws FormatError.
  void validate() const;
  bool operator==(const SessionRecord& other) const;
};

inline constexpr int kSessionSchemaVersion = 1;

/// Writes manifest.json plus target/ and partner/ DATF files.
void write_session(const std::filesystem::path& dir, const SessionRecord& session);
SessionRecord load_session(const std::filesystem::path& dir);

/// A session directory, or a directory whose subdirectories are sessions
/// (loaded in lexicographic order).
std::vector<SessionRecord> load_sessions(const std::filesystem::path& root);

/// Frame-wise mean across several partners' streams; identity for one partner.
/// Labels are averaged only when every partner carries them.
RoleStreams partner_aggregate(const std::vector<RoleStreams>& partners);

// ---------------------------------------------------------------------------
// Synthetic dyadic sessions
// ---------------------------------------------------------------------------

struct SynthConfig {
  Index sessions = 1;
  Index frames = 2000;
  std::uint64_t seed = 0;
  double kappa = 0.05;            // latent mean reversion toward 0.5
  double sigma_latent = 0.05;     // latent innovation scale
  Index smooth_window = 9;        // centered moving average width
  double partner_coupling = 0.6;  // rho_p in [-1, 1]
  double sigma_obs = 0.5;         // per-feature observation noise
  Index quantize_levels = 0;      // 0 = continuous, otherwise K >= 2 lattice points
  double feature_gain = 0.12;     // std of the random loading matrices
  double frame_rate_hz = 25.0;
  std::array<Index, kStreamCount> feature_dims = kDefaultFeatureDims;

  void validate() const;
};

struct SynthLatents {
  Vector<double> target;
  Vector<double> partner;
};

/// Smoothed latent engagement trajectories behind session `index`.
SynthLatents synth_latents(const SynthConfig& cfg, Index index);

/// Loading matrix [dim x 3] mapping (e, de/dt, 1) to one stream of one role.
Matrix<double> synth_loading(const SynthConfig& cfg, Role role, Stream stream);

SessionRecord synth_session(const SynthConfig& cfg, Index index);

/// Quantizes x in [0, 1] onto {0, 1/(K-1), ..., 1}.
double quantize(double x, Index levels);

}  // namespace dat
