#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dat/data_io.hpp"
#include "dat/segmentation.hpp"

namespace dat {

/// Lin's concordance correlation coefficient with population (1/n) moments:
///   2 cov(x, y) / (var(x) + var(y) + (mean(x) - mean(y))^2)
/// `degenerate` is set when the denominator vanishes (both series constant
/// with equal means); the value is then defined as 0.
struct Concordance {
  double value = 0.0;
  bool degenerate = false;
};

Concordance concordance(std::span<const double> x, std::span<const double> y);
double ccc(std::span<const double> x, std::span<const double> y);
double pearson(std::span<const double> x, std::span<const double> y);

/// Mean squared error over frames where `mask` is true (all frames when empty).
double mse(std::span<const double> pred, std::span<const double> label, const std::vector<bool>& mask = {});

struct SessionScore {
  std::string session_id;
  double ccc = 0.0;
  double mse = 0.0;
  Index frames = 0;
  bool degenerate = false;
};

struct EvalReport {
  std::vector<SessionScore> sessions;
  double mean_ccc = 0.0;
  double mean_mse = 0.0;
  std::vector<std::string> skipped;  // sessions without labels

  nlohmann::json to_json() const;
  /// Header `session_id,ccc`, one row per session.
  std::string to_csv() const;
};

/// Per-window predictions, one value per window row.
using WindowPredictor = std::function<std::vector<double>(const SessionRecord&, const Segment&)>;

/// Segments, predicts, stitches cores and clamps to [0, 1]: one value per frame.
std::vector<double> predict_series(const WindowPredictor& predictor, const SessionRecord& session,
                                   const WindowGeometry& geometry);

/// Per-session CCC/MSE against the target labels, then the arithmetic mean.
/// Unlabelled sessions are skipped with a notice on `notices`.
EvalReport evaluate_sessions(const WindowPredictor& predictor, const std::vector<SessionRecord>& sessions,
                             const WindowGeometry& geometry, std::ostream* notices = nullptr);

/// Predictor that returns the target labels of each window (edge-replicated).
WindowPredictor label_oracle();

}  // namespace dat
