#include "dat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace dat {

Concordance concordance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("ccc: series lengths differ (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw DimensionError("ccc needs at least two frames");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    vx += dx * dx;
    vy += dy * dy;
    cov += dx * dy;
  }
  vx /= n;
  vy /= n;
  cov /= n;
  const double denom = vx + vy + (mx - my) * (mx - my);
  if (denom == 0.0) return {0.0, true};
  return {2.0 * cov / denom, false};
}

double ccc(std::span<const double> x, std::span<const double> y) { return concordance(x, y).value; }

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("pearson: need equal lengths >= 2");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double mse(std::span<const double> pred, std::span<const double> label, const std::vector<bool>& mask) {
  if (pred.size() != label.size()) throw DimensionError("mse: series lengths differ");
  if (!mask.empty() && mask.size() != pred.size()) throw DimensionError("mse: mask length differs");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    total += (pred[i] - label[i]) * (pred[i] - label[i]);
    ++count;
  }
  if (count == 0) throw DimensionError("mse: mask selects no frames");
  return total / static_cast<double>(count);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : sessions) {
    rows.push_back({{"session_id", s.session_id},
                    {"ccc", s.ccc},
                    {"mse", s.mse},
                    {"frames", s.frames},
                    {"degenerate", s.degenerate}});
  }
  return {{"sessions", rows}, {"mean_ccc", mean_ccc}, {"mean_mse", mean_mse}, {"skipped", skipped}};
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "session_id,ccc\n";
  for (const auto& s : sessions) os << s.session_id << ',' << s.ccc << '\n';
  return os.str();
}

std::vector<double> predict_series(const WindowPredictor& predictor, const SessionRecord& session,
                                   const WindowGeometry& geometry) {
  const auto segments = make_segments(session.frames, geometry);
  std::vector<std::vector<double>> preds;
  preds.reserve(segments.size());
  for (const auto& seg : segments) preds.push_back(predictor(session, seg));
  std::vector<double> series = reassemble(preds, segments, session.frames);
  for (double& v : series) v = std::clamp(v, 0.0, 1.0);
  return series;
}

EvalReport evaluate_sessions(const WindowPredictor& predictor, const std::vector<SessionRecord>& sessions,
                             const WindowGeometry& geometry, std::ostream* notices) {
  EvalReport report;
  for (const auto& session : sessions) {
    if (!session.has_labels()) {
      report.skipped.push_back(session.id);
      if (notices) *notices << "notice: session " << session.id << " has no target labels; skipped\n";
      continue;
    }
    const std::vector<double> pred = predict_series(predictor, session, geometry);
    const auto& lab = *session.target.labels;
    std::vector<double> labels(lab.data(), lab.data() + lab.size());
    SessionScore score;
    score.session_id = session.id;
    score.frames = session.frames;
    if (session.frames >= 2) {
      const Concordance c = concordance(pred, labels);
      score.ccc = c.value;
      score.degenerate = c.degenerate;
    } else {
      score.degenerate = true;
    }
    score.mse = mse(pred, labels);
    report.sessions.push_back(score);
  }
  if (!report.sessions.empty()) {
    for (const auto& s : report.sessions) {
      report.mean_ccc += s.ccc;
      report.mean_mse += s.mse;
    }
    report.mean_ccc /= static_cast<double>(report.sessions.size());
    report.mean_mse /= static_cast<double>(report.sessions.size());
  }
  return report;
}

WindowPredictor label_oracle() {
  return [](const SessionRecord& session, const Segment& seg) {
    const auto& labels = session.target.labels.value();
    std::vector<double> out(static_cast<std::size_t>(seg.length()));
    for (Index r = 0; r < seg.length(); ++r) out[static_cast<std::size_t>(r)] = labels[source_frame(seg, r, session.frames)];
    return out;
  };
}

}  // namespace dat
