#pragma once

// Gathers model inputs for one contextual window of a session.

#include "dat/data_io.hpp"
#include "dat/metrics.hpp"
#include "dat/model.hpp"
#include "dat/segmentation.hpp"

namespace dat {

/// Window rows of every stream of `role`; frames outside the session repeat
/// the first/last real frame.
template <typename Scalar>
FeatureBundle<Scalar> extract_window(const SessionRecord& session, const Segment& segment, Role role) {
  const RoleStreams& rs = session.role(role);
  FeatureBundle<Scalar> bundle;
  const Index rows = segment.length();
  for (std::size_t i = 0; i < kStreamCount; ++i) {
    const FeatureMatrix& src = rs.streams[i];
    Matrix<Scalar> m(rows, src.cols());
    for (Index r = 0; r < rows; ++r) m.row(r) = src.row(source_frame(segment, r, session.frames)).template cast<Scalar>();
    bundle.streams[i] = Tensor<Scalar>::from_matrix(m);
  }
  return bundle;
}

/// Target labels over the window rows (edge-replicated like the features).
template <typename Scalar>
Vector<Scalar> extract_labels(const SessionRecord& session, const Segment& segment) {
  if (!session.target.labels) throw FormatError("session " + session.id + " has no target labels");
  const auto& labels = *session.target.labels;
  Vector<Scalar> out(segment.length());
  for (Index r = 0; r < segment.length(); ++r) out[r] = static_cast<Scalar>(labels[source_frame(segment, r, session.frames)]);
  return out;
}

/// Runs `model` over each window in inference mode (clamped predictions).
template <typename Scalar>
WindowPredictor model_predictor(const DatModel<Scalar>& model) {
  return [&model](const SessionRecord& session, const Segment& segment) {
    const FeatureBundle<Scalar> target = extract_window<Scalar>(session, segment, Role::target);
    FeatureBundle<Scalar> partner;
    if (model.uses_partner()) partner = extract_window<Scalar>(session, segment, Role::partner);
    const Vector<Scalar> y = model.predict(target, partner);
    return std::vector<double>(y.data(), y.data() + y.size());
  };
}

}  // namespace dat
