#pragma once

// Contextual windows: the session timeline is cut into cores of `core` frames
// (the stride); each window adds `context` frames of left and right context.
// Cores tile [0, T) exactly, so core-only predictions stitch back without
// overlap averaging.

#include <vector>

#include "dat/config.hpp"

namespace dat {

struct Segment {
  Index start = 0;       // window start, may be negative (padding)
  Index end = 0;         // window end (exclusive), may exceed T
  Index core_start = 0;  // real frames [core_start, core_end) inside [0, T)
  Index core_end = 0;
  Index left_pad = 0;   // window frames before frame 0
  Index right_pad = 0;  // window frames at or after frame T

  Index length() const { return end - start; }
  Index core_length() const { return core_end - core_start; }
  /// Window row holding session frame `t`.
  Index offset_of(Index t) const { return t - start; }
  /// Window rows of the real core frames.
  std::vector<Index> core_rows() const;
  bool operator==(const Segment&) const = default;
};

/// ceil(T / s) windows; window k spans [k·s - l, k·s + s + l).
std::vector<Segment> make_segments(Index frames, const WindowGeometry& geometry);

/// Session frame feeding window row `row`, with edge replication outside [0, T).
Index source_frame(const Segment& segment, Index row, Index frames);

/// Stitches core predictions back onto the timeline. Each entry of
/// `predictions` holds one value per window row.
template <typename Vec>
std::vector<double> reassemble(const std::vector<Vec>& predictions, const std::vector<Segment>& segments,
                               Index frames);

}  // namespace dat

#include "dat/segmentation_impl.hpp"
