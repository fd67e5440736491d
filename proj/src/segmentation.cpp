#include "dat/segmentation.hpp"

#include <algorithm>
#include <string>

namespace dat {

std::vector<Index> Segment::core_rows() const {
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(core_length()));
  for (Index t = core_start; t < core_end; ++t) rows.push_back(offset_of(t));
  return rows;
}

std::vector<Segment> make_segments(Index frames, const WindowGeometry& geometry) {
  const Index s = geometry.core;
  const Index l = geometry.context;
  if (frames < 1) throw DimensionError("make_segments: session needs at least one frame");
  if (s < 1) throw UsageError("make_segments: core length s must be >= 1, got " + std::to_string(s));
  if (l < 0) throw UsageError("make_segments: context length l must be >= 0, got " + std::to_string(l));
  const Index count = (frames + s - 1) / s;
  std::vector<Segment> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k) {
    Segment seg;
    seg.core_start = k * s;
    seg.core_end = std::min((k + 1) * s, frames);
    seg.start = k * s - l;
    seg.end = k * s + s + l;
    seg.left_pad = std::max<Index>(0, -seg.start);
    seg.right_pad = std::max<Index>(0, seg.end - frames);
    out.push_back(seg);
  }
  return out;
}

Index source_frame(const Segment& segment, Index row, Index frames) {
  return std::clamp<Index>(segment.start + row, 0, frames - 1);
}

}  // namespace dat
