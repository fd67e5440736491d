#pragma once

#include <string>

namespace dat {

template <typename Vec>
std::vector<double> reassemble(const std::vector<Vec>& predictions, const std::vector<Segment>& segments,
                               Index frames) {
  if (predictions.size() != segments.size()) {
    throw DimensionError("reassemble: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(segments.size()) + " segments");
  }
  std::vector<double> out(static_cast<std::size_t>(frames), 0.0);
  std::vector<bool> filled(static_cast<std::size_t>(frames), false);
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const Segment& seg = segments[k];
    if (static_cast<Index>(predictions[k].size()) != seg.length()) {
      throw DimensionError("reassemble: segment " + std::to_string(k) + " has " +
                           std::to_string(predictions[k].size()) + " predictions, window length " +
                           std::to_string(seg.length()));
    }
    for (Index t = seg.core_start; t < seg.core_end; ++t) {
      if (t < 0 || t >= frames) throw DimensionError("reassemble: segment core outside the session");
      out[static_cast<std::size_t>(t)] = static_cast<double>(predictions[k][seg.offset_of(t)]);
      filled[static_cast<std::size_t>(t)] = true;
    }
  }
  for (Index t = 0; t < frames; ++t) {
    if (!filled[static_cast<std::size_t>(t)]) throw DimensionError("reassemble: frame " + std::to_string(t) + " not covered");
  }
  return out;
}

}  // namespace dat
