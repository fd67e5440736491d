#include "dat/model.hpp"

namespace dat {

Index param_count(const ModelConfig& cfg) {
  cfg.validate();
  using Enc = TransformerEncoderLayer<double>;
  const Index depth = cfg.encoder_depth;
  Index streams = 0;
  for (Index dim : cfg.feature_dims) streams += Linear<double>::param_count(dim, cfg.d);
  streams += static_cast<Index>(kStreamCount) * depth * Enc::param_count(cfg.d, cfg.ffn_mult);
  const Index head = PredictionHead<double>::param_count(cfg.fused_width(), cfg.head_width());

  if (cfg.variant == ModelVariant::six_encoder) {
    return streams + depth * Enc::param_count(cfg.fused_width(), cfg.ffn_mult) + head;
  }
  Index mgf = streams;
  if (cfg.use_mgf) {
    mgf += depth * (Enc::param_count(cfg.audio_width(), cfg.ffn_mult) + Enc::param_count(cfg.video_width(), cfg.ffn_mult));
  }
  Index total = mgf + head;
  if (cfg.use_dae) {
    if (!cfg.share_mgf_weights) total += mgf;
    total += cfg.dae_layers * (DialogueAwareLayer<double>::param_count(cfg.audio_width(), cfg.ffn_mult) +
                               DialogueAwareLayer<double>::param_count(cfg.video_width(), cfg.ffn_mult));
  }
  return total;
}

template class DatModel<float>;
template class DatModel<double>;

}  // namespace dat
