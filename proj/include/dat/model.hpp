#pragma once

// Dialogue-aware transformer for frame-level engagement regression.
//
//   per role:   x_a -> Linear(dim_a, d) [+ positions] -> encoder      a in {E, W, C, OF, OP}
//               audio = encoder(concat(E, W))       [L x 2d]
//               video = encoder(concat(C, OF, OP))  [L x 3d]
//   dialogue:   N layers per modality, partner stream as query, target as key/value
//   head:       concat(audio, video) [L x 5d] -> Linear -> GELU -> dropout -> Linear -> [L x 1]

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dat/config.hpp"
#include "dat/nn.hpp"

namespace dat {

/// One role's five feature streams over a window; every stream has L rows.
template <typename Scalar>
struct FeatureBundle {
  std::array<Tensor<Scalar>, kStreamCount> streams;

  Index length() const { return streams[0].rows(); }
  const Tensor<Scalar>& operator[](Stream s) const { return streams[static_cast<std::size_t>(s)]; }

  template <typename Derived>
  static FeatureBundle from_matrices(const std::array<Derived, kStreamCount>& mats) {
    FeatureBundle b;
    for (std::size_t i = 0; i < kStreamCount; ++i) b.streams[i] = Tensor<Scalar>::from_matrix(mats[i]);
    return b;
  }
};

template <typename Scalar>
struct GroupedFeatures {
  Tensor<Scalar> audio;  // [L x 2d]
  Tensor<Scalar> video;  // [L x 3d]
};

/// Shapes observed during one forward pass.
struct ForwardTrace {
  Shape audio;
  Shape video;
  Shape head_input;
  Shape output;
};

inline BlockConfig block_config(const ModelConfig& cfg) {
  return {cfg.heads, cfg.ffn_mult, cfg.dropout, cfg.layer_norm_eps};
}

/// Per-feature projection and encoding followed by audio/video grouping.
template <typename Scalar>
class ModalityGroupFusion {
 public:
  ModalityGroupFusion() = default;
  ModalityGroupFusion(ParameterStore<Scalar>& store, const std::string& prefix, const ModelConfig& cfg,
                      bool group_encoders)
      : cfg_(cfg), positions_(cfg.use_positional ? PositionalEncoding<Scalar>(cfg.max_len, cfg.d)
                                                 : PositionalEncoding<Scalar>()) {
    const BlockConfig block = block_config(cfg);
    for (std::size_t i = 0; i < kStreamCount; ++i) {
      const std::string name = prefix + "." + std::string(kStreamKeys[i]);
      projections_[i] = Linear<Scalar>(store, name + ".proj", cfg.feature_dims[i], cfg.d);
      for (Index k = 0; k < cfg.encoder_depth; ++k) {
        encoders_[i].emplace_back(store, name + ".enc" + std::to_string(k), cfg.d, block);
      }
    }
    if (group_encoders) {
      for (Index k = 0; k < cfg.encoder_depth; ++k) {
        audio_.emplace_back(store, prefix + ".audio.enc" + std::to_string(k), cfg.audio_width(), block);
        video_.emplace_back(store, prefix + ".video.enc" + std::to_string(k), cfg.video_width(), block);
      }
    }
  }

  /// Projected and encoded per-feature streams, each [L x d].
  std::array<Tensor<Scalar>, kStreamCount> encode_streams(const FeatureBundle<Scalar>& bundle,
                                                          const ForwardContext& ctx) const {
    std::array<Tensor<Scalar>, kStreamCount> out;
    const Index length = bundle.length();
    for (std::size_t i = 0; i < kStreamCount; ++i) {
      const Tensor<Scalar>& x = bundle.streams[i];
      if (x.rank() != 2 || x.cols() != cfg_.feature_dims[i] || x.rows() != length) {
        throw DimensionError("stream " + std::string(kStreamKeys[i]) + ": expected [" + std::to_string(length) + "x" +
                             std::to_string(cfg_.feature_dims[i]) + "], got " + to_string(x.shape()));
      }
      Tensor<Scalar> h = positions_(projections_[i](x), cfg_.use_positional);
      for (const auto& enc : encoders_[i]) h = enc(h, ctx);
      out[i] = h;
    }
    return out;
  }

  GroupedFeatures<Scalar> operator()(const FeatureBundle<Scalar>& bundle, const ForwardContext& ctx) const {
    const auto s = encode_streams(bundle, ctx);
    GroupedFeatures<Scalar> g{concat({s[0], s[1]}, 1), concat({s[2], s[3], s[4]}, 1)};
    for (const auto& enc : audio_) g.audio = enc(g.audio, ctx);
    for (const auto& enc : video_) g.video = enc(g.video, ctx);
    return g;
  }

 private:
  ModelConfig cfg_;
  PositionalEncoding<Scalar> positions_;
  std::array<Linear<Scalar>, kStreamCount> projections_;
  std::array<std::vector<TransformerEncoderLayer<Scalar>>, kStreamCount> encoders_;
  std::vector<TransformerEncoderLayer<Scalar>> audio_;
  std::vector<TransformerEncoderLayer<Scalar>> video_;
};

/// One dialogue-aware encoder layer:
///   t1  = Norm(target)
///   t2  = CrossAttn(query = partner, key = value = t1) + target
///   out = t2 + FFN(Norm(t2))
/// The partner query is used as is and the residual adds the raw target.
template <typename Scalar>
class DialogueAwareLayer {
 public:
  DialogueAwareLayer() = default;
  DialogueAwareLayer(ParameterStore<Scalar>& store, const std::string& name, Index dim, const BlockConfig& cfg)
      : norm_target_(store, name + ".norm1", dim, Scalar(cfg.layer_norm_eps)),
        cross_(store, name + ".cross", dim, cfg.heads, cfg.dropout),
        norm_ffn_(store, name + ".norm2", dim, Scalar(cfg.layer_norm_eps)),
        ffn_(store, name + ".ffn", dim, cfg.ffn_mult, cfg.dropout) {}

  Tensor<Scalar> operator()(const Tensor<Scalar>& target, const Tensor<Scalar>& partner,
                            const ForwardContext& ctx) const {
    if (target.shape() != partner.shape()) {
      throw DimensionError("dialogue-aware layer: target " + to_string(target.shape()) + " vs partner " +
                           to_string(partner.shape()));
    }
    const Tensor<Scalar> refined = add(cross_(partner, norm_target_(target), ctx), target);
    return add(refined, ffn_(norm_ffn_(refined), ctx));
  }

  static Index param_count(Index dim, Index ffn_mult) {
    return 2 * LayerNorm<Scalar>::param_count(dim) + MultiHeadAttention<Scalar>::param_count(dim) +
           FeedForward<Scalar>::param_count(dim, ffn_mult);
  }

  const MultiHeadAttention<Scalar>& cross_attention() const { return cross_; }

 private:
  LayerNorm<Scalar> norm_target_;
  MultiHeadAttention<Scalar> cross_;
  LayerNorm<Scalar> norm_ffn_;
  FeedForward<Scalar> ffn_;
};

/// [L x in] -> Norm -> Linear(in, hidden) -> GELU -> dropout -> Linear(hidden, 1).
/// The norm closes the pre-norm residual streams feeding the head.
template <typename Scalar>
class PredictionHead {
 public:
  PredictionHead() = default;
  PredictionHead(ParameterStore<Scalar>& store, const std::string& name, Index in_dim, Index hidden, double dropout,
                 double eps)
      : norm_(store, name + ".norm", in_dim, Scalar(eps)),
        hidden_(store, name + ".hidden", in_dim, hidden),
        out_(store, name + ".out", hidden, 1),
        dropout_(dropout) {}

  Tensor<Scalar> operator()(const Tensor<Scalar>& x, const ForwardContext& ctx) const {
    return out_(apply_dropout(gelu(hidden_(norm_(x))), dropout_, ctx));
  }

  static Index param_count(Index in_dim, Index hidden) {
    return LayerNorm<Scalar>::param_count(in_dim) + Linear<Scalar>::param_count(in_dim, hidden) +
           Linear<Scalar>::param_count(hidden, 1);
  }

 private:
  LayerNorm<Scalar> norm_;
  Linear<Scalar> hidden_, out_;
  double dropout_ = 0.0;
};

/// Closed-form trainable parameter total for `cfg`.
Index param_count(const ModelConfig& cfg);

template <typename Scalar>
class DatModel {
 public:
  explicit DatModel(const ModelConfig& cfg) : cfg_(cfg), store_(std::make_unique<ParameterStore<Scalar>>(cfg.init_seed)) {
    cfg_.validate();
    auto& store = *store_;
    const BlockConfig block = block_config(cfg_);
    if (cfg_.variant == ModelVariant::six_encoder) {
      target_mgf_ = ModalityGroupFusion<Scalar>(store, "target", cfg_, false);
      for (Index k = 0; k < cfg_.encoder_depth; ++k) {
        fusion_.emplace_back(store, "fusion.enc" + std::to_string(k), cfg_.fused_width(), block);
      }
    } else {
      const bool separate_partner = cfg_.use_dae && !cfg_.share_mgf_weights;
      target_mgf_ = ModalityGroupFusion<Scalar>(store, separate_partner || !cfg_.use_dae ? "target" : "shared", cfg_,
                                                cfg_.use_mgf);
      if (separate_partner) partner_mgf_ = ModalityGroupFusion<Scalar>(store, "partner", cfg_, cfg_.use_mgf);
      if (cfg_.use_dae) {
        for (Index k = 0; k < cfg_.dae_layers; ++k) {
          audio_dae_.emplace_back(store, "dae.audio" + std::to_string(k), cfg_.audio_width(), block);
        }
        for (Index k = 0; k < cfg_.dae_layers; ++k) {
          video_dae_.emplace_back(store, "dae.video" + std::to_string(k), cfg_.video_width(), block);
        }
      }
    }
    head_ = PredictionHead<Scalar>(store, "head", cfg_.fused_width(), cfg_.head_width(), cfg_.dropout,
                                   cfg_.layer_norm_eps);
  }

  DatModel(DatModel&&) noexcept = default;
  DatModel& operator=(DatModel&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore<Scalar>& parameters() { return *store_; }
  const ParameterStore<Scalar>& parameters() const { return *store_; }

  /// Whether forward() reads the partner bundle.
  bool uses_partner() const { return cfg_.variant == ModelVariant::dat && cfg_.use_dae; }

  /// Modality-group fusion for one role.
  GroupedFeatures<Scalar> fuse(const FeatureBundle<Scalar>& bundle, bool partner, const ForwardContext& ctx) const {
    if (partner && partner_mgf_) return (*partner_mgf_)(bundle, ctx);
    return target_mgf_(bundle, ctx);
  }

  /// Unclamped per-frame predictions [L x 1]. The six-encoder variant ignores `partner`.
  Tensor<Scalar> forward(const FeatureBundle<Scalar>& target, const FeatureBundle<Scalar>& partner,
                         const ForwardContext& ctx, ForwardTrace* trace = nullptr) const {
    if (cfg_.variant == ModelVariant::six_encoder) return forward_baseline(target, ctx, trace);
    if (uses_partner() && partner.length() != target.length()) {
      throw DimensionError("target window has " + std::to_string(target.length()) + " frames, partner has " +
                           std::to_string(partner.length()));
    }
    GroupedFeatures<Scalar> t = fuse(target, false, ctx);
    if (uses_partner()) {
      const GroupedFeatures<Scalar> p = fuse(partner, true, ctx);
      for (const auto& layer : audio_dae_) t.audio = layer(t.audio, p.audio, ctx);
      for (const auto& layer : video_dae_) t.video = layer(t.video, p.video, ctx);
    }
    const Tensor<Scalar> fused = concat({t.audio, t.video}, 1);
    Tensor<Scalar> y = head_(fused, ctx);
    if (trace) *trace = {t.audio.shape(), t.video.shape(), fused.shape(), y.shape()};
    return y;
  }

  /// Per-feature encoders, concatenation, one fusion encoder, head.
  Tensor<Scalar> forward_baseline(const FeatureBundle<Scalar>& target, const ForwardContext& ctx,
                                  ForwardTrace* trace = nullptr) const {
    if (cfg_.variant != ModelVariant::six_encoder) {
      throw std::logic_error("forward_baseline() needs variant = six_encoder");
    }
    const auto s = target_mgf_.encode_streams(target, ctx);
    Tensor<Scalar> fused = concat(std::span<const Tensor<Scalar>>(s), 1);
    for (const auto& enc : fusion_) fused = enc(fused, ctx);
    Tensor<Scalar> y = head_(fused, ctx);
    if (trace) *trace = {{}, {}, fused.shape(), y.shape()};
    return y;
  }

  /// Inference: eval mode, untaped, clamped to [0, 1].
  Vector<Scalar> predict(const FeatureBundle<Scalar>& target, const FeatureBundle<Scalar>& partner) const {
    Tape<Scalar>* saved = Tape<Scalar>::active();
    Tape<Scalar>::active() = nullptr;
    Vector<Scalar> y;
    try {
      y = forward(target, partner, ForwardContext{}).value();
    } catch (...) {
      Tape<Scalar>::active() = saved;
      throw;
    }
    Tape<Scalar>::active() = saved;
    return y.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  }

  const std::vector<DialogueAwareLayer<Scalar>>& audio_dae() const { return audio_dae_; }
  const std::vector<DialogueAwareLayer<Scalar>>& video_dae() const { return video_dae_; }

 private:
  ModelConfig cfg_;
  std::unique_ptr<ParameterStore<Scalar>> store_;
  ModalityGroupFusion<Scalar> target_mgf_;
  std::optional<ModalityGroupFusion<Scalar>> partner_mgf_;
  std::vector<DialogueAwareLayer<Scalar>> audio_dae_;
  std::vector<DialogueAwareLayer<Scalar>> video_dae_;
  std::vector<TransformerEncoderLayer<Scalar>> fusion_;
  PredictionHead<Scalar> head_;
};

extern template class DatModel<float>;
extern template class DatModel<double>;

}  // namespace dat
