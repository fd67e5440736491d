#pragma once

// Trainable building blocks over the autograd ops: linear, layer norm,
// multi-head attention, feed-forward, sinusoidal positions and a pre-norm
// transformer encoder layer.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dat/ops.hpp"

namespace dat {

template <typename Scalar>
struct NamedParameter {
  std::string name;
  Tensor<Scalar> tensor;
};

/// Ordered registry of trainable tensors. Creation order is the canonical
/// parameter order used by optimizers and checkpoints.
template <typename Scalar>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

  /// Xavier-uniform matrix of shape [fan_in, fan_out].
  Tensor<Scalar> xavier(const std::string& name, Index fan_in, Index fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    Vector<Scalar> v(fan_in * fan_out);
    for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(u(rng_));
    return add(name, Tensor<Scalar>({fan_in, fan_out}, std::move(v), true));
  }

  Tensor<Scalar> constant(const std::string& name, Shape shape, Scalar fill) {
    const Index n = numel(shape);
    return add(name, Tensor<Scalar>(std::move(shape), Vector<Scalar>::Constant(n, fill), true));
  }

  Tensor<Scalar> add(const std::string& name, Tensor<Scalar> t) {
    for (const auto& p : entries_)
      if (p.name == name) throw std::invalid_argument("duplicate parameter name " + name);
    t.set_requires_grad(true);
    entries_.push_back({name, t});
    return t;
  }

  const std::vector<NamedParameter<Scalar>>& entries() const { return entries_; }
  std::vector<NamedParameter<Scalar>>& entries() { return entries_; }

  Index count() const {
    Index n = 0;
    for (const auto& p : entries_) n += p.tensor.size();
    return n;
  }

  Tensor<Scalar> find(const std::string& name) const {
    for (const auto& p : entries_)
      if (p.name == name) return p.tensor;
    throw std::out_of_range("no parameter named " + name);
  }

  void zero_grad() {
    for (auto& p : entries_) p.tensor.zero_grad();
  }

  std::vector<Tensor<Scalar>> tensors() const {
    std::vector<Tensor<Scalar>> out;
    for (const auto& p : entries_) out.push_back(p.tensor);
    return out;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& p : entries_) out.push_back(p.name);
    return out;
  }

 private:
  std::mt19937_64 rng_;
  std::vector<NamedParameter<Scalar>> entries_;
};

/// Per-forward state: training mode and the dropout RNG.
struct ForwardContext {
  bool train = false;
  std::mt19937_64* rng = nullptr;
};

template <typename Scalar>
Tensor<Scalar> apply_dropout(const Tensor<Scalar>& x, double rate, const ForwardContext& ctx) {
  if (!ctx.train || rate == 0.0) return x;
  if (!ctx.rng) throw std::logic_error("training-mode forward without an RNG");
  return dropout(x, rate, true, *ctx.rng);
}

template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore<Scalar>& store, const std::string& name, Index in_dim, Index out_dim, bool bias = true)
      : in_dim_(in_dim), out_dim_(out_dim), weight_(store.xavier(name + ".weight", in_dim, out_dim)) {
    if (bias) bias_ = store.constant(name + ".bias", {out_dim}, Scalar(0));
  }

  /// x·W + b over the last axis.
  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const {
    if (x.cols() != in_dim_) {
      throw DimensionError("linear: expected last dim " + std::to_string(in_dim_) + ", got " + to_string(x.shape()));
    }
    Tensor<Scalar> y = matmul(x.rank() >= 2 ? x : reshape_2d(x), weight_);
    if (bias_.defined()) y = add_bias(y, bias_);
    return y;
  }

  static Index param_count(Index in_dim, Index out_dim, bool bias = true) {
    return in_dim * out_dim + (bias ? out_dim : 0);
  }

  Index in_dim() const { return in_dim_; }
  Index out_dim() const { return out_dim_; }
  const Tensor<Scalar>& weight() const { return weight_; }
  const Tensor<Scalar>& bias() const { return bias_; }

 private:
  static Tensor<Scalar> reshape_2d(const Tensor<Scalar>& x) {
    // A rank-1 input is one row of data.
    return Tensor<Scalar>({1, x.size()}, x.value(), false);
  }

  Index in_dim_ = 0;
  Index out_dim_ = 0;
  Tensor<Scalar> weight_;
  Tensor<Scalar> bias_;
};

template <typename Scalar>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore<Scalar>& store, const std::string& name, Index dim, Scalar eps = Scalar(1e-5))
      : gamma_(store.constant(name + ".gamma", {dim}, Scalar(1))),
        beta_(store.constant(name + ".beta", {dim}, Scalar(0))),
        eps_(eps) {}

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return layer_norm(x, gamma_, beta_, eps_); }

  static Index param_count(Index dim) { return 2 * dim; }

 private:
  Tensor<Scalar> gamma_;
  Tensor<Scalar> beta_;
  Scalar eps_ = Scalar(1e-5);
};

/// softmax(Q Kᵀ / sqrt(d_k)) V per head, heads concatenated, then projected.
/// The key projection carries no bias: a key bias shifts every score in a
/// query row by the same amount and cancels in the softmax.
template <typename Scalar>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore<Scalar>& store, const std::string& name, Index dim, Index heads, double dropout)
      : dim_(dim), heads_(heads), dropout_(dropout) {
    if (heads < 1 || dim % heads != 0) {
      throw DimensionError("attention: " + std::to_string(heads) + " heads do not divide width " + std::to_string(dim));
    }
    query_ = Linear<Scalar>(store, name + ".query", dim, dim);
    key_ = Linear<Scalar>(store, name + ".key", dim, dim, false);
    value_ = Linear<Scalar>(store, name + ".value", dim, dim);
    output_ = Linear<Scalar>(store, name + ".output", dim, dim);
  }

  Tensor<Scalar> operator()(const Tensor<Scalar>& query_in, const Tensor<Scalar>& kv_in,
                            const ForwardContext& ctx) const {
    check_inputs(query_in, kv_in);
    const Tensor<Scalar> q = query_(query_in);
    const Tensor<Scalar> k = key_(kv_in);
    const Tensor<Scalar> v = value_(kv_in);
    const Index dk = head_dim();
    const Scalar inv_sqrt = Scalar(1) / std::sqrt(Scalar(dk));
    std::vector<Tensor<Scalar>> heads;
    heads.reserve(static_cast<std::size_t>(heads_));
    for (Index h = 0; h < heads_; ++h) {
      const Tensor<Scalar> qh = slice(q, 1, h * dk, dk);
      const Tensor<Scalar> kh = slice(k, 1, h * dk, dk);
      const Tensor<Scalar> vh = slice(v, 1, h * dk, dk);
      const Tensor<Scalar> weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), -1);
      heads.push_back(matmul(weights, vh));
    }
    const Tensor<Scalar> merged = heads_ == 1 ? heads.front() : concat(std::span<const Tensor<Scalar>>(heads), 1);
    return apply_dropout(output_(merged), dropout_, ctx);
  }

  /// Per-head attention weight matrices [L_q x L_k], computed without taping.
  std::vector<Matrix<Scalar>> weights(const Tensor<Scalar>& query_in, const Tensor<Scalar>& kv_in) const {
    check_inputs(query_in, kv_in);
    Tape<Scalar>* saved = Tape<Scalar>::active();
    Tape<Scalar>::active() = nullptr;
    const Tensor<Scalar> q = query_(query_in);
    const Tensor<Scalar> k = key_(kv_in);
    Tape<Scalar>::active() = saved;
    const Index dk = head_dim();
    std::vector<Matrix<Scalar>> out;
    for (Index h = 0; h < heads_; ++h) {
      Matrix<Scalar> s = q.matrix().middleCols(h * dk, dk) * k.matrix().middleCols(h * dk, dk).transpose() /
                         std::sqrt(Scalar(dk));
      Tensor<Scalar> w = softmax(Tensor<Scalar>::from_matrix(s), -1);
      out.push_back(w.matrix());
    }
    return out;
  }

  static Index param_count(Index dim) { return 4 * dim * dim + 3 * dim; }

  Index head_dim() const { return dim_ / heads_; }
  Index heads() const { return heads_; }
  const Linear<Scalar>& query() const { return query_; }
  const Linear<Scalar>& key() const { return key_; }
  const Linear<Scalar>& value() const { return value_; }
  const Linear<Scalar>& output() const { return output_; }

 private:
  void check_inputs(const Tensor<Scalar>& query_in, const Tensor<Scalar>& kv_in) const {
    if (query_in.rank() != 2 || kv_in.rank() != 2 || query_in.cols() != dim_ || kv_in.cols() != dim_) {
      throw DimensionError("attention: inputs " + to_string(query_in.shape()) + " and " + to_string(kv_in.shape()) +
                           " must be [L x " + std::to_string(dim_) + "]");
    }
  }

  Index dim_ = 0;
  Index heads_ = 1;
  double dropout_ = 0.0;
  Linear<Scalar> query_, key_, value_, output_;
};

/// dim -> mult·dim -> GELU -> dropout -> dim.
template <typename Scalar>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterStore<Scalar>& store, const std::string& name, Index dim, Index mult, double dropout)
      : up_(store, name + ".up", dim, mult * dim), down_(store, name + ".down", mult * dim, dim), dropout_(dropout) {}

  Tensor<Scalar> operator()(const Tensor<Scalar>& x, const ForwardContext& ctx) const {
    return down_(apply_dropout(gelu(up_(x)), dropout_, ctx));
  }

  static Index param_count(Index dim, Index mult) {
    return Linear<Scalar>::param_count(dim, mult * dim) + Linear<Scalar>::param_count(mult * dim, dim);
  }

 private:
  Linear<Scalar> up_, down_;
  double dropout_ = 0.0;
};

struct BlockConfig {
  Index heads = 8;
  Index ffn_mult = 4;
  double dropout = 0.2;
  double layer_norm_eps = 1e-5;
};

/// Pre-norm layer: y = x + Attn(Norm(x)); out = y + FFN(Norm(y)).
template <typename Scalar>
class TransformerEncoderLayer {
 public:
  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(ParameterStore<Scalar>& store, const std::string& name, Index dim, const BlockConfig& cfg)
      : norm_attn_(store, name + ".norm1", dim, Scalar(cfg.layer_norm_eps)),
        attn_(store, name + ".attn", dim, cfg.heads, cfg.dropout),
        norm_ffn_(store, name + ".norm2", dim, Scalar(cfg.layer_norm_eps)),
        ffn_(store, name + ".ffn", dim, cfg.ffn_mult, cfg.dropout) {}

  Tensor<Scalar> operator()(const Tensor<Scalar>& x, const ForwardContext& ctx) const {
    const Tensor<Scalar> normed = norm_attn_(x);
    const Tensor<Scalar> y = add(x, attn_(normed, normed, ctx));
    return add(y, ffn_(norm_ffn_(y), ctx));
  }

  static Index param_count(Index dim, Index ffn_mult) {
    return 2 * LayerNorm<Scalar>::param_count(dim) + MultiHeadAttention<Scalar>::param_count(dim) +
           FeedForward<Scalar>::param_count(dim, ffn_mult);
  }

  const MultiHeadAttention<Scalar>& attention() const { return attn_; }

 private:
  LayerNorm<Scalar> norm_attn_;
  MultiHeadAttention<Scalar> attn_;
  LayerNorm<Scalar> norm_ffn_;
  FeedForward<Scalar> ffn_;
};

/// Fixed sinusoidal table: PE(p, 2i) = sin(p / 10000^(2i/D)), PE(p, 2i+1) = cos(same).
template <typename Scalar>
class PositionalEncoding {
 public:
  PositionalEncoding() = default;
  PositionalEncoding(Index max_len, Index dim) : table_(max_len, dim) {
    for (Index p = 0; p < max_len; ++p) {
      for (Index c = 0; c < dim; ++c) {
        const double freq = std::pow(10000.0, -static_cast<double>(c - c % 2) / static_cast<double>(dim));
        const double angle = static_cast<double>(p) * freq;
        table_(p, c) = static_cast<Scalar>(c % 2 == 0 ? std::sin(angle) : std::cos(angle));
      }
    }
  }

  /// x + PE[0..L) when enabled, x unchanged otherwise.
  Tensor<Scalar> operator()(const Tensor<Scalar>& x, bool enabled = true) const {
    if (!enabled) return x;
    if (x.rank() != 2 || x.cols() != table_.cols()) {
      throw DimensionError("positional encoding: input " + to_string(x.shape()) + " vs width " +
                           std::to_string(table_.cols()));
    }
    if (x.rows() > table_.rows()) {
      throw DimensionError("positional encoding: length " + std::to_string(x.rows()) + " exceeds max_len " +
                           std::to_string(table_.rows()));
    }
    return add(x, Tensor<Scalar>::from_matrix(table_.topRows(x.rows())));
  }

  const Matrix<Scalar>& table() const { return table_; }

 private:
  Matrix<Scalar> table_;
};

}  // namespace dat
