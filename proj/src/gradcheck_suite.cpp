#include "dat/gradcheck_suite.hpp"

#include <chrono>
#include <functional>
#include <ostream>
#include <random>

#include "dat/losses.hpp"
#include "dat/model.hpp"

namespace dat {

namespace {

using T = Tensor<double>;

T random_tensor(Index rows, Index cols, std::mt19937_64& rng, bool grad) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return T::from_matrix(m, grad);
}

// Fixed positive weights so every output coordinate reaches the loss.
T probe(const T& y) {
  return sum(mul(y, T(y.shape(), Vector<double>::LinSpaced(y.size(), 0.5, 1.5))));
}

FeatureBundle<double> random_bundle(const ModelConfig& cfg, std::mt19937_64& rng) {
  FeatureBundle<double> b;
  for (std::size_t i = 0; i < kStreamCount; ++i) b.streams[i] = random_tensor(cfg.window.length(), cfg.feature_dims[i], rng, false);
  return b;
}

GradCheckEntry timed(const std::string& name, const std::function<T()>& loss, std::vector<T> params,
                     const std::vector<std::string>& names, double tolerance, Index samples = 0,
                     std::uint64_t seed = 0) {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckOptions opts;
  opts.tolerance = tolerance;
  opts.samples = samples;
  opts.seed = seed;
  GradCheckEntry e{name, grad_check<double>(loss, std::move(params), opts, names), 0.0};
  e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return e;
}

}  // namespace

ModelConfig toy_model_config() {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.heads = 2;
  cfg.ffn_mult = 2;
  cfg.dropout = 0.0;
  cfg.window = {2, 1};
  cfg.max_len = 16;
  cfg.feature_dims = {6, 10, 8, 7, 5};
  return cfg;
}

GradCheckEntry gradcheck_full_model(const ModelConfig& cfg, std::uint64_t seed, double tolerance, Index samples) {
  std::mt19937_64 rng(seed);
  ModelConfig c = cfg;
  c.init_seed = seed;
  c.dropout = 0.0;
  DatModel<double> model(c);
  const FeatureBundle<double> target = random_bundle(c, rng);
  const FeatureBundle<double> partner = random_bundle(c, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector<double> labels(c.window.length());
  for (Index i = 0; i < labels.size(); ++i) labels[i] = u(rng);
  std::vector<Index> core;
  for (Index r = c.window.context; r < c.window.context + c.window.core; ++r) core.push_back(r);
  // Both losses in one objective so each backward path is exercised.
  auto loss = [&] {
    const T y = model.forward(target, partner, ForwardContext{});
    return add(mse_loss(y, labels, core), probe(y));
  };
  std::string name = c.variant == ModelVariant::six_encoder ? "six_encoder model" : "dat model";
  if (samples > 0) name += " (d=" + std::to_string(c.d) + ", " + std::to_string(samples) + " sampled coordinates)";
  return timed(name, loss, model.parameters().tensors(), model.parameters().names(), tolerance, samples, seed);
}

GradCheckSuiteResult run_gradcheck_suite(std::uint64_t seed, double tolerance, std::ostream* log) {
  std::mt19937_64 rng(seed);
  GradCheckSuiteResult out;
  auto push = [&](GradCheckEntry e) {
    out.max_rel_err = std::max(out.max_rel_err, e.result.max_rel_err);
    out.passed = out.passed && e.result.passed;
    if (log) {
      *log << e.name << ": max_rel_err " << e.result.max_rel_err << " over " << e.result.coordinates
           << " coordinates (worst " << e.result.worst << ", " << e.seconds << " s) "
           << (e.result.passed ? "ok" : "FAIL") << '\n';
    }
    out.entries.push_back(std::move(e));
  };

  {
    const T a = random_tensor(3, 4, rng, true), b = random_tensor(4, 5, rng, true), c = random_tensor(3, 4, rng, true);
    const T g = random_tensor(1, 4, rng, true), beta = random_tensor(1, 4, rng, true);
    push(timed("matmul", [&] { return probe(matmul(a, b)); }, {a, b}, {"a", "b"}, tolerance));
    push(timed("softmax", [&] { return probe(softmax(a, -1)); }, {a}, {"x"}, tolerance));
    push(timed("layer_norm", [&] { return probe(layer_norm(a, g, beta)); }, {a, g, beta}, {"x", "gamma", "beta"},
               tolerance));
    push(timed("gelu", [&] { return probe(gelu(a)); }, {a}, {"x"}, tolerance));
    push(timed("concat/slice", [&] { return probe(slice(concat({a, c}, 1), 1, 2, 5)); }, {a, c}, {"a", "c"},
               tolerance));
    push(timed("elementwise", [&] { return probe(div(mul(a, c), add(mul(c, c), T::scalar(1.0)))); }, {a, c},
               {"a", "c"}, tolerance));
  }
  {
    ParameterStore<double> store(seed);
    MultiHeadAttention<double> mha(store, "attn", 16, 4, 0.0);
    const T q = random_tensor(8, 16, rng, true), kv = random_tensor(8, 16, rng, true);
    auto params = store.tensors();
    auto names = store.names();
    params.insert(params.end(), {q, kv});
    names.insert(names.end(), {"query_in", "kv_in"});
    push(timed("attention", [&] { return probe(mha(q, kv, {})); }, params, names, tolerance));
  }
  {
    ParameterStore<double> store(seed + 1);
    DialogueAwareLayer<double> dae(store, "dae", 16, BlockConfig{4, 2, 0.0, 1e-5});
    const T t = random_tensor(4, 16, rng, true), p = random_tensor(4, 16, rng, true);
    auto params = store.tensors();
    auto names = store.names();
    params.insert(params.end(), {t, p});
    names.insert(names.end(), {"target", "partner"});
    push(timed("dialogue-aware layer", [&] { return probe(dae(t, p, {})); }, params, names, tolerance));
  }
  {
    const ModelConfig cfg = toy_model_config();
    ParameterStore<double> store(seed + 2);
    ModalityGroupFusion<double> mgf(store, "mgf", cfg, true);
    const FeatureBundle<double> bundle = random_bundle(cfg, rng);
    push(timed("modality-group fusion", [&] {
      const auto g = mgf(bundle, {});
      return add(probe(g.audio), probe(g.video));
    }, store.tensors(), store.names(), tolerance));
  }
  {
    const T x = random_tensor(12, 1, rng, true);
    Vector<double> y = Vector<double>::LinSpaced(12, 0.1, 0.9);
    std::vector<Index> rows{1, 2, 3, 5, 8, 9, 10};
    push(timed("ccc loss", [&] { return ccc_loss(x, y, rows); }, {x}, {"pred"}, tolerance));
    push(timed("mse loss", [&] { return mse_loss(x, y, rows); }, {x}, {"pred"}, tolerance));
  }
  push(gradcheck_full_model(toy_model_config(), seed, tolerance));
  ModelConfig six = toy_model_config();
  six.variant = ModelVariant::six_encoder;
  push(gradcheck_full_model(six, seed, tolerance));
  return out;
}

}  // namespace dat
