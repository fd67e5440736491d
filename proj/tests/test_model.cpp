#include "doctest.h"

#include <random>

#include "dat/gradcheck_suite.hpp"
#include "dat/losses.hpp"
#include "dat/model.hpp"

using namespace dat;

namespace {

template <typename S>
FeatureBundle<S> random_bundle(const ModelConfig& cfg, Index length, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureBundle<S> b;
  for (std::size_t i = 0; i < kStreamCount; ++i) {
    Matrix<S> m(length, cfg.feature_dims[i]);
    for (Index j = 0; j < m.size(); ++j) m.data()[j] = static_cast<S>(n(rng));
    b.streams[i] = Tensor<S>::from_matrix(m);
  }
  return b;
}

ModelConfig random_config(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 1);
  ModelConfig cfg = toy_model_config();
  const Index heads[] = {1, 2, 4};
  cfg.heads = heads[std::uniform_int_distribution<int>(0, 2)(rng)];
  cfg.d = cfg.heads * std::uniform_int_distribution<Index>(1, 4)(rng);
  cfg.dae_layers = std::uniform_int_distribution<Index>(0, 3)(rng);
  cfg.encoder_depth = std::uniform_int_distribution<Index>(1, 2)(rng);
  cfg.ffn_mult = std::uniform_int_distribution<Index>(1, 4)(rng);
  cfg.head_hidden = std::uniform_int_distribution<Index>(0, 9)(rng);
  for (auto& dim : cfg.feature_dims) dim = std::uniform_int_distribution<Index>(1, 20)(rng);
  cfg.use_mgf = pick(rng);
  cfg.use_dae = pick(rng);
  cfg.share_mgf_weights = pick(rng);
  cfg.variant = pick(rng) && pick(rng) ? ModelVariant::six_encoder : ModelVariant::dat;
  return cfg;
}

}  // namespace

TEST_CASE("output and intermediate shapes") {
  std::mt19937_64 rng(1);
  ModelConfig cfg = toy_model_config();
  DatModel<double> model(cfg);
  for (Index length : {1, 4, 9}) {
    const auto t = random_bundle<double>(cfg, length, rng);
    const auto p = random_bundle<double>(cfg, length, rng);
    ForwardTrace trace;
    const auto y = model.forward(t, p, {}, &trace);
    CHECK(y.shape() == Shape{length, 1});
    CHECK(trace.audio == Shape{length, 16});
    CHECK(trace.video == Shape{length, 24});
    CHECK(trace.head_input == Shape{length, 40});
    CHECK(y.value().allFinite());
  }
  const auto t = random_bundle<double>(cfg, 4, rng);
  CHECK_THROWS_AS(model.forward(t, random_bundle<double>(cfg, 3, rng), {}), DimensionError);
}

TEST_CASE("six-encoder baseline shapes") {
  std::mt19937_64 rng(2);
  ModelConfig cfg = toy_model_config();
  cfg.variant = ModelVariant::six_encoder;
  DatModel<double> model(cfg);
  const auto t = random_bundle<double>(cfg, 5, rng);
  ForwardTrace trace;
  CHECK(model.forward(t, t, {}, &trace).shape() == Shape{5, 1});
  CHECK(trace.head_input == Shape{5, 40});
  CHECK_FALSE(model.uses_partner());
}

TEST_CASE("eval-mode forward is deterministic and predict clamps") {
  std::mt19937_64 rng(3);
  ModelConfig cfg = toy_model_config();
  cfg.dropout = 0.3;
  DatModel<float> a(cfg), b(cfg);
  const auto t = random_bundle<float>(cfg, 4, rng);
  const auto p = random_bundle<float>(cfg, 4, rng);
  CHECK(a.forward(t, p, {}).value() == a.forward(t, p, {}).value());
  CHECK(a.forward(t, p, {}).value() == b.forward(t, p, {}).value());
  const auto y = a.predict(t, p);
  CHECK(y.minCoeff() >= 0.0f);
  CHECK(y.maxCoeff() <= 1.0f);
}

TEST_CASE("swapping roles changes the output") {
  std::mt19937_64 rng(4);
  DatModel<double> model(toy_model_config());
  const auto t = random_bundle<double>(model.config(), 4, rng);
  const auto p = random_bundle<double>(model.config(), 4, rng);
  CHECK(model.forward(t, p, {}).value() != model.forward(p, t, {}).value());
}

TEST_CASE("partner is ignored without the dialogue-aware encoder") {
  std::mt19937_64 rng(5);
  ModelConfig cfg = toy_model_config();
  cfg.use_dae = false;
  DatModel<double> model(cfg);
  const auto t = random_bundle<double>(cfg, 4, rng);
  CHECK(model.forward(t, random_bundle<double>(cfg, 4, rng), {}).value() ==
        model.forward(t, random_bundle<double>(cfg, 4, rng), {}).value());
}

TEST_CASE("closed-form parameter count matches the store") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 10; ++i) {
    const ModelConfig cfg = random_config(rng);
    DatModel<double> model(cfg);
    INFO("d=" << cfg.d << " heads=" << cfg.heads << " N=" << cfg.dae_layers << " depth=" << cfg.encoder_depth
              << " mgf=" << cfg.use_mgf << " dae=" << cfg.use_dae);
    CHECK(param_count(cfg) == model.parameters().count());
  }
  ModelConfig full_scale;
  const Index n = param_count(full_scale);
  MESSAGE("default-config parameter count: " << n);
  CHECK(n > 0);
}

TEST_CASE("ablation arms nest") {
  ModelConfig base = toy_model_config();
  base.use_mgf = false;
  base.use_dae = false;
  ModelConfig mgf = base, dae = base, full = base;
  mgf.use_mgf = true;
  dae.use_dae = true;
  full.use_mgf = full.use_dae = true;
  CHECK(param_count(mgf) > param_count(base));
  CHECK(param_count(dae) > param_count(base));
  CHECK(param_count(full) > param_count(mgf));
  CHECK(param_count(full) > param_count(dae));
}

TEST_CASE("every parameter receives gradient") {
  std::mt19937_64 rng(7);
  for (auto variant : {ModelVariant::dat, ModelVariant::six_encoder}) {
    ModelConfig cfg = toy_model_config();
    cfg.variant = variant;
    DatModel<double> model(cfg);
    const auto t = random_bundle<double>(cfg, 4, rng);
    const auto p = random_bundle<double>(cfg, 4, rng);
    Vector<double> labels = Vector<double>::LinSpaced(4, 0.1, 0.9);
    std::vector<Index> rows{0, 1, 2, 3};
    {
      Tape<double> tape;
      TapeScope<double> scope(tape);
      tape.backward(mse_loss(model.forward(t, p, {}), labels, rows));
    }
    for (const auto& e : model.parameters().entries()) {
      INFO(e.name);
      REQUIRE(e.tensor.has_grad());
      CHECK(e.tensor.grad().cwiseAbs().maxCoeff() > 0.0);
    }
  }
}

TEST_CASE("full-model gradient check at toy scale") {
  const auto e = gradcheck_full_model(toy_model_config(), 1);
  INFO(e.result.worst << " " << e.result.max_rel_err << " a=" << e.result.worst_analytic << " n=" << e.result.worst_numeric);
  CHECK(e.result.max_rel_err < 1e-4);
  ModelConfig six = toy_model_config();
  six.variant = ModelVariant::six_encoder;
  const auto b = gradcheck_full_model(six, 1);
  INFO(b.result.worst << " " << b.result.max_rel_err);
  CHECK(b.result.max_rel_err < 1e-4);
}

TEST_CASE("shared weights across roles") {
  ModelConfig cfg = toy_model_config();
  cfg.share_mgf_weights = true;
  DatModel<double> model(cfg);
  CHECK_NOTHROW(model.parameters().find("shared.E.proj.weight"));
  CHECK_THROWS(model.parameters().find("partner.E.proj.weight"));
  CHECK(param_count(cfg) < param_count(toy_model_config()));
}

TEST_CASE("invalid configs are rejected") {
  ModelConfig cfg = toy_model_config();
  cfg.heads = 3;
  CHECK_THROWS_AS(DatModel<double>{cfg}, UsageError);
  cfg = toy_model_config();
  cfg.max_len = 2;
  CHECK_THROWS_AS(DatModel<double>{cfg}, UsageError);
}
