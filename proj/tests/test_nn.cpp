#include "doctest.h"

#include <algorithm>
#include <random>

#include "dat/grad_check.hpp"
#include "dat/model.hpp"

using namespace dat;
using T = Tensor<double>;

namespace {

T random_input(Index rows, Index cols, std::mt19937_64& rng, bool grad = false) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return T::from_matrix(m, grad);
}

void fill(ParameterStore<double>& store, const std::string& name, double v) {
  T t = store.find(name);
  t.mutable_value().setConstant(v);
}

T weighted_sum(const T& y) {
  Vector<double> w = Vector<double>::LinSpaced(y.size(), 0.5, 1.5);
  return sum(mul(y, T(y.shape(), w)));
}

}  // namespace

TEST_CASE("linear") {
  ParameterStore<double> store;
  Linear<double> lin(store, "lin", 2, 3);
  CHECK(store.count() == 9);
  CHECK(Linear<double>::param_count(2, 3) == 9);

  ParameterStore<double> s2;
  Linear<double> id(s2, "id", 2, 2);
  T w = s2.find("id.weight");
  w.mutable_matrix() = Matrix<double>::Identity(2, 2);
  const T x({3, 2}, Vector<double>{{1, 2, 3, 4, 5, 6}});
  CHECK(id(x).value() == x.value());
  CHECK_THROWS_AS(id(T::zeros({3, 3})), DimensionError);
}

TEST_CASE("parameter store rejects duplicate names") {
  ParameterStore<double> store;
  store.constant("a", {2}, 0.0);
  CHECK_THROWS_AS(store.constant("a", {2}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(store.find("b"), std::out_of_range);
}

TEST_CASE("attention uniform softmax example") {
  ParameterStore<double> store;
  MultiHeadAttention<double> mha(store, "mha", 1, 1, 0.0);
  for (const char* p : {"mha.query.weight", "mha.key.weight", "mha.value.weight", "mha.output.weight"})
    fill(store, p, 1.0);
  const T q({1, 1}, Vector<double>{{0.0}});
  const T kv({2, 1}, Vector<double>{{1.0, 3.0}});
  const auto w = mha.weights(q, kv);
  REQUIRE(w.size() == 1);
  CHECK(w[0](0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w[0](0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mha(q, kv, {}).item() == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("attention rejects head counts that do not divide the width") {
  ParameterStore<double> store;
  CHECK_THROWS_AS(MultiHeadAttention<double>(store, "bad", 10, 4, 0.0), DimensionError);
}

TEST_CASE("attention weights are row-stochastic and outputs are convex combinations") {
  std::mt19937_64 rng(1);
  ParameterStore<double> store(2);
  MultiHeadAttention<double> mha(store, "mha", 16, 4, 0.0);
  const T q = random_input(5, 16, rng);
  const T kv = random_input(7, 16, rng);
  for (const auto& w : mha.weights(q, kv)) {
    for (Index r = 0; r < w.rows(); ++r) CHECK(std::abs(w.row(r).sum() - 1.0) < 1e-12);
  }

  // Single head with W_O = I, zero output bias: each output coordinate lies
  // within the range of the matching value column.
  ParameterStore<double> s1(3);
  MultiHeadAttention<double> one(s1, "one", 16, 1, 0.0);
  T wo = s1.find("one.output.weight");
  wo.mutable_matrix() = Matrix<double>::Identity(16, 16);
  const Matrix<double> values = one.value()(kv).matrix();
  const Matrix<double> out = one(q, kv, {}).matrix();
  for (Index c = 0; c < 16; ++c) {
    const double lo = values.col(c).minCoeff(), hi = values.col(c).maxCoeff();
    for (Index r = 0; r < out.rows(); ++r) {
      CHECK(out(r, c) >= lo - 1e-12);
      CHECK(out(r, c) <= hi + 1e-12);
    }
  }
}

TEST_CASE("cross-attention is invariant to key/value row order") {
  std::mt19937_64 rng(4);
  ParameterStore<double> store(5);
  MultiHeadAttention<double> mha(store, "mha", 8, 2, 0.0);
  const T q = random_input(3, 8, rng);
  const T kv = random_input(6, 8, rng);
  const T permuted = gather_rows(kv, {5, 2, 0, 4, 1, 3});
  CHECK((mha(q, kv, {}).value() - mha(q, permuted, {}).value()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identical query rows give identical output rows") {
  std::mt19937_64 rng(6);
  ParameterStore<double> store(7);
  MultiHeadAttention<double> mha(store, "mha", 8, 2, 0.0);
  const T row = random_input(1, 8, rng);
  const T q = concat({row, row, row}, 0);
  const Matrix<double> out = mha(q, random_input(4, 8, rng), {}).matrix();
  CHECK(out.row(0) == out.row(1));
  CHECK(out.row(1) == out.row(2));
}

TEST_CASE("attention gradient check") {
  std::mt19937_64 rng(8);
  ParameterStore<double> store(9);
  MultiHeadAttention<double> mha(store, "mha", 16, 4, 0.0);
  const T q = random_input(8, 16, rng, true);
  const T kv = random_input(8, 16, rng, true);
  auto params = store.tensors();
  params.push_back(q);
  params.push_back(kv);
  const auto r = grad_check<double>([&] { return weighted_sum(mha(q, kv, {})); }, params);
  INFO(r.worst << " " << r.max_rel_err);
  CHECK(r.max_rel_err < 1e-5);
}

TEST_CASE("encoder layer") {
  std::mt19937_64 rng(10);
  ParameterStore<double> store(11);
  TransformerEncoderLayer<double> layer(store, "enc", 8, BlockConfig{2, 4, 0.0, 1e-5});
  CHECK(store.count() == TransformerEncoderLayer<double>::param_count(8, 4));
  const T x = random_input(4, 8, rng, true);
  CHECK(layer(x, {}).shape() == Shape{4, 8});

  SUBCASE("zeroed sublayers leave the residual path") {
    fill(store, "enc.attn.output.weight", 0.0);
    fill(store, "enc.ffn.down.weight", 0.0);
    CHECK(layer(x, {}).value() == x.value());
  }
  SUBCASE("gradient check") {
    auto params = store.tensors();
    params.push_back(x);
    const auto r = grad_check<double>([&] { return weighted_sum(layer(x, {})); }, params);
    INFO(r.worst << " " << r.max_rel_err);
    CHECK(r.max_rel_err < 1e-4);
  }
  SUBCASE("dropout only in training mode") {
    ParameterStore<double> s2(11);
    TransformerEncoderLayer<double> drop(s2, "enc", 8, BlockConfig{2, 4, 0.5, 1e-5});
    std::mt19937_64 drng(0);
    CHECK(drop(x, {}).value() == drop(x, {}).value());
    CHECK(drop(x, {}).value() != drop(x, ForwardContext{true, &drng}).value());
  }
}

TEST_CASE("positional encoding") {
  PositionalEncoding<double> pe(50, 6);
  const auto& t = pe.table();
  CHECK(t.cwiseAbs().maxCoeff() <= 1.0);
  CHECK(t(0, 0) == 0.0);
  CHECK(t(0, 1) == 1.0);
  CHECK(t(3, 0) == doctest::Approx(std::sin(3.0)));
  CHECK(t(3, 3) == doctest::Approx(std::cos(3.0 / std::pow(10000.0, 2.0 / 6.0))));
  const T x = T::zeros({4, 6});
  CHECK(pe(x, false).value() == x.value());
  CHECK(pe(x, true).matrix() == t.topRows(4));
  CHECK_THROWS_AS(pe(T::zeros({51, 6})), DimensionError);
  CHECK(PositionalEncoding<double>(50, 6).table() == t);
}

TEST_CASE("dialogue-aware layer") {
  std::mt19937_64 rng(12);
  ParameterStore<double> store(13);
  DialogueAwareLayer<double> dae(store, "dae", 16, BlockConfig{4, 2, 0.0, 1e-5});
  const T target = random_input(4, 16, rng, true);
  const T partner = random_input(4, 16, rng, true);
  CHECK(dae(target, partner, {}).shape() == Shape{4, 16});
  CHECK_THROWS_AS(dae(target, random_input(3, 16, rng), {}), DimensionError);

  SUBCASE("gradient check w.r.t. both roles") {
    auto params = store.tensors();
    params.push_back(target);
    params.push_back(partner);
    const auto r = grad_check<double>([&] { return weighted_sum(dae(target, partner, {})); }, params);
    INFO(r.worst << " " << r.max_rel_err);
    CHECK(r.max_rel_err < 1e-4);
  }

  SUBCASE("zero cross-attention reduces to target + FFN(Norm(target))") {
    fill(store, "dae.cross.output.weight", 0.0);
    fill(store, "dae.cross.output.bias", 0.0);
    const T normed = layer_norm(target, store.find("dae.norm2.gamma"), store.find("dae.norm2.beta"), 1e-5);
    const T hidden = gelu(add_bias(matmul(normed, store.find("dae.ffn.up.weight")), store.find("dae.ffn.up.bias")));
    const T ffn = add_bias(matmul(hidden, store.find("dae.ffn.down.weight")), store.find("dae.ffn.down.bias"));
    CHECK(dae(target, partner, {}).value() == add(target, ffn).value());
  }

  SUBCASE("constant partner rows give identical attention rows") {
    const T row = random_input(1, 16, rng);
    const T flat = concat({row, row, row, row}, 0);
    const Matrix<double> attn = dae.cross_attention()(flat, layer_norm(target, store.find("dae.norm1.gamma"),
                                                                        store.find("dae.norm1.beta"), 1e-5),
                                                      {})
                                    .matrix();
    for (Index r = 1; r < 4; ++r) CHECK(attn.row(r) == attn.row(0));
  }
}
