#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "plainpt/transformer.hpp"
#include "support.hpp"

using namespace plainpt;
using namespace plainpt::testing;

namespace {

std::vector<double> permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  const std::size_t c = t.numel() / t.dim(0);
  std::vector<double> out;
  for (std::size_t i : perm) out.insert(out.end(), t.data().begin() + i * c, t.data().begin() + (i + 1) * c);
  return out;
}

void zero(Tensor t) {
  for (double& v : t.mutable_data()) v = 0.0;
}

}  // namespace

TEST_CASE("encoder config validation and defaults") {
  EncoderConfig cfg;
  CHECK(cfg.layers == 3);
  CHECK(cfg.channels == 256);
  CHECK(cfg.heads == 4);
  CHECK(cfg.ffn_channels == 512);
  CHECK(cfg.dropout == 0.1);
  CHECK(cfg.pos_injection == PosInjection::kFirst);
  CHECK_NOTHROW(cfg.validate());
  cfg.heads = 3;
  CHECK_THROWS(cfg.validate());
  CHECK(parse_pos_injection(to_string(PosInjection::kAll)) == PosInjection::kAll);
  CHECK(parse_norm_placement(to_string(NormPlacement::kPost)) == NormPlacement::kPost);
  CHECK_THROWS(parse_pos_injection("sometimes"));
}

TEST_CASE("attention over a single token is the value path") {
  ParameterStore store(1);
  MultiHeadAttention attn(store, "attn", 8, 2, 0.0);
  Rng rng(2);
  const Tensor x = random_tensor(rng, {1, 8});
  std::vector<Tensor> weights;
  const Tensor y = attn(x, ForwardContext{}, &weights);
  REQUIRE(weights.size() == 2);
  for (const auto& w : weights) CHECK(w[0] == 1.0);
  const Tensor expect = attn.output()(attn.value()(x));
  CHECK(max_abs_diff(y.data(), expect.data()) < 1e-15);
}

TEST_CASE("attention weights are row-stochastic and match a hand oracle") {
  ParameterStore store(3);
  MultiHeadAttention attn(store, "attn", 8, 2, 0.0);
  Rng rng(4);
  const Tensor x = random_tensor(rng, {5, 8});
  std::vector<Tensor> weights;
  attn(x, ForwardContext{}, &weights);
  for (const auto& w : weights) {
    CHECK(w.shape() == Shape{5, 5});
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(w[i * 5 + j] >= 0.0);
        s += w[i * 5 + j];
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }

  // Recompute head 0 with plain loops from the stored projections.
  const std::string names[] = {"attn.q.weight", "attn.k.weight"};
  const Tensor wq = store.get(names[0]);
  const Tensor wk = store.get(names[1]);
  const std::size_t d = 4;
  std::vector<double> q(5 * d), k(5 * d);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t a = 0; a < 8; ++a) {
        q[i * d + c] += x[i * 8 + a] * wq[a * 8 + c];
        k[i * d + c] += x[i * 8 + a] * wk[a * 8 + c];
      }
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<double> s(5);
    double mx = -1e300, z = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      for (std::size_t c = 0; c < d; ++c) s[j] += q[i * d + c] * k[j * d + c];
      s[j] /= std::sqrt(static_cast<double>(d));
      mx = std::max(mx, s[j]);
    }
    for (double& v : s) z += (v = std::exp(v - mx));
    for (std::size_t j = 0; j < 5; ++j) CHECK(weights[0][i * 5 + j] == doctest::Approx(s[j] / z).epsilon(1e-12));
  }
}

TEST_CASE("attention and layers treat identical rows identically") {
  ParameterStore store(5);
  EncoderConfig cfg{1, 8, 2, 16, 0.0, PosInjection::kFirst, NormPlacement::kPre};
  TransformerLayer layer(store, "layer", cfg);
  std::vector<double> v(4 * 8, 0.0);
  Rng rng(6);
  for (std::size_t a = 0; a < 8; ++a) v[a] = v[8 + a] = rng.uniform(-1, 1);
  for (std::size_t a = 16; a < 32; ++a) v[a] = rng.uniform(-1, 1);
  const Tensor y = layer(Tensor::from({4, 8}, v), ForwardContext{});
  CHECK(std::equal(y.data().begin(), y.data().begin() + 8, y.data().begin() + 8));
}

TEST_CASE("zeroed output projections make a pre-norm layer the identity") {
  ParameterStore store(7);
  EncoderConfig cfg{1, 8, 2, 16, 0.0, PosInjection::kFirst, NormPlacement::kPre};
  TransformerLayer layer(store, "layer", cfg);
  zero(layer.attention().output().weight);
  zero(layer.attention().output().bias);
  zero(layer.ffn_output().weight);
  zero(layer.ffn_output().bias);
  Rng rng(8);
  const Tensor x = random_tensor(rng, {3, 8});
  CHECK(values(layer(x, ForwardContext{})) == values(x));
}

TEST_CASE("encoder with no layers returns features plus embeddings") {
  ParameterStore store;
  EncoderConfig cfg{0, 8, 2, 16, 0.0, PosInjection::kFirst, NormPlacement::kPre};
  TransformerEncoder enc(store, "enc", cfg);
  Rng rng(9);
  const Tensor f = random_tensor(rng, {3, 8});
  const Tensor e = random_tensor(rng, {3, 8});
  CHECK(values(enc(f, e, ForwardContext{})) == values(add(f, e)));
}

TEST_CASE("injection policy is irrelevant for one layer or zero embeddings") {
  Rng rng(10);
  const Tensor f = random_tensor(rng, {4, 8});
  const Tensor e = random_tensor(rng, {4, 8});
  const Tensor z = Tensor::zeros({4, 8});
  ParameterStore s1(11), s2(11);
  TransformerEncoder first(s1, "enc", EncoderConfig{1, 8, 2, 16, 0.0, PosInjection::kFirst, NormPlacement::kPre});
  TransformerEncoder all(s2, "enc", EncoderConfig{1, 8, 2, 16, 0.0, PosInjection::kAll, NormPlacement::kPre});
  CHECK(values(first(f, e, ForwardContext{})) == values(all(f, e, ForwardContext{})));

  ParameterStore s3(12), s4(12);
  TransformerEncoder first3(s3, "enc", EncoderConfig{3, 8, 2, 16, 0.0, PosInjection::kFirst, NormPlacement::kPre});
  TransformerEncoder all3(s4, "enc", EncoderConfig{3, 8, 2, 16, 0.0, PosInjection::kAll, NormPlacement::kPre});
  CHECK(values(first3(f, z, ForwardContext{})) == values(all3(f, z, ForwardContext{})));
  CHECK(values(first3(f, e, ForwardContext{})) != values(all3(f, e, ForwardContext{})));
}

TEST_CASE("encoder is permutation equivariant") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (auto inj : {PosInjection::kFirst, PosInjection::kAll}) {
      ParameterStore store(seed);
      TransformerEncoder enc(store, "enc", EncoderConfig{3, 16, 4, 32, 0.1, inj, NormPlacement::kPre});
      Rng rng(seed, 13);
      const Tensor f = random_tensor(rng, {7, 16});
      const Tensor e = random_tensor(rng, {7, 16});
      std::vector<std::size_t> perm(7);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(std::span<std::size_t>(perm));
      const Tensor y = enc(f, e, ForwardContext{});
      const Tensor yp = enc(Tensor::from({7, 16}, permute_rows(f, perm)), Tensor::from({7, 16}, permute_rows(e, perm)),
                            ForwardContext{});
      CHECK(max_abs_diff(yp.data(), permute_rows(y, perm)) < 1e-9);
      CHECK(y.shape() == f.shape());
    }
  }
}

TEST_CASE("dropout only acts in training mode") {
  ParameterStore store(14);
  TransformerEncoder enc(store, "enc", EncoderConfig{2, 8, 2, 16, 0.5, PosInjection::kFirst, NormPlacement::kPre});
  Rng rng(15);
  const Tensor f = random_tensor(rng, {4, 8});
  const Tensor e = random_tensor(rng, {4, 8});
  const Tensor eval1 = enc(f, e, ForwardContext{});
  const Tensor eval2 = enc(f, e, ForwardContext{});
  CHECK(values(eval1) == values(eval2));
  Rng a(1), b(1);
  const Tensor t1 = enc(f, e, ForwardContext{true, &a});
  const Tensor t2 = enc(f, e, ForwardContext{true, &b});
  CHECK(values(t1) == values(t2));
  CHECK(values(t1) != values(eval1));
}

TEST_CASE("shape mismatches are rejected") {
  ParameterStore store;
  TransformerEncoder enc(store, "enc", EncoderConfig{1, 8, 2, 16, 0.0, PosInjection::kFirst, NormPlacement::kPre});
  CHECK_THROWS_AS(enc(Tensor::zeros({3, 8}), Tensor::zeros({2, 8}), ForwardContext{}), ShapeError);
  CHECK_THROWS_AS(enc(Tensor::zeros({3, 6}), Tensor::zeros({3, 6}), ForwardContext{}), ShapeError);
}
