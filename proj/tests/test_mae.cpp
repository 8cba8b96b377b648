#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "plainpt/mae.hpp"
#include "support.hpp"

using namespace plainpt;
using namespace plainpt::testing;

namespace {

MaeConfig toy_config(std::size_t k = 8) {
  MaeConfig cfg;
  cfg.encoder = EncoderConfig{2, 16, 4, 32, 0.0, PosInjection::kFirst, NormPlacement::kPre};
  cfg.decoder = DecoderConfig{1, 16, 4, 16, 0.0};
  cfg.samples = k;
  return cfg;
}

PatchTensor random_patches(Rng& rng, std::size_t m, std::size_t k, std::size_t extra = 0) {
  PatchTensor pt;
  pt.offsets = random_tensor(rng, {m, k, 3}, -0.2, 0.2);
  pt.key_coords = random_tensor(rng, {m, 3});
  if (extra > 0) pt.extras = random_tensor(rng, {m, k, extra}, 0.0, 1.0);
  return pt;
}

double chamfer_oracle(const std::vector<Vec3>& p, const std::vector<Vec3>& q) {
  auto one_way = [](const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    double total = 0.0;
    for (const auto& x : a) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& y : b) {
        const double d = (x[0] - y[0]) * (x[0] - y[0]) + (x[1] - y[1]) * (x[1] - y[1]) + (x[2] - y[2]) * (x[2] - y[2]);
        best = std::min(best, d);
      }
      total += best;
    }
    return total / static_cast<double>(a.size());
  };
  return one_way(p, q) + one_way(q, p);
}

std::vector<Vec3> random_set(Rng& rng, std::size_t n) {
  std::vector<Vec3> v(n);
  for (auto& p : v) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  return v;
}

void set_row(Tensor t, std::size_t row, const std::vector<double>& v) {
  auto d = t.mutable_data();
  std::copy(v.begin(), v.end(), d.begin() + static_cast<long>(row * v.size()));
}

}  // namespace

TEST_CASE("partition sizes follow the floor rule") {
  Rng rng(1);
  MaskPartition p = partition_patches(512, MaskRatios{}, rng);
  CHECK(p.dropped.size() == 256);
  CHECK(p.masked.size() == 128);
  CHECK(p.reserved.size() == 128);

  p = partition_patches(512, MaskRatios{0.0, 0.75, 0.25}, rng);
  CHECK(p.dropped.empty());
  CHECK(p.masked.size() == 384);
  CHECK(p.reserved.size() == 128);

  p = partition_patches(7, MaskRatios{}, rng);
  CHECK(p.dropped.size() == 3);
  CHECK(p.masked.size() == 1);
  CHECK(p.reserved.size() == 3);

  CHECK_THROWS(partition_patches(4, MaskRatios{0.5, 0.5, 0.0}, rng));
  CHECK_THROWS(partition_patches(4, MaskRatios{0.5, 0.25, 0.3}, rng));
  CHECK_THROWS(partition_patches(4, MaskRatios{-0.5, 1.25, 0.25}, rng));
  // A positive reserve ratio always leaves at least one reserved patch.
  p = partition_patches(2, MaskRatios{0.5, 0.49, 0.01}, rng);
  CHECK(p.reserved.size() == 1);
}

TEST_CASE("partitions are disjoint, covering, sorted and seeded") {
  for (std::size_t m : {4, 7, 256}) {
    for (std::uint64_t t = 0; t < 200; ++t) {
      Rng rng(t, m);
      const MaskPartition p = partition_patches(m, MaskRatios{}, rng);
      std::set<std::size_t> all;
      for (const auto* s : {&p.dropped, &p.masked, &p.reserved}) {
        CHECK(std::is_sorted(s->begin(), s->end()));
        all.insert(s->begin(), s->end());
      }
      CHECK(all.size() == m);
      CHECK(*all.rbegin() == m - 1);
    }
  }
  Rng a(5), b(5);
  CHECK(partition_patches(64, MaskRatios{}, a).masked == partition_patches(64, MaskRatios{}, b).masked);
}

TEST_CASE("chamfer distance examples") {
  const std::vector<Vec3> o = {{0, 0, 0}}, x = {{1, 0, 0}};
  CHECK(chamfer_l2(o, x) == 2.0);
  CHECK(chamfer_l2(o, o) == 0.0);
  CHECK_THROWS(chamfer_l2(o, std::vector<Vec3>{}));

  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto p = random_set(rng, 1 + rng.below(20));
    const auto q = random_set(rng, 1 + rng.below(20));
    CHECK(std::abs(chamfer_l2(p, q) - chamfer_oracle(p, q)) < 1e-12);
    CHECK(chamfer_l2(p, q) == chamfer_l2(q, p));
    CHECK(chamfer_l2(p, q) > 0.0);
    auto shuffled = p;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(chamfer_l2(p, shuffled) == 0.0);
  }
}

TEST_CASE("batched chamfer matches the per-patch value") {
  Rng rng(3);
  const Tensor pred = random_tensor(rng, {3, 5, 3});
  const Tensor target = random_tensor(rng, {3, 5, 3});
  double expect = 0.0;
  for (std::size_t m = 0; m < 3; ++m) {
    std::vector<Vec3> p(5), q(5);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t a = 0; a < 3; ++a) {
        p[i][a] = pred[(m * 5 + i) * 3 + a];
        q[i][a] = target[(m * 5 + i) * 3 + a];
      }
    expect += chamfer_oracle(p, q);
  }
  CHECK(chamfer_l2_batch(pred, target).item() == doctest::Approx(expect / 3).epsilon(1e-14));
}

TEST_CASE("mae forward sequence lengths") {
  MaeConfig cfg = toy_config(4);
  ParameterStore store(4);
  MaeModel model(cfg, store);
  Rng rng(5);
  const PatchTensor pt = random_patches(rng, 256, 4);
  Rng part_rng(6);
  const MaskPartition part = partition_patches(256, MaskRatios{}, part_rng);
  const Reconstruction rec = model.forward(pt, part, ForwardContext{});
  CHECK(rec.encoder_out.dim(0) == 64);
  CHECK(rec.decoder_in.dim(0) == 128);
  CHECK(rec.pred_offsets.shape() == Shape{64, 4, 3});
  CHECK(rec.target_offsets.shape() == Shape{64, 4, 3});
  CHECK(rec.masked == part.masked);
  // Targets are the masked patches' own offsets in ascending patch order.
  for (std::size_t i = 0; i < part.masked.size(); ++i) {
    CHECK(rec.target_offsets[i * 12 + 5] == pt.offsets[part.masked[i] * 12 + 5]);
  }
}

TEST_CASE("mae forward rejects mismatched inputs") {
  ParameterStore store(7);
  MaeModel model(toy_config(), store);
  Rng rng(8);
  const PatchTensor pt = random_patches(rng, 8, 8);
  Rng part_rng(9);
  CHECK_THROWS(model.forward(pt, partition_patches(12, MaskRatios{}, part_rng), ForwardContext{}));
  const PatchTensor wrong_k = random_patches(rng, 8, 6);
  CHECK_THROWS(model.forward(wrong_k, partition_patches(8, MaskRatios{}, part_rng), ForwardContext{}));
}

TEST_CASE("mae loss of a lone masked patch is its chamfer distance") {
  Rng rng(10);
  const Tensor pred = random_tensor(rng, {1, 6, 3});
  const Tensor target = random_tensor(rng, {1, 6, 3});
  Reconstruction rec;
  rec.pred_offsets = pred;
  rec.target_offsets = target;
  std::vector<Vec3> p(6), q(6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t a = 0; a < 3; ++a) {
      p[i][a] = pred[i * 3 + a];
      q[i][a] = target[i * 3 + a];
    }
  CHECK(mae_loss(rec).item() == doctest::Approx(chamfer_l2(p, q)).epsilon(1e-14));
  rec.pred_offsets = target;
  CHECK(mae_loss(rec).item() == 0.0);
}

TEST_CASE("nothing masked means zero loss") {
  ParameterStore store(11);
  MaeModel model(toy_config(), store);
  Rng rng(12);
  const PatchTensor pt = random_patches(rng, 6, 8);
  Rng part_rng(13);
  const MaskPartition part = partition_patches(6, MaskRatios{0.0, 0.0, 1.0}, part_rng);
  CHECK(mae_loss(model.forward(pt, part, ForwardContext{})).item() == 0.0);
}

TEST_CASE("a zero head weight predicts the head bias for every patch") {
  ParameterStore store(14);
  MaeModel model(toy_config(4), store);
  Tensor w = model.head().weight;
  for (double& v : w.mutable_data()) v = 0.0;
  Tensor b = model.head().bias;
  Rng rng(15);
  for (double& v : b.mutable_data()) v = rng.uniform(-1, 1);
  const PatchTensor pt = random_patches(rng, 8, 4);
  Rng part_rng(16);
  const Reconstruction rec = model.forward(pt, partition_patches(8, MaskRatios{}, part_rng), ForwardContext{});
  for (std::size_t m = 0; m < rec.masked.size(); ++m)
    for (std::size_t j = 0; j < 12; ++j) CHECK(rec.pred_offsets[m * 12 + j] == b[j]);
}

TEST_CASE("dropped patches never reach the model") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ParameterStore store(seed);
    MaeConfig cfg = toy_config();
    cfg.extra_channels = 3;
    MaeModel model(cfg, store);
    Rng rng(seed, 17);
    const PatchTensor pt = random_patches(rng, 12, 8, 3);
    Rng part_rng(seed, 18);
    const MaskPartition part = partition_patches(12, MaskRatios{}, part_rng);
    const Reconstruction before = model.forward(pt, part, ForwardContext{});

    PatchTensor changed{Tensor::from(pt.offsets.shape(), values(pt.offsets)),
                        Tensor::from(pt.extras.shape(), values(pt.extras)),
                        Tensor::from(pt.key_coords.shape(), values(pt.key_coords))};
    for (std::size_t d : part.dropped) {
      set_row(changed.key_coords, d, {50.0, -50.0, 7.0});
      for (std::size_t j = 0; j < 8; ++j) {
        auto off = changed.offsets.mutable_data();
        auto ex = changed.extras.mutable_data();
        for (std::size_t a = 0; a < 3; ++a) {
          off[(d * 8 + j) * 3 + a] = rng.uniform(-5, 5);
          ex[(d * 8 + j) * 3 + a] = rng.uniform(0, 1);
        }
      }
    }
    const Reconstruction after = model.forward(changed, part, ForwardContext{});
    CHECK(values(after.pred_offsets) == values(before.pred_offsets));
    CHECK(values(after.target_offsets) == values(before.target_offsets));
    CHECK(values(after.encoder_out) == values(before.encoder_out));
    CHECK(values(after.decoder_in) == values(before.decoder_in));
    CHECK(mae_loss(after).item() == mae_loss(before).item());
  }
}

TEST_CASE("masked keys reach the decoder only, masked points only the targets") {
  ParameterStore store(19);
  MaeModel model(toy_config(), store);
  Rng rng(20);
  const PatchTensor pt = random_patches(rng, 12, 8);
  Rng part_rng(21);
  const MaskPartition part = partition_patches(12, MaskRatios{}, part_rng);
  const Reconstruction base = model.forward(pt, part, ForwardContext{});
  const std::size_t victim = part.masked[0];

  PatchTensor moved_key{pt.offsets, Tensor(), Tensor::from(pt.key_coords.shape(), values(pt.key_coords))};
  set_row(moved_key.key_coords, victim, {0.9, 0.9, -0.9});
  const Reconstruction k = model.forward(moved_key, part, ForwardContext{});
  CHECK(values(k.encoder_out) == values(base.encoder_out));
  CHECK(values(k.decoder_in) != values(base.decoder_in));
  CHECK(values(k.target_offsets) == values(base.target_offsets));

  PatchTensor moved_pts{Tensor::from(pt.offsets.shape(), values(pt.offsets)), Tensor(), pt.key_coords};
  auto off = moved_pts.offsets.mutable_data();
  for (std::size_t j = 0; j < 8 * 3; ++j) off[victim * 24 + j] += 0.05;
  const Reconstruction p = model.forward(moved_pts, part, ForwardContext{});
  CHECK(values(p.encoder_out) == values(base.encoder_out));
  CHECK(values(p.decoder_in) == values(base.decoder_in));
  CHECK(values(p.pred_offsets) == values(base.pred_offsets));
  CHECK(values(p.target_offsets) != values(base.target_offsets));
}

TEST_CASE("colors feed the encoder but are not reconstructed") {
  MaeConfig cfg = toy_config();
  cfg.extra_channels = 3;
  ParameterStore store(22);
  MaeModel model(cfg, store);
  Rng rng(23);
  const PatchTensor pt = random_patches(rng, 8, 8, 3);
  Rng part_rng(24);
  const MaskPartition part = partition_patches(8, MaskRatios{}, part_rng);
  const Reconstruction rec = model.forward(pt, part, ForwardContext{});
  CHECK(rec.pred_offsets.dim(2) == 3);

  PatchTensor recolored{pt.offsets, Tensor::from(pt.extras.shape(), values(pt.extras)), pt.key_coords};
  auto ex = recolored.extras.mutable_data();
  for (std::size_t j = 0; j < 24; ++j) ex[part.reserved[0] * 24 + j] = 1.0 - ex[part.reserved[0] * 24 + j];
  CHECK(values(model.forward(recolored, part, ForwardContext{}).encoder_out) != values(rec.encoder_out));
}

TEST_CASE("the loss reaches every parameter group") {
  ParameterStore store(25);
  MaeModel model(toy_config(), store);
  Rng rng(26);
  const PatchTensor pt = random_patches(rng, 8, 8);
  Rng part_rng(27);
  backward(mae_loss(model.forward(pt, partition_patches(8, MaskRatios{}, part_rng), ForwardContext{})));
  for (const std::string prefix :
       {"encoder.patch_embed", "encoder.pos_embed", "encoder.transformer", "decoder.projection", "decoder.mask_token",
        "decoder.pos_embed", "decoder.transformer", "decoder.norm", "decoder.head"}) {
    bool touched = false;
    for (const auto& [name, p] : store.all()) {
      if (name.rfind(prefix, 0) != 0 || !p.has_grad()) continue;
      for (double g : p.grad()) touched = touched || g != 0.0;
    }
    CAPTURE(prefix);
    CHECK(touched);
  }
}
