#include "plainpt/grad_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "plainpt/embed.hpp"
#include "plainpt/heads.hpp"
#include "plainpt/mae.hpp"
#include "plainpt/nn.hpp"
#include "plainpt/transformer.hpp"

namespace plainpt {

namespace {

using LossBuilder = std::function<std::function<Tensor()>(std::uint64_t seed, ParameterStore& store)>;

// Values bounded away from zero so ReLU and max inputs avoid their kinks.
std::vector<double> random_values(Rng& rng, std::size_t n, double lo = 0.1, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(lo, hi);
  return v;
}

Tensor param(ParameterStore& store, const std::string& name, Shape shape, Rng& rng) {
  const std::size_t n = shape_numel(shape);
  return store.add(name, Tensor::from(std::move(shape), random_values(rng, n), true));
}

// sum(out * R) for a fixed random R, so every output coordinate matters.
Tensor project(const Tensor& out, std::uint64_t seed) {
  Rng rng(seed, 0x9e0);
  return sum(mul(out, Tensor::from(out.shape(), random_values(rng, out.numel()))));
}

std::vector<Vec3> random_points(Rng& rng, std::size_t n) {
  std::vector<Vec3> p(n);
  for (auto& v : p) v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  return p;
}

Tensor points_tensor(std::span<const Vec3> pts) {
  std::vector<double> v;
  for (const auto& p : pts) v.insert(v.end(), {p[0], p[1], p[2]});
  return Tensor::from({pts.size(), 3}, std::move(v));
}

struct Case {
  std::string name;
  bool primitive;
  LossBuilder build;
  double eps = 0.0;  // 0 keeps the suite-wide step
};

std::vector<Case> cases() {
  std::vector<Case> out;
  auto unary = [&](std::string name, Shape shape, std::function<Tensor(const Tensor&)> op) {
    out.push_back({std::move(name), true, [shape, op](std::uint64_t seed, ParameterStore& s) {
                     Rng rng(seed, 1);
                     Tensor x = param(s, "x", shape, rng);
                     return std::function<Tensor()>([=] { return project(op(x), seed); });
                   }});
  };
  auto binary = [&](std::string name, Shape a, Shape b, std::function<Tensor(const Tensor&, const Tensor&)> op) {
    out.push_back({std::move(name), true, [a, b, op](std::uint64_t seed, ParameterStore& s) {
                     Rng rng(seed, 2);
                     Tensor x = param(s, "a", a, rng);
                     Tensor y = param(s, "b", b, rng);
                     return std::function<Tensor()>([=] { return project(op(x, y), seed); });
                   }});
  };

  binary("matmul", {2, 3, 4}, {4, 5}, [](const Tensor& a, const Tensor& b) { return matmul(a, b); });
  binary("matmul_nt", {3, 4}, {5, 4}, [](const Tensor& a, const Tensor& b) { return matmul_nt(a, b); });
  binary("add", {3, 4}, {3, 4}, [](const Tensor& a, const Tensor& b) { return add(a, b); });
  binary("sub", {3, 4}, {3, 4}, [](const Tensor& a, const Tensor& b) { return sub(a, b); });
  binary("mul", {3, 4}, {3, 4}, [](const Tensor& a, const Tensor& b) { return mul(a, b); });
  binary("add_bias", {2, 3, 4}, {4}, [](const Tensor& a, const Tensor& b) { return add_bias(a, b); });
  unary("scale", {3, 4}, [](const Tensor& x) { return scale(x, -1.7); });
  unary("relu", {4, 5}, [](const Tensor& x) { return relu(x); });
  unary("softmax", {3, 6}, [](const Tensor& x) { return softmax(scale(x, 2.0)); });
  out.push_back({"layer_norm", true, [](std::uint64_t seed, ParameterStore& s) {
                   Rng rng(seed, 3);
                   Tensor x = param(s, "x", {4, 6}, rng);
                   Tensor g = param(s, "gamma", {6}, rng);
                   Tensor b = param(s, "beta", {6}, rng);
                   return std::function<Tensor()>([=] { return project(layer_norm(x, g, b), seed); });
                 }});
  unary("dropout", {4, 5}, [](const Tensor& x) {
    Rng rng(7, 0);
    return dropout(x, 0.3, ForwardContext{true, &rng});
  });
  unary("max_reduce_axis0", {5, 3, 4}, [](const Tensor& x) { return max_reduce(x, 0).values; });
  unary("max_reduce_axis1", {3, 6, 4}, [](const Tensor& x) { return max_reduce(x, 1).values; });
  binary("concat_last", {3, 2}, {3, 4}, [](const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {a, b, a};
    return concat_last(parts);
  });
  binary("concat_rows", {2, 3}, {4, 3}, [](const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {b, a};
    return concat_rows(parts);
  });
  unary("gather_rows", {5, 3}, [](const Tensor& x) {
    const std::size_t idx[] = {4, 0, 4, 2, 2, 1};
    return gather_rows(x, idx);
  });
  unary("slice_last", {3, 6}, [](const Tensor& x) { return slice_last(x, 2, 3); });
  unary("slice_rows", {6, 3}, [](const Tensor& x) { return slice_rows(x, 1, 4); });
  unary("reshape", {4, 6}, [](const Tensor& x) { return mul(reshape(x, {2, 12}), reshape(x, {2, 12})); });
  unary("sum", {3, 4}, [](const Tensor& x) { return mul(sum(x), sum(x)); });
  unary("mean", {3, 4}, [](const Tensor& x) { return mul(mean(x), sum(x)); });
  out.push_back({"group_weighted_sum", true, [](std::uint64_t seed, ParameterStore& s) {
                   Rng rng(seed, 4);
                   Tensor x = param(s, "x", {3 * 4, 5}, rng);
                   std::vector<double> w(12);
                   for (double& v : w) v = rng.uniform(0.1, 1.0);
                   return std::function<Tensor()>([=] { return project(group_weighted_sum(x, w, 4), seed); });
                 }});
  out.push_back({"chamfer_l2_batch", true, [](std::uint64_t seed, ParameterStore& s) {
                   Rng rng(seed, 5);
                   Tensor p = param(s, "pred", {2, 6, 3}, rng);
                   Tensor t = param(s, "target", {2, 5, 3}, rng);
                   return std::function<Tensor()>([=] { return chamfer_l2_batch(p, t); });
                 }});
  out.push_back({"cross_entropy", true, [](std::uint64_t seed, ParameterStore& s) {
                   Rng rng(seed, 6);
                   Tensor x = param(s, "logits", {5, 4}, rng);
                   std::vector<std::size_t> labels(5);
                   for (auto& l : labels) l = rng.below(4);
                   return std::function<Tensor()>([=] { return cross_entropy(scale(x, 3.0), labels); });
                 }});

  out.push_back({"mlp", false, [](std::uint64_t seed, ParameterStore& s) {
                   Rng rng(seed, 10);
                   Mlp mlp(s, "mlp", 5, {8, 8, 6}, true);
                   Tensor x = Tensor::from({4, 5}, random_values(rng, 20));
                   return std::function<Tensor()>([=] { return project(mlp(x), seed); });
                 }});
  out.push_back({"patch_embed", false, [](std::uint64_t seed, ParameterStore& s) {
                   Rng rng(seed, 11);
                   PatchEmbed embed(s, "embed", 3, 16);
                   Tensor x = Tensor::from({3, 6, 3}, random_values(rng, 54));
                   return std::function<Tensor()>([=] { return project(embed(x), seed); });
                 }});
  for (auto kind : {PosEmbedKind::kMlp, PosEmbedKind::kGlobal}) {
    out.push_back({"pos_embed_" + std::string(to_string(kind)), false, [kind](std::uint64_t seed, ParameterStore& s) {
                     Rng rng(seed, 12);
                     PositionEmbedding pos(s, "pos", kind, 32);
                     Tensor keys = points_tensor(random_points(rng, 5));
                     return std::function<Tensor()>([=] { return project(pos(keys), seed); });
                   }});
  }
  out.push_back({"attention", false, [](std::uint64_t seed, ParameterStore& s) {
                   Rng rng(seed, 13);
                   MultiHeadAttention attn(s, "attn", 8, 2, 0.0);
                   Tensor x = Tensor::from({5, 8}, random_values(rng, 40));
                   return std::function<Tensor()>([=] { return project(attn(x, ForwardContext{}), seed); });
                 }});
  for (auto norm : {NormPlacement::kPre, NormPlacement::kPost}) {
    out.push_back({"transformer_layer_" + std::string(to_string(norm)), false,
                   [norm](std::uint64_t seed, ParameterStore& s) {
                     Rng rng(seed, 14);
                     EncoderConfig cfg{1, 8, 2, 16, 0.0, PosInjection::kFirst, norm};
                     TransformerLayer layer(s, "layer", cfg);
                     Tensor x = Tensor::from({5, 8}, random_values(rng, 40));
                     return std::function<Tensor()>([=] { return project(layer(x, ForwardContext{}), seed); });
                   }});
  }
  out.push_back({"encoder_3_layer", false, [](std::uint64_t seed, ParameterStore& s) {
                   Rng rng(seed, 15);
                   EncoderConfig cfg{3, 16, 4, 32, 0.0, PosInjection::kAll, NormPlacement::kPre};
                   TransformerEncoder enc(s, "enc", cfg);
                   Tensor x = Tensor::from({6, 16}, random_values(rng, 96));
                   Tensor p = Tensor::from({6, 16}, random_values(rng, 96));
                   return std::function<Tensor()>([=] { return project(enc(x, p, ForwardContext{}), seed); });
                 }});
  out.push_back({"segmentation_head", false, [](std::uint64_t seed, ParameterStore& s) {
                   Rng rng(seed, 16);
                   SegmentationHead head(s, "seg", 8, 4, 12, 0.0);
                   auto keys = random_points(rng, 7);
                   auto queries = random_points(rng, 10);
                   Tensor feats = Tensor::from({7, 8}, random_values(rng, 56));
                   std::vector<std::size_t> labels(10);
                   for (auto& l : labels) l = rng.below(4);
                   return std::function<Tensor()>([=] {
                     return cross_entropy(head(queries, keys, feats, InterpolationSpec{}, ForwardContext{}), labels);
                   });
                 }});
  out.push_back({"mae_loss_toy", false, [](std::uint64_t seed, ParameterStore& s) {
                   Rng rng(seed, 17);
                   MaeConfig cfg;
                   cfg.encoder = EncoderConfig{3, 32, 4, 64, 0.0, PosInjection::kFirst, NormPlacement::kPre};
                   cfg.decoder = DecoderConfig{2, 32, 4, 32, 0.0};
                   cfg.samples = 16;
                   auto model = std::make_shared<MaeModel>(cfg, s);
                   PatchTensor pt;
                   pt.offsets = Tensor::from({8, 16, 3}, random_values(rng, 8 * 16 * 3, 0.0, 0.2));
                   pt.key_coords = points_tensor(random_points(rng, 8));
                   Rng part_rng(seed, 18);
                   const MaskPartition part = partition_patches(8, MaskRatios{}, part_rng);
                   return std::function<Tensor()>(
                       [=] { return mae_loss(model->forward(pt, part, ForwardContext{})); });
                 }, 1e-4});
  return out;
}

}  // namespace

std::string format_grad_result(const GradCaseResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-4s %-24s seeds=%-3zu eps=%.0e max_rel=%.3e checked=%-7zu kinks=%-4zu %.2fs%s%s",
                r.passed ? "ok" : "FAIL", r.name.c_str(), r.seeds, r.eps, r.max_rel_error, r.checked, r.skipped_kinks,
                r.seconds, r.worst.empty() ? "" : "  worst=", r.worst.c_str());
  std::string line = buf;
  if (!r.passed && r.checked > 0) {
    std::snprintf(buf, sizeof buf, "\n     failing coordinates all have |grad| <= %.2e; max_rel over |grad| >= 1e-6 is %.3e",
                  r.largest_failing_gradient, r.max_rel_error_large);
    line += buf;
  }
  return line;
}

std::vector<GradCaseResult> run_grad_suite(const GradSuiteOptions& options,
                                           const std::function<void(const GradCaseResult&)>& on_result) {
  std::vector<GradCaseResult> results;
  for (const auto& c : cases()) {
    const auto start = std::chrono::steady_clock::now();
    GradCaseResult r;
    r.name = c.name;
    r.seeds = c.primitive ? options.primitive_seeds : c.name == "mae_loss_toy" ? options.mae_seeds : options.module_seeds;
    GradCheckOptions check = options.check;
    if (c.eps > 0.0) {
      check.eps = c.eps;
    } else if (!c.primitive) {
      check.eps = options.module_eps;
    }
    r.eps = check.eps;
    for (std::size_t seed = 0; seed < r.seeds; ++seed) {
      ParameterStore store(seed);
      auto fn = c.build(seed, store);
      const GradCheckReport rep = grad_check(fn, store, check);
      r.checked += rep.checked;
      r.skipped_kinks += rep.skipped_kinks;
      r.max_rel_error_large = std::max(r.max_rel_error_large, rep.max_rel_error_large);
      r.largest_failing_gradient = std::max(r.largest_failing_gradient, rep.largest_failing_gradient);
      if (rep.max_rel_error >= r.max_rel_error) {
        r.max_rel_error = rep.max_rel_error;
        r.worst = rep.worst_parameter + "[" + std::to_string(rep.worst_index) + "] seed " + std::to_string(seed);
      }
    }
    r.passed = r.checked > 0 && r.max_rel_error < options.threshold;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_result) on_result(r);
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace plainpt
