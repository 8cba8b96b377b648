#include "plainpt/bench.hpp"

#include <chrono>
#include <cstdio>

#include "plainpt/scene.hpp"

namespace plainpt {

std::vector<BenchRow> bench_patchifiers(const BenchOptions& options) {
  SceneOptions scene;
  scene.points = options.points;
  const PointCloud pc = synthetic_scene(options.seed, scene);
  const std::size_t repeats = std::max<std::size_t>(options.repeats, 1);
  std::vector<BenchRow> rows;
  for (Grouping g : {Grouping::kBall, Grouping::kKnn, Grouping::kKMeans, Grouping::kFpc}) {
    PatchifyOptions opts;
    opts.grouping = g;
    opts.patches = options.patches;
    opts.samples = options.samples;
    double total = 0.0;
    for (std::size_t r = 0; r < repeats; ++r) {
      const auto start = std::chrono::steady_clock::now();
      const PatchSet ps = patchify(pc, opts);
      total += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (ps.num_patches() != options.patches) throw std::logic_error("bench: wrong patch count");
    }
    BenchRow row{g, total / static_cast<double>(repeats), 0.0};
    row.points_per_second = row.mean_seconds > 0 ? static_cast<double>(options.points) / row.mean_seconds : 0.0;
    rows.push_back(row);
  }
  return rows;
}

std::string format_bench_table(const std::vector<BenchRow>& rows, const BenchOptions& options) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "N=%zu M=%zu K=%zu repeats=%zu\n%-8s %12s %14s\n", options.points, options.patches,
                options.samples, options.repeats, "group", "seconds", "points/s");
  std::string out = buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-8s %12.6f %14.0f\n", std::string(to_string(r.grouping)).c_str(), r.mean_seconds,
                  r.points_per_second);
    out += buf;
  }
  return out;
}

}  // namespace plainpt
