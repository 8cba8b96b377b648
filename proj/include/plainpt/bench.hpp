#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "plainpt/patchify.hpp"

namespace plainpt {

struct BenchOptions {
  std::size_t points = 20000;
  std::size_t patches = 512;
  std::size_t samples = 128;
  std::size_t repeats = 3;
  std::uint64_t seed = 0;
};

struct BenchRow {
  Grouping grouping;
  double mean_seconds = 0.0;
  double points_per_second = 0.0;
};

// Times the full patchifier (FPS plus grouping) on one synthetic scene.
std::vector<BenchRow> bench_patchifiers(const BenchOptions& options);
std::string format_bench_table(const std::vector<BenchRow>& rows, const BenchOptions& options);

}  // namespace plainpt
