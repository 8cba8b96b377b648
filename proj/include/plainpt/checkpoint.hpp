#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "plainpt/params.hpp"

namespace plainpt {

// On-disk layout, all integers u64 little-endian, values IEEE-754 f64 LE:
//   magic "PLNPTCK1" | seed | config length | config bytes | parameter count |
//   per parameter (name-sorted): name length | name | rank | dims... | values
struct Checkpoint {
  std::uint64_t seed = 0;
  std::string config_text;
  std::map<std::string, std::pair<Shape, std::vector<double>>> tensors;
};

std::vector<char> encode_checkpoint(const ParameterStore& store, const std::string& config_text, std::uint64_t seed);
Checkpoint decode_checkpoint(const std::vector<char>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store, const std::string& config_text,
                     std::uint64_t seed);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies values into `store`; names and shapes must match exactly.
void apply_checkpoint(const Checkpoint& ckpt, ParameterStore& store);

}  // namespace plainpt
