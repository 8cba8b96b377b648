#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "plainpt/augment.hpp"
#include "plainpt/mae.hpp"
#include "plainpt/patchify.hpp"

namespace plainpt {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Everything a pre-training run needs. Text form: `key = value` lines under
// [encoder], [decoder], [patchify] and [train] sections, '#' comments.
struct RunConfig {
  RunConfig() { model.samples = patchify.samples; }

  MaeConfig model;  // model.samples mirrors patchify.samples
  PatchifyOptions patchify;
  MaskRatios ratios;

  std::size_t epochs = 120;
  std::size_t steps_per_epoch = 4;
  std::size_t batch_size = 4;
  double base_lr = 5e-4;
  std::size_t warmup_epochs = 10;
  double weight_decay = 0.01;
  double clip_norm = 0.1;
  std::uint64_t seed = 0;

  std::string data = "synthetic";  // or a file glob such as scans/*.ply
  std::size_t scene_points = 20000;
  bool colors = false;             // synthetic scenes carry RGB extras
  bool fixed_batch = false;        // reuse the same scenes every step
  bool augment = true;
  std::size_t checkpoint_every = 0;  // epochs; 0 = final checkpoint only

  void validate() const;
  // Canonical text; parse_run_config(to_text()) reproduces the config.
  std::string to_text() const;
};

RunConfig parse_run_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace plainpt
