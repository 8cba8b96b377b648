#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "plainpt/config.hpp"
#include "plainpt/mae.hpp"
#include "plainpt/optim.hpp"
#include "plainpt/params.hpp"

namespace plainpt {

struct MetricRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

// "step loss lr" with round-trip precision.
std::string format_metric(const MetricRecord& m);

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One prepared batch element.
struct TrainSample {
  PatchTensor patches;
  MaskPartition partition;
  std::uint64_t scene_seed = 0;
};

// Expands a glob whose wildcards ('*', '?') appear in the file name only.
std::vector<std::filesystem::path> expand_glob(const std::string& pattern);

// Model, parameters and optimizer state for MAE pre-training.
class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);

  std::size_t total_steps() const { return cfg_.epochs * cfg_.steps_per_epoch; }
  double learning_rate(std::size_t step) const;

  // Deterministic in (config, step, element); safe to call concurrently.
  TrainSample prepare(std::size_t step, std::size_t element) const;
  std::vector<TrainSample> prepare_batch(std::size_t step, std::size_t threads = 1) const;

  // Mean MAE loss over the batch without touching parameters.
  double evaluate(const std::vector<TrainSample>& batch) const;
  // Forward, backward, clip and AdamW update; returns the pre-update loss.
  MetricRecord step(std::size_t step, const std::vector<TrainSample>& batch);

  ParameterStore& store() { return *store_; }
  const ParameterStore& store() const { return *store_; }
  const MaeModel& model() const { return *model_; }
  const RunConfig& config() const { return cfg_; }

 private:
  RunConfig cfg_;
  std::unique_ptr<ParameterStore> store_;
  std::unique_ptr<MaeModel> model_;
  OptimizerState opt_;
  std::vector<std::filesystem::path> files_;
};

struct PretrainOutputs {
  std::filesystem::path dir = ".";
  std::string metrics_name = "metrics.log";
  std::string checkpoint_name = "checkpoint.bin";
};

struct PretrainSummary {
  std::vector<MetricRecord> metrics;
  std::filesystem::path checkpoint;
};

// Full loop: writes line-delimited metrics, periodic checkpoints and a final
// checkpoint. Progress lines go to `log` when given. Batch preparation uses
// PLAINPT_THREADS worker threads (default 1).
PretrainSummary pretrain(const RunConfig& cfg, const PretrainOutputs& outputs, std::ostream* log = nullptr);

std::size_t thread_count_from_env();

}  // namespace plainpt
