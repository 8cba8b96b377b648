#include "plainpt/pretrain.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <ostream>
#include <sstream>

#include "plainpt/augment.hpp"
#include "plainpt/checkpoint.hpp"
#include "plainpt/pointcloud_io.hpp"
#include "plainpt/scene.hpp"

namespace plainpt {

namespace fs = std::filesystem;

std::string format_metric(const MetricRecord& m) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%zu %.17g %.17g", m.step, m.loss, m.lr);
  return buf;
}

namespace {

bool wildcard_match(std::string_view pattern, std::string_view name) {
  std::size_t p = 0, n = 0, star = std::string_view::npos, mark = 0;
  while (n < name.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == name[n])) {
      ++p;
      ++n;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = n;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      n = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

}  // namespace

std::vector<fs::path> expand_glob(const std::string& pattern) {
  const fs::path pat(pattern);
  const std::string name = pat.filename().string();
  if (name.find_first_of("*?") == std::string::npos) {
    if (fs::is_regular_file(pat)) return {pat};
    return {};
  }
  const fs::path dir = pat.has_parent_path() ? pat.parent_path() : fs::path(".");
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && wildcard_match(name, entry.path().filename().string())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t thread_count_from_env() {
  const char* v = std::getenv("PLAINPT_THREADS");
  if (v == nullptr) return 1;
  const long n = std::strtol(v, nullptr, 10);
  return n >= 1 ? static_cast<std::size_t>(std::min(n, 256L)) : 1;
}

Trainer::Trainer(const RunConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  store_ = std::make_unique<ParameterStore>(cfg_.seed);
  model_ = std::make_unique<MaeModel>(cfg_.model, *store_);
  opt_.base_lr = cfg_.base_lr;
  opt_.weight_decay = cfg_.weight_decay;
  opt_.clip_norm = cfg_.clip_norm;
  if (cfg_.data != "synthetic") {
    files_ = expand_glob(cfg_.data);
    if (files_.empty()) throw TrainingError("no point cloud files match '" + cfg_.data + "'");
  }
}

double Trainer::learning_rate(std::size_t step) const {
  // Shifted by one so neither the first nor the last step has a zero rate.
  return lr_schedule(step + 1, total_steps() + 1, cfg_.warmup_epochs * cfg_.steps_per_epoch, cfg_.base_lr);
}

TrainSample Trainer::prepare(std::size_t step, std::size_t element) const {
  const std::uint64_t slot = cfg_.fixed_batch ? element : step * cfg_.batch_size + element;
  const Rng root(cfg_.seed, 0xda7a);
  TrainSample sample;
  sample.scene_seed = root.split(slot).next_u64();

  PointCloud pc;
  if (files_.empty()) {
    SceneOptions opts;
    opts.points = cfg_.scene_points;
    opts.colors = cfg_.colors;
    pc = synthetic_scene(sample.scene_seed, opts);
  } else {
    const fs::path& file = files_[sample.scene_seed % files_.size()];
    pc = load_point_cloud(file);
    if (cfg_.colors && pc.extra_channels != 3) throw TrainingError("'" + file.string() + "' has no colors");
    if (!cfg_.colors) {
      pc.extras.clear();
      pc.extra_channels = 0;
    }
    if (pc.size() > cfg_.scene_points) {
      Rng pick(sample.scene_seed, 0x5e1);
      std::vector<std::size_t> idx(pc.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      pick.shuffle(std::span<std::size_t>(idx));
      idx.resize(cfg_.scene_points);
      std::sort(idx.begin(), idx.end());
      PointCloud sub;
      sub.extra_channels = pc.extra_channels;
      for (std::size_t i : idx) {
        sub.coords.push_back(pc.coords[i]);
        auto row = pc.extra_row(i);
        sub.extras.insert(sub.extras.end(), row.begin(), row.end());
      }
      pc = std::move(sub);
    }
    if (pc.size() < cfg_.patchify.patches) {
      throw TrainingError("'" + file.string() + "' has fewer points than patches");
    }
  }

  Rng local = Rng(sample.scene_seed, 0x10ca1).split(cfg_.fixed_batch ? 0 : step);
  if (cfg_.augment) {
    Rng aug = local.split(1);
    pc = augment(pc, aug, AugmentFlags{});
  }
  Rng group_rng = local.split(2);
  sample.patches = gather_patches(pc, patchify(pc, cfg_.patchify, &group_rng));
  Rng part_rng = local.split(3);
  sample.partition = partition_patches(cfg_.patchify.patches, cfg_.ratios, part_rng);
  return sample;
}

std::vector<TrainSample> Trainer::prepare_batch(std::size_t step, std::size_t threads) const {
  std::vector<TrainSample> batch(cfg_.batch_size);
  if (threads <= 1) {
    for (std::size_t b = 0; b < batch.size(); ++b) batch[b] = prepare(step, b);
    return batch;
  }
  std::vector<std::future<void>> jobs;
  const std::size_t workers = std::min(threads, batch.size());
  for (std::size_t w = 0; w < workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t b = w; b < batch.size(); b += workers) batch[b] = prepare(step, b);
    }));
  }
  for (auto& j : jobs) j.get();
  return batch;
}

double Trainer::evaluate(const std::vector<TrainSample>& batch) const {
  NoGradGuard guard;
  ForwardContext ctx;
  double total = 0.0;
  for (const auto& s : batch) total += mae_loss(model_->forward(s.patches, s.partition, ctx)).item();
  return total / static_cast<double>(batch.size());
}

MetricRecord Trainer::step(std::size_t step, const std::vector<TrainSample>& batch) {
  if (batch.empty()) throw std::invalid_argument("Trainer::step: empty batch");
  auto seeds = [&] {
    std::ostringstream os;
    for (const auto& s : batch) os << ' ' << s.scene_seed;
    return os.str();
  };
  Rng dropout_rng = Rng(cfg_.seed, 0xd0).split(step);
  ForwardContext ctx{true, &dropout_rng};
  store_->zero_grad();
  MetricRecord rec{step, 0.0, learning_rate(step)};
  try {
    std::vector<Tensor> losses;
    for (const auto& s : batch) losses.push_back(mae_loss(model_->forward(s.patches, s.partition, ctx)));
    Tensor loss = losses[0];
    for (std::size_t i = 1; i < losses.size(); ++i) loss = add(loss, losses[i]);
    loss = scale(loss, 1.0 / static_cast<double>(losses.size()));
    rec.loss = loss.item();
    if (loss.requires_grad()) {
      backward(loss);
      adamw_step(*store_, opt_, rec.lr);
    }
  } catch (const NumericError& err) {
    throw TrainingError("non-finite value at step " + std::to_string(step) + " (" + err.what() + "); scene seeds:" +
                        seeds());
  }
  return rec;
}

PretrainSummary pretrain(const RunConfig& cfg, const PretrainOutputs& outputs, std::ostream* log) {
  fs::create_directories(outputs.dir);
  Trainer trainer(cfg);
  PretrainSummary summary;
  const fs::path metrics_path = outputs.dir / outputs.metrics_name;
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw TrainingError("cannot write metrics log '" + metrics_path.string() + "'");

  const std::string config_text = cfg.to_text();
  const std::size_t threads = thread_count_from_env();
  for (std::size_t s = 0; s < trainer.total_steps(); ++s) {
    auto batch = trainer.prepare_batch(s, threads);
    MetricRecord rec;
    try {
      rec = trainer.step(s, batch);
    } catch (const TrainingError& err) {
      std::ofstream dump(outputs.dir / "nan_dump.txt", std::ios::trunc);
      dump << "step " << s << "\nseed " << cfg.seed << "\nscene_seeds";
      for (const auto& b : batch) dump << ' ' << b.scene_seed;
      dump << "\nerror " << err.what() << '\n';
      throw;
    }
    summary.metrics.push_back(rec);
    metrics << format_metric(rec) << '\n';
    metrics.flush();
    if (log != nullptr) *log << "step " << rec.step << " loss " << rec.loss << " lr " << rec.lr << '\n';
    const std::size_t epoch = (s + 1) / cfg.steps_per_epoch;
    if (cfg.checkpoint_every > 0 && (s + 1) % cfg.steps_per_epoch == 0 && epoch % cfg.checkpoint_every == 0) {
      save_checkpoint(outputs.dir / ("checkpoint_epoch" + std::to_string(epoch) + ".bin"), trainer.store(),
                      config_text, cfg.seed);
    }
  }
  summary.checkpoint = outputs.dir / outputs.checkpoint_name;
  save_checkpoint(summary.checkpoint, trainer.store(), config_text, cfg.seed);
  return summary;
}

}  // namespace plainpt
