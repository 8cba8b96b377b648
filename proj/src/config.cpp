#include "plainpt/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace plainpt {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t to_size(const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_real(const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("expected a real number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"encoder.layers", [](RunConfig& c, const std::string& v) { c.model.encoder.layers = to_size(v); }},
      {"encoder.channels", [](RunConfig& c, const std::string& v) { c.model.encoder.channels = to_size(v); }},
      {"encoder.heads", [](RunConfig& c, const std::string& v) { c.model.encoder.heads = to_size(v); }},
      {"encoder.ffn_channels", [](RunConfig& c, const std::string& v) { c.model.encoder.ffn_channels = to_size(v); }},
      {"encoder.dropout", [](RunConfig& c, const std::string& v) { c.model.encoder.dropout = to_real(v); }},
      {"encoder.pos_embed", [](RunConfig& c, const std::string& v) { c.model.pos_embed = parse_pos_embed(v); }},
      {"encoder.pos_injection",
       [](RunConfig& c, const std::string& v) { c.model.encoder.pos_injection = parse_pos_injection(v); }},
      {"encoder.norm", [](RunConfig& c, const std::string& v) { c.model.encoder.norm = parse_norm_placement(v); }},
      {"encoder.fourier_sigma", [](RunConfig& c, const std::string& v) { c.model.fourier_sigma = to_real(v); }},
      {"decoder.layers", [](RunConfig& c, const std::string& v) { c.model.decoder.layers = to_size(v); }},
      {"decoder.channels", [](RunConfig& c, const std::string& v) { c.model.decoder.channels = to_size(v); }},
      {"decoder.heads", [](RunConfig& c, const std::string& v) { c.model.decoder.heads = to_size(v); }},
      {"decoder.ffn_channels", [](RunConfig& c, const std::string& v) { c.model.decoder.ffn_channels = to_size(v); }},
      {"decoder.dropout", [](RunConfig& c, const std::string& v) { c.model.decoder.dropout = to_real(v); }},
      {"patchify.patches", [](RunConfig& c, const std::string& v) { c.patchify.patches = to_size(v); }},
      {"patchify.samples", [](RunConfig& c, const std::string& v) { c.patchify.samples = to_size(v); }},
      {"patchify.group", [](RunConfig& c, const std::string& v) { c.patchify.grouping = parse_grouping(v); }},
      {"patchify.radius", [](RunConfig& c, const std::string& v) { c.patchify.radius = to_real(v); }},
      {"patchify.kmeans_iters", [](RunConfig& c, const std::string& v) { c.patchify.kmeans_iters = to_size(v); }},
      {"patchify.sampling",
       [](RunConfig& c, const std::string& v) {
         if (v == "truncate") c.patchify.sampling = ClusterSampling::kTruncate;
         else if (v == "random") c.patchify.sampling = ClusterSampling::kRandom;
         else throw ConfigError("expected truncate or random, got '" + v + "'");
       }},
      {"train.epochs", [](RunConfig& c, const std::string& v) { c.epochs = to_size(v); }},
      {"train.steps_per_epoch", [](RunConfig& c, const std::string& v) { c.steps_per_epoch = to_size(v); }},
      {"train.batch_size", [](RunConfig& c, const std::string& v) { c.batch_size = to_size(v); }},
      {"train.base_lr", [](RunConfig& c, const std::string& v) { c.base_lr = to_real(v); }},
      {"train.warmup_epochs", [](RunConfig& c, const std::string& v) { c.warmup_epochs = to_size(v); }},
      {"train.weight_decay", [](RunConfig& c, const std::string& v) { c.weight_decay = to_real(v); }},
      {"train.clip_norm", [](RunConfig& c, const std::string& v) { c.clip_norm = to_real(v); }},
      {"train.seed", [](RunConfig& c, const std::string& v) { c.seed = to_size(v); }},
      {"train.drop_ratio", [](RunConfig& c, const std::string& v) { c.ratios.drop = to_real(v); }},
      {"train.mask_ratio", [](RunConfig& c, const std::string& v) { c.ratios.mask = to_real(v); }},
      {"train.data", [](RunConfig& c, const std::string& v) { c.data = v; }},
      {"train.scene_points", [](RunConfig& c, const std::string& v) { c.scene_points = to_size(v); }},
      {"train.colors", [](RunConfig& c, const std::string& v) { c.colors = to_bool(v); }},
      {"train.fixed_batch", [](RunConfig& c, const std::string& v) { c.fixed_batch = to_bool(v); }},
      {"train.augment", [](RunConfig& c, const std::string& v) { c.augment = to_bool(v); }},
      {"train.checkpoint_every", [](RunConfig& c, const std::string& v) { c.checkpoint_every = to_size(v); }},
  };
  return table;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void RunConfig::validate() const {
  const auto& e = model.encoder;
  const auto& d = model.decoder;
  require(e.layers <= 64 && d.layers <= 64, "layers must be at most 64");
  require(e.channels >= 4 && e.channels <= 4096 && e.channels % 4 == 0, "encoder.channels must be a multiple of 4 in [4, 4096]");
  require(e.heads >= 1 && e.channels % e.heads == 0, "encoder.channels must be divisible by encoder.heads");
  require(d.heads >= 1 && d.channels % d.heads == 0, "decoder.channels must be divisible by decoder.heads");
  require(d.channels == e.channels, "decoder.channels must equal encoder.channels");
  require(e.ffn_channels >= 1 && d.ffn_channels >= 1, "ffn_channels must be positive");
  require(e.dropout >= 0.0 && e.dropout < 1.0 && d.dropout >= 0.0 && d.dropout < 1.0, "dropout must lie in [0, 1)");
  require(model.fourier_sigma > 0.0, "encoder.fourier_sigma must be positive");
  require(model.pos_embed != PosEmbedKind::kFourier || e.channels % 2 == 0, "fourier embedding needs even channels");
  require(patchify.patches >= 1, "patchify.patches must be >= 1");
  require(patchify.samples >= 1, "patchify.samples must be >= 1");
  require(patchify.radius > 0.0, "patchify.radius must be positive");
  require(patchify.kmeans_iters >= 1, "patchify.kmeans_iters must be >= 1");
  require(model.samples == patchify.samples, "model samples must match patchify.samples");
  require(ratios.drop >= 0.0 && ratios.mask >= 0.0 && ratios.drop + ratios.mask < 1.0,
          "train.drop_ratio and train.mask_ratio must be non-negative with sum below 1");
  require(std::abs(ratios.drop + ratios.mask + ratios.reserve - 1.0) < 1e-9, "mask ratios must sum to 1");
  require(static_cast<std::size_t>(std::floor(ratios.drop * static_cast<double>(patchify.patches))) +
                  static_cast<std::size_t>(std::floor(ratios.mask * static_cast<double>(patchify.patches))) <
              patchify.patches,
          "drop and mask ratios leave no reserved patch");
  require(steps_per_epoch >= 1, "train.steps_per_epoch must be >= 1");
  require(batch_size >= 1 && batch_size <= 1024, "train.batch_size must lie in [1, 1024]");
  require(base_lr > 0.0 && base_lr < 1.0, "train.base_lr must lie in (0, 1)");
  require(weight_decay >= 0.0 && weight_decay < 1.0, "train.weight_decay must lie in [0, 1)");
  require(clip_norm >= 0.0, "train.clip_norm must be non-negative");
  require(!data.empty(), "train.data must not be empty");
  require(data != "synthetic" || scene_points >= patchify.patches, "train.scene_points must be >= patchify.patches");
  require(model.extra_channels == (colors ? 3u : 0u), "colors flag and model extra channels disagree");
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  const auto& e = model.encoder;
  const auto& d = model.decoder;
  os << "[encoder]\n"
     << "layers = " << e.layers << "\nchannels = " << e.channels << "\nheads = " << e.heads
     << "\nffn_channels = " << e.ffn_channels << "\ndropout = " << fmt(e.dropout) << "\npos_embed = "
     << to_string(model.pos_embed) << "\npos_injection = " << to_string(e.pos_injection) << "\nnorm = "
     << to_string(e.norm) << "\nfourier_sigma = " << fmt(model.fourier_sigma) << "\n\n[decoder]\n"
     << "layers = " << d.layers << "\nchannels = " << d.channels << "\nheads = " << d.heads
     << "\nffn_channels = " << d.ffn_channels << "\ndropout = " << fmt(d.dropout) << "\n\n[patchify]\n"
     << "patches = " << patchify.patches << "\nsamples = " << patchify.samples << "\ngroup = "
     << to_string(patchify.grouping) << "\nradius = " << fmt(patchify.radius) << "\nkmeans_iters = "
     << patchify.kmeans_iters << "\nsampling = "
     << (patchify.sampling == ClusterSampling::kTruncate ? "truncate" : "random") << "\n\n[train]\n"
     << "epochs = " << epochs << "\nsteps_per_epoch = " << steps_per_epoch << "\nbatch_size = " << batch_size
     << "\nbase_lr = " << fmt(base_lr) << "\nwarmup_epochs = " << warmup_epochs << "\nweight_decay = "
     << fmt(weight_decay) << "\nclip_norm = " << fmt(clip_norm) << "\nseed = " << seed << "\ndrop_ratio = "
     << fmt(ratios.drop) << "\nmask_ratio = " << fmt(ratios.mask) << "\ndata = " << data
     << "\nscene_points = " << scene_points << "\ncolors = " << (colors ? "true" : "false")
     << "\nfixed_batch = " << (fixed_batch ? "true" : "false") << "\naugment = " << (augment ? "true" : "false")
     << "\ncheckpoint_every = " << checkpoint_every << "\n";
  return os.str();
}

RunConfig parse_run_config(std::string_view text, const std::string& source) {
  RunConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where() + "malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section != "encoder" && section != "decoder" && section != "patchify" && section != "train") {
        throw ConfigError(where() + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where() + "expected 'key = value'");
    if (section.empty()) throw ConfigError(where() + "key outside of a section");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    auto it = setters().find(section + "." + key);
    if (it == setters().end()) throw ConfigError(where() + "unknown key '" + key + "' in [" + section + "]");
    try {
      it->second(cfg, value);
    } catch (const std::invalid_argument& err) {
      throw ConfigError(where() + key + ": " + err.what());
    }
  }
  cfg.ratios.reserve = 1.0 - cfg.ratios.drop - cfg.ratios.mask;
  cfg.model.samples = cfg.patchify.samples;
  cfg.model.extra_channels = cfg.colors ? 3 : 0;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.string());
}

}  // namespace plainpt
