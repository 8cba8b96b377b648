#include "plainpt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace plainpt {

namespace {

constexpr char kMagic[8] = {'P', 'L', 'N', 'P', 'T', 'C', 'K', '1'};

void put_u64(std::vector<char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<char>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::uint64_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<long>(pos_), bytes_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw std::runtime_error("checkpoint: truncated data");
  }
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> encode_checkpoint(const ParameterStore& store, const std::string& config_text, std::uint64_t seed) {
  std::vector<char> out(std::begin(kMagic), std::end(kMagic));
  put_u64(out, seed);
  put_u64(out, config_text.size());
  out.insert(out.end(), config_text.begin(), config_text.end());
  put_u64(out, store.size());
  for (const auto& [name, t] : store.all()) {
    put_u64(out, name.size());
    out.insert(out.end(), name.begin(), name.end());
    put_u64(out, t.rank());
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (double v : t.data()) put_f64(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<char>& bytes) {
  Reader in(bytes);
  if (in.str(8) != std::string(kMagic, 8)) throw std::runtime_error("checkpoint: bad magic");
  Checkpoint ckpt;
  ckpt.seed = in.u64();
  ckpt.config_text = in.str(in.u64());
  const std::uint64_t count = in.u64();
  for (std::uint64_t p = 0; p < count; ++p) {
    std::string name = in.str(in.u64());
    Shape shape(in.u64());
    for (auto& d : shape) d = in.u64();
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = in.f64();
    if (!ckpt.tensors.emplace(name, std::make_pair(std::move(shape), std::move(values))).second) {
      throw std::runtime_error("checkpoint: duplicate parameter '" + name + "'");
    }
  }
  if (!in.done()) throw std::runtime_error("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store, const std::string& config_text,
                     std::uint64_t seed) {
  const std::vector<char> bytes = encode_checkpoint(store, config_text, seed);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void apply_checkpoint(const Checkpoint& ckpt, ParameterStore& store) {
  if (ckpt.tensors.size() != store.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " parameters, model has " +
                             std::to_string(store.size()));
  }
  for (const auto& [name, param] : store.all()) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw std::runtime_error("checkpoint lacks parameter '" + name + "'");
    if (it->second.first != param.shape()) {
      throw std::runtime_error("checkpoint parameter '" + name + "' has shape " + shape_str(it->second.first) +
                               ", model expects " + shape_str(param.shape()));
    }
    Tensor p = param;
    std::copy(it->second.second.begin(), it->second.second.end(), p.mutable_data().begin());
  }
}

}  // namespace plainpt
