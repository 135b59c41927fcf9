#include "pinet/checkpoint.hpp"

#include "pinet/flo_io.hpp"

#include <cstring>

namespace pinet {

namespace {

constexpr char kMagic[8] = {'P', 'I', 'N', 'E', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void raw(const void* data, size_t n) {
    auto p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  template <typename T>
  void le(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    raw(bytes, sizeof(T));
  }
  void str(const std::string& s) {
    le(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  const std::uint8_t* take(size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError("checkpoint: truncated " + std::string(what) + " at offset " + std::to_string(pos_));
    }
    auto p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename T>
  T le(const char* what) {
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, take(sizeof(T), what), sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
  std::string str(const char* what) {
    const auto len = le<std::uint32_t>(what);
    auto p = take(len, what);
    return std::string(reinterpret_cast<const char*>(p), len);
  }
  size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.le(kVersion);
  w.le(ckpt.meta.epoch);
  w.le(ckpt.meta.config_hash);
  w.str(ckpt.meta.rng_state);
  w.str(ckpt.meta.config_text);
  w.le(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    w.str(name);
    auto t = tensor.detach().to(torch::kFloat32).contiguous();
    w.le(static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) w.le(static_cast<std::int64_t>(d));
    const float* data = t.data_ptr<float>();
    for (int64_t k = 0; k < t.numel(); ++k) w.le(data[k]);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(sizeof(kMagic), "magic"), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("checkpoint: bad magic at offset 0");
  }
  const auto version_at = r.pos();
  if (r.le<std::uint32_t>("version") != kVersion) {
    throw ParseError("checkpoint: unsupported version at offset " + std::to_string(version_at));
  }
  Checkpoint ckpt;
  ckpt.meta.epoch = r.le<std::int64_t>("epoch");
  ckpt.meta.config_hash = r.le<std::uint64_t>("config hash");
  ckpt.meta.rng_state = r.str("rng state");
  ckpt.meta.config_text = r.str("config text");
  const auto count = r.le<std::uint32_t>("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    auto name = r.str("tensor name");
    const auto ndim_at = r.pos();
    const auto ndim = r.le<std::uint32_t>("tensor rank");
    if (ndim > 8) throw ParseError("checkpoint: implausible rank at offset " + std::to_string(ndim_at));
    std::vector<int64_t> dims;
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto dim_at = r.pos();
      const auto v = r.le<std::int64_t>("tensor dims");
      if (v < 0 || v > (1ll << 31)) throw ParseError("checkpoint: invalid dimension at offset " + std::to_string(dim_at));
      dims.push_back(v);
      numel *= v;
    }
    auto t = torch::empty(dims, torch::kFloat32);
    float* data = t.data_ptr<float>();
    for (int64_t i = 0; i < numel; ++i) data[i] = r.le<float>("tensor data");
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes at offset " + std::to_string(r.pos()));
  if (fnv1a(ckpt.meta.config_text) != ckpt.meta.config_hash) {
    throw ParseError("checkpoint: config hash does not match the stored config");
  }
  return ckpt;
}

Checkpoint capture_checkpoint(torch::nn::Module& module, CheckpointMeta meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  for (const auto& item : module.named_parameters()) {
    ckpt.tensors.emplace_back(item.key(), item.value().detach().to(torch::kFloat32).contiguous().clone());
  }
  for (const auto& item : module.named_buffers()) {
    ckpt.tensors.emplace_back(item.key(), item.value().detach().to(torch::kFloat32).contiguous().clone());
  }
  return ckpt;
}

void restore_checkpoint(torch::nn::Module& module, const Checkpoint& ckpt) {
  std::map<std::string, torch::Tensor> targets;
  for (const auto& item : module.named_parameters()) targets.emplace(item.key(), item.value());
  for (const auto& item : module.named_buffers()) targets.emplace(item.key(), item.value());
  if (targets.size() != ckpt.tensors.size()) {
    throw ParseError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model has " +
                     std::to_string(targets.size()));
  }
  torch::NoGradGuard no_grad;
  for (const auto& [name, tensor] : ckpt.tensors) {
    auto it = targets.find(name);
    if (it == targets.end()) throw ParseError("checkpoint tensor '" + name + "' has no match in the model");
    if (it->second.sizes() != tensor.sizes()) {
      throw ParseError("checkpoint tensor '" + name + "' has shape " + shape_string(tensor) + ", model expects " +
                       shape_string(it->second));
    }
    it->second.copy_(tensor);
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::pair<PINet, RunConfig> load_model(const std::filesystem::path& path) {
  auto ckpt = load_checkpoint(path);
  auto cfg = parse_config(ckpt.meta.config_text);
  cfg.validate();
  PINet model(cfg.model);
  restore_checkpoint(*model, ckpt);
  model->eval();
  return {model, cfg};
}

}  // namespace pinet
