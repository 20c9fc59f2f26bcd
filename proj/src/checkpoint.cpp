#include "axialseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>


namespace axialseg {

namespace {

constexpr char kMagic[4] = {'A', 'X', 'S', 'G'};

class Writer {
 public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const std::string& s) { out.insert(out.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    const auto* b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto* b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::string str(std::size_t n) {
    const auto* b = take(n);
    return std::string(reinterpret_cast<const char*>(b), n);
  }
  bool done() const { return pos_ == n_; }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (n > n_ - pos_) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    const auto* b = p_ + pos_;
    pos_ += n;
    return b;
  }
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

std::uint64_t checksum(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void write_tensor(Writer& w, const std::string& name, const Tensor<T>& t) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  w.u8(std::is_same_v<T, float> ? 0 : 1);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u64(d);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if constexpr (std::is_same_v<T, float>) {
      w.u32(std::bit_cast<std::uint32_t>(t[i]));
    } else {
      w.u64(std::bit_cast<std::uint64_t>(t[i]));
    }
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || v[0] == '-') {
    throw CheckpointError("checkpoint config: bad integer for " + key + ": '" + v + "'");
  }
  return x;
}

}  // namespace

std::string serialize_model_config(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "variant=" << to_string(cfg.variant) << '\n'
     << "img_size=" << cfg.img_size << '\n'
     << "in_channels=" << cfg.in_channels << '\n'
     << "base_channels=" << cfg.base_channels << '\n'
     << "heads=" << cfg.heads << '\n'
     << "global_depth=" << cfg.global_depth << '\n'
     << "local_depth=" << cfg.local_depth << '\n'
     << "patch_grid=" << cfg.patch_grid << '\n'
     << "per_head_gates=" << (cfg.per_head_gates ? 1 : 0) << '\n'
     << "seed=" << cfg.seed << '\n'
     << "min_img_size=" << cfg.min_img_size << '\n';
  return os.str();
}

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::set<std::string> seen;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("checkpoint config: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (!seen.insert(key).second) throw CheckpointError("checkpoint config: duplicate key " + key);
    if (key == "variant") cfg.variant = parse_variant(val);
    else if (key == "img_size") cfg.img_size = parse_u64(key, val);
    else if (key == "in_channels") cfg.in_channels = parse_u64(key, val);
    else if (key == "base_channels") cfg.base_channels = parse_u64(key, val);
    else if (key == "heads") cfg.heads = parse_u64(key, val);
    else if (key == "global_depth") cfg.global_depth = parse_u64(key, val);
    else if (key == "local_depth") cfg.local_depth = parse_u64(key, val);
    else if (key == "patch_grid") cfg.patch_grid = parse_u64(key, val);
    else if (key == "per_head_gates") cfg.per_head_gates = parse_u64(key, val) != 0;
    else if (key == "seed") cfg.seed = parse_u64(key, val);
    else if (key == "min_img_size") cfg.min_img_size = parse_u64(key, val);
    else throw CheckpointError("checkpoint config: unknown key " + key);
  }
  return cfg;
}

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const Model<T>& model) {
  Writer w;
  w.bytes(std::string(kMagic, 4));
  w.u32(kCheckpointVersion);
  const std::string cfg = serialize_model_config(model.config());
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg);
  const auto params = model.store().params();
  const auto buffers = model.store().buffers();
  w.u32(static_cast<std::uint32_t>(params.size() + buffers.size()));
  for (const auto* p : params) write_tensor(w, p->name, p->value);
  for (const auto& [name, t] : buffers) write_tensor(w, name, *t);
  w.u64(checksum(w.out.data(), w.out.size()));
  return std::move(w.out);
}

CheckpointData decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 + 4 + 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("not an AXSG checkpoint");
  }
  const std::size_t body = bytes.size() - 8;
  Reader tail(bytes.data() + body, 8);
  if (tail.u64() != checksum(bytes.data(), body)) throw CheckpointError("checkpoint checksum mismatch");

  Reader r(bytes.data(), body);
  r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointData out;
  out.config = parse_model_config(r.str(r.u32()));
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(r.u32());
    const std::uint8_t tag = r.u8();
    if (tag > 1) throw CheckpointError("tensor '" + t.name + "': bad dtype tag " + std::to_string(tag));
    t.dtype = tag == 0 ? DType::f32 : DType::f64;
    const std::uint32_t rank = r.u32();
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.shape.push_back(r.u64());
      n *= t.shape.back();
    }
    t.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      t.values[k] = tag == 0 ? static_cast<double>(std::bit_cast<float>(r.u32())) : std::bit_cast<double>(r.u64());
    }
    out.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after tensor table");
  return out;
}

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing checkpoint " + path.string());
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template <typename T>
void apply_checkpoint(const CheckpointData& ckpt, Model<T>& model) {
  std::map<std::string, Tensor<T>*> targets;
  for (auto* p : model.store().params()) targets[p->name] = &p->value;
  for (auto& [name, t] : model.store().buffers()) targets[name] = t;
  std::set<std::string> filled;
  for (const auto& nt : ckpt.tensors) {
    auto it = targets.find(nt.name);
    if (it == targets.end()) throw CheckpointError("checkpoint tensor '" + nt.name + "' not in model");
    if (!filled.insert(nt.name).second) throw CheckpointError("checkpoint tensor '" + nt.name + "' repeated");
    Tensor<T>& dst = *it->second;
    if (dst.shape() != nt.shape) {
      throw CheckpointError("checkpoint tensor '" + nt.name + "' has shape " + shape_str(nt.shape) + ", model expects " +
                            shape_str(dst.shape()));
    }
    for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] = static_cast<T>(nt.values[i]);
  }
  for (const auto& [name, _] : targets) {
    if (!filled.count(name)) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
  }
}

template <typename T>
std::unique_ptr<Model<T>> load_model(const std::filesystem::path& path) {
  const CheckpointData ckpt = read_checkpoint(path);
  auto model = std::make_unique<Model<T>>(ckpt.config);
  apply_checkpoint(ckpt, *model);
  return model;
}

#define AXIALSEG_INSTANTIATE_CHECKPOINT(T)                                            \
  template std::vector<std::uint8_t> encode_checkpoint(const Model<T>&);              \
  template void save_checkpoint(const Model<T>&, const std::filesystem::path&);       \
  template void apply_checkpoint(const CheckpointData&, Model<T>&);                   \
  template std::unique_ptr<Model<T>> load_model(const std::filesystem::path&);

AXIALSEG_INSTANTIATE_CHECKPOINT(float)
AXIALSEG_INSTANTIATE_CHECKPOINT(double)

}  // namespace axialseg
