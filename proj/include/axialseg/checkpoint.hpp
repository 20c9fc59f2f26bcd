#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "axialseg/model.hpp"

namespace axialseg {

/// Binary layout, all integers little-endian:
///   "AXSG" | u32 version | u32 n + n bytes of model config (key=value lines)
///   | u32 tensor count | per tensor: u32 name length, name bytes, u8 dtype
///   (0 = f32, 1 = f64), u32 rank, u64 dims..., raw scalars
///   | u64 FNV-1a of every preceding byte.
/// Parameters come first in store order, then buffers.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<double> values;  // widened; f32 values round-trip exactly
};

struct CheckpointData {
  ModelConfig config;
  std::vector<NamedTensor> tensors;
};

std::string serialize_model_config(const ModelConfig& cfg);
ModelConfig parse_model_config(const std::string& text);

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const Model<T>& model);
CheckpointData decode_checkpoint(const std::vector<std::uint8_t>& bytes);

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path);
CheckpointData read_checkpoint(const std::filesystem::path& path);

/// Copies every tensor into `model`, which must have been built from the same
/// config. Each param and buffer must appear exactly once, with matching shape.
template <typename T>
void apply_checkpoint(const CheckpointData& ckpt, Model<T>& model);

template <typename T>
std::unique_ptr<Model<T>> load_model(const std::filesystem::path& path);

}  // namespace axialseg
