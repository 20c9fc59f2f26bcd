#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "axialseg/attention.hpp"
#include "axialseg/autograd.hpp"
#include "axialseg/ops.hpp"
#include "axialseg/params.hpp"

namespace axialseg {

/// Architecture variants, one per ablation column.
enum class Variant { unet_like_axial, gated_axial, global_only, local_only, logo, medt };

std::string to_string(Variant v);
/// Accepts the canonical names plus "axial" for unet_like_axial. Throws on unknown names.
Variant parse_variant(const std::string& name);
const std::vector<Variant>& all_variants();

struct ModelConfig {
  Variant variant = Variant::medt;
  std::size_t img_size = 64;
  std::size_t in_channels = 1;
  std::size_t base_channels = 8;
  std::size_t heads = 8;
  std::size_t global_depth = 2;
  std::size_t local_depth = 5;
  std::size_t patch_grid = 4;
  bool per_head_gates = false;
  std::uint64_t seed = 0;

  /// Smallest accepted image size; lowered only for gradient-check micro models.
  std::size_t min_img_size = 32;

  void validate() const;
  /// Channels of encoder stage k (0 = stem output): base * 2^min(k, 3).
  std::size_t stage_channels(std::size_t stage) const;
  /// Tiny double-precision-friendly MedT used by the gradient suite.
  static ModelConfig micro();
};

/// Row-major g x g tiling of a square map.
struct PatchGrid {
  std::size_t grid = 4;
  std::size_t patch_h = 0, patch_w = 0;
  std::vector<std::pair<std::size_t, std::size_t>> origins;  // (row, col) of each patch

  static PatchGrid make(std::size_t grid, std::size_t height, std::size_t width);
};

template <typename T>
std::vector<Var<T>> extract_patches(Var<T> x, const PatchGrid& grid);
template <typename T>
Var<T> merge_patches(const std::vector<Var<T>>& patches, const PatchGrid& grid);

/// Three (conv3x3, batchnorm, relu) stages mapping in_channels -> channels.
template <typename T>
class ConvBlock {
 public:
  ConvBlock(ParamStore<T>& store, const std::string& prefix, std::size_t in_channels, std::size_t channels);
  Var<T> forward(Var<T> x, ops::NormMode mode) const;

  struct Stage {
    Param<T>* weight;
    Param<T>* gamma;
    Param<T>* beta;
    Tensor<T>* running_mean;
    Tensor<T>* running_var;
  };
  const std::vector<Stage>& stages() const { return stages_; }

 private:
  std::vector<Stage> stages_;
};

/// conv3x3 -> bilinear x2 (when its encoder downsampled) -> relu, then + skip.
template <typename T>
class DecoderBlock {
 public:
  DecoderBlock(ParamStore<T>& store, const std::string& prefix, std::size_t in_channels, std::size_t out_channels,
               bool upsample);
  Var<T> forward(Var<T> x, std::optional<Var<T>> skip) const;

  bool upsamples() const { return upsample_; }
  Param<T>& weight() const { return *weight_; }
  Param<T>& bias() const { return *bias_; }

 private:
  Param<T>* weight_;
  Param<T>* bias_;
  bool upsample_;
};

struct AttentionFlavor {
  bool gated = true;
  bool positional = true;
};

/// Encoder/decoder stack of gated axial transformer layers with skip
/// connections. Encoder k strides by 2 while the incoming map is larger than 4.
template <typename T>
class Branch {
 public:
  Branch(ParamStore<T>& store, const std::string& prefix, const ModelConfig& cfg, std::size_t depth,
         std::size_t size, AttentionFlavor flavor);
  Var<T> forward(Var<T> x, ops::NormMode mode) const;

  const std::vector<GatedAxialLayer<T>>& encoders() const { return encoders_; }
  const std::vector<DecoderBlock<T>>& decoders() const { return decoders_; }
  /// Spatial size after each encoder.
  std::vector<std::size_t> encoder_sizes() const;
  std::vector<GateSet<T>> gates() const;

 private:
  std::size_t size_;
  std::vector<GatedAxialLayer<T>> encoders_;
  std::vector<DecoderBlock<T>> decoders_;  // decoders_[k] undoes encoders_[k]
};

/// A complete segmentation network for one Variant. Owns its parameters.
template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// x [N, in_channels, I, I] -> probabilities [N, 1, I, I] in (0, 1).
  Var<T> forward(Var<T> x, ops::NormMode mode);
  /// Eval-mode forward on a non-recording tape. Reads parameters only, so
  /// concurrent calls on one model are safe as long as nothing trains it.
  Tensor<T> predict(const Tensor<T>& x);

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& store() { return *store_; }
  const ParamStore<T>& store() const { return *store_; }
  std::vector<GateSet<T>> gates() const;
  std::size_t parameter_count() const { return store_->scalar_count(); }

  const std::optional<Branch<T>>& global_branch() const { return global_; }
  const std::optional<Branch<T>>& local_branch() const { return local_; }
  Param<T>& fuse_weight() const { return *fuse_w_; }
  Param<T>& fuse_bias() const { return *fuse_b_; }
  const PatchGrid& patch_grid() const { return grid_; }

  /// Output of the local branch alone (merged patches) for inspection and tests.
  Var<T> local_features(Var<T> stem_out, ops::NormMode mode) const;
  Var<T> stem(Var<T> x, ops::NormMode mode) const { return stem_->forward(x, mode); }

 private:
  ModelConfig cfg_;
  std::unique_ptr<ParamStore<T>> store_;
  std::unique_ptr<ConvBlock<T>> stem_;
  std::optional<Branch<T>> global_;
  std::optional<Branch<T>> local_;
  PatchGrid grid_;
  Param<T>* fuse_w_ = nullptr;
  Param<T>* fuse_b_ = nullptr;
};

template <typename T>
std::size_t count_parameters(const Model<T>& model) {
  return model.parameter_count();
}

extern template class Model<float>;
extern template class Model<double>;

}  // namespace axialseg
