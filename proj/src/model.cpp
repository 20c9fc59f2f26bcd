#include "axialseg/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace axialseg {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::unet_like_axial: return "unet_like_axial";
    case Variant::gated_axial: return "gated_axial";
    case Variant::global_only: return "global_only";
    case Variant::local_only: return "local_only";
    case Variant::logo: return "logo";
    case Variant::medt: return "medt";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "axial" || name == "unet_like_axial") return Variant::unet_like_axial;
  for (Variant v : all_variants()) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument("unknown variant '" + name +
                              "' (expected axial, gated_axial, global_only, local_only, logo or medt)");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::unet_like_axial, Variant::gated_axial, Variant::global_only,
                                      Variant::local_only,      Variant::logo,        Variant::medt};
  return v;
}

namespace {
bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }
bool has_global(Variant v) { return v == Variant::medt || v == Variant::logo || v == Variant::global_only; }
bool has_local(Variant v) { return v == Variant::medt || v == Variant::logo || v == Variant::local_only; }
bool single_branch(Variant v) { return v == Variant::gated_axial || v == Variant::unet_like_axial; }
}  // namespace

void ModelConfig::validate() const {
  if (!is_power_of_two(img_size) || img_size < min_img_size) {
    throw std::invalid_argument("ModelConfig: img_size " + std::to_string(img_size) +
                                " must be a power of two >= " + std::to_string(min_img_size));
  }
  if (in_channels == 0 || base_channels == 0 || heads == 0) {
    throw std::invalid_argument("ModelConfig: in_channels, base_channels and heads must be positive");
  }
  if (global_depth == 0 || local_depth == 0) throw std::invalid_argument("ModelConfig: branch depths must be >= 1");
  if (patch_grid == 0 || img_size % patch_grid != 0) {
    throw std::invalid_argument("ModelConfig: img_size " + std::to_string(img_size) + " not divisible by patch_grid " +
                                std::to_string(patch_grid));
  }
  if (img_size / patch_grid < 8) {
    throw std::invalid_argument("ModelConfig: patch size " + std::to_string(img_size / patch_grid) + " below 8");
  }
  const std::size_t depth = std::max(global_depth, local_depth);
  for (std::size_t s = 1; s <= depth; ++s) {
    if (stage_channels(s) % heads != 0) {
      throw std::invalid_argument("ModelConfig: heads " + std::to_string(heads) + " does not divide stage " +
                                  std::to_string(s) + " width " + std::to_string(stage_channels(s)));
    }
  }
}

std::size_t ModelConfig::stage_channels(std::size_t stage) const {
  return base_channels << std::min<std::size_t>(stage, 3);
}

ModelConfig ModelConfig::micro() {
  ModelConfig c;
  c.variant = Variant::medt;
  c.img_size = 16;
  c.base_channels = 2;
  c.heads = 2;
  c.global_depth = 2;
  c.local_depth = 2;
  c.patch_grid = 2;
  c.min_img_size = 16;
  c.seed = 7;
  return c;
}

// ---------------------------------------------------------------------------

PatchGrid PatchGrid::make(std::size_t grid, std::size_t height, std::size_t width) {
  if (grid == 0 || height % grid != 0 || width % grid != 0) {
    throw std::invalid_argument("PatchGrid: " + std::to_string(height) + "x" + std::to_string(width) +
                                " not divisible by grid " + std::to_string(grid));
  }
  PatchGrid g;
  g.grid = grid;
  g.patch_h = height / grid;
  g.patch_w = width / grid;
  for (std::size_t r = 0; r < grid; ++r)
    for (std::size_t c = 0; c < grid; ++c) g.origins.emplace_back(r * g.patch_h, c * g.patch_w);
  return g;
}

template <typename T>
std::vector<Var<T>> extract_patches(Var<T> x, const PatchGrid& grid) {
  if (x.value().rank() != 4 || x.shape()[2] != grid.patch_h * grid.grid || x.shape()[3] != grid.patch_w * grid.grid) {
    throw ShapeError("extract_patches: input " + shape_str(x.shape()) + " does not match a " +
                     std::to_string(grid.grid) + "x" + std::to_string(grid.grid) + " grid of " +
                     std::to_string(grid.patch_h) + "x" + std::to_string(grid.patch_w) + " patches");
  }
  std::vector<Var<T>> out;
  out.reserve(grid.origins.size());
  for (const auto& [r, c] : grid.origins) out.push_back(ops::crop(x, r, c, grid.patch_h, grid.patch_w));
  return out;
}

template <typename T>
Var<T> merge_patches(const std::vector<Var<T>>& patches, const PatchGrid& grid) {
  return ops::tile_grid<T>(patches, grid.grid);
}

// ---------------------------------------------------------------------------

namespace {
double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }
}  // namespace

template <typename T>
ConvBlock<T>::ConvBlock(ParamStore<T>& store, const std::string& prefix, std::size_t in_channels,
                        std::size_t channels) {
  std::size_t cin = in_channels;
  for (int s = 0; s < 3; ++s) {
    const std::string p = prefix + ".conv" + std::to_string(s + 1);
    Stage st;
    st.weight = &store.uniform(p + ".weight", Shape{channels, cin, 3, 3}, fan_in_bound(cin * 9));
    st.gamma = &store.constant(p + ".norm.gamma", Shape{channels}, T(1));
    st.beta = &store.constant(p + ".norm.beta", Shape{channels}, T(0));
    st.running_mean = &store.buffer(p + ".norm.running_mean", Shape{channels}, T(0));
    st.running_var = &store.buffer(p + ".norm.running_var", Shape{channels}, T(1));
    stages_.push_back(st);
    cin = channels;
  }
}

template <typename T>
Var<T> ConvBlock<T>::forward(Var<T> x, ops::NormMode mode) const {
  Tape<T>& tape = *x.tape();
  for (const auto& st : stages_) {
    x = ops::conv2d(x, tape.param(*st.weight), std::nullopt, 1, 1);
    x = ops::batchnorm2d(x, tape.param(*st.gamma), tape.param(*st.beta),
                         ops::RunningStats<T>{st.running_mean, st.running_var}, mode);
    x = ops::relu(x);
  }
  return x;
}

template <typename T>
DecoderBlock<T>::DecoderBlock(ParamStore<T>& store, const std::string& prefix, std::size_t in_channels,
                              std::size_t out_channels, bool upsample)
    : weight_(&store.uniform(prefix + ".conv.weight", Shape{out_channels, in_channels, 3, 3},
                             fan_in_bound(in_channels * 9))),
      bias_(&store.constant(prefix + ".conv.bias", Shape{out_channels}, T(0))),
      upsample_(upsample) {}

template <typename T>
Var<T> DecoderBlock<T>::forward(Var<T> x, std::optional<Var<T>> skip) const {
  Tape<T>& tape = *x.tape();
  Var<T> y = ops::conv2d(x, tape.param(*weight_), tape.param(*bias_), 1, 1);
  if (upsample_) y = ops::upsample2x(y);
  y = ops::relu(y);
  if (skip) {
    if (skip->shape() != y.shape()) {
      throw ShapeError("decoder: skip " + shape_str(skip->shape()) + " does not match " + shape_str(y.shape()));
    }
    y = ops::add(y, *skip);
  }
  return y;
}

template <typename T>
Branch<T>::Branch(ParamStore<T>& store, const std::string& prefix, const ModelConfig& cfg, std::size_t depth,
                  std::size_t size, AttentionFlavor flavor)
    : size_(size) {
  std::size_t s = size;
  for (std::size_t k = 1; k <= depth; ++k) {
    AttnLayerConfig ac;
    ac.channels_in = cfg.stage_channels(k - 1);
    ac.channels_out = cfg.stage_channels(k);
    ac.heads = cfg.heads;
    ac.gated = flavor.gated;
    ac.positional = flavor.positional;
    ac.per_head_gates = cfg.per_head_gates;
    const std::size_t stride = s > 4 ? 2 : 1;
    encoders_.emplace_back(store, prefix + ".enc" + std::to_string(k), ac, s, s, stride);
    s = encoders_.back().out_h();
  }
  for (std::size_t k = 1; k <= depth; ++k) {
    decoders_.emplace_back(store, prefix + ".dec" + std::to_string(k), cfg.stage_channels(k),
                           cfg.stage_channels(k - 1), encoders_[k - 1].stride() == 2);
  }
}

template <typename T>
Var<T> Branch<T>::forward(Var<T> x, ops::NormMode mode) const {
  std::vector<Var<T>> feats{x};
  for (const auto& enc : encoders_) feats.push_back(enc.forward(feats.back(), mode));
  Var<T> y = feats.back();
  for (std::size_t k = encoders_.size(); k >= 1; --k) {
    std::optional<Var<T>> skip;
    if (k >= 2) skip = feats[k - 1];
    y = decoders_[k - 1].forward(y, skip);
  }
  return y;
}

template <typename T>
std::vector<std::size_t> Branch<T>::encoder_sizes() const {
  std::vector<std::size_t> out;
  for (const auto& e : encoders_) out.push_back(e.out_h());
  return out;
}

template <typename T>
std::vector<GateSet<T>> Branch<T>::gates() const {
  std::vector<GateSet<T>> out;
  for (const auto& e : encoders_) {
    auto g = e.gates();
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
Model<T>::Model(const ModelConfig& cfg) : cfg_(cfg), store_(std::make_unique<ParamStore<T>>(cfg.seed)) {
  cfg_.validate();
  ParamStore<T>& st = *store_;
  stem_ = std::make_unique<ConvBlock<T>>(st, "stem", cfg_.in_channels, cfg_.base_channels);
  const Variant v = cfg_.variant;
  if (single_branch(v)) {
    global_.emplace(st, "net", cfg_, cfg_.local_depth, cfg_.img_size,
                    AttentionFlavor{v == Variant::gated_axial, true});
  }
  if (has_global(v)) {
    global_.emplace(st, "global", cfg_, cfg_.global_depth, cfg_.img_size, AttentionFlavor{v != Variant::logo, true});
  }
  if (has_local(v)) {
    grid_ = PatchGrid::make(cfg_.patch_grid, cfg_.img_size, cfg_.img_size);
    local_.emplace(st, "local", cfg_, cfg_.local_depth, grid_.patch_h, AttentionFlavor{false, false});
  }
  fuse_w_ = &st.uniform("fuse.weight", Shape{1, cfg_.base_channels, 1, 1}, fan_in_bound(cfg_.base_channels));
  fuse_b_ = &st.constant("fuse.bias", Shape{1}, T(0));
}

template <typename T>
Var<T> Model<T>::local_features(Var<T> stem_out, ops::NormMode mode) const {
  if (!local_) throw std::logic_error("model variant has no local branch");
  std::vector<Var<T>> outs;
  for (const auto& patch : extract_patches(stem_out, grid_)) outs.push_back(local_->forward(patch, mode));
  return merge_patches(outs, grid_);
}

template <typename T>
Var<T> Model<T>::forward(Var<T> x, ops::NormMode mode) {
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != cfg_.in_channels || s[2] != cfg_.img_size || s[3] != cfg_.img_size) {
    throw ShapeError("model expects [N," + std::to_string(cfg_.in_channels) + "," + std::to_string(cfg_.img_size) +
                     "," + std::to_string(cfg_.img_size) + "], got " + shape_str(s));
  }
  Tape<T>& tape = *x.tape();
  Var<T> feat = stem_->forward(x, mode);
  std::optional<Var<T>> fused;
  if (global_) fused = global_->forward(feat, mode);
  if (local_) {
    Var<T> loc = local_features(feat, mode);
    fused = fused ? ops::add(*fused, loc) : loc;
  }
  Var<T> logits = ops::conv2d(*fused, tape.param(*fuse_w_), tape.param(*fuse_b_), 1, 0);
  return ops::sigmoid(logits);
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& x) {
  Tape<T> tape(false);
  return forward(tape.constant(x), ops::NormMode::eval).value();
}

template <typename T>
std::vector<GateSet<T>> Model<T>::gates() const {
  std::vector<GateSet<T>> out;
  for (const auto* b : {&global_, &local_}) {
    if (!*b) continue;
    auto g = (*b)->gates();
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

template class ConvBlock<float>;
template class ConvBlock<double>;
template class DecoderBlock<float>;
template class DecoderBlock<double>;
template class Branch<float>;
template class Branch<double>;
template class Model<float>;
template class Model<double>;
template std::vector<Var<float>> extract_patches(Var<float>, const PatchGrid&);
template std::vector<Var<double>> extract_patches(Var<double>, const PatchGrid&);
template Var<float> merge_patches(const std::vector<Var<float>>&, const PatchGrid&);
template Var<double> merge_patches(const std::vector<Var<double>>&, const PatchGrid&);

}  // namespace axialseg
