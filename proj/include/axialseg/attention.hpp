#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "axialseg/autograd.hpp"
#include "axialseg/ops.hpp"
#include "axialseg/params.hpp"
#include "axialseg/tensor.hpp"

namespace axialseg {

enum class Axis { height, width };

/// Row of the relative-offset table used when `query` attends `key` along an axis of length `len`.
constexpr std::size_t relative_index(std::size_t query, std::size_t key, std::size_t len) {
  return query + len - 1 - key;
}

/// Query/key/value 1x1 projections, each stored as a conv weight [C_attn, C_in, 1, 1].
template <typename T>
struct ProjectionSet {
  Param<T>* wq = nullptr;
  Param<T>* wk = nullptr;
  Param<T>* wv = nullptr;

  std::size_t channels_in() const { return wq->value.dim(1); }
  std::size_t channels_attn() const { return wq->value.dim(0); }
  void validate() const;
};

/// Learnable relative positional tables r_q, r_k, r_v for one head on one axis, each [2L-1, d].
template <typename T>
struct RelPosEnc {
  std::size_t axis_len = 0;
  std::size_t head_dim = 0;
  Param<T>* rq = nullptr;
  Param<T>* rk = nullptr;
  Param<T>* rv = nullptr;
};

/// The four scalar gates G_Q, G_K, G_V1, G_V2.
template <typename T>
struct GateSet {
  Param<T>* gq = nullptr;
  Param<T>* gk = nullptr;
  Param<T>* gv1 = nullptr;
  Param<T>* gv2 = nullptr;

  std::array<Param<T>*, 4> all() const { return {gq, gk, gv1, gv2}; }
  void set_trainable(bool on) const {
    for (auto* g : all()) g->trainable = on;
  }
  void assign(T q, T k, T v1, T v2) const {
    gq->value[0] = q;
    gk->value[0] = k;
    gv1->value[0] = v1;
    gv2->value[0] = v2;
  }
};

struct AttnLayerConfig {
  std::size_t channels_in = 0;
  std::size_t channels_out = 0;
  std::size_t heads = 8;
  bool gated = true;
  bool positional = true;
  Axis axis = Axis::width;
  /// One GateSet per head instead of one shared per (layer, axis).
  bool per_head_gates = false;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Plain-tensor kernels

/// Brute-force global self-attention over all H*W sites of x [1,Cin,H,W]:
/// y_ij = sum_{hw} softmax_{hw}(q_ij . k_hw) v_hw. No tape. Refuses maps with
/// more than `max_sites` positions.
template <typename T>
Tensor<T> full_self_attention_oracle(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk,
                                     const Tensor<T>& wv, std::size_t max_sites = 256);

template <typename T>
struct GateValues {
  T q = 1, k = 1, v1 = 1, v2 = 1;
};

template <typename T>
struct AxialKernelResult {
  Tensor<T> y;     // [N, d, H, W]
  Tensor<T> attn;  // [N, H, W(query), W(key)]
};

/// Width-axis attention for one head on already projected q, k, v [N, d, H, W].
/// Tables (when given) are [2W-1, d]. Counts its MACs on MacCounter.
template <typename T>
AxialKernelResult<T> axial_width_kernel(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                        const Tensor<T>* rq, const Tensor<T>* rk, const Tensor<T>* rv,
                                        GateValues<T> gates);

// ---------------------------------------------------------------------------
// Taped ops

template <typename T>
struct PositionalVars {
  Var<T> rq, rk, rv;
};

template <typename T>
struct GateVars {
  Var<T> q, k, v1, v2;
};

/// Differentiable width-axis attention for one head. Without gates the gate
/// values are the constant 1; without tables all positional terms vanish.
template <typename T>
Var<T> axial_attention_width(Var<T> q, Var<T> k, Var<T> v, const std::optional<PositionalVars<T>>& pos,
                             const std::optional<GateVars<T>>& gates);

/// Single-head axial attention on x [N,Cin,H,W]: project, attend along `axis`.
/// Height attention runs the width kernel on the H/W-transposed map.
template <typename T>
Var<T> axial_attention(Var<T> x, const ProjectionSet<T>& proj, std::type_identity_t<const RelPosEnc<T>*> enc,
                       std::type_identity_t<const GateSet<T>*> gates,
                       Axis axis);

// ---------------------------------------------------------------------------
// Layers

/// Multi-head axial attention along one axis. Channels are split into
/// `heads` groups of d = channels_out / heads after projection; each head has
/// its own positional tables, gates are shared across heads unless
/// per_head_gates is set.
template <typename T>
class MultiHeadAxial {
 public:
  MultiHeadAxial(ParamStore<T>& store, const std::string& prefix, const AttnLayerConfig& cfg, std::size_t axis_len);

  Var<T> forward(Var<T> x) const;

  const AttnLayerConfig& config() const { return cfg_; }
  const ProjectionSet<T>& projections() const { return proj_; }
  const std::vector<RelPosEnc<T>>& encodings() const { return enc_; }
  const std::vector<GateSet<T>>& gates() const { return gates_; }
  std::size_t head_dim() const { return cfg_.channels_out / cfg_.heads; }

 private:
  AttnLayerConfig cfg_;
  std::size_t axis_len_;
  ProjectionSet<T> proj_;
  std::vector<RelPosEnc<T>> enc_;
  std::vector<GateSet<T>> gates_;
};

/// Gated axial transformer layer: 1x1 conv (optionally strided) + batchnorm +
/// relu, height attention, width attention, relu, 1x1 output conv, plus the
/// residual path (identity, or a strided 1x1 conv when the shape changes).
template <typename T>
class GatedAxialLayer {
 public:
  GatedAxialLayer(ParamStore<T>& store, const std::string& prefix, AttnLayerConfig cfg, std::size_t in_h,
                  std::size_t in_w, std::size_t stride);

  Var<T> forward(Var<T> x, ops::NormMode mode) const;

  std::size_t stride() const { return stride_; }
  std::size_t out_h() const { return out_h_; }
  std::size_t out_w() const { return out_w_; }
  const AttnLayerConfig& config() const { return cfg_; }
  const MultiHeadAxial<T>& height() const { return height_; }
  const MultiHeadAxial<T>& width() const { return width_; }
  Param<T>& output_weight() const { return *out_w_param_; }
  Param<T>& output_bias() const { return *out_b_param_; }
  std::vector<GateSet<T>> gates() const;

 private:
  AttnLayerConfig cfg_;
  std::size_t stride_;
  std::size_t out_h_, out_w_;
  Param<T>* in_w_;
  Param<T>* bn_gamma_;
  Param<T>* bn_beta_;
  Tensor<T>* bn_mean_;
  Tensor<T>* bn_var_;
  MultiHeadAxial<T> height_;
  MultiHeadAxial<T> width_;
  Param<T>* out_w_param_;
  Param<T>* out_b_param_;
  Param<T>* res_w_ = nullptr;
};

/// Parameter count of a gated build minus its ungated twin.
template <typename T>
long long count_extra_gate_params(const ParamStore<T>& gated, const ParamStore<T>& ungated) {
  return static_cast<long long>(gated.scalar_count()) - static_cast<long long>(ungated.scalar_count());
}

extern template class MultiHeadAxial<float>;
extern template class MultiHeadAxial<double>;
extern template class GatedAxialLayer<float>;
extern template class GatedAxialLayer<double>;

}  // namespace axialseg
