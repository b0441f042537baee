#pragma once

#include <cstddef>

#include "unimp/graph.hpp"
#include "unimp/ops.hpp"

namespace unimp {

/// Iterates Y <- A_norm Y starting from the input view of y0 (observed and
/// unmasked rows). With clamp, visible rows are reset to their labels after
/// every iteration.
Matrix lpa_propagate(const CsrMatrix& a_norm, const LabelState& y0, std::size_t iterations, bool clamp = false);

enum class Activation { relu, identity };

struct GcnLayerParams {
  Tensor w;     // [d_in x d_out]
  Tensor bias;  // [d_out], optional
  Activation activation = Activation::relu;

  static GcnLayerParams init(std::size_t d_in, std::size_t d_out, Activation activation, Rng& rng,
                             bool with_bias = true);
};

/// activation(A_norm H W + b).
Tensor gcn_layer(const Tensor& h, const CsrMatrix& a_norm, const GcnLayerParams& params);

struct SumAttentionLayerParams {
  std::size_t heads = 1;
  std::size_t head_dim = 1;
  double slope = 0.2;
  Tensor w;      // [d_in x heads*head_dim]
  Tensor a_dst;  // [1 x heads*head_dim]
  Tensor a_src;  // [1 x heads*head_dim]
  Tensor bias;   // [heads*head_dim], optional

  static SumAttentionLayerParams init(std::size_t d_in, std::size_t heads, std::size_t head_dim, Rng& rng);
};

/// GAT-style layer over the in-edges of g (self-loops expected). Per head c,
/// score(j -> i) = leaky_relu(a_dst,c . z_i,c + a_src,c . z_j,c) with z = H W,
/// normalized over N(i), then out_i,c = sum_j alpha z_j,c. Heads are
/// concatenated. When alpha_out is given it receives the [E x heads] weights.
Tensor sum_attention_layer(const Tensor& h, const Graph& g, const SumAttentionLayerParams& params,
                           double attention_dropout = 0.0, bool training = false, Rng* rng = nullptr,
                           Tensor* alpha_out = nullptr);

}  // namespace unimp
