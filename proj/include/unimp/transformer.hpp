#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "unimp/graph.hpp"
#include "unimp/ops.hpp"

namespace unimp {

enum class ResidualMode { none, simple, gated };

/// Skip-connection parameters shared by every layer type.
///   r = h_in W_r + b_r
///   gated:  beta = sigmoid([h; r; h - r] W_g), combined = (1 - beta) h + beta r
///   simple: combined = h + r
///   none:   combined = h
/// Interior layers then apply ReLU(LayerNorm(combined)); the final layer
/// returns combined unchanged.
struct ResidualParams {
  Tensor w_r;      // [d_in x width]
  Tensor b_r;      // [width]
  Tensor w_g;      // [3*width x 1]
  Tensor ln_gain;  // [width]
  Tensor ln_bias;  // [width]

  static ResidualParams init(std::size_t d_in, std::size_t width, Rng& rng);
  std::vector<Tensor> parameters(ResidualMode mode, bool layer_norm) const;
};

struct LayerOptions {
  bool training = false;
  double attention_dropout = 0.0;
  ResidualMode residual = ResidualMode::gated;
  bool layer_norm = true;
  bool identity_activation = false;
  /// Replaces the learned gate pre-activation with a constant.
  std::optional<double> gate_preactivation;
  /// Per-layer attention weights to use instead of computing them; the
  /// weights are treated as constants.
  const std::vector<Tensor>* frozen_attention = nullptr;
};

struct TransformerLayerParams {
  std::size_t in_dim = 0;
  std::size_t heads = 1;
  std::size_t head_dim = 1;
  bool final_layer = false;
  Tensor w_q, b_q, w_k, b_k, w_v, b_v;  // [in_dim x heads*head_dim], [heads*head_dim]
  Tensor w_e, b_e;                      // [d_e x heads*head_dim], empty without edge features
  ResidualParams residual;

  /// Glorot weights, zero biases and a zero gate. edge_dim = 0 disables the
  /// edge encoder.
  static TransformerLayerParams init(std::size_t in_dim, std::size_t heads, std::size_t head_dim, bool final_layer,
                                     std::size_t edge_dim, Rng& rng);

  std::size_t out_dim() const { return final_layer ? head_dim : heads * head_dim; }
  bool uses_edge_features() const { return w_e.defined(); }
  std::vector<Tensor> parameters(ResidualMode mode, bool layer_norm) const;
};

/// e_ij = W_e e_ij + b_e for every edge, [E x heads*head_dim]; undefined when
/// the layer has no edge encoder. Throws ConfigError if the layer expects edge
/// features that g does not carry.
Tensor encode_edges(const Graph& g, const TransformerLayerParams& p);

/// Per-head weights alpha [E x heads]: softmax over N(i) of
/// q_i . (k_j + e_ij) / sqrt(head_dim). Attention dropout applies in training.
Tensor attention_scores(const Tensor& h, const Graph& g, const TransformerLayerParams& p, const Tensor& edge_enc,
                        const LayerOptions& opts, Rng& rng, Tensor* alpha_before_dropout = nullptr);

/// h_hat_i = concat_c sum_j alpha_c,ij (v_c,j + e_c,ij), [n x heads*head_dim].
Tensor aggregate_messages(const Tensor& h, const Tensor& alpha, const Graph& g, const TransformerLayerParams& p,
                          const Tensor& edge_enc);

/// Combines aggregated messages with the projected input (see ResidualParams).
Tensor gated_residual(const Tensor& h_hat, const Tensor& h_in, const ResidualParams& p, bool final_layer,
                      const LayerOptions& opts);

struct TransformerTrace {
  std::vector<Tensor> attention;  // per layer, [E x heads], before dropout
};

/// One attention layer. Final layers average their heads before the residual.
/// fixed_alpha, when given, replaces the computed attention weights.
Tensor transformer_layer(const Tensor& h, const Graph& g, const TransformerLayerParams& p, const LayerOptions& opts,
                         Rng& rng, const Tensor* fixed_alpha = nullptr, Tensor* alpha = nullptr);

/// Runs the layer stack on a graph that already has self-loops. Feature
/// dropout with rate feature_dropout is applied to every layer input during
/// training. Throws ConfigError if the layer widths do not chain.
Tensor transformer_forward(const Graph& g, const Tensor& h0, const std::vector<TransformerLayerParams>& layers,
                           const LayerOptions& opts, double feature_dropout, Rng& rng,
                           TransformerTrace* trace = nullptr);

}  // namespace unimp
