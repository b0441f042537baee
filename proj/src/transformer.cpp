#include "unimp/transformer.hpp"

#include <cmath>
#include <string>

#include "unimp/errors.hpp"

namespace unimp {

ResidualParams ResidualParams::init(std::size_t d_in, std::size_t width, Rng& rng) {
  ResidualParams p;
  p.w_r = glorot_uniform(d_in, width, rng);
  p.b_r = zeros_parameter({width});
  p.w_g = zeros_parameter({3 * width, 1});
  p.ln_gain = Tensor::full({width}, 1.0, true);
  p.ln_bias = zeros_parameter({width});
  return p;
}

std::vector<Tensor> ResidualParams::parameters(ResidualMode mode, bool layer_norm) const {
  std::vector<Tensor> out;
  if (mode != ResidualMode::none) {
    out.push_back(w_r);
    out.push_back(b_r);
  }
  if (mode == ResidualMode::gated) out.push_back(w_g);
  if (layer_norm) {
    out.push_back(ln_gain);
    out.push_back(ln_bias);
  }
  return out;
}

TransformerLayerParams TransformerLayerParams::init(std::size_t in_dim, std::size_t heads, std::size_t head_dim,
                                                    bool final_layer, std::size_t edge_dim, Rng& rng) {
  if (in_dim == 0 || heads == 0 || head_dim == 0) throw ConfigError("transformer layer: dimensions must be positive");
  TransformerLayerParams p;
  p.in_dim = in_dim;
  p.heads = heads;
  p.head_dim = head_dim;
  p.final_layer = final_layer;
  const std::size_t width = heads * head_dim;
  p.w_q = glorot_uniform(in_dim, width, rng);
  p.w_k = glorot_uniform(in_dim, width, rng);
  p.w_v = glorot_uniform(in_dim, width, rng);
  p.b_q = zeros_parameter({width});
  p.b_k = zeros_parameter({width});
  p.b_v = zeros_parameter({width});
  if (edge_dim > 0) {
    p.w_e = glorot_uniform(edge_dim, width, rng);
    p.b_e = zeros_parameter({width});
  }
  p.residual = ResidualParams::init(in_dim, p.out_dim(), rng);
  return p;
}

std::vector<Tensor> TransformerLayerParams::parameters(ResidualMode mode, bool layer_norm) const {
  std::vector<Tensor> out{w_q, b_q, w_k, b_k, w_v, b_v};
  if (uses_edge_features()) {
    out.push_back(w_e);
    out.push_back(b_e);
  }
  for (const Tensor& t : residual.parameters(mode, layer_norm && !final_layer)) out.push_back(t);
  return out;
}

Tensor encode_edges(const Graph& g, const TransformerLayerParams& p) {
  if (!p.uses_edge_features()) return {};
  if (!g.has_edge_features()) throw ConfigError("transformer layer expects edge features but the graph has none");
  if (g.edge_feature_dim() != p.w_e.rows()) {
    throw ConfigError("transformer layer expects " + std::to_string(p.w_e.rows()) + " edge features, graph has " +
                      std::to_string(g.edge_feature_dim()));
  }
  return add_bias(matmul(Tensor::from_matrix(g.edge_features()), p.w_e), p.b_e);
}

Tensor attention_scores(const Tensor& h, const Graph& g, const TransformerLayerParams& p, const Tensor& edge_enc,
                        const LayerOptions& opts, Rng& rng, Tensor* alpha_before_dropout) {
  if (h.rows() != g.num_nodes()) {
    throw ShapeError("attention_scores: " + std::to_string(h.rows()) + " rows for " + std::to_string(g.num_nodes()) +
                     " nodes");
  }
  Tensor q = add_bias(matmul(h, p.w_q), p.b_q);
  Tensor k = add_bias(matmul(h, p.w_k), p.b_k);
  Tensor keys = gather_rows(k, g.sources());
  if (edge_enc.defined()) keys = add(keys, edge_enc);
  Tensor scores = scale(head_dot(gather_rows(q, g.destinations()), keys, p.heads),
                        1.0 / std::sqrt(static_cast<double>(p.head_dim)));
  Tensor alpha = segment_softmax(scores, g.destinations(), g.num_nodes());
  if (alpha_before_dropout) *alpha_before_dropout = alpha;
  return dropout(alpha, opts.attention_dropout, opts.training, rng);
}

Tensor aggregate_messages(const Tensor& h, const Tensor& alpha, const Graph& g, const TransformerLayerParams& p,
                          const Tensor& edge_enc) {
  if (alpha.rows() != g.num_edges() || alpha.cols() != p.heads) {
    throw ShapeError("aggregate_messages: attention is " + shape_to_string(alpha.shape()) + " for " +
                     std::to_string(g.num_edges()) + " edges and " + std::to_string(p.heads) + " heads");
  }
  Tensor v = add_bias(matmul(h, p.w_v), p.b_v);
  Tensor values = gather_rows(v, g.sources());
  if (edge_enc.defined()) values = add(values, edge_enc);
  return scatter_add_rows(head_scale(values, alpha, p.heads), g.destinations(), g.num_nodes());
}

Tensor gated_residual(const Tensor& h_hat, const Tensor& h_in, const ResidualParams& p, bool final_layer,
                      const LayerOptions& opts) {
  Tensor combined = h_hat;
  if (opts.residual != ResidualMode::none) {
    Tensor r = add_bias(matmul(h_in, p.w_r), p.b_r);
    if (r.shape() != h_hat.shape()) {
      throw ShapeError("gated_residual: message " + shape_to_string(h_hat.shape()) + " vs residual " +
                       shape_to_string(r.shape()));
    }
    if (opts.residual == ResidualMode::simple) {
      combined = add(h_hat, r);
    } else if (opts.gate_preactivation) {
      const double beta = 1.0 / (1.0 + std::exp(-*opts.gate_preactivation));
      combined = add(scale(h_hat, 1.0 - beta), scale(r, beta));
    } else {
      Tensor beta = sigmoid(matmul(concat_cols({h_hat, r, sub(h_hat, r)}), p.w_g));
      combined = add(h_hat, mul_col(sub(r, h_hat), beta));
    }
  }
  if (final_layer) return combined;
  if (opts.layer_norm) combined = layer_norm(combined, p.ln_gain, p.ln_bias);
  return opts.identity_activation ? combined : relu(combined);
}

Tensor transformer_layer(const Tensor& h, const Graph& g, const TransformerLayerParams& p, const LayerOptions& opts,
                         Rng& rng, const Tensor* fixed_alpha, Tensor* alpha) {
  if (h.cols() != p.in_dim) {
    throw ShapeError("transformer_layer: input has " + std::to_string(h.cols()) + " columns, layer expects " +
                     std::to_string(p.in_dim));
  }
  Tensor edge_enc = encode_edges(g, p);
  Tensor weights;
  if (fixed_alpha) {
    weights = fixed_alpha->detach();
    if (alpha) *alpha = weights;
  } else {
    weights = attention_scores(h, g, p, edge_enc, opts, rng, alpha);
  }
  Tensor h_hat = aggregate_messages(h, weights, g, p, edge_enc);
  if (p.final_layer) h_hat = head_mean(h_hat, p.heads);
  return gated_residual(h_hat, h, p.residual, p.final_layer, opts);
}

Tensor transformer_forward(const Graph& g, const Tensor& h0, const std::vector<TransformerLayerParams>& layers,
                           const LayerOptions& opts, double feature_dropout, Rng& rng, TransformerTrace* trace) {
  if (layers.empty()) throw ConfigError("transformer_forward: no layers");
  std::size_t width = h0.cols();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].in_dim != width) {
      throw ConfigError("transformer_forward: layer " + std::to_string(l) + " expects width " +
                        std::to_string(layers[l].in_dim) + " but receives " + std::to_string(width));
    }
    if (layers[l].final_layer != (l + 1 == layers.size())) {
      throw ConfigError("transformer_forward: only the last layer may average heads");
    }
    width = layers[l].out_dim();
  }
  if (opts.frozen_attention && opts.frozen_attention->size() != layers.size()) {
    throw ConfigError("transformer_forward: frozen attention must cover every layer");
  }
  if (trace) trace->attention.clear();
  Tensor h = h0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = dropout(h, feature_dropout, opts.training, rng);
    Tensor alpha;
    const Tensor* fixed = opts.frozen_attention ? &(*opts.frozen_attention)[l] : nullptr;
    h = transformer_layer(h, g, layers[l], opts, rng, fixed, trace ? &alpha : nullptr);
    if (trace) trace->attention.push_back(alpha);
  }
  return h;
}

}  // namespace unimp
