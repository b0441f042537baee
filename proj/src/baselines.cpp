#include "unimp/baselines.hpp"

#include <algorithm>
#include <string>

#include "unimp/errors.hpp"

namespace unimp {

Matrix lpa_propagate(const CsrMatrix& a_norm, const LabelState& y0, std::size_t iterations, bool clamp) {
  if (a_norm.rows != y0.num_nodes() || a_norm.cols != y0.num_nodes()) {
    throw ShapeError("lpa_propagate: adjacency is " + std::to_string(a_norm.rows) + "x" +
                     std::to_string(a_norm.cols) + " but labels cover " + std::to_string(y0.num_nodes()) + " nodes");
  }
  Matrix y = y0.input_view();
  const Matrix anchor = y;
  Matrix next(y.rows, y.cols);
  for (std::size_t it = 0; it < iterations; ++it) {
    std::fill(next.values.begin(), next.values.end(), 0.0);
    for (std::size_t i = 0; i < a_norm.rows; ++i) {
      auto out = next.row(i);
      for (std::size_t e = a_norm.offsets[i]; e < a_norm.offsets[i + 1]; ++e) {
        const double w = a_norm.values[e];
        const auto in = y.row(a_norm.indices[e]);
        for (std::size_t k = 0; k < y.cols; ++k) out[k] += w * in[k];
      }
    }
    std::swap(y, next);
    if (clamp) {
      for (std::size_t i = 0; i < y.rows; ++i)
        if (y0.visible(i)) std::copy(anchor.row(i).begin(), anchor.row(i).end(), y.row(i).begin());
    }
  }
  return y;
}

GcnLayerParams GcnLayerParams::init(std::size_t d_in, std::size_t d_out, Activation activation, Rng& rng,
                                    bool with_bias) {
  GcnLayerParams p;
  p.w = glorot_uniform(d_in, d_out, rng);
  if (with_bias) p.bias = zeros_parameter({d_out});
  p.activation = activation;
  return p;
}

Tensor gcn_layer(const Tensor& h, const CsrMatrix& a_norm, const GcnLayerParams& params) {
  if (h.rows() != a_norm.cols) {
    throw ShapeError("gcn_layer: " + std::to_string(h.rows()) + " feature rows for a " +
                     std::to_string(a_norm.rows) + "x" + std::to_string(a_norm.cols) + " adjacency");
  }
  Tensor out = spmm(a_norm, matmul(h, params.w));
  if (params.bias.defined()) out = add_bias(out, params.bias);
  return params.activation == Activation::relu ? relu(out) : out;
}

SumAttentionLayerParams SumAttentionLayerParams::init(std::size_t d_in, std::size_t heads, std::size_t head_dim,
                                                      Rng& rng) {
  SumAttentionLayerParams p;
  p.heads = heads;
  p.head_dim = head_dim;
  p.w = glorot_uniform(d_in, heads * head_dim, rng);
  p.a_dst = glorot_uniform(1, heads * head_dim, rng);
  p.a_src = glorot_uniform(1, heads * head_dim, rng);
  p.bias = zeros_parameter({heads * head_dim});
  return p;
}

Tensor sum_attention_layer(const Tensor& h, const Graph& g, const SumAttentionLayerParams& params,
                           double attention_dropout, bool training, Rng* rng, Tensor* alpha_out) {
  if (h.rows() != g.num_nodes()) {
    throw ShapeError("sum_attention_layer: " + std::to_string(h.rows()) + " feature rows for " +
                     std::to_string(g.num_nodes()) + " nodes");
  }
  const std::size_t n = g.num_nodes();
  const std::vector<std::size_t> broadcast(n, 0);
  Tensor z = matmul(h, params.w);
  Tensor s_dst = head_dot(z, gather_rows(params.a_dst, broadcast), params.heads);
  Tensor s_src = head_dot(z, gather_rows(params.a_src, broadcast), params.heads);
  Tensor scores = leaky_relu(add(gather_rows(s_dst, g.destinations()), gather_rows(s_src, g.sources())),
                             params.slope);
  Tensor alpha = segment_softmax(scores, g.destinations(), n);
  if (alpha_out) *alpha_out = alpha;
  if (training && attention_dropout > 0.0) {
    if (!rng) throw ContractError("sum_attention_layer: attention dropout needs an rng");
    alpha = dropout(alpha, attention_dropout, true, *rng);
  }
  Tensor messages = head_scale(gather_rows(z, g.sources()), alpha, params.heads);
  Tensor out = scatter_add_rows(messages, g.destinations(), n);
  if (params.bias.defined()) out = add_bias(out, params.bias);
  return out;
}

}  // namespace unimp
