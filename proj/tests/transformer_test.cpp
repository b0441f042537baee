#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "test_support.hpp"
#include "unimp/baselines.hpp"
#include "unimp/errors.hpp"
#include "unimp/synth.hpp"
#include "unimp/transformer.hpp"

using namespace unimp;
using namespace unimp::testing;

namespace {

std::vector<TransformerLayerParams> make_stack(std::size_t in_dim, std::size_t layers, std::size_t heads,
                                               std::size_t hidden, std::size_t classes, std::size_t edge_dim,
                                               Rng& rng) {
  std::vector<TransformerLayerParams> out;
  std::size_t width = in_dim;
  for (std::size_t l = 0; l < layers; ++l) {
    const bool last = l + 1 == layers;
    out.push_back(TransformerLayerParams::init(width, heads, last ? classes : hidden, last, edge_dim, rng));
    width = out.back().out_dim();
  }
  return out;
}

std::vector<Tensor> all_parameters(const std::vector<TransformerLayerParams>& layers) {
  std::vector<Tensor> out;
  for (const auto& l : layers)
    for (const Tensor& t : l.parameters(ResidualMode::gated, true)) out.push_back(t);
  return out;
}

// Random non-zero values for every bias and gate so the checks are not
// dominated by the zero initialization.
void perturb(const std::vector<Tensor>& params, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 0.3);
  for (const Tensor& t : params)
    for (double& v : t.data()) v += normal(rng);
}

Graph with_edge_features(const Graph& g, std::size_t dim, Rng& rng) {
  Matrix feats = random_matrix(g.num_edges(), dim, rng);
  const auto edges = g.edges();
  return Graph::from_edges(g.num_nodes(), edges, &feats, g.directed());
}

}  // namespace

TEST_CASE("attention_scores examples") {
  Rng rng(1);
  Graph g = random_graph(7, 0.4, rng, true);
  auto p = TransformerLayerParams::init(3, 2, 4, false, 0, rng);
  Tensor alpha = attention_scores(Tensor::zeros({7, 3}), g, p, Tensor(), LayerOptions{}, rng);
  for (std::size_t e = 0; e < g.num_edges(); ++e)
    for (std::size_t c = 0; c < 2; ++c)
      CHECK(alpha.at(e, c) == doctest::Approx(1.0 / g.in_degree(g.destinations()[e])).epsilon(1e-12));

  // Star without self-loops: the center sees keys ln 1, ln 2, ln 4.
  const std::vector<Graph::Edge> star{{1, 0}, {0, 1}, {2, 0}, {0, 2}, {3, 0}, {0, 3}};
  Graph s = Graph::from_edges(4, star);
  auto unit = TransformerLayerParams::init(1, 1, 1, false, 0, rng);
  unit.w_q.data()[0] = 1.0;
  unit.w_k.data()[0] = 1.0;
  Tensor h = Tensor::from_data({4, 1}, {1.0, std::log(1.0), std::log(2.0), std::log(4.0)});
  Tensor a = attention_scores(h, s, unit, Tensor(), LayerOptions{}, rng);
  const double expected[] = {1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0};
  for (std::size_t e = 0; e < s.num_edges(); ++e)
    if (s.destinations()[e] == 0) CHECK(a.at(e, 0) == doctest::Approx(expected[s.sources()[e] - 1]).epsilon(1e-14));
}

TEST_CASE("zero edge features match the no-edge-feature configuration") {
  Rng rng(2);
  Graph plain = random_graph(8, 0.4, rng, true);
  Matrix zeros(plain.num_edges(), 3);
  const auto edges = plain.edges();
  Graph zero_feats = Graph::from_edges(8, edges, &zeros);
  auto with = TransformerLayerParams::init(4, 2, 3, false, 3, rng);
  TransformerLayerParams without = with;
  without.w_e = Tensor();
  without.b_e = Tensor();
  Tensor h = random_tensor({8, 4}, rng, false);
  Rng r1(0), r2(0);
  CHECK(transformer_layer(h, zero_feats, with, LayerOptions{}, r1).to_matrix() ==
        transformer_layer(h, plain, without, LayerOptions{}, r2).to_matrix());
  CHECK_THROWS_AS(transformer_layer(h, plain, with, LayerOptions{}, r1), ConfigError);
}

TEST_CASE("aggregate_messages examples") {
  Rng rng(3);
  const Graph lonely = add_self_loops(Graph::from_edges(3, std::vector<Graph::Edge>{}));
  Matrix ef = random_matrix(3, 2, rng);
  const auto edges = lonely.edges();
  Graph g = Graph::from_edges(3, edges, &ef);
  auto p = TransformerLayerParams::init(4, 2, 3, false, 2, rng);
  perturb({p.b_v, p.b_e}, rng);
  Tensor h = random_tensor({3, 4}, rng, false);
  Tensor enc = encode_edges(g, p);
  Tensor alpha = attention_scores(h, g, p, enc, LayerOptions{}, rng);
  const Matrix out = aggregate_messages(h, alpha, g, p, enc).to_matrix();
  const Matrix v = add_bias(matmul(h, p.w_v), p.b_v).to_matrix();
  const Matrix e = enc.to_matrix();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 6; ++k) CHECK(out(i, k) == doctest::Approx(v(i, k) + e(i, k)).epsilon(1e-14));

  // Two neighbors with equal values and weight 1/2 each.
  const std::vector<Graph::Edge> two{{1, 0}, {2, 0}, {0, 1}, {0, 2}};
  Graph pair = Graph::from_edges(3, two);
  auto q = TransformerLayerParams::init(2, 1, 2, false, 0, rng);
  Tensor hv = Tensor::from_data({3, 2}, {0.0, 0.0, 1.5, -2.0, 1.5, -2.0});
  Tensor half = Tensor::full({pair.num_edges(), 1}, 0.5);
  const Matrix agg = aggregate_messages(hv, half, pair, q, Tensor()).to_matrix();
  const Matrix vv = matmul(hv, q.w_v).to_matrix();
  CHECK(agg(0, 0) == doctest::Approx(vv(1, 0)));
  CHECK(agg(0, 1) == doctest::Approx(vv(1, 1)));

  Graph big = random_graph(10, 0.3, rng, true);
  auto wide = TransformerLayerParams::init(5, 4, 16, false, 0, rng);
  Tensor hb = random_tensor({10, 5}, rng, false);
  Tensor ab = attention_scores(hb, big, wide, Tensor(), LayerOptions{}, rng);
  CHECK(aggregate_messages(hb, ab, big, wide, Tensor()).cols() == 64);
  CHECK_THROWS_AS(aggregate_messages(hb, Tensor::zeros({3, 4}), big, wide, Tensor()), ShapeError);
}

TEST_CASE("gated_residual examples") {
  Rng rng(4);
  auto p = ResidualParams::init(3, 4, rng);
  Tensor h_in = random_tensor({5, 3}, rng, false);
  Tensor h_hat = random_tensor({5, 4}, rng, false);
  const Tensor r = add_bias(matmul(h_in, p.w_r), p.b_r);
  LayerOptions opts;

  const Matrix interior = gated_residual(h_hat, h_in, p, false, opts).to_matrix();
  const Matrix reference =
      relu(layer_norm(add(scale(h_hat, 0.5), scale(r, 0.5)), p.ln_gain, p.ln_bias)).to_matrix();
  CHECK(max_abs_diff(interior, reference) < 1e-14);

  CHECK(gated_residual(r, h_in, p, true, opts).to_matrix() == r.to_matrix());

  perturb({p.w_g}, rng);
  Tensor beta = sigmoid(matmul(concat_cols({h_hat, r, sub(h_hat, r)}), p.w_g));
  for (double b : beta.data()) {
    CHECK(b > 0.0);
    CHECK(b < 1.0);
  }

  // Saturated gate: the layer reduces to the normalized residual path.
  LayerOptions saturated;
  saturated.gate_preactivation = 40.0;
  const Matrix sat = gated_residual(h_hat, h_in, p, false, saturated).to_matrix();
  CHECK(max_abs_diff(sat, relu(layer_norm(r, p.ln_gain, p.ln_bias)).to_matrix()) < 1e-4);

  LayerOptions simple;
  simple.residual = ResidualMode::simple;
  CHECK(max_abs_diff(gated_residual(h_hat, h_in, p, true, simple).to_matrix(), add(h_hat, r).to_matrix()) < 1e-15);
  LayerOptions none;
  none.residual = ResidualMode::none;
  CHECK(gated_residual(h_hat, h_in, p, true, none).to_matrix() == h_hat.to_matrix());
}

TEST_CASE("uniform single-head attention reduces to a GCN step") {
  Rng rng(5);
  Graph g = random_graph(15, 0.25, rng, true);
  auto p = TransformerLayerParams::init(4, 1, 6, false, 0, rng);
  for (double& v : p.w_q.data()) v = 0.0;
  for (double& v : p.w_k.data()) v = 0.0;
  Tensor h = random_tensor({15, 4}, rng, false);
  Tensor alpha = attention_scores(h, g, p, Tensor(), LayerOptions{}, rng);
  const Matrix msg = aggregate_messages(h, alpha, g, p, Tensor()).to_matrix();
  GcnLayerParams gcn;
  gcn.w = p.w_v;
  gcn.activation = Activation::identity;
  CHECK(max_abs_diff(msg, gcn_layer(h, row_normalized_adjacency(g), gcn).to_matrix()) < 1e-8);
}

TEST_CASE("single self-looped node is an affine map of its own features") {
  Rng rng(6);
  const Graph g = add_self_loops(Graph::from_edges(1, std::vector<Graph::Edge>{}));
  auto p = TransformerLayerParams::init(3, 2, 4, true, 0, rng);
  perturb({p.b_v, p.residual.b_r}, rng);
  Tensor h = random_tensor({1, 3}, rng, false);
  const Matrix out = transformer_forward(g, h, {p}, LayerOptions{}, 0.0, rng).to_matrix();
  const Tensor v = head_mean(add_bias(matmul(h, p.w_v), p.b_v), 2);
  const Tensor r = add_bias(matmul(h, p.residual.w_r), p.residual.b_r);
  CHECK(max_abs_diff(out, add(scale(v, 0.5), scale(r, 0.5)).to_matrix()) < 1e-14);
}

TEST_CASE("attention weights are normalized for every node and head") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Graph g = random_graph(12, 0.3, rng, true);
    auto layers = make_stack(5, 2, 3, 4, 3, 0, rng);
    perturb(all_parameters(layers), rng);
    TransformerTrace trace;
    transformer_forward(g, random_tensor({12, 5}, rng, false), layers, LayerOptions{}, 0.0, rng, &trace);
    for (const Tensor& alpha : trace.attention) {
      std::vector<double> totals(12 * 3, 0.0);
      for (std::size_t e = 0; e < g.num_edges(); ++e)
        for (std::size_t c = 0; c < 3; ++c) totals[g.destinations()[e] * 3 + c] += alpha.at(e, c);
      for (double t : totals) CHECK(std::abs(t - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("transformer_forward is permutation equivariant") {
  Rng rng(8);
  Graph g = random_graph(14, 0.3, rng, true);
  auto layers = make_stack(4, 3, 2, 5, 3, 0, rng);
  perturb(all_parameters(layers), rng);
  std::vector<std::size_t> perm(14);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const Matrix x = random_matrix(14, 4, rng);
  const Matrix a = transformer_forward(g, Tensor::from_matrix(x), layers, LayerOptions{}, 0.0, rng).to_matrix();
  const Matrix b = transformer_forward(permute_graph(g, perm), Tensor::from_matrix(permute_rows(x, perm)), layers,
                                       LayerOptions{}, 0.0, rng)
                       .to_matrix();
  CHECK(max_abs_diff(permute_rows(a, perm), b) < 1e-12);
}

TEST_CASE("transformer_forward validates the width chain") {
  Rng rng(9);
  Graph g = random_graph(4, 0.5, rng, true);
  auto layers = make_stack(3, 2, 2, 4, 2, 0, rng);
  CHECK_THROWS_AS(transformer_forward(g, Tensor::zeros({4, 5}), layers, LayerOptions{}, 0.0, rng), ConfigError);
  std::swap(layers[0], layers[1]);
  CHECK_THROWS_AS(transformer_forward(g, Tensor::zeros({4, 3}), layers, LayerOptions{}, 0.0, rng), ConfigError);
}

TEST_CASE("3-layer transformer gradients match finite differences on an SBM") {
  SbmSpec spec;
  spec.n = 20;
  spec.c = 2;
  spec.p_in = 0.4;
  spec.p_out = 0.05;
  spec.m = 4;
  spec.seed = 10;
  Dataset d = generate_sbm(spec).data;
  Rng rng(10);
  Graph g = with_edge_features(add_self_loops(d.graph), 2, rng);
  auto layers = make_stack(4, 3, 2, 8, 2, 2, rng);
  std::vector<Tensor> params = all_parameters(layers);
  perturb(params, rng);
  Tensor x = Tensor::from_matrix(d.nodes.features, true);
  params.push_back(x);
  std::vector<std::size_t> rows(20);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  auto loss = [&] {
    Rng unused(0);
    return softmax_cross_entropy(transformer_forward(g, x, layers, LayerOptions{}, 0.0, unused), rows,
                                 d.nodes.classes);
  };
  CHECK(max_gradient_error(params, loss) < 1e-4);
}
