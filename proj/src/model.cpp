#include "unimp/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "unimp/errors.hpp"

namespace unimp {

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::mlp: return "mlp";
    case Architecture::gcn: return "gcn";
    case Architecture::gat: return "gat";
    case Architecture::transformer: return "transformer";
  }
  return "?";
}

std::string to_string(InputMode inputs) {
  switch (inputs) {
    case InputMode::xa: return "xa";
    case InputMode::ay: return "ay";
    case InputMode::xay: return "xay";
  }
  return "?";
}

std::string to_string(ResidualMode mode) {
  switch (mode) {
    case ResidualMode::none: return "none";
    case ResidualMode::simple: return "simple";
    case ResidualMode::gated: return "gated";
  }
  return "?";
}

Architecture architecture_from_string(const std::string& text) {
  if (text == "mlp") return Architecture::mlp;
  if (text == "gcn") return Architecture::gcn;
  if (text == "gat") return Architecture::gat;
  if (text == "transformer" || text == "unimp") return Architecture::transformer;
  throw ConfigError("unknown model '" + text + "'");
}

InputMode input_mode_from_string(const std::string& text) {
  if (text == "xa") return InputMode::xa;
  if (text == "ay") return InputMode::ay;
  if (text == "xay") return InputMode::xay;
  throw ConfigError("unknown input setting '" + text + "'");
}

ResidualMode residual_mode_from_string(const std::string& text) {
  if (text == "none") return ResidualMode::none;
  if (text == "simple") return ResidualMode::simple;
  if (text == "gated") return ResidualMode::gated;
  throw ConfigError("unknown residual mode '" + text + "'");
}

ResidualMode ModelConfig::residual_mode() const {
  if (residual) return *residual;
  return arch == Architecture::transformer ? ResidualMode::gated : ResidualMode::none;
}

bool ModelConfig::layer_norm() const {
  return arch == Architecture::transformer || residual_mode() != ResidualMode::none;
}

void ModelConfig::validate() const {
  if (num_layers == 0) throw ConfigError("num_layers must be at least 1");
  if (hidden_size == 0) throw ConfigError("hidden_size must be positive");
  if (num_heads == 0) throw ConfigError("num_heads must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (arch == Architecture::mlp && inputs != InputMode::xa) {
    throw ConfigError("the MLP baseline ignores the graph and only takes node features (inputs xa)");
  }
  if (edge_features && arch != Architecture::transformer) {
    throw ConfigError("edge features are only supported by the transformer");
  }
}

Tensor embed_label_matrix(const Matrix& label_input, const LabelEmbedding& emb) {
  return matmul(Tensor::from_matrix(label_input), emb.w_d);
}

Tensor embed_labels(const LabelState& labels, const LabelEmbedding& emb) {
  return embed_label_matrix(labels.input_view(), emb);
}

Tensor fuse_inputs(const Tensor& x, const Tensor& y_d) { return add(x, y_d); }

GraphContext GraphContext::build(const Graph& g) {
  GraphContext ctx;
  ctx.graph = add_self_loops(g);
  ctx.a_norm = row_normalized_adjacency(ctx.graph);
  ctx.identity = CsrMatrix::identity(g.num_nodes());
  return ctx;
}

UniMPModel::UniMPModel(const ModelConfig& config, std::size_t feature_dim, std::size_t num_classes,
                       std::size_t edge_dim, Rng& rng)
    : config_(config), feature_dim_(feature_dim), num_classes_(num_classes), edge_dim_(edge_dim) {
  config_.validate();
  if (feature_dim == 0 || num_classes == 0) throw ConfigError("model needs positive feature and class counts");
  if (config_.edge_features && edge_dim == 0) throw ConfigError("edge features requested but the graph has none");
  if (!config_.edge_features) edge_dim_ = 0;
  if (config_.uses_labels()) embedding_.w_d = glorot_uniform(num_classes, feature_dim, rng);

  const std::size_t L = config_.num_layers, C = config_.num_heads, d = config_.hidden_size;
  std::size_t width = feature_dim;
  for (std::size_t l = 0; l < L; ++l) {
    const bool last = l + 1 == L;
    switch (config_.arch) {
      case Architecture::transformer: {
        auto p = TransformerLayerParams::init(width, C, last ? num_classes : d, last, edge_dim_, rng);
        if (config_.shared_edge_encoder && l > 0 && p.uses_edge_features() &&
            transformer_.front().w_e.shape() == p.w_e.shape()) {
          p.w_e = transformer_.front().w_e;
          p.b_e = transformer_.front().b_e;
        }
        width = p.out_dim();
        transformer_.push_back(std::move(p));
        break;
      }
      case Architecture::gat: {
        auto p = SumAttentionLayerParams::init(width, C, last ? num_classes : d, rng);
        const std::size_t out = last ? num_classes : C * d;
        residual_.push_back(ResidualParams::init(width, out, rng));
        width = out;
        gat_.push_back(std::move(p));
        break;
      }
      case Architecture::gcn:
      case Architecture::mlp: {
        const std::size_t out = last ? num_classes : C * d;
        gcn_.push_back(GcnLayerParams::init(width, out, Activation::identity, rng));
        residual_.push_back(ResidualParams::init(width, out, rng));
        width = out;
        break;
      }
    }
  }
}

Tensor UniMPModel::input_layer(const Matrix& x, const Matrix& label_input) const {
  if (x.cols != feature_dim_) {
    throw ShapeError("model expects " + std::to_string(feature_dim_) + " feature columns, got " +
                     std::to_string(x.cols));
  }
  Tensor h = config_.uses_features() ? Tensor::from_matrix(x) : Tensor::zeros({x.rows, x.cols});
  if (config_.uses_labels()) {
    if (label_input.rows != x.rows || label_input.cols != num_classes_) {
      throw ShapeError("label input is " + std::to_string(label_input.rows) + "x" + std::to_string(label_input.cols) +
                       ", expected " + std::to_string(x.rows) + "x" + std::to_string(num_classes_));
    }
    h = fuse_inputs(h, embed_label_matrix(label_input, embedding_));
  }
  return h;
}

Tensor UniMPModel::forward(const GraphContext& ctx, const Matrix& x, const Matrix& label_input,
                           const ForwardOptions& opts, Rng& rng, ForwardTrace* trace) const {
  if (x.rows != ctx.graph.num_nodes()) {
    throw ShapeError("model input has " + std::to_string(x.rows) + " rows for " +
                     std::to_string(ctx.graph.num_nodes()) + " nodes");
  }
  LayerOptions lo;
  lo.training = opts.training;
  lo.attention_dropout = config_.dropout;
  lo.residual = config_.residual_mode();
  lo.layer_norm = config_.layer_norm() && !opts.disable_layer_norm;
  lo.identity_activation = opts.identity_activation;
  lo.gate_preactivation = opts.gate_preactivation;
  lo.frozen_attention = opts.frozen_attention;

  Tensor h = input_layer(x, label_input);
  if (config_.arch == Architecture::transformer) {
    TransformerTrace t;
    Tensor out = transformer_forward(ctx.graph, h, transformer_, lo, config_.dropout, rng, trace ? &t : nullptr);
    if (trace) trace->attention = std::move(t.attention);
    return out;
  }
  if (opts.frozen_attention && config_.arch == Architecture::gat) {
    throw ContractError("sum-attention layers cannot run with frozen attention");
  }
  if (trace) trace->attention.clear();
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const bool last = l + 1 == config_.num_layers;
    Tensor in = dropout(h, config_.dropout, opts.training, rng);
    Tensor h_hat;
    if (config_.arch == Architecture::gat) {
      Tensor alpha;
      h_hat = sum_attention_layer(in, ctx.graph, gat_[l], config_.dropout, opts.training, &rng, &alpha);
      if (last) h_hat = head_mean(h_hat, gat_[l].heads);
      if (trace) trace->attention.push_back(alpha);
    } else {
      h_hat = gcn_layer(in, config_.arch == Architecture::gcn ? ctx.a_norm : ctx.identity, gcn_[l]);
    }
    h = gated_residual(h_hat, in, residual_[l], last, lo);
  }
  return h;
}

std::vector<std::pair<std::string, Tensor>> UniMPModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  std::set<const Tensor::Node*> seen;
  auto add_named = [&](const std::string& name, const Tensor& t) {
    if (t.defined() && seen.insert(&t.node()).second) out.emplace_back(name, t);
  };
  const ResidualMode mode = config_.residual_mode();
  const bool ln = config_.layer_norm();
  auto add_residual = [&](const std::string& prefix, const ResidualParams& r, bool last) {
    if (mode != ResidualMode::none) {
      add_named(prefix + "w_r", r.w_r);
      add_named(prefix + "b_r", r.b_r);
    }
    if (mode == ResidualMode::gated) add_named(prefix + "w_g", r.w_g);
    if (ln && !last) {
      add_named(prefix + "ln_gain", r.ln_gain);
      add_named(prefix + "ln_bias", r.ln_bias);
    }
  };
  if (config_.uses_labels()) add_named("label_embedding.w_d", embedding_.w_d);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    const bool last = l + 1 == config_.num_layers;
    if (config_.arch == Architecture::transformer) {
      const auto& p = transformer_[l];
      add_named(prefix + "w_q", p.w_q);
      add_named(prefix + "b_q", p.b_q);
      add_named(prefix + "w_k", p.w_k);
      add_named(prefix + "b_k", p.b_k);
      add_named(prefix + "w_v", p.w_v);
      add_named(prefix + "b_v", p.b_v);
      add_named(prefix + "w_e", p.w_e);
      add_named(prefix + "b_e", p.b_e);
      add_residual(prefix, p.residual, last);
    } else if (config_.arch == Architecture::gat) {
      add_named(prefix + "w", gat_[l].w);
      add_named(prefix + "a_dst", gat_[l].a_dst);
      add_named(prefix + "a_src", gat_[l].a_src);
      add_named(prefix + "bias", gat_[l].bias);
      add_residual(prefix, residual_[l], last);
    } else {
      add_named(prefix + "w", gcn_[l].w);
      add_named(prefix + "bias", gcn_[l].bias);
      add_residual(prefix, residual_[l], last);
    }
  }
  return out;
}

std::vector<Tensor> UniMPModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void UniMPModel::load_parameters(const std::vector<std::pair<std::string, Tensor>>& values) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : values) by_name[name] = &t;
  const auto own = named_parameters();
  if (own.size() != by_name.size()) {
    throw IntegrityError("parameter set has " + std::to_string(by_name.size()) + " entries, model expects " +
                         std::to_string(own.size()));
  }
  for (const auto& [name, t] : own) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IntegrityError("missing parameter '" + name + "'");
    if (it->second->shape() != t.shape()) {
      throw IntegrityError("parameter '" + name + "' has shape " + shape_to_string(it->second->shape()) +
                           ", expected " + shape_to_string(t.shape()));
    }
  }
  for (const auto& [name, t] : own) {
    const auto src = by_name.at(name)->data();
    std::copy(src.begin(), src.end(), t.data().begin());
  }
}

MaskedLabels mask_labels(const LabelState& labels, std::span<const std::size_t> train_set, double label_rate,
                         Rng& rng) {
  if (!(label_rate >= 0.0 && label_rate < 1.0)) {
    throw ContractError("label_rate must lie in [0, 1) so that some labels are masked, got " +
                        std::to_string(label_rate));
  }
  if (train_set.empty()) throw ContractError("mask_labels: empty training set");
  std::vector<std::size_t> order(train_set.begin(), train_set.end());
  std::shuffle(order.begin(), order.end(), rng);
  const auto kept = static_cast<std::size_t>(std::floor(label_rate * static_cast<double>(order.size())));
  MaskedLabels out{labels, {}};
  for (std::size_t r = kept; r < order.size(); ++r) {
    const std::size_t node = order[r];
    if (!out.state.observed[node]) throw ContractError("mask_labels: node " + std::to_string(node) + " is unlabeled");
    out.state.masked[node] = 1;
    out.masked.push_back(node);
  }
  std::sort(out.masked.begin(), out.masked.end());
  return out;
}

double superposition_deviation(const UniMPModel& model, const GraphContext& ctx, const Matrix& x, const Matrix& y,
                               const ForwardOptions& opts) {
  if (model.config().arch == Architecture::gat) {
    throw ContractError("superposition check is undefined for sum attention");
  }
  Rng rng(0);
  ForwardOptions base = opts;
  base.frozen_attention = nullptr;
  ForwardTrace trace;
  const Matrix fxy = model.forward(ctx, x, y, base, rng, &trace).to_matrix();
  ForwardOptions frozen = opts;
  frozen.frozen_attention = model.config().arch == Architecture::transformer ? &trace.attention : nullptr;
  const Matrix zx(x.rows, x.cols), zy(y.rows, y.cols);
  const Matrix fx0 = model.forward(ctx, x, zy, frozen, rng).to_matrix();
  const Matrix f0y = model.forward(ctx, zx, y, frozen, rng).to_matrix();
  const Matrix f00 = model.forward(ctx, zx, zy, frozen, rng).to_matrix();
  double worst = 0.0;
  for (std::size_t i = 0; i < fxy.values.size(); ++i) {
    worst = std::max(worst, std::abs(fxy.values[i] - fx0.values[i] - f0y.values[i] + f00.values[i]));
  }
  return worst;
}

double superposition_check(const UniMPModel& model, const GraphContext& ctx, const Matrix& x, const Matrix& y,
                           const std::optional<ForwardOptions>& opts) {
  ForwardOptions linear;
  linear.identity_activation = true;
  linear.disable_layer_norm = true;
  linear.gate_preactivation = 0.0;
  if (opts) {
    const bool gate_fixed = opts->gate_preactivation.has_value() || model.config().residual_mode() != ResidualMode::gated;
    const bool norm_off = opts->disable_layer_norm || !model.config().layer_norm();
    if (opts->training || !opts->identity_activation || !norm_off || !gate_fixed) {
      throw ContractError("superposition check needs identity activations, no LayerNorm, a fixed gate and no dropout");
    }
    linear = *opts;
  }
  return superposition_deviation(model, ctx, x, y, linear);
}

}  // namespace unimp
