#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "unimp/baselines.hpp"
#include "unimp/graph.hpp"
#include "unimp/transformer.hpp"

namespace unimp {

enum class Architecture { mlp, gcn, gat, transformer };
/// Which inputs the model sees: features + graph, labels + graph, or all three.
enum class InputMode { xa, ay, xay };

std::string to_string(Architecture arch);
std::string to_string(InputMode inputs);
std::string to_string(ResidualMode mode);
Architecture architecture_from_string(const std::string& text);
InputMode input_mode_from_string(const std::string& text);
ResidualMode residual_mode_from_string(const std::string& text);

struct ModelConfig {
  Architecture arch = Architecture::transformer;
  InputMode inputs = InputMode::xay;
  std::size_t num_layers = 3;
  std::size_t hidden_size = 128;  // per head; GCN/MLP layers use num_heads * hidden_size
  std::size_t num_heads = 2;
  double dropout = 0.3;
  /// Unset: gated for the transformer, none for the baselines.
  std::optional<ResidualMode> residual;
  bool edge_features = false;
  bool shared_edge_encoder = false;

  ResidualMode residual_mode() const;
  /// Interior LayerNorm: always for the transformer, otherwise only together
  /// with a residual connection.
  bool layer_norm() const;
  bool uses_features() const { return inputs != InputMode::ay; }
  bool uses_labels() const { return inputs != InputMode::xa; }
  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// W_d: class -> feature-space vector.
struct LabelEmbedding {
  Tensor w_d;  // [c x m]
};

/// Rows of visible (observed, unmasked) nodes become their label rows of W_d
/// (sum of active rows for multi-label); every other row is zero.
Tensor embed_labels(const LabelState& labels, const LabelEmbedding& emb);
Tensor embed_label_matrix(const Matrix& label_input, const LabelEmbedding& emb);

/// H0 = X + Y_d.
Tensor fuse_inputs(const Tensor& x, const Tensor& y_d);

/// Structures derived once per graph: the self-looped graph used by attention
/// layers, its row-normalized adjacency for GCN, and the identity for MLP.
struct GraphContext {
  Graph graph;
  CsrMatrix a_norm;
  CsrMatrix identity;

  static GraphContext build(const Graph& g);
};

struct ForwardOptions {
  bool training = false;
  bool identity_activation = false;
  bool disable_layer_norm = false;
  std::optional<double> gate_preactivation;
  const std::vector<Tensor>* frozen_attention = nullptr;
};

struct ForwardTrace {
  std::vector<Tensor> attention;  // per attention layer, [E x heads]
};

class UniMPModel {
 public:
  UniMPModel(const ModelConfig& config, std::size_t feature_dim, std::size_t num_classes, std::size_t edge_dim,
             Rng& rng);

  /// Logits [n x c] for the nodes of ctx. label_input is the model-input view
  /// Y~ (ignored unless the inputs include labels).
  Tensor forward(const GraphContext& ctx, const Matrix& x, const Matrix& label_input, const ForwardOptions& opts,
                 Rng& rng, ForwardTrace* trace = nullptr) const;

  const ModelConfig& config() const { return config_; }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t edge_dim() const { return edge_dim_; }
  const LabelEmbedding& label_embedding() const { return embedding_; }

  /// Trainable tensors with stable names, in a fixed order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  /// Copies values into the parameters by name; throws IntegrityError on any
  /// missing, unknown or mis-shaped entry.
  void load_parameters(const std::vector<std::pair<std::string, Tensor>>& values);

 private:
  Tensor input_layer(const Matrix& x, const Matrix& label_input) const;

  ModelConfig config_;
  std::size_t feature_dim_;
  std::size_t num_classes_;
  std::size_t edge_dim_;
  LabelEmbedding embedding_;
  std::vector<TransformerLayerParams> transformer_;
  std::vector<GcnLayerParams> gcn_;
  std::vector<SumAttentionLayerParams> gat_;
  std::vector<ResidualParams> residual_;  // gcn/gat/mlp layers
};

/// Result of hiding a random part of the training labels.
struct MaskedLabels {
  LabelState state;                  // masked flags set
  std::vector<std::size_t> masked;   // V-bar, ascending
};

/// Keeps floor(label_rate * |train_set|) randomly chosen training labels and
/// masks the rest. Requires 0 <= label_rate < 1 and a non-empty train_set;
/// otherwise ContractError.
MaskedLabels mask_labels(const LabelState& labels, std::span<const std::size_t> train_set, double label_rate,
                         Rng& rng);

/// max |f(X,Y) - f(X,0) - f(0,Y) + f(0,0)| over all logits, with attention
/// frozen at its f(X,Y) values and the given options otherwise.
double superposition_deviation(const UniMPModel& model, const GraphContext& ctx, const Matrix& x, const Matrix& y,
                               const ForwardOptions& opts);

/// superposition_deviation under the linearizing options (identity
/// activations, no LayerNorm, gate fixed at 0.5, inference mode). Throws
/// ContractError for a GAT model, whose attention cannot be frozen, or when
/// opts is given and does not linearize the model.
double superposition_check(const UniMPModel& model, const GraphContext& ctx, const Matrix& x, const Matrix& y,
                           const std::optional<ForwardOptions>& opts = std::nullopt);

}  // namespace unimp
