#include "unimp/train.hpp"

#include <algorithm>
#include <iterator>
#include <numeric>

#include "unimp/errors.hpp"

namespace unimp {

std::string to_string(Sampling sampling) {
  switch (sampling) {
    case Sampling::full: return "full";
    case Sampling::neighbor: return "neighbor";
    case Sampling::partition: return "partition";
  }
  return "?";
}

Sampling sampling_from_string(const std::string& text) {
  if (text == "full") return Sampling::full;
  if (text == "neighbor") return Sampling::neighbor;
  if (text == "partition") return Sampling::partition;
  throw ConfigError("unknown sampling method '" + text + "'");
}

std::size_t TrainConfig::num_epochs() const {
  if (epochs) return *epochs;
  return sampling == Sampling::full ? 500 : 50;
}

void TrainConfig::validate() const {
  if (!(label_rate >= 0.0 && label_rate < 1.0)) {
    throw ConfigError("label_rate must lie in [0, 1): at 1 no label is left to predict");
  }
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (num_epochs() == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0 || num_parts == 0) throw ConfigError("batch_size and num_parts must be positive");
}

TrainingData TrainingData::build(const Dataset& data) { return build(data, data.nodes.nodes_in(Split::train)); }

TrainingData TrainingData::build(const Dataset& data, std::vector<std::size_t> train_subset) {
  data.nodes.validate();
  TrainingData out;
  out.data = &data;
  out.context = GraphContext::build(data.graph);
  std::sort(train_subset.begin(), train_subset.end());
  train_subset.erase(std::unique(train_subset.begin(), train_subset.end()), train_subset.end());
  out.is_train.assign(data.nodes.num_nodes(), 0);
  for (std::size_t v : train_subset) {
    if (v >= data.nodes.num_nodes() || data.nodes.split[v] != Split::train) {
      throw ConfigError("training subset contains node " + std::to_string(v) + " outside the training split");
    }
    out.is_train[v] = 1;
  }
  out.train_nodes = std::move(train_subset);
  if (out.train_nodes.empty()) throw ConfigError("dataset has no training nodes");
  return out;
}

Trainer::Trainer(const TrainingData& data, const ModelConfig& model, const TrainConfig& train, std::uint64_t seed)
    : data_(data),
      train_(train),
      model_([&] {
        train.validate();
        Rng init(seed);
        const NodeData& nodes = data.data->nodes;
        return UniMPModel(model, nodes.features.cols, nodes.num_classes,
                          model.edge_features ? data.context.graph.edge_feature_dim() : 0, init);
      }()),
      optimizer_(model_.parameters(), train.lr, train.weight_decay),
      rng_(seed ^ 0x9e3779b97f4a7c15ULL) {
  if (train_.sampling == Sampling::partition && train_.fixed_partition) {
    fixed_parts_ = random_partition(data_.context.graph, std::min(train_.num_parts, data_.context.graph.num_nodes()),
                                    rng_);
  }
}

std::vector<Trainer::Batch> Trainer::make_batches() {
  const Graph& g = data_.context.graph;
  const auto& is_train = data_.is_train;
  std::vector<Batch> batches;
  auto from_subgraph = [&](Subgraph&& sub, std::size_t num_seeds) {
    Batch b;
    for (std::size_t local = 0; local < sub.node_map.size(); ++local) {
      if (!is_train[sub.node_map[local]]) continue;
      b.train_local.push_back(local);
      if (local < num_seeds) b.loss_local.push_back(local);
    }
    b.node_map = std::move(sub.node_map);
    b.local = GraphContext::build(sub.graph);
    return b;
  };

  switch (train_.sampling) {
    case Sampling::full: {
      Batch b;
      b.train_local = data_.train_nodes;
      b.loss_local = data_.train_nodes;
      batches.push_back(std::move(b));
      break;
    }
    case Sampling::neighbor: {
      std::vector<std::size_t> order = data_.train_nodes;
      std::shuffle(order.begin(), order.end(), rng_);
      const std::vector<std::size_t> fanouts(model_.config().num_layers, train_.fanout);
      for (std::size_t start = 0; start < order.size(); start += train_.batch_size) {
        const std::size_t stop = std::min(order.size(), start + train_.batch_size);
        std::vector<std::size_t> seeds(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(stop));
        batches.push_back(from_subgraph(sample_neighbors(g, seeds, fanouts, rng_), seeds.size()));
      }
      break;
    }
    case Sampling::partition: {
      std::vector<Subgraph> parts =
          train_.fixed_partition ? fixed_parts_ : random_partition(g, std::min(train_.num_parts, g.num_nodes()), rng_);
      for (Subgraph& part : parts) {
        const std::size_t n = part.num_nodes();
        batches.push_back(from_subgraph(std::move(part), n));
      }
      break;
    }
  }
  return batches;
}

std::optional<double> Trainer::run_batch(const Batch& batch) {
  const NodeData& nodes = data_.data->nodes;
  const bool full = !batch.local.has_value();
  const GraphContext& ctx = full ? data_.context : *batch.local;
  const std::size_t n = ctx.graph.num_nodes();
  if (batch.train_local.empty()) return std::nullopt;

  Matrix x, targets;
  std::vector<std::size_t> classes;
  if (full) {
    x = nodes.features;
    targets = nodes.label_matrix;
    classes = nodes.classes;
  } else {
    x = Matrix(n, nodes.features.cols);
    targets = Matrix(n, nodes.label_matrix.cols);
    if (nodes.task == TaskKind::multiclass) classes.resize(n);
    for (std::size_t local = 0; local < n; ++local) {
      const std::size_t v = batch.node_map[local];
      std::copy(nodes.features.row(v).begin(), nodes.features.row(v).end(), x.row(local).begin());
      std::copy(nodes.label_matrix.row(v).begin(), nodes.label_matrix.row(v).end(), targets.row(local).begin());
      if (nodes.task == TaskKind::multiclass) classes[local] = nodes.classes[v];
    }
  }

  LabelState labels;
  labels.one_hot = Matrix(n, nodes.num_classes);
  labels.observed.assign(n, 0);
  labels.masked.assign(n, 0);
  for (std::size_t local : batch.train_local) {
    labels.observed[local] = 1;
    std::copy(targets.row(local).begin(), targets.row(local).end(), labels.one_hot.row(local).begin());
  }

  std::vector<std::size_t> loss_rows;
  Matrix label_input;
  if (model_.config().uses_labels()) {
    MaskedLabels masked = mask_labels(labels, batch.train_local, train_.label_rate, rng_);
    std::set_intersection(masked.masked.begin(), masked.masked.end(), batch.loss_local.begin(),
                          batch.loss_local.end(), std::back_inserter(loss_rows));
    label_input = masked.state.input_view();
  } else {
    loss_rows = batch.loss_local;
    label_input = Matrix(n, nodes.num_classes);
  }
  if (loss_rows.empty()) return std::nullopt;

  optimizer_.zero_grad();
  ForwardOptions opts;
  opts.training = true;
  Tensor logits = model_.forward(ctx, x, label_input, opts, rng_);
  Tensor loss;
  if (nodes.task == TaskKind::multiclass) {
    std::vector<std::size_t> target_classes;
    target_classes.reserve(loss_rows.size());
    for (std::size_t r : loss_rows) target_classes.push_back(classes[r]);
    loss = softmax_cross_entropy(logits, loss_rows, target_classes);
  } else {
    loss = binary_cross_entropy_with_logits(logits, targets, loss_rows);
  }
  backward(loss);
  optimizer_.step();
  return loss.item();
}

EpochResult Trainer::train_epoch() {
  EpochResult result;
  double total = 0.0;
  for (const Batch& batch : make_batches()) {
    if (auto loss = run_batch(batch)) {
      total += *loss;
      ++result.batches;
    } else {
      ++result.skipped_batches;
    }
  }
  if (result.batches == 0) throw ContractError("every batch of the epoch was skipped: no masked training node");
  result.loss = total / static_cast<double>(result.batches);
  return result;
}

std::vector<std::size_t> inference_label_nodes(const NodeData& nodes, bool include_validation_labels) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < nodes.num_nodes(); ++i) {
    if (nodes.split[i] == Split::train || (include_validation_labels && nodes.split[i] == Split::valid)) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<std::size_t> inference_label_nodes(const TrainingData& data, bool include_validation_labels) {
  std::vector<std::size_t> out = data.train_nodes;
  if (include_validation_labels) {
    const auto valid = data.data->nodes.nodes_in(Split::valid);
    out.insert(out.end(), valid.begin(), valid.end());
    std::sort(out.begin(), out.end());
  }
  return out;
}

Matrix predict(const UniMPModel& model, const TrainingData& data, std::span<const std::size_t> label_nodes,
               ForwardTrace* trace) {
  const NodeData& nodes = data.data->nodes;
  const LabelState labels = LabelState::observe(nodes, label_nodes);
  Rng unused(0);
  const Matrix logits = model.forward(data.context, nodes.features, labels.input_view(), ForwardOptions{}, unused,
                                      trace)
                            .to_matrix();
  return nodes.task == TaskKind::multiclass ? softmax_rows(logits) : sigmoid_elementwise(logits);
}

Matrix predict(const UniMPModel& model, const TrainingData& data, bool include_validation_labels) {
  const auto label_nodes = inference_label_nodes(data, include_validation_labels);
  return predict(model, data, label_nodes);
}

}  // namespace unimp
