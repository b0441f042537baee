#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unimp/adam.hpp"
#include "unimp/model.hpp"
#include "unimp/samplers.hpp"

namespace unimp {

enum class Sampling { full, neighbor, partition };

std::string to_string(Sampling sampling);
Sampling sampling_from_string(const std::string& text);

struct TrainConfig {
  double label_rate = 0.625;
  /// Unset: 500 for full-batch training, 50 for the sampled regimes.
  std::optional<std::size_t> epochs;
  double lr = 0.001;
  double weight_decay = 0.0005;
  Sampling sampling = Sampling::full;
  std::size_t fanout = 10;
  std::size_t batch_size = 1024;
  std::size_t num_parts = 10;
  bool fixed_partition = false;

  std::size_t num_epochs() const;
  /// Throws ConfigError unless 0 <= label_rate < 1, lr > 0, weight_decay >= 0
  /// and the sampler settings are positive.
  void validate() const;
};

/// Everything a training run needs about one dataset.
struct TrainingData {
  const Dataset* data = nullptr;
  GraphContext context;                   // full graph with self-loops
  std::vector<std::size_t> train_nodes;  // ascending
  std::vector<std::uint8_t> is_train;     // per node

  static TrainingData build(const Dataset& data);
  /// Trains on a subset of the training split only; the other training nodes
  /// are treated as unlabeled.
  static TrainingData build(const Dataset& data, std::vector<std::size_t> train_subset);
};

struct EpochResult {
  double loss = 0.0;  // mean over the batches that ran
  std::size_t batches = 0;
  std::size_t skipped_batches = 0;
};

/// Owns a model, its optimizer and the random stream of one run.
class Trainer {
 public:
  Trainer(const TrainingData& data, const ModelConfig& model, const TrainConfig& train, std::uint64_t seed);

  /// One pass over the sampler's batches. Per batch: fresh mask, forward on
  /// X + embed(Y~), loss over masked training nodes only (all training nodes
  /// when the model takes no labels), backward, Adam step. Throws
  /// ContractError if every batch had to be skipped.
  EpochResult train_epoch();

  UniMPModel& model() { return model_; }
  const UniMPModel& model() const { return model_; }
  const TrainConfig& config() const { return train_; }

 private:
  struct Batch {
    std::optional<GraphContext> local;  // unset: the full graph
    std::vector<std::size_t> node_map;  // local -> global, empty for the full graph
    std::vector<std::size_t> train_local;
    std::vector<std::size_t> loss_local;  // loss candidates (the seeds under neighbor sampling)
  };

  std::vector<Batch> make_batches();
  std::optional<double> run_batch(const Batch& batch);

  const TrainingData& data_;
  TrainConfig train_;
  UniMPModel model_;
  Adam optimizer_;
  Rng rng_;
  std::vector<Subgraph> fixed_parts_;
};

/// Training labels visible at inference, plus validation labels when asked.
std::vector<std::size_t> inference_label_nodes(const NodeData& nodes, bool include_validation_labels);
std::vector<std::size_t> inference_label_nodes(const TrainingData& data, bool include_validation_labels);

/// Softmax (multi-class) or sigmoid (multi-label) scores for every node, with
/// the labels of label_nodes as input.
Matrix predict(const UniMPModel& model, const TrainingData& data, std::span<const std::size_t> label_nodes,
               ForwardTrace* trace = nullptr);
Matrix predict(const UniMPModel& model, const TrainingData& data, bool include_validation_labels);

}  // namespace unimp
