#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "unimp/checkpoint.hpp"
#include "unimp/io.hpp"
#include "unimp/metrics.hpp"
#include "unimp/synth.hpp"
#include "unimp/train.hpp"

namespace unimp {

enum class ExperimentKind { train, eval, ablation_grid, label_rate_sweep, coverage_sweep, msf_report, lpa, generate };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_from_string(const std::string& text);

struct RunConfig {
  ExperimentKind kind = ExperimentKind::train;
  ModelConfig model;
  TrainConfig train;
  /// Directory with edges.txt, features.csv, labels.txt, splits.txt. Empty:
  /// generate the graph from sbm.
  std::filesystem::path data_dir;
  SbmSpec sbm;
  bool directed = false;
  bool average_edge_features = false;
  std::filesystem::path out_dir = "runs";
  /// Checkpoint directory read by eval and msf-report.
  std::filesystem::path checkpoint_dir;
  std::vector<std::uint64_t> seeds{0};
  bool include_validation_labels = false;
  std::size_t eval_every = 1;
  /// Training label_rate grid (panel a) and labeled-proportion grid (panel b).
  std::vector<double> sweep_rates{0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875};
  /// Inference coverage grid (panel c).
  std::vector<double> inference_rates{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<DegreeBucket> buckets{{0, 2}, {3, 5}, {6, 10}, {11, 20}, {21, DegreeBucket{}.hi}};
  bool clamp = false;
  std::size_t lpa_iterations = 10;

  /// Throws ConfigError on any invalid field.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Overlays the keys present in j onto base. Unknown keys raise ConfigError.
RunConfig apply_json(RunConfig base, const nlohmann::json& j);
/// FNV-1a of the canonical JSON of the fields that influence results.
std::string config_fingerprint(const RunConfig& cfg);

Dataset load_dataset(const RunConfig& cfg);

/// Accuracy for multi-class data, mean ROC-AUC for multi-label data.
double evaluate(const Matrix& scores, const NodeData& nodes, std::span<const std::size_t> eval_set);
std::string metric_name(const NodeData& nodes);

struct CurvePoint {
  std::size_t epoch = 0;
  double loss = 0.0;
  double valid = 0.0;
  double test = 0.0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  /// Validation metric with training labels only as input.
  double valid = 0.0;
  /// Test metric at the best epoch, without and with validation labels.
  double test = 0.0;
  double test_with_validation_labels = 0.0;
  std::size_t skipped_batches = 0;
  std::vector<CurvePoint> curve;
  Checkpoint best;
};

/// Trains one seed for cfg.train.num_epochs() epochs, evaluating every
/// cfg.eval_every epochs and at the last one. The parameters of the best
/// validation epoch are kept in the returned checkpoint. Errors are rethrown
/// with the seed and epoch prepended.
SeedResult train_seed(const TrainingData& data, const RunConfig& cfg, std::uint64_t seed);

/// One train_seed per seed, run concurrently; results are in seed order.
std::vector<SeedResult> train_seeds(const TrainingData& data, const RunConfig& cfg);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};
Summary summarize(std::span<const double> values);

/// Rebuilds a model from a checkpoint written by train_seed.
UniMPModel model_from_checkpoint(const Checkpoint& ck);
ModelConfig model_config_from_checkpoint(const Checkpoint& ck);

/// Inference labels: a random floor(rate * |train|) subset of the training
/// nodes, drawn with rng. Rate 1 keeps every training node.
std::vector<std::size_t> inference_subset(const TrainingData& data, double rate, Rng& rng);

/// Final-layer attention averaged over heads, one weight per edge of the
/// graph with self-loops.
std::vector<double> final_attention(const UniMPModel& model, const TrainingData& data);

struct ExperimentOutput {
  nlohmann::json metrics;  // written to metrics.json
  std::vector<std::pair<std::string, std::string>> files;  // relative path -> contents
};

/// Runs cfg.kind on data. Progress lines go to log. Nothing touches the disk.
ExperimentOutput run_experiment(const RunConfig& cfg, const Dataset& data, std::ostream& log);

/// Loads (or generates) the data, runs the experiment and writes metrics.json,
/// the extra files and run.log under cfg.out_dir, each atomically. Progress
/// is echoed to std::clog unless echo is false.
nlohmann::json run_and_write(const RunConfig& cfg, bool echo = true);

}  // namespace unimp
