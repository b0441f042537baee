#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unimp/graph.hpp"

namespace unimp {

/// Fraction of eval nodes whose argmax score is the true class. Ties go to the
/// lowest class index. Throws ContractError on an empty eval set.
double accuracy(const Matrix& scores, std::span<const std::size_t> classes, std::span<const std::size_t> eval_set);

/// Probability that a random positive outranks a random negative, ties
/// counting one half. Empty when either class is absent.
std::optional<double> roc_auc_single(std::span<const double> scores, std::span<const int> labels);

struct AucResult {
  double mean = 0.0;
  std::size_t included_tasks = 0;
  std::size_t excluded_tasks = 0;  // no positive or no negative in the eval set
};

/// Mean ROC-AUC over the columns of a [n x tasks] score / binary label pair,
/// restricted to eval_set. Throws MetricError when every task is degenerate.
AucResult roc_auc(const Matrix& scores, const Matrix& labels, std::span<const std::size_t> eval_set);

/// Mean of the per-head attention weights of every edge.
std::vector<double> average_heads(const Matrix& alpha);

/// Margin similarity over the eval nodes:
///   (1/N) sum_i log(max(1e-12, 1 + sum_{j in pos(i)} sum_{k in neg(i)} (e^{a_ij} - e^{a_ik})))
/// where pos/neg are the labeled neighbors (self-loops excluded) sharing or not
/// sharing the class of i. Evaluated as |neg| sum_pos e^a - |pos| sum_neg e^a.
double margin_similarity(std::span<const double> alpha, const Graph& g, std::span<const std::size_t> classes,
                         std::span<const std::uint8_t> labeled, std::span<const std::size_t> eval_set);

struct DegreeBucket {
  std::size_t lo = 0;
  std::size_t hi = std::numeric_limits<std::size_t>::max();  // inclusive
};

struct BucketAccuracy {
  DegreeBucket bucket;
  std::size_t count = 0;
  std::optional<double> accuracy;  // empty when count == 0
};

/// Accuracy of eval nodes grouped by neighbor count (self-loops excluded).
/// Throws ConfigError when buckets overlap or are inverted.
std::vector<BucketAccuracy> accuracy_by_neighbor_count(const Matrix& scores, std::span<const std::size_t> classes,
                                                       const Graph& g, std::span<const DegreeBucket> buckets,
                                                       std::span<const std::size_t> eval_set);

std::string bucket_label(const DegreeBucket& bucket);

}  // namespace unimp
