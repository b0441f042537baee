#include "unimp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "unimp/errors.hpp"

namespace unimp {

namespace {

std::size_t argmax_lowest(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < row.size(); ++k)
    if (row[k] > row[best]) best = k;
  return best;
}

}  // namespace

double accuracy(const Matrix& scores, std::span<const std::size_t> classes, std::span<const std::size_t> eval_set) {
  if (eval_set.empty()) throw ContractError("accuracy: empty evaluation set");
  std::size_t correct = 0;
  for (std::size_t i : eval_set) correct += argmax_lowest(scores.row(i)) == classes[i];
  return static_cast<double>(correct) / static_cast<double>(eval_set.size());
}

std::optional<double> roc_auc_single(std::span<const double> scores, std::span<const int> labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the rank sum of the positives, with tied groups sharing their mean rank.
  double twice_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t stop = start;
    std::size_t group_pos = 0;
    while (stop < n && scores[order[stop]] == scores[order[start]]) group_pos += labels[order[stop++]] != 0;
    // Ranks start + 1 .. stop; twice their mean is start + stop + 1.
    twice_rank_sum += static_cast<double>(group_pos) * static_cast<double>(start + stop + 1);
    positives += group_pos;
    start = stop;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double p = static_cast<double>(positives);
  const double twice_u = twice_rank_sum - p * (p + 1.0);
  return twice_u / (2.0 * p * static_cast<double>(negatives));
}

AucResult roc_auc(const Matrix& scores, const Matrix& labels, std::span<const std::size_t> eval_set) {
  if (scores.rows != labels.rows || scores.cols != labels.cols) throw ShapeError("roc_auc: scores and labels differ in shape");
  AucResult out;
  double total = 0.0;
  std::vector<double> s(eval_set.size());
  std::vector<int> y(eval_set.size());
  for (std::size_t t = 0; t < scores.cols; ++t) {
    for (std::size_t r = 0; r < eval_set.size(); ++r) {
      s[r] = scores(eval_set[r], t);
      y[r] = labels(eval_set[r], t) != 0.0;
    }
    if (auto auc = roc_auc_single(s, y)) {
      total += *auc;
      ++out.included_tasks;
    } else {
      ++out.excluded_tasks;
    }
  }
  if (out.included_tasks == 0) throw MetricError("roc_auc: every task lacks a positive or a negative example");
  out.mean = total / static_cast<double>(out.included_tasks);
  return out;
}

std::vector<double> average_heads(const Matrix& alpha) {
  std::vector<double> out(alpha.rows, 0.0);
  for (std::size_t e = 0; e < alpha.rows; ++e) {
    for (double v : alpha.row(e)) out[e] += v;
    out[e] /= static_cast<double>(alpha.cols);
  }
  return out;
}

double margin_similarity(std::span<const double> alpha, const Graph& g, std::span<const std::size_t> classes,
                         std::span<const std::uint8_t> labeled, std::span<const std::size_t> eval_set) {
  if (alpha.size() != g.num_edges()) throw ShapeError("margin_similarity: one weight per edge expected");
  if (eval_set.empty()) throw ContractError("margin_similarity: empty evaluation set");
  double total = 0.0;
  for (std::size_t i : eval_set) {
    double pos_sum = 0.0, neg_sum = 0.0, pos = 0.0, neg = 0.0;
    for (std::size_t e = g.offsets()[i]; e < g.offsets()[i + 1]; ++e) {
      const std::size_t j = g.sources()[e];
      if (j == i || !labeled[j]) continue;
      if (classes[j] == classes[i]) {
        pos_sum += std::exp(alpha[e]);
        pos += 1.0;
      } else {
        neg_sum += std::exp(alpha[e]);
        neg += 1.0;
      }
    }
    total += std::log(std::max(1e-12, 1.0 + neg * pos_sum - pos * neg_sum));
  }
  return total / static_cast<double>(eval_set.size());
}

std::vector<BucketAccuracy> accuracy_by_neighbor_count(const Matrix& scores, std::span<const std::size_t> classes,
                                                       const Graph& g, std::span<const DegreeBucket> buckets,
                                                       std::span<const std::size_t> eval_set) {
  std::vector<DegreeBucket> sorted(buckets.begin(), buckets.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.lo < b.lo; });
  for (std::size_t b = 0; b < sorted.size(); ++b) {
    if (sorted[b].lo > sorted[b].hi) throw ConfigError("degree bucket " + bucket_label(sorted[b]) + " is inverted");
    if (b > 0 && sorted[b].lo <= sorted[b - 1].hi) {
      throw ConfigError("degree buckets " + bucket_label(sorted[b - 1]) + " and " + bucket_label(sorted[b]) +
                        " overlap");
    }
  }
  std::vector<BucketAccuracy> out;
  std::vector<std::size_t> correct(buckets.size(), 0);
  for (const DegreeBucket& b : buckets) out.push_back({b, 0, std::nullopt});
  for (std::size_t i : eval_set) {
    const std::size_t deg = g.neighbor_count(i);
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      if (deg < buckets[b].lo || deg > buckets[b].hi) continue;
      ++out[b].count;
      correct[b] += argmax_lowest(scores.row(i)) == classes[i];
      break;
    }
  }
  for (std::size_t b = 0; b < out.size(); ++b)
    if (out[b].count > 0) out[b].accuracy = static_cast<double>(correct[b]) / static_cast<double>(out[b].count);
  return out;
}

std::string bucket_label(const DegreeBucket& bucket) {
  if (bucket.hi == std::numeric_limits<std::size_t>::max()) return std::to_string(bucket.lo) + "+";
  if (bucket.lo == bucket.hi) return std::to_string(bucket.lo);
  return std::to_string(bucket.lo) + "-" + std::to_string(bucket.hi);
}

}  // namespace unimp
