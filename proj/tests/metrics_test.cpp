#include <cmath>

#include "doctest.h"
#include "test_support.hpp"
#include "unimp/errors.hpp"
#include "unimp/metrics.hpp"

using namespace unimp;
using namespace unimp::testing;

namespace {

Matrix rows_of(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(rows.size(), rows.begin()->size());
  std::size_t r = 0;
  for (const auto& row : rows) {
    std::size_t c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

double brute_auc(std::span<const double> s, std::span<const int> y) {
  double wins = 0.0, ties = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      if (s[i] == s[j]) ties += 1.0;
    }
  }
  return (wins + 0.5 * ties) / pairs;
}

double brute_msf(std::span<const double> alpha, const Graph& g, std::span<const std::size_t> classes,
                 std::span<const std::uint8_t> labeled, std::span<const std::size_t> eval_set) {
  double total = 0.0;
  for (std::size_t i : eval_set) {
    double inner = 0.0;
    for (std::size_t e = g.offsets()[i]; e < g.offsets()[i + 1]; ++e) {
      const std::size_t j = g.sources()[e];
      if (j == i || !labeled[j] || classes[j] != classes[i]) continue;
      for (std::size_t f = g.offsets()[i]; f < g.offsets()[i + 1]; ++f) {
        const std::size_t k = g.sources()[f];
        if (k == i || !labeled[k] || classes[k] == classes[i]) continue;
        inner += std::exp(alpha[e]) - std::exp(alpha[f]);
      }
    }
    total += std::log(std::max(1e-12, 1.0 + inner));
  }
  return total / static_cast<double>(eval_set.size());
}

}  // namespace

TEST_CASE("accuracy") {
  const Matrix scores = rows_of({{0.1, 0.9}, {0.8, 0.2}, {0.5, 0.5}, {0.3, 0.7}});
  const std::vector<std::size_t> classes{1, 0, 0, 0};
  const std::vector<std::size_t> all{0, 1, 2, 3};
  CHECK(accuracy(scores, classes, all) == 0.75);
  const std::vector<std::size_t> tie{2};
  CHECK(accuracy(scores, classes, tie) == 1.0);
  CHECK_THROWS_AS(accuracy(scores, classes, std::vector<std::size_t>{}), ContractError);

  Rng rng(1);
  const std::size_t n = 20000, c = 5;
  Matrix random = random_matrix(n, c, rng);
  std::vector<std::size_t> truth(n), eval(n);
  std::uniform_int_distribution<std::size_t> pick(0, c - 1);
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = pick(rng);
    eval[i] = i;
  }
  CHECK(std::abs(accuracy(random, truth, eval) - 1.0 / c) < 0.02);
}

TEST_CASE("roc_auc examples") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(*roc_auc_single(s, y) == 0.75);
  const std::vector<double> flat{0.5, 0.5, 0.5, 0.5};
  CHECK(*roc_auc_single(flat, y) == 0.5);
  CHECK(*roc_auc_single(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
  CHECK(*roc_auc_single(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0}) == 0.0);
  const std::vector<int> no_pos{0, 0, 0, 0};
  CHECK_FALSE(roc_auc_single(s, no_pos).has_value());

  const Matrix scores = rows_of({{0.1, 0.2}, {0.4, 0.2}, {0.35, 0.9}, {0.8, 0.1}});
  const Matrix labels = rows_of({{0, 1}, {0, 1}, {1, 1}, {1, 1}});
  const std::vector<std::size_t> all{0, 1, 2, 3};
  const AucResult r = roc_auc(scores, labels, all);
  CHECK(r.mean == 0.75);
  CHECK(r.included_tasks == 1);
  CHECK(r.excluded_tasks == 1);
  CHECK_THROWS_AS(roc_auc(scores, rows_of({{1, 1}, {1, 1}, {1, 1}, {1, 1}}), all), MetricError);
}

TEST_CASE("roc_auc equals the pairwise count, ties included") {
  Rng rng(2);
  std::uniform_int_distribution<int> coarse(0, 6);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + static_cast<std::size_t>(trial) * 7;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse(rng) * 0.25;
      y[i] = coin(rng);
    }
    y[0] = 1;
    y[1] = 0;
    const double expected = brute_auc(s, y);
    CHECK(*roc_auc_single(s, y) == expected);

    std::vector<double> transformed(n);
    for (std::size_t i = 0; i < n; ++i) transformed[i] = std::exp(3.0 * s[i]) - 7.0;
    CHECK(*roc_auc_single(transformed, y) == expected);
  }
}

TEST_CASE("margin similarity examples") {
  // Node 0 with labeled neighbors 1 (same class), 2 (other class) and a self-loop.
  const std::vector<Graph::Edge> edges{{1, 0}, {2, 0}, {0, 0}};
  const Graph g = Graph::from_edges(3, edges, nullptr, true);
  const std::vector<std::size_t> classes{0, 0, 1};
  const std::vector<std::uint8_t> labeled{1, 1, 1};
  const std::vector<std::size_t> eval{0};
  std::vector<double> alpha(g.num_edges(), 0.0);
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    if (g.sources()[e] == 1) alpha[e] = 1.0;
    if (g.sources()[e] == 0) alpha[e] = 50.0;
  }
  CHECK(margin_similarity(alpha, g, classes, labeled, eval) == doctest::Approx(std::log(std::exp(1.0))));

  for (double& a : alpha) a = 0.0;
  CHECK(margin_similarity(alpha, g, classes, labeled, eval) == 0.0);

  for (std::size_t e = 0; e < g.num_edges(); ++e)
    if (g.sources()[e] == 2) alpha[e] = 10.0;
  CHECK(margin_similarity(alpha, g, classes, labeled, eval) == doctest::Approx(std::log(1e-12)));

  const std::vector<std::uint8_t> none{1, 0, 0};
  CHECK(margin_similarity(alpha, g, classes, none, eval) == 0.0);
  CHECK_THROWS_AS(margin_similarity(std::vector<double>(1), g, classes, labeled, eval), ShapeError);
}

TEST_CASE("margin similarity matches the pairwise double sum") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Graph g = add_self_loops(random_graph(40, 0.2, rng));
    std::vector<double> alpha(g.num_edges());
    std::normal_distribution<double> normal(0.0, 0.5);
    for (double& a : alpha) a = normal(rng);
    std::vector<std::size_t> classes(40), eval;
    std::vector<std::uint8_t> labeled(40);
    std::uniform_int_distribution<std::size_t> pick(0, 2);
    std::bernoulli_distribution coin(0.7);
    for (std::size_t i = 0; i < 40; ++i) {
      classes[i] = pick(rng);
      labeled[i] = coin(rng);
      eval.push_back(i);
    }
    CHECK(std::abs(margin_similarity(alpha, g, classes, labeled, eval) - brute_msf(alpha, g, classes, labeled, eval)) <
          1e-12);
  }
}

TEST_CASE("average_heads") {
  const std::vector<double> avg = average_heads(rows_of({{0.2, 0.4}, {1.0, 0.0}}));
  CHECK(avg[0] == doctest::Approx(0.3));
  CHECK(avg[1] == 0.5);
}

TEST_CASE("accuracy by neighbor count") {
  // Path 0-1-2-3 plus an isolated node 4.
  const std::vector<Graph::Edge> edges{{0, 1}, {1, 0}, {1, 2}, {2, 1}, {2, 3}, {3, 2}};
  const Graph g = Graph::from_edges(5, edges);
  const Matrix scores = rows_of({{1, 0}, {1, 0}, {0, 1}, {0, 1}, {1, 0}});
  const std::vector<std::size_t> classes{0, 1, 1, 0, 0};
  const std::vector<std::size_t> eval{0, 1, 2, 3, 4};
  const std::vector<DegreeBucket> buckets{{0, 0}, {1, 1}, {2, 2}, {3, DegreeBucket{}.hi}};
  const auto out = accuracy_by_neighbor_count(scores, classes, g, buckets, eval);
  CHECK(out[0].count == 1);
  CHECK(*out[0].accuracy == 1.0);
  CHECK(out[1].count == 2);
  CHECK(*out[1].accuracy == 0.5);
  CHECK(out[2].count == 2);
  CHECK(*out[2].accuracy == 0.5);
  CHECK(out[3].count == 0);
  CHECK_FALSE(out[3].accuracy.has_value());
  CHECK(bucket_label(buckets[3]) == "3+");
  CHECK(bucket_label(DegreeBucket{2, 5}) == "2-5");

  const std::vector<DegreeBucket> single{{0, DegreeBucket{}.hi}};
  const auto whole = accuracy_by_neighbor_count(scores, classes, g, single, eval);
  CHECK(whole[0].count == 5);
  CHECK(*whole[0].accuracy == accuracy(scores, classes, eval));

  const std::vector<DegreeBucket> overlap{{0, 2}, {2, 4}};
  CHECK_THROWS_AS(accuracy_by_neighbor_count(scores, classes, g, overlap, eval), ConfigError);
  const std::vector<DegreeBucket> inverted{{3, 1}};
  CHECK_THROWS_AS(accuracy_by_neighbor_count(scores, classes, g, inverted, eval), ConfigError);
}
