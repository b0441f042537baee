#include <cmath>
#include <numeric>

#include "doctest.h"
#include "test_support.hpp"
#include "unimp/adam.hpp"
#include "unimp/errors.hpp"
#include "unimp/ops.hpp"

using namespace unimp;
using unimp::testing::max_gradient_error;
using unimp::testing::random_tensor;

TEST_CASE("matmul identity and annihilator") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor prod = matmul(eye, m);
  CHECK(std::vector<double>(prod.data().begin(), prod.data().end()) == std::vector<double>{1, 2, 3, 4});

  Rng rng(1);
  Tensor z = matmul(Tensor::zeros({2, 3}), random_tensor({3, 4}, rng));
  CHECK(z.shape() == Shape{2, 4});
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("matmul rejects mismatched shapes and names both") {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2 x 3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(7);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor b = random_tensor({3, 3}, rng);
  CHECK(max_gradient_error({a, b}, [&] { return sum(matmul(a, b)); }) < 1e-6);
}

TEST_CASE("backward basics") {
  Tensor x = Tensor::scalar(3.0, true);
  backward(mul(x, x));
  CHECK(x.grad()[0] == doctest::Approx(6.0));

  SUBCASE("repeated backward accumulates until reset") {
    backward(mul(x, x));
    CHECK(x.grad()[0] == doctest::Approx(12.0));
    x.zero_grad();
    backward(mul(x, x));
    CHECK(x.grad()[0] == doctest::Approx(6.0));
  }
  SUBCASE("loss built from constants leaves parameter grads at zero") {
    Tensor w = Tensor::from_data({2}, {1.0, 2.0}, true);
    w.node().ensure_grad();
    Tensor loss = sum(Tensor::from_data({3}, {1, 2, 3}));
    backward(loss);
    for (double g : w.grad()) CHECK(g == 0.0);
  }
  SUBCASE("non-scalar loss is a contract error") {
    Tensor v = Tensor::from_data({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(scale(v, 2.0)), ContractError);
  }
}

TEST_CASE("segment_softmax examples") {
  const std::vector<std::size_t> one{0, 0};
  auto y = segment_softmax(Tensor::from_data({2}, {0.0, 0.0}), one, 1);
  CHECK(y.data()[0] == doctest::Approx(0.5));
  CHECK(y.data()[1] == doctest::Approx(0.5));

  const std::vector<std::size_t> two{0, 1};
  y = segment_softmax(Tensor::from_data({2}, {-3.7, 12.0}), two, 2);
  CHECK(y.data()[0] == 1.0);
  CHECK(y.data()[1] == 1.0);

  y = segment_softmax(Tensor::from_data({2}, {std::log(2.0), 0.0}), one, 1);
  CHECK(y.data()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(y.data()[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("segment_softmax is positive, normalized, stable and differentiable") {
  Rng rng(3);
  const std::vector<std::size_t> seg{0, 0, 1, 2, 2, 2, 1};
  Tensor s = random_tensor({7, 3}, rng, true, 5.0);
  s.data()[0] = 800.0;  // would overflow a naive exp
  Tensor y = segment_softmax(s, seg, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> total(3, 0.0);
    for (std::size_t e = 0; e < 7; ++e) {
      CHECK(y.at(e, c) > 0.0 - 1e-300);
      total[seg[e]] += y.at(e, c);
    }
    for (double t : total) CHECK(t == doctest::Approx(1.0).epsilon(1e-12));
  }
  s.data()[0] = 0.3;
  Tensor w = random_tensor({7, 3}, rng, false);
  CHECK(max_gradient_error({s}, [&] { return sum(mul(segment_softmax(s, seg, 3), w)); }) < 1e-6);
}

TEST_CASE("segment_softmax reports an empty segment") {
  const std::vector<std::size_t> seg{0, 2};
  CHECK_THROWS_AS(segment_softmax(Tensor::from_data({2}, {0, 0}), seg, 3), DegenerateNeighborhoodError);
}

TEST_CASE("layer_norm examples and moments") {
  Tensor gain = Tensor::full({4}, 1.0), bias = Tensor::zeros({4});
  Tensor y = layer_norm(Tensor::full({1, 4}, 2.5), gain, bias);
  for (double v : y.data()) CHECK(v == 0.0);

  Tensor g2 = Tensor::full({2}, 1.0), b2 = Tensor::zeros({2});
  y = layer_norm(Tensor::from_data({1, 2}, {1.0, -1.0}), g2, b2);
  CHECK(y.data()[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(y.data()[1] == doctest::Approx(-1.0).epsilon(1e-5));

  // Spread the row so that eps/(var+eps) stays below 1e-6.
  Rng rng(11);
  Tensor row = random_tensor({1, 64}, rng, false, 10.0);
  Tensor g64 = Tensor::full({64}, 1.0), b64 = Tensor::zeros({64});
  y = layer_norm(row, g64, b64);
  const double mean = std::accumulate(y.data().begin(), y.data().end(), 0.0) / 64.0;
  double var = 0.0;
  for (double v : y.data()) var += (v - mean) * (v - mean);
  var /= 64.0;
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::abs(var - 1.0) < 1e-6);

  CHECK_THROWS_AS(layer_norm(Tensor::zeros({2, 0}), Tensor::zeros({0}), Tensor::zeros({0})), ShapeError);
}

TEST_CASE("layer_norm is shift invariant and differentiable") {
  Rng rng(5);
  Tensor x = random_tensor({3, 5}, rng);
  Tensor gain = random_tensor({5}, rng), bias = random_tensor({5}, rng);
  Tensor shifted = Tensor::from_data({3, 5}, std::vector<double>(x.data().begin(), x.data().end()));
  for (std::size_t j = 0; j < 5; ++j) shifted.data()[5 + j] += 17.25;
  Tensor a = layer_norm(x, gain, bias), b = layer_norm(shifted, gain, bias);
  for (std::size_t i = 0; i < 15; ++i) CHECK(std::abs(a.data()[i] - b.data()[i]) < 1e-6);

  Tensor w = random_tensor({3, 5}, rng, false);
  CHECK(max_gradient_error({x, gain, bias}, [&] { return sum(mul(layer_norm(x, gain, bias), w)); }) < 1e-5);
}

TEST_CASE("elementwise, broadcast and gather/scatter gradients") {
  Rng rng(21);
  Tensor x = random_tensor({4, 6}, rng);
  Tensor y = random_tensor({4, 6}, rng);
  Tensor bias = random_tensor({6}, rng);
  Tensor col = random_tensor({4, 1}, rng);
  Tensor w = random_tensor({6, 6}, rng, false);
  const std::vector<std::size_t> idx{3, 0, 0, 2, 1};
  const std::vector<std::size_t> dst{1, 1, 0, 2, 2};

  CHECK(max_gradient_error({x, y}, [&] { return sum(mul(sub(x, scale(y, 0.5)), add(x, y))); }) < 1e-6);
  CHECK(max_gradient_error({x, bias}, [&] { return sum(mul(add_bias(x, bias), add_bias(x, bias))); }) < 1e-6);
  CHECK(max_gradient_error({x, col}, [&] { return sum(matmul(mul_col(x, col), w)); }) < 1e-6);
  CHECK(max_gradient_error({x}, [&] { return sum(matmul(sigmoid(x), w)); }) < 1e-6);
  CHECK(max_gradient_error({x}, [&] { return sum(matmul(leaky_relu(x, 0.2), w)); }) < 1e-6);
  CHECK(max_gradient_error({x}, [&] {
          Tensor g = gather_rows(x, idx);
          return sum(mul(scatter_add_rows(g, dst, 3), scatter_add_rows(g, dst, 3)));
        }) < 1e-6);
  Tensor w18 = random_tensor({18, 2}, rng, false);
  CHECK(max_gradient_error({x, y}, [&] { return sum(matmul(concat_cols({x, y, sub(x, y)}), w18)); }) < 1e-6);
}

TEST_CASE("head-blocked operations") {
  Tensor a = Tensor::from_data({1, 4}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({1, 4}, {1, 1, 2, 0});
  Tensor d = head_dot(a, b, 2);
  CHECK(d.shape() == Shape{1, 2});
  CHECK(d.data()[0] == 3.0);
  CHECK(d.data()[1] == 6.0);
  Tensor m = head_mean(a, 2);
  CHECK(m.data()[0] == 2.0);
  CHECK(m.data()[1] == 3.0);
  Tensor s = head_scale(a, Tensor::from_data({1, 2}, {2.0, -1.0}), 2);
  CHECK(std::vector<double>(s.data().begin(), s.data().end()) == std::vector<double>{2, 4, -3, -4});

  Rng rng(8);
  Tensor x = random_tensor({5, 6}, rng), y = random_tensor({5, 6}, rng), wts = random_tensor({5, 3}, rng);
  Tensor probe = random_tensor({5, 2}, rng, false);
  CHECK(max_gradient_error({x, y}, [&] { return sum(mul(head_dot(x, y, 3), head_dot(x, x, 3))); }) < 1e-6);
  CHECK(max_gradient_error({x, wts}, [&] { return sum(mul(head_mean(head_scale(x, wts, 3), 3), probe)); }) < 1e-6);
  CHECK_THROWS_AS(head_mean(x, 4), ShapeError);
}

TEST_CASE("spmm and losses") {
  CsrMatrix a;
  a.rows = 2;
  a.cols = 3;
  a.offsets = {0, 2, 3};
  a.indices = {0, 2, 1};
  a.values = {0.5, 0.5, 1.0};
  Rng rng(4);
  Tensor x = random_tensor({3, 2}, rng);
  Tensor probe = random_tensor({2, 2}, rng, false);
  CHECK(max_gradient_error({x}, [&] { return sum(mul(spmm(a, x), probe)); }) < 1e-6);

  Tensor logits = random_tensor({4, 3}, rng);
  const std::vector<std::size_t> rows{0, 2, 3}, targets{1, 0, 2};
  CHECK(max_gradient_error({logits}, [&] { return softmax_cross_entropy(logits, rows, targets); }) < 1e-6);
  Tensor uniform = Tensor::zeros({4, 3});
  CHECK(softmax_cross_entropy(uniform, rows, targets).item() == doctest::Approx(std::log(3.0)));

  Matrix bits(4, 3);
  bits(0, 1) = bits(2, 0) = bits(2, 2) = 1.0;
  CHECK(max_gradient_error({logits}, [&] { return binary_cross_entropy_with_logits(logits, bits, rows); }) < 1e-6);
  CHECK(binary_cross_entropy_with_logits(uniform, bits, rows).item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("dropout") {
  Rng rng(99);
  Tensor x = Tensor::full({1, 100000}, 2.0);
  CHECK(dropout(x, 0.0, true, rng).data().data() == x.data().data());
  CHECK(dropout(x, 0.7, false, rng).data().data() == x.data().data());
  CHECK_THROWS_AS(dropout(x, 1.0, true, rng), ConfigError);
  CHECK_THROWS_AS(dropout(x, -0.1, true, rng), ConfigError);

  Tensor y = dropout(x, 0.3, true, rng);
  std::size_t kept = 0;
  double total = 0.0;
  for (double v : y.data()) {
    kept += v != 0.0;
    total += v;
  }
  CHECK(std::abs(static_cast<double>(kept) / 1e5 - 0.7) < 0.01);
  CHECK(std::abs(total / 1e5 - 2.0) < 0.02);
}

TEST_CASE("adam_step examples") {
  SUBCASE("unit gradient moves each parameter by about -lr") {
    std::vector<double> p{0.5, -1.0, 3.0}, g{1.0, 1.0, 1.0};
    AdamState s(3);
    adam_step(p, g, s, 0.001, 0.0);
    CHECK(std::abs(p[0] - 0.499) < 1e-6);
    CHECK(std::abs(p[1] + 1.001) < 1e-6);
    CHECK(std::abs(p[2] - 2.999) < 1e-6);
    CHECK(s.step == 1);
    adam_step(p, g, s, 0.001, 0.0);
    CHECK(s.step == 2);
  }
  SUBCASE("zero gradient without decay is a no-op") {
    std::vector<double> p{0.5, -1.0}, g{0.0, 0.0};
    AdamState s(2);
    for (int i = 0; i < 5; ++i) adam_step(p, g, s, 0.01, 0.0);
    CHECK(p == std::vector<double>{0.5, -1.0});
  }
  SUBCASE("pure decay shrinks by (1 - lr * wd)") {
    std::vector<double> p{0.5, -1.0}, g{0.0, 0.0};
    AdamState s(2);
    adam_step(p, g, s, 0.001, 0.0005);
    CHECK(p[0] == doctest::Approx(0.5 * (1 - 0.001 * 0.0005)).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(-1.0 * (1 - 0.001 * 0.0005)).epsilon(1e-15));
  }
  SUBCASE("non-finite gradient aborts without modification") {
    std::vector<double> p{0.5, -1.0}, g{0.1, std::nan("")};
    AdamState s(2);
    CHECK_THROWS_AS(adam_step(p, g, s, 0.001, 0.0), NumericError);
    CHECK(p == std::vector<double>{0.5, -1.0});
    CHECK(s.step == 0);
  }
}

TEST_CASE("Adam optimizer validates every gradient before updating any") {
  Tensor a = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor b = Tensor::from_data({1}, {3.0}, true);
  a.node().ensure_grad() = {1.0, 1.0};
  b.node().ensure_grad() = {INFINITY};
  Adam opt({a, b}, 0.01, 0.0);
  CHECK_THROWS_AS(opt.step(), NumericError);
  CHECK(a.data()[0] == 1.0);
  b.node().grad = {0.5};
  opt.step();
  CHECK(a.data()[0] < 1.0);
  CHECK(opt.states()[0].step == 1);
}
