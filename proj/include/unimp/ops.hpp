#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "unimp/tensor.hpp"

namespace unimp {

inline constexpr double kLayerNormEps = 1e-5;

/// Compressed sparse row matrix of constants (no gradient flows into values).
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> offsets;  // rows + 1 entries
  std::vector<std::size_t> indices;
  std::vector<double> values;

  static CsrMatrix identity(std::size_t n);
  /// Dense row-major copy, for tests and small oracles.
  Matrix to_dense() const;
};

// Differentiable operations. Unless stated otherwise the inputs are 2-D
// [rows x cols] tensors and shape mismatches throw ShapeError.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// x[n x d] + bias[d] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// x[n x d] * s[n x 1] broadcast over columns.
Tensor mul_col(const Tensor& x, const Tensor& s);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);

/// Normalizes each row to zero mean and unit variance (biased estimator,
/// stabilized by eps), then applies gain and bias of length d.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps);

/// Softmax of each column of scores[E] or scores[E x C] taken within groups of
/// rows sharing segment_of[e]. The per-segment maximum is subtracted before
/// exponentiation. Every segment in [0, num_segments) must own at least one
/// row, otherwise DegenerateNeighborhoodError.
Tensor segment_softmax(const Tensor& scores, std::span<const std::size_t> segment_of, std::size_t num_segments);

/// out[e] = x[index[e]].
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
/// out[index[e]] += x[e], with num_rows output rows.
Tensor scatter_add_rows(const Tensor& x, std::span<const std::size_t> index, std::size_t num_rows);

// Head-blocked helpers: a [rows x heads*d] tensor is viewed as `heads`
// contiguous column blocks of width d.

/// out[r, c] = <a[r, block c], b[r, block c]>, shape [rows x heads].
Tensor head_dot(const Tensor& a, const Tensor& b, std::size_t heads);
/// out[r, block c] = weights[r, c] * x[r, block c].
Tensor head_scale(const Tensor& x, const Tensor& weights, std::size_t heads);
/// Arithmetic mean of the head blocks, shape [rows x d].
Tensor head_mean(const Tensor& x, std::size_t heads);

Tensor concat_cols(std::initializer_list<Tensor> parts);

/// a * x for a constant sparse matrix a.
Tensor spmm(const CsrMatrix& a, const Tensor& x);

/// Inverted dropout: zeroes each element with probability p and scales
/// survivors by 1/(1-p) during training; identity at inference.
/// Throws ConfigError unless 0 <= p < 1 when training.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

Tensor sum(const Tensor& x);

/// Mean softmax cross-entropy over the listed rows; targets[i] is the class of rows[i].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> rows,
                             std::span<const std::size_t> targets);

/// Mean binary cross-entropy over the listed rows and every column of targets.
Tensor binary_cross_entropy_with_logits(const Tensor& logits, const Matrix& targets,
                                        std::span<const std::size_t> rows);

// Parameter initializers; both return tensors with requires_grad set.

/// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)), shape [fan_in x fan_out].
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
Tensor zeros_parameter(Shape shape);

// Non-differentiable helpers.
Matrix softmax_rows(const Matrix& logits);
Matrix sigmoid_elementwise(const Matrix& logits);

}  // namespace unimp
