#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace unimp {

using Shape = std::vector<std::size_t>;

/// Pseudo-random engine used everywhere a seed is threaded through.
using Rng = std::mt19937_64;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Row-major dense matrix without differentiation history. Datasets, label
/// matrices and prediction scores are carried as Matrix; models lift them into
/// Tensors when they enter a computation.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

/// Dense float64 tensor participating in a reverse-mode differentiation tape.
///
/// A Tensor is a cheap handle; copies share the same storage and history node.
/// Operations record their inputs as parents together with a closure that
/// propagates the output gradient back into them. Gradients of leaf tensors
/// accumulate across backward() calls until zero_grad() is called.
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    /// Allocates a zero gradient buffer on first use.
    std::vector<double>& ensure_grad();
  };

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_matrix(const Matrix& m, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  /// Leading dimension; 1 for scalars.
  std::size_t rows() const;
  /// Trailing dimension of a 2-D tensor; 1 for 1-D tensors and scalars.
  std::size_t cols() const;

  std::span<double> data() const { return node_->data; }
  double item() const;
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() const;

  /// Copy of the values with no history.
  Tensor detach() const;
  Matrix to_matrix() const;

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& impl() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Runs reverse-mode differentiation from a single-element tensor. Gradients of
/// every requires_grad ancestor are accumulated (+=); intermediate buffers are
/// recomputed on every call. Throws ContractError for a non-scalar loss.
void backward(const Tensor& loss);

void zero_grads(std::span<const Tensor> params);

}  // namespace unimp
