#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "unimp/tensor.hpp"

namespace unimp {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t size = 0) : m(size, 0.0), v(size, 0.0) {}
};

/// One bias-corrected Adam update of a flat parameter array. Weight decay is
/// decoupled: params shrink by (1 - lr * weight_decay) before the adaptive
/// step. Throws NumericError without touching anything when a gradient is not
/// finite, and ContractError when lengths disagree or lr <= 0.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               double weight_decay);

/// Adam over a fixed list of tensors, one AdamState per tensor.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double weight_decay);

  /// Updates every parameter from its accumulated gradient. All gradients are
  /// validated first so a non-finite value aborts the whole step.
  void step();
  void zero_grad() const;

  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<AdamState>& states() const { return states_; }

 private:
  std::vector<Tensor> params_;
  std::vector<AdamState> states_;
  double lr_;
  double weight_decay_;
};

}  // namespace unimp
