#include "unimp/adam.hpp"

#include <cmath>
#include <string>

#include "unimp/errors.hpp"

namespace unimp {
namespace {

void check_finite(std::span<const double> grads, const std::string& what) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("adam: non-finite gradient " + std::to_string(grads[i]) + " at index " + std::to_string(i) +
                         " of " + what + "; update aborted");
    }
  }
}

}  // namespace

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               double weight_decay) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adam: parameter, gradient and moment lengths disagree");
  }
  if (!(lr > 0.0)) throw ContractError("adam: learning rate must be positive");
  check_finite(grads, "parameter");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const double decay = 1.0 - lr * weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] = params[i] * decay - lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

Adam::Adam(std::vector<Tensor> params, double lr, double weight_decay)
    : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay) {
  states_.reserve(params_.size());
  for (const Tensor& p : params_) states_.emplace_back(p.numel());
}

void Adam::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (params_[k].has_grad()) check_finite(params_[k].grad(), "tensor #" + std::to_string(k));
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    std::vector<double>& g = p.node().ensure_grad();
    adam_step(p.data(), g, states_[k], lr_, weight_decay_);
  }
}

void Adam::zero_grad() const { zero_grads(params_); }

}  // namespace unimp
