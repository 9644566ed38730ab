#pragma once

#include "pico/layers.hpp"
#include "pico/security.hpp"

namespace pico {

// Base gate head: linear d → 1 followed by a sigmoid.
struct GateHead {
  Linear linear;

  static GateHead init(std::size_t d, Rng& rng);
  static GateHead zeros(std::size_t d);
  void collect(ParamList& params, const std::string& prefix) const;
};

// α₀(U) as a one-element tensor.
Tensor base_gate(const GateHead& head, const Tensor& user_pooled);

// Records all three signals and their max. Inputs must lie in [0,1].
GateSignals effective_gate(double alpha0, double expert, double ckg);

// Differentiable α_eff. The subgradient goes to the first maximiser in the
// order (α₀, E, K); K enters as a constant.
Tensor effective_gate(const Tensor& alpha0, const Tensor& expert, double ckg);

struct FusedState {
  Tensor fused;  // [d]
  GateSignals signals;
};

FusedState fuse(const Tensor& e_s, const Tensor& e_u, const GateSignals& signals);

// α·e_s + (1−α)·e_u with α a one-element tensor; gradients reach α and e_u.
Tensor fuse(const Tensor& e_s, const Tensor& e_u, const Tensor& alpha);

}  // namespace pico
