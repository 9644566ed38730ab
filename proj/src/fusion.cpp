#include "pico/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "pico/errors.hpp"
#include "pico/ops.hpp"

namespace pico {

GateHead GateHead::init(std::size_t d, Rng& rng) { return {Linear::init(d, 1, rng)}; }

GateHead GateHead::zeros(std::size_t d) { return {Linear::zeros(d, 1)}; }

void GateHead::collect(ParamList& params, const std::string& prefix) const { linear.collect(params, prefix); }

Tensor base_gate(const GateHead& head, const Tensor& user_pooled) {
  const std::size_t d = head.linear.weight.dim(0);
  if (user_pooled.size() != d)
    throw ContractError("base_gate: pooled input " + shape_string(user_pooled.shape()) +
                        " does not match gate width " + std::to_string(d));
  return ops::reshape(ops::sigmoid(head.linear(user_pooled)), {1});
}

GateSignals effective_gate(double alpha0, double expert, double ckg) {
  const auto check = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0))
      throw ContractError(std::string("effective_gate: ") + name + " = " + std::to_string(v) + " outside [0,1]");
  };
  check(alpha0, "alpha0");
  check(expert, "expert");
  check(ckg, "ckg");
  return {alpha0, expert, ckg, std::max({alpha0, expert, ckg})};
}

Tensor effective_gate(const Tensor& alpha0, const Tensor& expert, double ckg) {
  effective_gate(alpha0.item(), expert.item(), ckg);
  return ops::maximum({alpha0, expert, Tensor::scalar(ckg)});
}

FusedState fuse(const Tensor& e_s, const Tensor& e_u, const GateSignals& signals) {
  if (e_s.shape() != e_u.shape())
    throw ContractError("fuse: shapes differ, " + shape_string(e_s.shape()) + " vs " + shape_string(e_u.shape()));
  const double a = signals.alpha_eff;
  const double b = 1.0 - a;
  std::vector<double> out(e_s.size());
  auto s = e_s.values();
  auto u = e_u.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * s[i] + b * u[i];
  return {Tensor(e_s.shape(), std::move(out)), signals};
}

Tensor fuse(const Tensor& e_s, const Tensor& e_u, const Tensor& alpha) {
  if (e_s.shape() != e_u.shape())
    throw ContractError("fuse: shapes differ, " + shape_string(e_s.shape()) + " vs " + shape_string(e_u.shape()));
  return ops::add(ops::mul_scalar(e_s, alpha), ops::mul_scalar(e_u, ops::one_minus(alpha)));
}

}  // namespace pico
