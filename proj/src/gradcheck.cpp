#include "pico/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pico/errors.hpp"

namespace pico {

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

double central_difference(const std::function<double()>& eval, double& coordinate, double step) {
  const double saved = coordinate;
  coordinate = saved + step;
  const double plus = eval();
  coordinate = saved - step;
  const double minus = eval();
  coordinate = saved;
  return (plus - minus) / (2.0 * step);
}

}  // namespace

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                         double step) {
  Tensor x = point.detach();
  x.set_requires_grad(true);
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f(x);
    if (y.size() != 1) throw ContractError("finite_diff_check: f must be scalar-valued");
    tape.backward(y);
  }
  std::vector<double> analytic(x.size(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());

  auto xs = x.values();
  const auto eval = [&] { return f(x).item(); };
  double worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    worst = std::max(worst, relative_error(analytic[i], central_difference(eval, xs[i], step)));
  return worst;
}

double finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                         std::size_t samples, std::uint64_t seed, double step) {
  std::size_t total = 0;
  for (auto& p : params) {
    if (!p.requires_grad()) throw ContractError("finite_diff_check: parameter without requires_grad");
    p.zero_grad();
    total += p.size();
  }
  if (total == 0) return 0.0;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = loss();
    if (y.size() != 1) throw ContractError("finite_diff_check: loss must be scalar-valued");
    tape.backward(y);
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  const auto eval = [&] { return loss().item(); };
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t flat = pick(rng);
    std::size_t which = 0;
    while (flat >= params[which].size()) flat -= params[which++].size();
    Tensor& p = params[which];
    const double analytic = p.has_grad() ? p.grad()[flat] : 0.0;
    worst = std::max(worst, relative_error(analytic, central_difference(eval, p.values()[flat], step)));
  }
  return worst;
}

}  // namespace pico
