#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pico/tensor.hpp"

namespace pico {

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued f at `point`. The analytic gradient comes from one
// tape backward pass; f is re-evaluated without a tape for the differences.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                         double step = 1e-5);

// Same measure for a loss closed over several parameter tensors, checked on
// `samples` coordinates drawn uniformly (with a fixed seed) across all of them.
double finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                         std::size_t samples, std::uint64_t seed, double step = 1e-5);

}  // namespace pico
