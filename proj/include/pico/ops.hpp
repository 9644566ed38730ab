#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pico/tensor.hpp"

// Differentiable primitives. Every op records a backward closure on the
// active tape when at least one input requires grad; otherwise it is a plain
// forward computation and the result does not require grad.
namespace pico::ops {

Tensor matmul(const Tensor& a, const Tensor& b);     // [m×k]·[k×n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m×k]·[n×k]ᵀ
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // [m×n] + [n] per row
Tensor scale(const Tensor& x, double factor);
Tensor add_constant(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, const Tensor& s);  // s has one element
Tensor one_minus(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // tanh approximation
Tensor sigmoid(const Tensor& x);
// log(max(x, floor)); zero gradient where the floor is active.
Tensor clamped_log(const Tensor& x, double floor = 1e-12);

// Max-subtracted softmax along `axis` (rank 1 or 2).
Tensor softmax(const Tensor& x, std::size_t axis);
// Row-wise normalisation over the last dimension followed by gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);
Tensor mean_rows(const Tensor& x);  // [m×n] → [n]
Tensor row(const Tensor& x, std::size_t index);
Tensor sum(const Tensor& x);   // → [1]
Tensor mean(const Tensor& x);  // → [1]
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Mean over rows of -log softmax(logits[t])[targets[t]].
Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets);
// out[t] = Σ_{c ∈ cols} x[t, c]; cols must be distinct.
Tensor select_cols_sum(const Tensor& x, std::span<const std::int32_t> cols);
// Max over one-element tensors. The subgradient goes to the first argument
// attaining the maximum.
Tensor maximum(const std::vector<Tensor>& scalars);

// Constant [n×n] mask: 0 on and below the diagonal, -inf above.
Tensor causal_mask(std::size_t n);

}  // namespace pico::ops
