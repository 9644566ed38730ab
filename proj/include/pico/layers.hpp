#pragma once

#include <string>
#include <vector>

#include "pico/rng.hpp"
#include "pico/tensor.hpp"

namespace pico {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

// y = x·W + b with W stored [in × out].
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear init(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0);
  static Linear zeros(std::size_t in, std::size_t out);

  // x is [m × in] or a vector [in]; a vector input gives a [1 × out] result.
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  static LayerNorm init(std::size_t d);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  static MultiHeadAttention init(std::size_t d, std::size_t heads, Rng& rng);
  static MultiHeadAttention zeros(std::size_t d, std::size_t heads);

  // Queries from x [n × d], keys/values from memory [m × d]. `mask`, when
  // given, is added to the [n × m] scores before the softmax.
  Tensor operator()(const Tensor& x, const Tensor& memory, const Tensor* mask = nullptr) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct FeedForward {
  Linear up, down;

  static FeedForward init(std::size_t d, std::size_t hidden, Rng& rng);
  static FeedForward zeros(std::size_t d, std::size_t hidden);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

// sin/cos table; `phase` is added to every argument.
Tensor sinusoidal_table(std::size_t seq_len, std::size_t d_model, double phase);

void set_requires_grad(const ParamList& params, bool on);

}  // namespace pico
