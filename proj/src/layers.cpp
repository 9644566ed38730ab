#include "pico/layers.hpp"

#include <cmath>

#include "pico/errors.hpp"
#include "pico/ops.hpp"

namespace pico {

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, double gain) {
  std::normal_distribution<double> normal(0.0, gain / std::sqrt(static_cast<double>(in)));
  std::vector<double> w(in * out);
  for (auto& v : w) v = normal(rng);
  return {Tensor({in, out}, std::move(w), true), Tensor({out}, true)};
}

Linear Linear::zeros(std::size_t in, std::size_t out) { return {Tensor({in, out}, true), Tensor({out}, true)}; }

Tensor Linear::operator()(const Tensor& x) const {
  if (x.rank() == 1) return ops::add_bias(ops::matmul(ops::reshape(x, {1, x.size()}), weight), bias);
  return ops::add_bias(ops::matmul(x, weight), bias);
}

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNorm LayerNorm::init(std::size_t d) {
  return {Tensor({d}, std::vector<double>(d, 1.0), true), Tensor({d}, true)};
}

Tensor LayerNorm::operator()(const Tensor& x) const { return ops::layer_norm(x, gain, bias, 1e-5); }

void LayerNorm::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

MultiHeadAttention MultiHeadAttention::init(std::size_t d, std::size_t heads, Rng& rng) {
  if (heads == 0 || d % heads != 0) throw ContractError("attention: d_model must be divisible by heads");
  MultiHeadAttention a;
  a.query = Linear::init(d, d, rng);
  a.key = Linear::init(d, d, rng);
  a.value = Linear::init(d, d, rng);
  a.output = Linear::init(d, d, rng, 0.5);
  a.heads = heads;
  return a;
}

MultiHeadAttention MultiHeadAttention::zeros(std::size_t d, std::size_t heads) {
  if (heads == 0 || d % heads != 0) throw ContractError("attention: d_model must be divisible by heads");
  return {Linear::zeros(d, d), Linear::zeros(d, d), Linear::zeros(d, d), Linear::zeros(d, d), heads};
}

Tensor MultiHeadAttention::operator()(const Tensor& x, const Tensor& memory, const Tensor* mask) const {
  const Tensor q = query(x);
  const Tensor k = key(memory);
  const Tensor v = value(memory);
  const std::size_t d = q.cols();
  const std::size_t hd = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Tensor> per_head;
  per_head.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = heads == 1 ? q : ops::slice_cols(q, h * hd, (h + 1) * hd);
    const Tensor kh = heads == 1 ? k : ops::slice_cols(k, h * hd, (h + 1) * hd);
    const Tensor vh = heads == 1 ? v : ops::slice_cols(v, h * hd, (h + 1) * hd);
    Tensor scores = ops::scale(ops::matmul_nt(qh, kh), inv_sqrt);
    if (mask != nullptr) scores = ops::add(scores, *mask);
    per_head.push_back(ops::matmul(ops::softmax(scores, 1), vh));
  }
  return output(heads == 1 ? per_head.front() : ops::concat_cols(per_head));
}

void MultiHeadAttention::collect(ParamList& out, const std::string& prefix) const {
  query.collect(out, prefix + ".query");
  key.collect(out, prefix + ".key");
  value.collect(out, prefix + ".value");
  output.collect(out, prefix + ".output");
}

FeedForward FeedForward::init(std::size_t d, std::size_t hidden, Rng& rng) {
  return {Linear::init(d, hidden, rng), Linear::init(hidden, d, rng, 0.5)};
}

FeedForward FeedForward::zeros(std::size_t d, std::size_t hidden) {
  return {Linear::zeros(d, hidden), Linear::zeros(hidden, d)};
}

Tensor FeedForward::operator()(const Tensor& x) const { return down(ops::gelu(up(x))); }

void FeedForward::collect(ParamList& out, const std::string& prefix) const {
  up.collect(out, prefix + ".up");
  down.collect(out, prefix + ".down");
}

Tensor sinusoidal_table(std::size_t seq_len, std::size_t d_model, double phase) {
  if (d_model == 0 || d_model % 2 != 0)
    throw ContractError("positional encoding needs an even d_model, got " + std::to_string(d_model));
  std::vector<double> table(seq_len * d_model);
  for (std::size_t pos = 0; pos < seq_len; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d_model));
      const double arg = static_cast<double>(pos) * freq + phase;
      table[pos * d_model + 2 * i] = std::sin(arg);
      table[pos * d_model + 2 * i + 1] = std::cos(arg);
    }
  }
  return Tensor({seq_len, d_model}, std::move(table));
}

void set_requires_grad(const ParamList& params, bool on) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.set_requires_grad(on);
  }
}

}  // namespace pico
