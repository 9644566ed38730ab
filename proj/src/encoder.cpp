#include "pico/encoder.hpp"

#include <numbers>

#include "pico/errors.hpp"
#include "pico/ops.hpp"

namespace pico {

namespace {

EncoderParams build(const EncoderConfig& config, Rng* rng) {
  if (config.d_model % 2 != 0) throw ContractError("encoder: d_model must be even");
  EncoderParams p;
  p.config = config;
  const std::size_t d = config.d_model;
  if (rng != nullptr) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> emb(config.vocab_size * d);
    for (auto& v : emb) v = normal(*rng);
    p.embedding = Tensor({config.vocab_size, d}, std::move(emb), true);
  } else {
    p.embedding = Tensor({config.vocab_size, d}, true);
  }
  if (config.positional == PositionalMode::learned) {
    // Starts from the sinusoid so both modes agree before training.
    p.learned_positions = sinusoidal_table(config.max_len, d, 0.0);
    p.learned_positions.set_requires_grad(true);
  }
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    EncoderLayer layer;
    layer.attn_norm = LayerNorm::init(d);
    layer.ff_norm = LayerNorm::init(d);
    if (rng != nullptr) {
      layer.attention = MultiHeadAttention::init(d, config.n_heads, *rng);
      layer.ff = FeedForward::init(d, config.d_ff, *rng);
    } else {
      layer.attention = MultiHeadAttention::zeros(d, config.n_heads);
      layer.ff = FeedForward::zeros(d, config.d_ff);
    }
    p.layers.push_back(std::move(layer));
  }
  p.final_norm = LayerNorm::init(d);
  return p;
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& config, Rng& rng) { return build(config, &rng); }

EncoderParams EncoderParams::zeros(const EncoderConfig& config) { return build(config, nullptr); }

ParamList EncoderParams::parameters(const std::string& prefix) const {
  ParamList out;
  out.push_back({prefix + ".embedding", embedding});
  if (learned_positions.defined()) out.push_back({prefix + ".positions", learned_positions});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    layers[l].attn_norm.collect(out, lp + ".attn_norm");
    layers[l].attention.collect(out, lp + ".attention");
    layers[l].ff_norm.collect(out, lp + ".ff_norm");
    layers[l].ff.collect(out, lp + ".ff");
  }
  final_norm.collect(out, prefix + ".final_norm");
  return out;
}

Tensor positional_encoding(std::size_t seq_len, std::size_t d_model, Channel channel) {
  return sinusoidal_table(seq_len, d_model, channel == Channel::user ? std::numbers::pi / 4.0 : 0.0);
}

EncoderOutput encode(const EncoderParams& params, std::span<const TokenId> tokens, Channel channel) {
  const auto& cfg = params.config;
  if (tokens.empty()) throw ContractError("encode: empty token sequence");
  if (tokens.size() > cfg.max_len)
    throw ContractError("encode: sequence of " + std::to_string(tokens.size()) + " exceeds max_len " +
                        std::to_string(cfg.max_len));
  for (auto t : tokens)
    if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab_size)
      throw VocabularyError("encode: token id " + std::to_string(t) + " outside vocabulary of " +
                            std::to_string(cfg.vocab_size));

  Tensor positions;
  if (cfg.positional == PositionalMode::learned) {
    positions = ops::slice_rows(params.learned_positions, 0, tokens.size());
  } else {
    positions = positional_encoding(tokens.size(), cfg.d_model, channel);
  }
  Tensor x = ops::add(ops::embedding(params.embedding, tokens), positions);
  for (const auto& layer : params.layers) {
    const Tensor h = layer.attn_norm(x);
    x = ops::add(x, layer.attention(h, h));
    x = ops::add(x, layer.ff(layer.ff_norm(x)));
  }
  EncoderOutput out;
  out.memory = params.final_norm(x);
  out.pooled = cfg.pooling == Pooling::mean ? ops::mean_rows(out.memory) : ops::row(out.memory, 0);
  out.from_frozen = params.frozen;
  return out;
}

void freeze(EncoderParams& params) {
  set_requires_grad(params.parameters("encoder"), false);
  params.frozen = true;
}

SystemSignature system_signature(const EncoderOutput& output) {
  if (!output.from_frozen)
    throw ContractError("system_signature: output does not come from a frozen encoder");
  return {output.pooled.detach()};
}

}  // namespace pico
