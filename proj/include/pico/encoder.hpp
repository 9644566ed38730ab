#pragma once

#include <span>
#include <vector>

#include "pico/corpus.hpp"
#include "pico/layers.hpp"

namespace pico {

enum class Pooling { mean, cls };
enum class PositionalMode { sinusoidal, learned };

struct EncoderConfig {
  std::size_t vocab_size = 64;
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_ff = 64;
  std::size_t max_len = 64;
  Pooling pooling = Pooling::mean;
  PositionalMode positional = PositionalMode::sinusoidal;
};

// Pre-norm block: x += attn(norm(x)); x += ff(norm(x)).
struct EncoderLayer {
  LayerNorm attn_norm;
  MultiHeadAttention attention;
  LayerNorm ff_norm;
  FeedForward ff;
};

struct EncoderParams {
  EncoderConfig config;
  Tensor embedding;          // [V × d]
  Tensor learned_positions;  // [max_len × d], only for PositionalMode::learned
  std::vector<EncoderLayer> layers;
  LayerNorm final_norm;
  bool frozen = false;

  static EncoderParams init(const EncoderConfig& config, Rng& rng);
  // All weights zero, norms at identity (gain 1, bias 0).
  static EncoderParams zeros(const EncoderConfig& config);

  ParamList parameters(const std::string& prefix) const;
};

struct EncoderOutput {
  Tensor memory;  // [seq × d]
  Tensor pooled;  // [d]
  bool from_frozen = false;
};

// Immutable pooled representation of the system prompt.
struct SystemSignature {
  Tensor vector;
};

// Channel-isolated sinusoidal encoding; the user channel is phase-shifted by π/4.
Tensor positional_encoding(std::size_t seq_len, std::size_t d_model, Channel channel);

EncoderOutput encode(const EncoderParams& params, std::span<const TokenId> tokens, Channel channel);

// Idempotent. Clears gradient tracking on every contained tensor.
void freeze(EncoderParams& params);

SystemSignature system_signature(const EncoderOutput& output);

}  // namespace pico
