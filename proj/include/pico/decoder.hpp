#pragma once

#include <functional>
#include <span>
#include <vector>

#include "pico/corpus.hpp"
#include "pico/layers.hpp"
#include "pico/security.hpp"

namespace pico {

struct DecoderConfig {
  std::size_t vocab_size = 64;
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_ff = 64;
  std::size_t max_len = 64;
};

// Pre-norm block with one masked self-attention and two cross-attentions
// whose contexts are mixed by the gate before the residual add.
struct DecoderLayer {
  LayerNorm self_norm;
  MultiHeadAttention self_attention;
  LayerNorm cross_norm;
  MultiHeadAttention system_attention;
  MultiHeadAttention user_attention;
  LayerNorm ff_norm;
  FeedForward ff;
};

struct DecoderParams {
  DecoderConfig config;
  Tensor embedding;  // [V × d]
  std::vector<DecoderLayer> layers;
  LayerNorm final_norm;
  Linear output;  // d → V

  static DecoderParams init(const DecoderConfig& config, Rng& rng);
  static DecoderParams zeros(const DecoderConfig& config);
  ParamList parameters(const std::string& prefix) const;
};

// Per-layer contexts, filled when a trace is passed to decode_logits.
struct ContextTrace {
  Tensor system_context;
  Tensor user_context;
  Tensor combined;
};

// α·system + (1−α)·user for a one-element α.
Tensor mix_contexts(const Tensor& system_context, const Tensor& user_context, const Tensor& alpha);

// Logits [n × V] for every position of `prev` (teacher forcing).
Tensor decode_logits(const DecoderParams& params, std::span<const TokenId> prev, const Tensor& system_memory,
                     const Tensor& user_memory, const Tensor& alpha, std::vector<ContextTrace>* trace = nullptr);

// Logits [V] of the next token after `prev`, which must start with START.
Tensor decode_step(const DecoderParams& params, std::span<const TokenId> prev, const Tensor& system_memory,
                   const Tensor& user_memory, double alpha);

// False iff appending `candidate` to `generated` completes an n-gram that
// occurs contiguously in system_tokens[1:].
bool leakage_filter(TokenId candidate, std::span<const TokenId> generated, std::span<const TokenId> system_tokens,
                    std::size_t n = 3);

struct GenerationResult {
  TokenSeq tokens;
  std::vector<std::vector<double>> step_logits;  // only when requested
  GateSignals signals;
  std::size_t filtered_count = 0;
};

// Next-token logits given the tokens so far (START included).
using StepFn = std::function<std::vector<double>(const TokenSeq& prefix)>;

// Greedy decoding with the leakage filter applied inside token selection.
// Stops after END or max_len tokens.
GenerationResult greedy_decode(const StepFn& step, std::span<const TokenId> system_tokens, std::size_t max_len,
                               std::size_t n = 3, bool keep_logits = false);

}  // namespace pico
