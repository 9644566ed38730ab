#include "pico/decoder.hpp"

#include <algorithm>
#include <numeric>
#include <optional>

#include "pico/errors.hpp"
#include "pico/ops.hpp"

namespace pico {

namespace {

DecoderParams build(const DecoderConfig& config, Rng* rng) {
  if (config.d_model % 2 != 0) throw ContractError("decoder: d_model must be even");
  const std::size_t d = config.d_model;
  DecoderParams p;
  p.config = config;
  if (rng != nullptr) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> emb(config.vocab_size * d);
    for (auto& v : emb) v = normal(*rng);
    p.embedding = Tensor({config.vocab_size, d}, std::move(emb), true);
  } else {
    p.embedding = Tensor({config.vocab_size, d}, true);
  }
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    DecoderLayer layer;
    layer.self_norm = LayerNorm::init(d);
    layer.cross_norm = LayerNorm::init(d);
    layer.ff_norm = LayerNorm::init(d);
    if (rng != nullptr) {
      layer.self_attention = MultiHeadAttention::init(d, config.n_heads, *rng);
      layer.system_attention = MultiHeadAttention::init(d, config.n_heads, *rng);
      layer.user_attention = MultiHeadAttention::init(d, config.n_heads, *rng);
      layer.ff = FeedForward::init(d, config.d_ff, *rng);
    } else {
      layer.self_attention = MultiHeadAttention::zeros(d, config.n_heads);
      layer.system_attention = MultiHeadAttention::zeros(d, config.n_heads);
      layer.user_attention = MultiHeadAttention::zeros(d, config.n_heads);
      layer.ff = FeedForward::zeros(d, config.d_ff);
    }
    p.layers.push_back(std::move(layer));
  }
  p.final_norm = LayerNorm::init(d);
  p.output = rng != nullptr ? Linear::init(d, config.vocab_size, *rng) : Linear::zeros(d, config.vocab_size);
  return p;
}

}  // namespace

DecoderParams DecoderParams::init(const DecoderConfig& config, Rng& rng) { return build(config, &rng); }

DecoderParams DecoderParams::zeros(const DecoderConfig& config) { return build(config, nullptr); }

ParamList DecoderParams::parameters(const std::string& prefix) const {
  ParamList out;
  out.push_back({prefix + ".embedding", embedding});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    layers[l].self_norm.collect(out, lp + ".self_norm");
    layers[l].self_attention.collect(out, lp + ".self_attention");
    layers[l].cross_norm.collect(out, lp + ".cross_norm");
    layers[l].system_attention.collect(out, lp + ".system_attention");
    layers[l].user_attention.collect(out, lp + ".user_attention");
    layers[l].ff_norm.collect(out, lp + ".ff_norm");
    layers[l].ff.collect(out, lp + ".ff");
  }
  final_norm.collect(out, prefix + ".final_norm");
  output.collect(out, prefix + ".output");
  return out;
}

Tensor mix_contexts(const Tensor& system_context, const Tensor& user_context, const Tensor& alpha) {
  if (system_context.shape() != user_context.shape())
    throw DimensionError("mix_contexts: " + shape_string(system_context.shape()) + " vs " +
                         shape_string(user_context.shape()));
  return ops::add(ops::mul_scalar(system_context, alpha), ops::mul_scalar(user_context, ops::one_minus(alpha)));
}

Tensor decode_logits(const DecoderParams& params, std::span<const TokenId> prev, const Tensor& system_memory,
                     const Tensor& user_memory, const Tensor& alpha, std::vector<ContextTrace>* trace) {
  const auto& cfg = params.config;
  if (prev.empty()) throw ContractError("decode: empty token prefix");
  if (prev.size() > cfg.max_len)
    throw ContractError("decode: prefix of " + std::to_string(prev.size()) + " exceeds max_len " +
                        std::to_string(cfg.max_len));
  for (auto t : prev)
    if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab_size)
      throw VocabularyError("decode: token id " + std::to_string(t) + " outside vocabulary");
  const double a = alpha.item();
  if (!(a >= 0.0 && a <= 1.0)) throw ContractError("decode: alpha " + std::to_string(a) + " outside [0,1]");

  const Tensor mask = ops::causal_mask(prev.size());
  Tensor x = ops::add(ops::embedding(params.embedding, prev), sinusoidal_table(prev.size(), cfg.d_model, 0.0));
  for (const auto& layer : params.layers) {
    const Tensor h = layer.self_norm(x);
    x = ops::add(x, layer.self_attention(h, h, &mask));
    const Tensor c = layer.cross_norm(x);
    const Tensor sys = layer.system_attention(c, system_memory);
    const Tensor usr = layer.user_attention(c, user_memory);
    const Tensor combined = mix_contexts(sys, usr, alpha);
    if (trace != nullptr) trace->push_back({sys, usr, combined});
    x = ops::add(x, combined);
    x = ops::add(x, layer.ff(layer.ff_norm(x)));
  }
  return params.output(params.final_norm(x));
}

Tensor decode_step(const DecoderParams& params, std::span<const TokenId> prev, const Tensor& system_memory,
                   const Tensor& user_memory, double alpha) {
  if (prev.empty()) throw ContractError("decode_step: empty token prefix");
  if (prev.front() != token::kStart) throw ContractError("decode_step: prefix must start with START");
  const Tensor logits = decode_logits(params, prev, system_memory, user_memory, Tensor::scalar(alpha));
  return ops::row(logits, logits.rows() - 1);
}

bool leakage_filter(TokenId candidate, std::span<const TokenId> generated, std::span<const TokenId> system_tokens,
                    std::size_t n) {
  if (n < 2) throw ContractError("leakage_filter: n must be at least 2");
  if (generated.size() < n - 1 || system_tokens.size() < n + 1) return true;
  std::vector<TokenId> gram(generated.end() - static_cast<std::ptrdiff_t>(n - 1), generated.end());
  gram.push_back(candidate);
  const auto payload = system_tokens.subspan(1);
  return std::search(payload.begin(), payload.end(), gram.begin(), gram.end()) == payload.end();
}

GenerationResult greedy_decode(const StepFn& step, std::span<const TokenId> system_tokens, std::size_t max_len,
                               std::size_t n, bool keep_logits) {
  if (max_len < 1) throw ContractError("generate: max_len must be at least 1");
  GenerationResult result;
  TokenSeq prefix{token::kStart};
  std::vector<std::size_t> order;
  while (result.tokens.size() < max_len) {
    std::vector<double> logits = step(prefix);
    order.resize(logits.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Highest logit first; ties broken by the lower id.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
    std::optional<TokenId> chosen;
    for (auto id : order) {
      const auto candidate = static_cast<TokenId>(id);
      if (leakage_filter(candidate, result.tokens, system_tokens, n)) {
        chosen = candidate;
        break;
      }
      ++result.filtered_count;
    }
    if (!chosen) throw GenerationError("generate: every candidate token is vetoed by the leakage filter");
    if (keep_logits) result.step_logits.push_back(std::move(logits));
    result.tokens.push_back(*chosen);
    prefix.push_back(*chosen);
    if (*chosen == token::kEnd) break;
  }
  return result;
}

}  // namespace pico
