#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>

#include "pico/decoder.hpp"
#include "pico/encoder.hpp"
#include "pico/fusion.hpp"
#include "pico/security.hpp"

namespace pico {

struct ModelConfig {
  std::size_t vocab_size = 64;
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_ff = 64;
  std::size_t max_len = 64;
  std::size_t expert_hidden = 32;
  std::size_t d_kg = 16;
  Pooling pooling = Pooling::mean;
  PositionalMode positional = PositionalMode::sinusoidal;

  EncoderConfig encoder() const;
  DecoderConfig decoder() const;
};

nlohmann::ordered_json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Everything needed to run the dual-stream model on one (S, U) pair.
struct Model {
  ModelConfig config;
  Vocab vocab;
  EncoderParams system_encoder;
  EncoderParams user_encoder;
  GateHead gate;
  ExpertParams expert;
  SecurityGraph graph;
  Tensor kg_projection;  // [d_kg × d], diagnostic only
  DecoderParams decoder;

  // Weights drawn from the "init" substream of `seed`. Without a graph the
  // built-in one is used.
  static Model init(const ModelConfig& config, std::uint64_t seed, std::optional<SecurityGraph> graph = {});
  // Same structure with all-zero weights, used as a target for loading.
  static Model zeros(const ModelConfig& config, SecurityGraph graph);

  // Every tensor under a stable, unique name.
  ParamList parameters() const;
  ParamList system_parameters() const;
  // Tensors that currently require grad.
  ParamList trainable_parameters() const;
};

struct ForwardOptions {
  std::optional<double> force_alpha;  // replaces α_eff everywhere
  bool ablate_expert = false;         // E(U) forced to 0
};

// Encodings and gate values for one example.
struct Analysis {
  EncoderOutput system;
  EncoderOutput user;
  Tensor alpha0;     // [1]
  Tensor expert;     // [1]
  Tensor alpha_eff;  // [1]
  GateSignals signals;
  std::set<std::string> matched;
};

// `system_cache`, when given, must be the frozen system encoder's output for S.
Analysis analyze(const Model& model, std::span<const TokenId> system, std::span<const TokenId> user,
                 const ForwardOptions& options = {}, const EncoderOutput* system_cache = nullptr);

// Teacher-forced logits [|target| × V] for the decoder input START + target[:-1].
Tensor teacher_forced_logits(const Model& model, const Analysis& analysis, std::span<const TokenId> target);

GenerationResult generate(const Model& model, std::span<const TokenId> system, std::span<const TokenId> user,
                          std::size_t max_len, std::size_t n = 3, const ForwardOptions& options = {},
                          bool keep_logits = false);

// First-step logits with both memories reduced to the single row z; the
// decoder viewed as a map from one representation vector to outputs.
std::vector<double> decoder_map(const Model& model, std::span<const double> z, double alpha = 1.0);

}  // namespace pico
