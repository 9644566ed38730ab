#include "pico/model.hpp"

#include <cmath>

#include "pico/errors.hpp"
#include "pico/ops.hpp"

namespace pico {

EncoderConfig ModelConfig::encoder() const {
  return {vocab_size, d_model, n_layers, n_heads, d_ff, max_len, pooling, positional};
}

DecoderConfig ModelConfig::decoder() const { return {vocab_size, d_model, n_layers, n_heads, d_ff, max_len}; }

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["vocab_size"] = c.vocab_size;
  j["d_model"] = c.d_model;
  j["n_layers"] = c.n_layers;
  j["n_heads"] = c.n_heads;
  j["d_ff"] = c.d_ff;
  j["max_len"] = c.max_len;
  j["expert_hidden"] = c.expert_hidden;
  j["d_kg"] = c.d_kg;
  j["pooling"] = c.pooling == Pooling::mean ? "mean" : "cls";
  j["positional"] = c.positional == PositionalMode::sinusoidal ? "sinusoidal" : "learned";
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.expert_hidden = j.at("expert_hidden").get<std::size_t>();
    c.d_kg = j.at("d_kg").get<std::size_t>();
    const auto pooling = j.at("pooling").get<std::string>();
    const auto positional = j.at("positional").get<std::string>();
    if (pooling != "mean" && pooling != "cls") throw ConfigError("unknown pooling '" + pooling + "'");
    if (positional != "sinusoidal" && positional != "learned")
      throw ConfigError("unknown positional mode '" + positional + "'");
    c.pooling = pooling == "mean" ? Pooling::mean : Pooling::cls;
    c.positional = positional == "sinusoidal" ? PositionalMode::sinusoidal : PositionalMode::learned;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

Model Model::init(const ModelConfig& config, std::uint64_t seed, std::optional<SecurityGraph> graph) {
  Rng rng = substream(seed, "init");
  Model m;
  m.config = config;
  m.vocab = Vocab(config.vocab_size);
  m.system_encoder = EncoderParams::init(config.encoder(), rng);
  m.user_encoder = EncoderParams::init(config.encoder(), rng);
  m.gate = GateHead::init(config.d_model, rng);
  m.expert = ExpertParams::init(config.d_model, config.expert_hidden, rng);
  m.graph = graph ? std::move(*graph) : default_graph(m.vocab, seed, config.d_kg);
  if (m.graph.d_kg != config.d_kg)
    throw ConfigError("graph embedding width " + std::to_string(m.graph.d_kg) + " differs from d_kg " +
                      std::to_string(config.d_kg));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(config.d_kg)));
  std::vector<double> proj(config.d_kg * config.d_model);
  for (auto& v : proj) v = normal(rng);
  m.kg_projection = Tensor({config.d_kg, config.d_model}, std::move(proj));
  m.decoder = DecoderParams::init(config.decoder(), rng);
  return m;
}

Model Model::zeros(const ModelConfig& config, SecurityGraph graph) {
  Model m;
  m.config = config;
  m.vocab = Vocab(config.vocab_size);
  m.system_encoder = EncoderParams::zeros(config.encoder());
  m.user_encoder = EncoderParams::zeros(config.encoder());
  m.gate = GateHead::zeros(config.d_model);
  m.expert = ExpertParams::zeros(config.d_model, config.expert_hidden);
  m.graph = std::move(graph);
  m.kg_projection = Tensor({config.d_kg, config.d_model});
  m.decoder = DecoderParams::zeros(config.decoder());
  return m;
}

ParamList Model::system_parameters() const { return system_encoder.parameters("system_encoder"); }

ParamList Model::parameters() const {
  ParamList out = system_parameters();
  for (auto& p : user_encoder.parameters("user_encoder")) out.push_back(std::move(p));
  gate.collect(out, "gate");
  expert.collect(out, "expert");
  out.push_back({"kg_projection", kg_projection});
  for (auto& p : decoder.parameters("decoder")) out.push_back(std::move(p));
  return out;
}

ParamList Model::trainable_parameters() const {
  ParamList out;
  for (auto& p : parameters())
    if (p.tensor.requires_grad()) out.push_back(std::move(p));
  return out;
}

Analysis analyze(const Model& model, std::span<const TokenId> system, std::span<const TokenId> user,
                 const ForwardOptions& options, const EncoderOutput* system_cache) {
  Analysis a;
  a.system = system_cache != nullptr ? *system_cache : encode(model.system_encoder, system, Channel::system);
  a.user = encode(model.user_encoder, user, Channel::user);
  a.alpha0 = base_gate(model.gate, a.user.pooled);
  a.expert = options.ablate_expert ? Tensor::scalar(0.0) : expert_score(model.expert, a.user.pooled);
  a.matched = match_entities(user, model.graph);
  const double k = ckg_score(a.matched, model.graph);
  a.signals = effective_gate(a.alpha0.item(), a.expert.item(), k);
  if (options.force_alpha) {
    a.alpha_eff = Tensor::scalar(*options.force_alpha);
    a.signals.alpha_eff = *options.force_alpha;
  } else {
    a.alpha_eff = effective_gate(a.alpha0, a.expert, k);
  }
  return a;
}

Tensor teacher_forced_logits(const Model& model, const Analysis& analysis, std::span<const TokenId> target) {
  if (target.empty()) throw ContractError("teacher forcing: empty target");
  TokenSeq prev{token::kStart};
  prev.insert(prev.end(), target.begin(), target.end() - 1);
  return decode_logits(model.decoder, prev, analysis.system.memory, analysis.user.memory, analysis.alpha_eff);
}

GenerationResult generate(const Model& model, std::span<const TokenId> system, std::span<const TokenId> user,
                          std::size_t max_len, std::size_t n, const ForwardOptions& options, bool keep_logits) {
  const Analysis a = analyze(model, system, user, options);
  const double alpha = a.alpha_eff.item();
  auto step = [&](const TokenSeq& prefix) {
    const Tensor logits = decode_step(model.decoder, prefix, a.system.memory, a.user.memory, alpha);
    return std::vector<double>(logits.values().begin(), logits.values().end());
  };
  GenerationResult result = greedy_decode(step, system, max_len, n, keep_logits);
  result.signals = a.signals;
  return result;
}

std::vector<double> decoder_map(const Model& model, std::span<const double> z, double alpha) {
  if (z.size() != model.config.d_model)
    throw DimensionError("decoder_map: vector of " + std::to_string(z.size()) + " values, expected " +
                         std::to_string(model.config.d_model));
  const Tensor memory({1, z.size()}, std::vector<double>(z.begin(), z.end()));
  const TokenSeq start{token::kStart};
  const Tensor logits = decode_step(model.decoder, start, memory, memory, alpha);
  return {logits.values().begin(), logits.values().end()};
}

}  // namespace pico
