#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pico/corpus.hpp"
#include "pico/layers.hpp"

namespace pico {

// The four gating quantities of one example. alpha_eff is always the exact
// max of the other three.
struct GateSignals {
  double alpha0 = 0.0;
  double expert = 0.0;
  double ckg = 0.0;
  double alpha_eff = 0.0;
};

nlohmann::ordered_json to_json(const GateSignals& signals);

// Security expert head: d → hidden → 1, sigmoid output.
struct ExpertParams {
  Linear hidden;
  Linear out;

  static ExpertParams init(std::size_t d, std::size_t hidden, Rng& rng);
  static ExpertParams zeros(std::size_t d, std::size_t hidden);
  void collect(ParamList& params, const std::string& prefix) const;
};

// E(U) as a differentiable one-element tensor.
Tensor expert_score(const ExpertParams& head, const Tensor& user_pooled);

enum class Relation { indicates, alias_of, mitigates };
std::string to_string(Relation relation);
Relation relation_from_string(std::string_view name);

struct GraphNode {
  std::string id;
  std::vector<TokenSeq> surface_forms;
  double risk = 0.0;
  std::vector<double> embedding;  // d_kg values
};

struct GraphEdge {
  std::string src;
  std::string dst;
  Relation relation = Relation::indicates;
  double weight = 0.0;
};

// Cybersecurity knowledge graph. Immutable once loaded.
struct SecurityGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  std::size_t d_kg = 16;

  const GraphNode* find(std::string_view id) const;
};

struct GraphViolation {
  std::string subject;  // node or edge identifier
  std::string message;
};

std::vector<GraphViolation> validate_graph(const SecurityGraph& graph);

// Ids of all nodes with a surface form occurring contiguously in user_tokens.
std::set<std::string> match_entities(std::span<const TokenId> user_tokens, const SecurityGraph& graph);

// Risk of a node after propagation along indicates/alias_of edges:
//   r_d(n) = max(risk(n), max_e weight(e) · r_{d-1}(dst(e))),  r_0(n) = risk(n).
double effective_risk(const SecurityGraph& graph, std::string_view node_id, int depth = 2);

// K(U): max effective risk over the matched nodes; 0 when nothing matched.
double ckg_score(const std::set<std::string>& matched, const SecurityGraph& graph);

// Mean matched embedding projected to the model width; zero vector when
// nothing matched. projection is [d_kg × d].
Tensor ckg_context(const std::set<std::string>& matched, const SecurityGraph& graph, const Tensor& projection);

// Reads {"nodes": [...], "edges": [...]}; missing embeddings are drawn from
// `seed`. Throws ConfigError listing every violation.
SecurityGraph graph_from_json(const nlohmann::json& doc, std::uint64_t seed, std::size_t d_kg = 16);
nlohmann::ordered_json graph_to_json(const SecurityGraph& graph);

// Built-in graph for the synthetic vocabulary: trigger nodes, their aliases,
// the policy block marker and the confidentiality concepts they threaten.
SecurityGraph default_graph(const Vocab& vocab, std::uint64_t seed, std::size_t d_kg = 16);

}  // namespace pico
