#include "pico/security.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pico/errors.hpp"
#include "pico/ops.hpp"

namespace pico {

nlohmann::ordered_json to_json(const GateSignals& s) {
  nlohmann::ordered_json j;
  j["alpha0"] = s.alpha0;
  j["expert"] = s.expert;
  j["ckg"] = s.ckg;
  j["alpha_eff"] = s.alpha_eff;
  return j;
}

ExpertParams ExpertParams::init(std::size_t d, std::size_t hidden, Rng& rng) {
  return {Linear::init(d, hidden, rng), Linear::init(hidden, 1, rng)};
}

ExpertParams ExpertParams::zeros(std::size_t d, std::size_t hidden) {
  return {Linear::zeros(d, hidden), Linear::zeros(hidden, 1)};
}

void ExpertParams::collect(ParamList& params, const std::string& prefix) const {
  hidden.collect(params, prefix + ".hidden");
  out.collect(params, prefix + ".out");
}

Tensor expert_score(const ExpertParams& head, const Tensor& user_pooled) {
  const std::size_t d = head.hidden.weight.dim(0);
  if (user_pooled.size() != d)
    throw ContractError("expert_score: pooled input " + shape_string(user_pooled.shape()) +
                        " does not match head width " + std::to_string(d));
  return ops::reshape(ops::sigmoid(head.out(ops::gelu(head.hidden(user_pooled)))), {1});
}

std::string to_string(Relation relation) {
  switch (relation) {
    case Relation::indicates: return "indicates";
    case Relation::alias_of: return "alias_of";
    case Relation::mitigates: return "mitigates";
  }
  return "indicates";
}

Relation relation_from_string(std::string_view name) {
  if (name == "indicates") return Relation::indicates;
  if (name == "alias_of") return Relation::alias_of;
  if (name == "mitigates") return Relation::mitigates;
  throw ConfigError("unknown edge relation '" + std::string(name) + "'");
}

const GraphNode* SecurityGraph::find(std::string_view id) const {
  for (const auto& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

std::vector<GraphViolation> validate_graph(const SecurityGraph& graph) {
  std::vector<GraphViolation> out;
  std::set<std::string> ids;
  for (const auto& n : graph.nodes) {
    const std::string subject = "node " + n.id;
    if (!ids.insert(n.id).second) out.push_back({subject, "duplicate node id"});
    if (!(n.risk >= 0.0 && n.risk <= 1.0)) out.push_back({subject, "risk " + std::to_string(n.risk) + " outside [0,1]"});
    if (n.embedding.size() != graph.d_kg)
      out.push_back({subject, "embedding has " + std::to_string(n.embedding.size()) + " values, expected " +
                                  std::to_string(graph.d_kg)});
    for (const auto& form : n.surface_forms)
      if (form.empty()) out.push_back({subject, "empty surface form"});
  }
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    const auto& e = graph.edges[i];
    const std::string subject = "edge " + std::to_string(i) + " (" + e.src + " -> " + e.dst + ")";
    if (!ids.contains(e.src)) out.push_back({subject, "source node '" + e.src + "' does not exist"});
    if (!ids.contains(e.dst)) out.push_back({subject, "target node '" + e.dst + "' does not exist"});
    if (!(e.weight >= 0.0 && e.weight <= 1.0))
      out.push_back({subject, "weight " + std::to_string(e.weight) + " outside [0,1]"});
  }
  return out;
}

std::set<std::string> match_entities(std::span<const TokenId> user_tokens, const SecurityGraph& graph) {
  std::set<std::string> matched;
  for (const auto& node : graph.nodes) {
    for (const auto& form : node.surface_forms) {
      if (form.empty() || form.size() > user_tokens.size()) continue;
      if (std::search(user_tokens.begin(), user_tokens.end(), form.begin(), form.end()) != user_tokens.end()) {
        matched.insert(node.id);
        break;
      }
    }
  }
  return matched;
}

double effective_risk(const SecurityGraph& graph, std::string_view node_id, int depth) {
  const GraphNode* node = graph.find(node_id);
  if (node == nullptr) throw ContractError("effective_risk: unknown node '" + std::string(node_id) + "'");
  double risk = node->risk;
  if (depth <= 0) return risk;
  for (const auto& e : graph.edges) {
    if (e.src != node_id || e.relation == Relation::mitigates) continue;
    risk = std::max(risk, e.weight * effective_risk(graph, e.dst, depth - 1));
  }
  return risk;
}

double ckg_score(const std::set<std::string>& matched, const SecurityGraph& graph) {
  double k = 0.0;
  for (const auto& id : matched) {
    if (graph.find(id) == nullptr) throw ContractError("ckg_score: matched node '" + id + "' not in graph");
    k = std::max(k, effective_risk(graph, id, 2));
  }
  return k;
}

Tensor ckg_context(const std::set<std::string>& matched, const SecurityGraph& graph, const Tensor& projection) {
  if (projection.rank() != 2 || projection.rows() != graph.d_kg)
    throw DimensionError("ckg_context: projection " + shape_string(projection.shape()) + " does not start with d_kg " +
                         std::to_string(graph.d_kg));
  if (matched.empty()) return Tensor({projection.cols()});
  std::vector<double> mean(graph.d_kg, 0.0);
  for (const auto& id : matched) {
    const GraphNode* node = graph.find(id);
    if (node == nullptr) throw ContractError("ckg_context: matched node '" + id + "' not in graph");
    for (std::size_t j = 0; j < graph.d_kg; ++j) mean[j] += node->embedding[j];
  }
  for (auto& v : mean) v /= static_cast<double>(matched.size());
  return ops::reshape(ops::matmul(Tensor({1, graph.d_kg}, std::move(mean)), projection), {projection.cols()});
}

SecurityGraph graph_from_json(const nlohmann::json& doc, std::uint64_t seed, std::size_t d_kg) {
  SecurityGraph g;
  g.d_kg = d_kg;
  Rng rng = substream(seed, "graph");
  std::normal_distribution<double> normal(0.0, 0.02);
  try {
    for (const auto& jn : doc.at("nodes")) {
      GraphNode n;
      n.id = jn.at("id").get<std::string>();
      n.surface_forms = jn.value("surface_forms", std::vector<TokenSeq>{});
      n.risk = jn.at("risk").get<double>();
      if (jn.contains("embedding")) {
        n.embedding = jn.at("embedding").get<std::vector<double>>();
      } else {
        n.embedding.resize(d_kg);
        for (auto& v : n.embedding) v = normal(rng);
      }
      g.nodes.push_back(std::move(n));
    }
    for (const auto& je : doc.value("edges", nlohmann::json::array())) {
      g.edges.push_back({je.at("src").get<std::string>(), je.at("dst").get<std::string>(),
                         relation_from_string(je.at("relation").get<std::string>()), je.at("weight").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("graph document: ") + e.what());
  }
  if (auto violations = validate_graph(g); !violations.empty()) {
    std::string msg = "invalid security graph:";
    for (const auto& v : violations) msg += "\n  " + v.subject + ": " + v.message;
    throw ConfigError(msg);
  }
  return g;
}

nlohmann::ordered_json graph_to_json(const SecurityGraph& graph) {
  nlohmann::ordered_json doc;
  doc["nodes"] = nlohmann::ordered_json::array();
  for (const auto& n : graph.nodes) {
    nlohmann::ordered_json jn;
    jn["id"] = n.id;
    jn["surface_forms"] = n.surface_forms;
    jn["risk"] = n.risk;
    jn["embedding"] = n.embedding;
    doc["nodes"].push_back(std::move(jn));
  }
  doc["edges"] = nlohmann::ordered_json::array();
  for (const auto& e : graph.edges) {
    nlohmann::ordered_json je;
    je["src"] = e.src;
    je["dst"] = e.dst;
    je["relation"] = to_string(e.relation);
    je["weight"] = e.weight;
    doc["edges"].push_back(std::move(je));
  }
  return doc;
}

SecurityGraph default_graph(const Vocab& vocab, std::uint64_t seed, std::size_t d_kg) {
  const auto form = [](TokenId t) { return std::vector<TokenSeq>{{t}}; };
  nlohmann::json doc;
  doc["nodes"] = {
      {{"id", "instruction_override"}, {"risk", 1.0}},
      {{"id", "prompt_disclosure"}, {"risk", 1.0}},
      {{"id", "confidentiality_policy"}, {"risk", 0.0}},
      {{"id", "forget_instructions"}, {"surface_forms", form(token::kInjForget)}, {"risk", 0.95}},
      {{"id", "reveal_prompt"}, {"surface_forms", form(token::kInjReveal)}, {"risk", 0.95}},
      {{"id", "alias_forget_a"}, {"surface_forms", form(vocab.alias_for(token::kInjForget, 0))}, {"risk", 0.0}},
      {{"id", "alias_forget_b"}, {"surface_forms", form(vocab.alias_for(token::kInjForget, 1))}, {"risk", 0.0}},
      {{"id", "alias_reveal_a"}, {"surface_forms", form(vocab.alias_for(token::kInjReveal, 0))}, {"risk", 0.0}},
      {{"id", "alias_reveal_b"}, {"surface_forms", form(vocab.alias_for(token::kInjReveal, 1))}, {"risk", 0.0}},
      {{"id", "policy_block"}, {"surface_forms", form(token::kPolicyOpen)}, {"risk", 0.2}},
  };
  const auto edge = [](const char* src, const char* dst, const char* rel, double w) {
    return nlohmann::json{{"src", src}, {"dst", dst}, {"relation", rel}, {"weight", w}};
  };
  doc["edges"] = {
      edge("forget_instructions", "instruction_override", "indicates", 1.0),
      edge("reveal_prompt", "prompt_disclosure", "indicates", 1.0),
      edge("alias_forget_a", "forget_instructions", "alias_of", 0.95),
      edge("alias_forget_b", "forget_instructions", "alias_of", 0.95),
      edge("alias_reveal_a", "reveal_prompt", "alias_of", 0.95),
      edge("alias_reveal_b", "reveal_prompt", "alias_of", 0.95),
      edge("confidentiality_policy", "prompt_disclosure", "mitigates", 1.0),
  };
  return graph_from_json(doc, seed, d_kg);
}

}  // namespace pico
