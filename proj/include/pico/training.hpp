#pragma once

#include <span>
#include <string>
#include <vector>

#include "pico/model.hpp"

namespace pico {

enum class GateMode { supervised_gate, reinforce_gate };
enum class OptimizerKind { sgd, adam };

std::string to_string(GateMode mode);
GateMode gate_mode_from_string(std::string_view name);
std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(std::string_view name);

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.0;  // SGD only
  OptimizerKind optimizer = OptimizerKind::sgd;
  std::size_t batch_size = 16;
  std::size_t epochs = 60;
  std::size_t warmup_epochs = 5;
  double lambda_aux = 1.0;
  double lambda_gate = 1.0;
  double eta = 0.3;    // benign ceiling
  double delta = 0.1;  // adversarial slack
  // Base gate on benign inputs is pushed below eta − gate_margin so that
  // held-out inputs keep some room under the ceiling.
  double gate_margin = 0.1;
  GateMode mode = GateMode::supervised_gate;
  std::uint64_t seed = 7;
};

// η, δ ∈ (0,1) and η < 1 − δ, plus positive sizes and rates.
void validate(const TrainConfig& config);

nlohmann::ordered_json to_json(const TrainConfig& config);

// Mean token cross-entropy; one logits row per target token.
Tensor main_loss(const Tensor& logits, std::span<const TokenId> targets);

// Mean over steps of the probability mass on system payload tokens
// (everything after the tag) that do not occur in the target.
Tensor aux_leakage_loss(const Tensor& logits, std::span<const TokenId> system_tokens,
                        std::span<const TokenId> target_tokens);

// Adversarial: max(0, (1−δ) − α_eff). Benign: max(0, α_eff − η).
double gate_loss(const GateSignals& signals, bool adversarial, double eta, double delta);
Tensor gate_loss(const Tensor& alpha_eff, bool adversarial, double eta, double delta);

struct RlSample {
  Tensor loss;  // −reward · log p(action)
  bool action = false;
  double reward = 0.0;
};

// Score-function surrogate: b ~ Bernoulli(α_eff), reward +1 when b is the
// class-appropriate action (1 on adversarial, 0 on benign), −1 otherwise.
RlSample rl_gate_loss(const Tensor& alpha_eff, bool adversarial, Rng& rng);

struct ExampleLoss {
  Tensor total;  // main + λ_aux·aux + λ_gate·gate (main only when !full)
  double main = 0.0;
  double aux = 0.0;
  double gate = 0.0;
  double alpha_eff = 0.0;
};

// Loss of one example as used by the training loop. With full=false only the
// task loss is formed (warm-up). `rng` is needed in reinforce_gate mode.
ExampleLoss example_loss(const Model& model, const ChannelizedExample& example, const TrainConfig& config, bool full,
                         Rng* rng = nullptr, const EncoderOutput* system_cache = nullptr);

// SGD (optionally with momentum) or Adam over a fixed parameter list.
// Refuses tensors that do not require grad, so a frozen branch can never be
// registered.
class Optimizer {
 public:
  Optimizer(ParamList params, const TrainConfig& config);

  void zero_grad();
  // Throws ContractError on a non-finite gradient.
  void step();
  const ParamList& params() const { return params_; }
  bool holds(const Tensor& tensor) const;

 private:
  ParamList params_;
  OptimizerKind kind_;
  double lr_;
  double momentum_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t steps_ = 0;
};

struct GateStats {
  std::size_t count = 0;
  double mean_alpha = 0.0;
  double min_alpha = 0.0;
  double max_alpha = 0.0;
  double fraction_meeting = 0.0;  // α_eff ≥ 1−δ (adversarial) or ≤ η (benign)
};

struct EpochReport {
  std::string phase;  // "warmup" or "main"
  std::size_t epoch = 0;
  double main = 0.0;
  double aux = 0.0;
  double gate = 0.0;
  double total = 0.0;
  bool frozen_hash_ok = true;
  GateStats benign;
  GateStats adversarial;
};

struct TrainReport {
  std::vector<EpochReport> epochs;
  std::string frozen_hash_before;
  std::string frozen_hash_after;
  double final_loss = 0.0;
  std::vector<std::string> parameters_without_gradient;
  std::uint64_t seed = 0;
  std::string rng_state;  // training generator after the last epoch
};

nlohmann::ordered_json to_json(const TrainReport& report);

// Trains every branch, including the system encoder, on benign examples with
// the task loss only, then freezes the system encoder.
TrainReport warm_up(Model& model, std::span<const ChannelizedExample> examples, const TrainConfig& config);

// Main phase. The system encoder must already be frozen; its fingerprint is
// checked after every epoch and a change raises FrozenBranchViolation.
TrainReport train(Model& model, std::span<const ChannelizedExample> examples, const TrainConfig& config);

}  // namespace pico
