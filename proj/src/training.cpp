#include "pico/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "pico/digest.hpp"
#include "pico/errors.hpp"
#include "pico/ops.hpp"

namespace pico {

std::string to_string(GateMode mode) {
  return mode == GateMode::supervised_gate ? "supervised_gate" : "reinforce_gate";
}

GateMode gate_mode_from_string(std::string_view name) {
  if (name == "supervised_gate") return GateMode::supervised_gate;
  if (name == "reinforce_gate") return GateMode::reinforce_gate;
  throw ConfigError("unknown gate mode '" + std::string(name) + "'");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

void validate(const TrainConfig& c) {
  if (!(c.eta > 0.0 && c.eta < 1.0)) throw ContractError("train config: eta must lie in (0,1)");
  if (!(c.delta > 0.0 && c.delta < 1.0)) throw ContractError("train config: delta must lie in (0,1)");
  if (!(c.eta < 1.0 - c.delta)) throw ContractError("train config: eta must be below 1 - delta");
  if (!(c.learning_rate > 0.0)) throw ContractError("train config: learning rate must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ContractError("train config: momentum must lie in [0,1)");
  if (c.batch_size == 0) throw ContractError("train config: batch size must be positive");
  if (!(c.lambda_aux >= 0.0) || !(c.lambda_gate >= 0.0))
    throw ContractError("train config: loss weights must be non-negative");
  if (!(c.gate_margin >= 0.0 && c.gate_margin < c.eta))
    throw ContractError("train config: gate margin must lie in [0, eta)");
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["momentum"] = c.momentum;
  j["optimizer"] = to_string(c.optimizer);
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["warmup_epochs"] = c.warmup_epochs;
  j["lambda_aux"] = c.lambda_aux;
  j["lambda_gate"] = c.lambda_gate;
  j["eta"] = c.eta;
  j["delta"] = c.delta;
  j["gate_margin"] = c.gate_margin;
  j["mode"] = to_string(c.mode);
  j["seed"] = c.seed;
  return j;
}

Tensor main_loss(const Tensor& logits, std::span<const TokenId> targets) {
  if (logits.rank() != 2 || logits.rows() != targets.size())
    throw ContractError("main_loss: " + shape_string(logits.shape()) + " logits for " +
                        std::to_string(targets.size()) + " target tokens");
  return ops::cross_entropy(logits, targets);
}

Tensor aux_leakage_loss(const Tensor& logits, std::span<const TokenId> system_tokens,
                        std::span<const TokenId> target_tokens) {
  std::vector<TokenId> leaked;
  for (std::size_t i = 1; i < system_tokens.size(); ++i) {
    const TokenId t = system_tokens[i];
    if (std::find(target_tokens.begin(), target_tokens.end(), t) != target_tokens.end()) continue;
    if (std::find(leaked.begin(), leaked.end(), t) != leaked.end()) continue;
    leaked.push_back(t);
  }
  if (leaked.empty()) return Tensor::scalar(0.0);
  return ops::mean(ops::select_cols_sum(ops::softmax(logits, 1), leaked));
}

double gate_loss(const GateSignals& signals, bool adversarial, double eta, double delta) {
  return adversarial ? std::max(0.0, (1.0 - delta) - signals.alpha_eff) : std::max(0.0, signals.alpha_eff - eta);
}

Tensor gate_loss(const Tensor& alpha_eff, bool adversarial, double eta, double delta) {
  if (adversarial) return ops::relu(ops::add_constant(ops::scale(alpha_eff, -1.0), 1.0 - delta));
  return ops::relu(ops::add_constant(alpha_eff, -eta));
}

RlSample rl_gate_loss(const Tensor& alpha_eff, bool adversarial, Rng& rng) {
  const double a = alpha_eff.item();
  if (!(a >= 0.0 && a <= 1.0)) throw ContractError("rl_gate_loss: alpha_eff outside [0,1]");
  RlSample s;
  s.action = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < a;
  s.reward = s.action == adversarial ? 1.0 : -1.0;
  const Tensor log_p = ops::clamped_log(s.action ? alpha_eff : ops::one_minus(alpha_eff));
  s.loss = ops::scale(log_p, -s.reward);
  return s;
}

Optimizer::Optimizer(ParamList params, const TrainConfig& config)
    : params_(std::move(params)), kind_(config.optimizer), lr_(config.learning_rate), momentum_(config.momentum) {
  for (const auto& p : params_)
    if (!p.tensor.requires_grad())
      throw ContractError("optimizer: parameter '" + p.name + "' does not require grad (frozen tensors are excluded)");
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    if (kind_ == OptimizerKind::adam) v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Optimizer::step() {
  ++steps_;
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& t = params_[i].tensor;
    if (!t.has_grad()) continue;
    auto g = t.grad();
    auto w = t.values();
    auto& m = m_[i];
    for (double x : g)
      if (!std::isfinite(x)) throw ContractError("optimizer: non-finite gradient in '" + params_[i].name + "'");
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = momentum_ * m[k] + g[k];
        w[k] -= lr_ * m[k];
      }
    } else {
      auto& v = v_[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
        v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
        w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
      }
    }
  }
}

bool Optimizer::holds(const Tensor& tensor) const {
  return std::any_of(params_.begin(), params_.end(), [&](const NamedTensor& p) { return p.tensor.same_storage(tensor); });
}

namespace {

nlohmann::ordered_json to_json(const GateStats& s) {
  nlohmann::ordered_json j;
  j["count"] = s.count;
  j["mean_alpha"] = s.mean_alpha;
  j["min_alpha"] = s.min_alpha;
  j["max_alpha"] = s.max_alpha;
  j["fraction_meeting"] = s.fraction_meeting;
  return j;
}

GateStats summarize(const std::vector<double>& alphas, bool adversarial, double eta, double delta) {
  GateStats s;
  s.count = alphas.size();
  if (alphas.empty()) return s;
  s.min_alpha = *std::min_element(alphas.begin(), alphas.end());
  s.max_alpha = *std::max_element(alphas.begin(), alphas.end());
  s.mean_alpha = std::accumulate(alphas.begin(), alphas.end(), 0.0) / static_cast<double>(alphas.size());
  const auto meeting = std::count_if(alphas.begin(), alphas.end(),
                                     [&](double a) { return adversarial ? a >= 1.0 - delta : a <= eta; });
  s.fraction_meeting = static_cast<double>(meeting) / static_cast<double>(alphas.size());
  return s;
}

bool supervise_signals(const ChannelizedExample& ex) {
  // Alias-obfuscated puppetry stays out of the learned detectors' training
  // signal; only the graph is meant to recognise it.
  return !(ex.attack_kind == AttackKind::policy_puppetry && !has_raw_trigger(ex.user));
}

Tensor gate_supervision(const Analysis& a, const ChannelizedExample& ex, const TrainConfig& c) {
  Tensor term = gate_loss(a.alpha_eff, ex.adversarial, c.eta, c.delta);
  if (!supervise_signals(ex)) return term;
  const Tensor bce = ops::scale(ops::clamped_log(ex.adversarial ? a.expert : ops::one_minus(a.expert)), -1.0);
  const Tensor base = ex.adversarial ? ops::relu(ops::add_constant(ops::scale(a.alpha0, -1.0), 1.0 - c.delta))
                                     : ops::relu(ops::add_constant(a.alpha0, -(c.eta - c.gate_margin)));
  return ops::add(term, ops::add(bce, base));
}

}  // namespace

ExampleLoss example_loss(const Model& model, const ChannelizedExample& ex, const TrainConfig& config, bool full,
                         Rng* rng, const EncoderOutput* system_cache) {
  const Analysis a = analyze(model, ex.system, ex.user, {}, system_cache);
  const Tensor logits = teacher_forced_logits(model, a, ex.target);
  ExampleLoss l;
  l.total = main_loss(logits, ex.target);
  l.main = l.total.item();
  l.alpha_eff = a.alpha_eff.item();
  if (!full) return l;
  const Tensor aux = aux_leakage_loss(logits, ex.system, ex.target);
  l.aux = aux.item();
  if (config.lambda_aux > 0.0) l.total = ops::add(l.total, ops::scale(aux, config.lambda_aux));
  Tensor gate;
  if (config.mode == GateMode::supervised_gate) {
    gate = gate_supervision(a, ex, config);
  } else {
    if (rng == nullptr) throw ContractError("example_loss: reinforce_gate mode needs a generator");
    gate = rl_gate_loss(a.alpha_eff, ex.adversarial, *rng).loss;
  }
  l.gate = gate.item();
  if (config.lambda_gate > 0.0) l.total = ops::add(l.total, ops::scale(gate, config.lambda_gate));
  return l;
}

namespace {

enum class Phase { warmup, main };

class Runner {
 public:
  Runner(Model& model, std::span<const ChannelizedExample> examples, const TrainConfig& config, Phase phase)
      : model_(model),
        examples_(examples),
        config_(config),
        phase_(phase),
        optimizer_(model.trainable_parameters(), config),
        rng_(substream(config.seed, phase == Phase::warmup ? "warmup" : "training")) {
    if (model_.system_encoder.frozen) {
      for (const auto& ex : examples_)
        if (!system_cache_.contains(ex.system))
          system_cache_.emplace(ex.system, encode(model_.system_encoder, ex.system, Channel::system));
    }
  }

  EpochReport run_epoch(std::size_t epoch) {
    EpochReport r;
    r.phase = phase_ == Phase::warmup ? "warmup" : "main";
    r.epoch = epoch;
    std::vector<std::size_t> order(examples_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);
    std::vector<double> benign_alpha, adversarial_alpha;
    for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
      const std::size_t end = std::min(order.size(), start + config_.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      optimizer_.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = examples_[order[i]];
        const ExampleLoss l = accumulate(ex, inv);
        r.main += l.main;
        r.aux += l.aux;
        r.gate += l.gate;
        r.total += l.total.item();
        (ex.adversarial ? adversarial_alpha : benign_alpha).push_back(l.alpha_eff);
      }
      mark_touched();
      optimizer_.step();
    }
    optimizer_.zero_grad();
    if (!examples_.empty()) {
      const double n = static_cast<double>(examples_.size());
      r.main /= n;
      r.aux /= n;
      r.gate /= n;
      r.total /= n;
    }
    r.benign = summarize(benign_alpha, false, config_.eta, config_.delta);
    r.adversarial = summarize(adversarial_alpha, true, config_.eta, config_.delta);
    return r;
  }

  std::string rng_state() const {
    std::ostringstream out;
    out << rng_;
    return out.str();
  }

  std::vector<std::string> untouched() const {
    std::vector<std::string> out;
    for (const auto& p : optimizer_.params())
      if (!touched_.contains(p.tensor.identity())) out.push_back(p.name);
    return out;
  }

 private:
  ExampleLoss accumulate(const ChannelizedExample& ex, double weight) {
    Tape tape;
    TapeScope scope(tape);
    const auto cached = system_cache_.find(ex.system);
    ExampleLoss l = example_loss(model_, ex, config_, phase_ == Phase::main, &rng_,
                                 cached == system_cache_.end() ? nullptr : &cached->second);
    tape.backward(ops::scale(l.total, weight));
    return l;
  }

  void mark_touched() {
    for (const auto& p : optimizer_.params()) {
      if (touched_.contains(p.tensor.identity()) || !p.tensor.has_grad()) continue;
      auto g = p.tensor.grad();
      if (std::any_of(g.begin(), g.end(), [](double x) { return x != 0.0; })) touched_.insert(p.tensor.identity());
    }
  }

  Model& model_;
  std::span<const ChannelizedExample> examples_;
  const TrainConfig& config_;
  Phase phase_;
  Optimizer optimizer_;
  Rng rng_;
  std::map<TokenSeq, EncoderOutput> system_cache_;
  std::set<const void*> touched_;
};

void log_epoch(const EpochReport& r) {
  spdlog::info("{} epoch {}: total {:.5f} main {:.5f} aux {:.5f} gate {:.5f} | benign mean a {:.3f} ok {:.3f} | "
               "adversarial mean a {:.3f} ok {:.3f}",
               r.phase, r.epoch, r.total, r.main, r.aux, r.gate, r.benign.mean_alpha, r.benign.fraction_meeting,
               r.adversarial.mean_alpha, r.adversarial.fraction_meeting);
}

}  // namespace

nlohmann::ordered_json to_json(const TrainReport& report) {
  nlohmann::ordered_json j;
  j["seed"] = report.seed;
  j["frozen_hash_before"] = report.frozen_hash_before;
  j["frozen_hash_after"] = report.frozen_hash_after;
  j["final_loss"] = report.final_loss;
  j["parameters_without_gradient"] = report.parameters_without_gradient;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : report.epochs) {
    nlohmann::ordered_json je;
    je["phase"] = e.phase;
    je["epoch"] = e.epoch;
    je["main"] = e.main;
    je["aux"] = e.aux;
    je["gate"] = e.gate;
    je["total"] = e.total;
    je["frozen_hash_ok"] = e.frozen_hash_ok;
    je["benign"] = to_json(e.benign);
    je["adversarial"] = to_json(e.adversarial);
    j["epochs"].push_back(std::move(je));
  }
  return j;
}

TrainReport warm_up(Model& model, std::span<const ChannelizedExample> examples, const TrainConfig& config) {
  validate(config);
  if (model.system_encoder.frozen) throw ContractError("warm_up: system encoder is already frozen");
  std::vector<ChannelizedExample> benign;
  for (const auto& ex : examples)
    if (!ex.adversarial) benign.push_back(ex);
  TrainReport report;
  report.seed = config.seed;
  {
    Runner runner(model, benign, config, Phase::warmup);
    for (std::size_t e = 0; e < config.warmup_epochs; ++e) {
      report.epochs.push_back(runner.run_epoch(e));
      log_epoch(report.epochs.back());
    }
    report.rng_state = runner.rng_state();
  }
  freeze(model.system_encoder);
  report.frozen_hash_before = report.frozen_hash_after = parameter_digest(model.system_parameters());
  if (!report.epochs.empty()) report.final_loss = report.epochs.back().total;
  return report;
}

TrainReport train(Model& model, std::span<const ChannelizedExample> examples, const TrainConfig& config) {
  validate(config);
  if (!model.system_encoder.frozen) throw ContractError("train: system encoder must be frozen first");
  TrainReport report;
  report.seed = config.seed;
  report.frozen_hash_before = parameter_digest(model.system_parameters());
  Runner runner(model, examples, config, Phase::main);
  for (std::size_t e = 0; e < config.epochs; ++e) {
    EpochReport r = runner.run_epoch(e);
    const std::string now = parameter_digest(model.system_parameters());
    r.frozen_hash_ok = now == report.frozen_hash_before;
    report.epochs.push_back(r);
    log_epoch(r);
    if (!r.frozen_hash_ok)
      throw FrozenBranchViolation("system encoder bytes changed during epoch " + std::to_string(e) + ": " +
                                  report.frozen_hash_before + " -> " + now);
  }
  report.frozen_hash_after = parameter_digest(model.system_parameters());
  report.rng_state = runner.rng_state();
  if (!report.epochs.empty()) {
    report.final_loss = report.epochs.back().total;
    report.parameters_without_gradient = runner.untouched();
  }
  return report;
}

}  // namespace pico
