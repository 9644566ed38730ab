#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pico/corpus.hpp"
#include "pico/eval.hpp"
#include "pico/model.hpp"
#include "pico/training.hpp"

namespace pico {

struct VerifyConfig {
  double epsilon_factor = 0.1;  // ε = epsilon_factor · G
  double delta = 0.1;
  double gamma = 0.05;
  double eta = 0.3;
  std::size_t detection_trials = 10000;
  std::size_t lipschitz_pairs = 500;
  double lipschitz_radius = 0.1;
};

// Targets the evaluation and acceptance reports are compared against.
struct AcceptanceTargets {
  double adversarial_fraction = 0.95;  // share with α_eff ≥ eval adversarial_gate
  double benign_fraction = 0.95;       // share with α_eff ≤ eval benign_gate
  double token_accuracy = 0.90;
  double refusal_rate = 0.95;
  double puppetry_fraction = 0.90;  // ablated expert, graph only
  double fpr_rise = 0.05;
  double time_limit_seconds = 600.0;
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> graph_path;
  ModelConfig model;
  CorpusSpec corpus;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  TrainConfig train;
  VerifyConfig verify;
  EvalThresholds eval;
  std::size_t eval_max_len = 16;
  std::size_t leakage_n = 3;
  AcceptanceTargets acceptance;

  // Copies with the run seed and shared sizes filled in.
  CorpusSpec corpus_spec() const;
  TrainConfig train_config() const;
};

// Applies one "key = value" assignment. Throws ConfigError on unknown keys
// or unparsable values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);
// "key=value" form used by --set.
void apply_override(RunConfig& config, std::string_view assignment);

// Reads a key-value file: one assignment per line, '#' starts a comment.
RunConfig load_config(const std::filesystem::path& path);

// Consistency checks across sections; also that referenced paths exist.
void validate(const RunConfig& config);

std::vector<std::string> config_keys();
nlohmann::ordered_json to_json(const RunConfig& config);

}  // namespace pico
