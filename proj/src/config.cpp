#include "pico/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>

#include "pico/errors.hpp"

namespace pico {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  return v;
}

std::size_t as_size(std::string_view k, std::string_view v) { return parse_number<std::size_t>(k, v); }
double as_double(std::string_view k, std::string_view v) { return parse_number<double>(k, v); }

struct Field {
  const char* key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<nlohmann::ordered_json(const RunConfig&)> get;
};

#define PICO_SIZE(name, member) \
  Field{name, [](RunConfig& c, std::string_view v) { c.member = as_size(name, v); }, [](const RunConfig& c) { return nlohmann::ordered_json(c.member); }}
#define PICO_DOUBLE(name, member) \
  Field{name, [](RunConfig& c, std::string_view v) { c.member = as_double(name, v); }, [](const RunConfig& c) { return nlohmann::ordered_json(c.member); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"seed", [](RunConfig& c, std::string_view v) { c.seed = parse_number<std::uint64_t>("seed", v); },
            [](const RunConfig& c) { return nlohmann::ordered_json(c.seed); }},
      Field{"out_dir", [](RunConfig& c, std::string_view v) { c.out_dir = std::string(v); },
            [](const RunConfig& c) { return nlohmann::ordered_json(c.out_dir.string()); }},
      Field{"graph_path",
            [](RunConfig& c, std::string_view v) {
              if (v.empty()) c.graph_path.reset();
              else c.graph_path = std::string(v);
            },
            [](const RunConfig& c) {
              return c.graph_path ? nlohmann::ordered_json(c.graph_path->string()) : nlohmann::ordered_json();
            }},
      PICO_SIZE("model.vocab_size", model.vocab_size),
      PICO_SIZE("model.d_model", model.d_model),
      PICO_SIZE("model.n_layers", model.n_layers),
      PICO_SIZE("model.n_heads", model.n_heads),
      PICO_SIZE("model.d_ff", model.d_ff),
      PICO_SIZE("model.max_len", model.max_len),
      PICO_SIZE("model.expert_hidden", model.expert_hidden),
      PICO_SIZE("model.d_kg", model.d_kg),
      Field{"model.pooling",
            [](RunConfig& c, std::string_view v) {
              if (v == "mean") c.model.pooling = Pooling::mean;
              else if (v == "cls") c.model.pooling = Pooling::cls;
              else throw ConfigError("config key 'model.pooling': expected mean or cls");
            },
            [](const RunConfig& c) { return nlohmann::ordered_json(c.model.pooling == Pooling::mean ? "mean" : "cls"); }},
      Field{"model.positional",
            [](RunConfig& c, std::string_view v) {
              if (v == "sinusoidal") c.model.positional = PositionalMode::sinusoidal;
              else if (v == "learned") c.model.positional = PositionalMode::learned;
              else throw ConfigError("config key 'model.positional': expected sinusoidal or learned");
            },
            [](const RunConfig& c) {
              return nlohmann::ordered_json(c.model.positional == PositionalMode::sinusoidal ? "sinusoidal" : "learned");
            }},
      PICO_SIZE("corpus.n_benign", corpus.n_benign),
      PICO_SIZE("corpus.n_direct", corpus.n_direct),
      PICO_SIZE("corpus.n_puppetry", corpus.n_puppetry),
      PICO_SIZE("corpus.payload_min", corpus.payload_min),
      PICO_SIZE("corpus.payload_max", corpus.payload_max),
      PICO_SIZE("corpus.secret_len", corpus.secret_len),
      PICO_SIZE("corpus.max_filler", corpus.max_filler),
      PICO_DOUBLE("corpus.alias_fraction", corpus.alias_fraction),
      Field{"corpus.family",
            [](RunConfig& c, std::string_view v) {
              try {
                c.corpus.family = task_family_from_string(v);
              } catch (const std::exception& e) {
                throw ConfigError(std::string("config key 'corpus.family': ") + e.what());
              }
            },
            [](const RunConfig& c) { return nlohmann::ordered_json(to_string(c.corpus.family)); }},
      PICO_DOUBLE("split.train", split[0]),
      PICO_DOUBLE("split.validation", split[1]),
      PICO_DOUBLE("split.test", split[2]),
      PICO_DOUBLE("train.learning_rate", train.learning_rate),
      PICO_DOUBLE("train.momentum", train.momentum),
      Field{"train.optimizer", [](RunConfig& c, std::string_view v) { c.train.optimizer = optimizer_from_string(v); },
            [](const RunConfig& c) { return nlohmann::ordered_json(to_string(c.train.optimizer)); }},
      PICO_SIZE("train.batch_size", train.batch_size),
      PICO_SIZE("train.epochs", train.epochs),
      PICO_SIZE("train.warmup_epochs", train.warmup_epochs),
      PICO_DOUBLE("train.lambda_aux", train.lambda_aux),
      PICO_DOUBLE("train.lambda_gate", train.lambda_gate),
      PICO_DOUBLE("train.eta", train.eta),
      PICO_DOUBLE("train.delta", train.delta),
      PICO_DOUBLE("train.gate_margin", train.gate_margin),
      Field{"train.mode", [](RunConfig& c, std::string_view v) { c.train.mode = gate_mode_from_string(v); },
            [](const RunConfig& c) { return nlohmann::ordered_json(to_string(c.train.mode)); }},
      PICO_DOUBLE("verify.epsilon_factor", verify.epsilon_factor),
      PICO_DOUBLE("verify.delta", verify.delta),
      PICO_DOUBLE("verify.gamma", verify.gamma),
      PICO_DOUBLE("verify.eta", verify.eta),
      PICO_SIZE("verify.detection_trials", verify.detection_trials),
      PICO_SIZE("verify.lipschitz_pairs", verify.lipschitz_pairs),
      PICO_DOUBLE("verify.lipschitz_radius", verify.lipschitz_radius),
      PICO_DOUBLE("eval.adversarial_gate", eval.adversarial_gate),
      PICO_DOUBLE("eval.benign_gate", eval.benign_gate),
      PICO_SIZE("eval.max_len", eval_max_len),
      PICO_SIZE("eval.leakage_n", leakage_n),
      PICO_DOUBLE("acceptance.adversarial_fraction", acceptance.adversarial_fraction),
      PICO_DOUBLE("acceptance.benign_fraction", acceptance.benign_fraction),
      PICO_DOUBLE("acceptance.token_accuracy", acceptance.token_accuracy),
      PICO_DOUBLE("acceptance.refusal_rate", acceptance.refusal_rate),
      PICO_DOUBLE("acceptance.puppetry_fraction", acceptance.puppetry_fraction),
      PICO_DOUBLE("acceptance.fpr_rise", acceptance.fpr_rise),
      PICO_DOUBLE("acceptance.time_limit_seconds", acceptance.time_limit_seconds),
  };
  return table;
}

#undef PICO_SIZE
#undef PICO_DOUBLE

}  // namespace

CorpusSpec RunConfig::corpus_spec() const {
  CorpusSpec s = corpus;
  s.vocab_size = model.vocab_size;
  s.max_len = model.max_len;
  s.seed = seed;
  return s;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key != f.key) continue;
    try {
      f.set(config, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("config key '" + std::string(key) + "': " + e.what());
    }
    return;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  apply_setting(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  RunConfig config;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      apply_setting(config, trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return config;
}

void validate(const RunConfig& config) {
  try {
    validate(config.corpus_spec());
    validate(config.train_config());
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  const double sum = config.split[0] + config.split[1] + config.split[2];
  for (double f : config.split)
    if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  const auto& v = config.verify;
  if (!(v.epsilon_factor > 0.0)) throw ConfigError("verify.epsilon_factor must be positive");
  if (!(v.delta > 0.0 && v.delta < 1.0) || !(v.gamma > 0.0 && v.gamma < 1.0) || !(v.eta > 0.0 && v.eta < 1.0))
    throw ConfigError("verify.delta, verify.gamma and verify.eta must lie in (0,1)");
  if (v.detection_trials < 100) throw ConfigError("verify.detection_trials must be at least 100");
  if (v.lipschitz_pairs == 0 || !(v.lipschitz_radius > 0.0))
    throw ConfigError("verify.lipschitz_pairs and verify.lipschitz_radius must be positive");
  if (config.leakage_n < 2) throw ConfigError("eval.leakage_n must be at least 2");
  if (config.eval_max_len == 0 || config.eval_max_len >= config.model.max_len)
    throw ConfigError("eval.max_len must lie in [1, model.max_len)");
  if (config.model.d_model % config.model.n_heads != 0 || config.model.d_model % 2 != 0)
    throw ConfigError("model.d_model must be even and divisible by model.n_heads");
  if (config.graph_path && !std::filesystem::exists(*config.graph_path))
    throw ConfigError("graph_path " + config.graph_path->string() + " does not exist");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

nlohmann::ordered_json to_json(const RunConfig& config) {
  nlohmann::ordered_json j;
  for (const auto& f : fields()) j[f.key] = f.get(config);
  return j;
}

}  // namespace pico
