// Command-line front end: gen-corpus, train, eval, verify, attack, generate.
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "pico/commands.hpp"
#include "pico/errors.hpp"

namespace {

void configure_logging() {
  spdlog::set_default_logger(spdlog::stderr_color_mt("pico"));
  if (const char* level = std::getenv("PICO_LOG")) spdlog::set_level(spdlog::level::from_str(level));
  else spdlog::set_level(spdlog::level::info);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-stream prompt-injection-resistant transformer toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key=value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "run seed (overrides the config)");
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  app.add_option("--set", overrides, "extra key=value overrides")->take_all();

  std::string checkpoint;
  std::string scenario = "simple_injection";
  bool ablate_expert = false;
  bool inject_fault = false;
  std::string system_text, user_text;

  auto* gen = app.add_subcommand("gen-corpus", "generate and split the synthetic corpus");
  auto* train = app.add_subcommand("train", "warm up, freeze the system encoder, train, write a checkpoint");
  auto* eval = app.add_subcommand("eval", "gate statistics, task accuracy, refusal rate, leakage scan");
  auto* verify = app.add_subcommand("verify", "estimate G and L_hat and check the three bounds");
  auto* attack = app.add_subcommand("attack", "replay an attack scenario");
  auto* generate = app.add_subcommand("generate", "greedy generation for one system/user pair");
  for (auto* sub : {gen, train, eval, verify, attack, generate}) sub->fallthrough();
  for (auto* sub : {eval, verify, attack, generate})
    sub->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  verify->add_flag("--inject-fault", inject_fault, "shift F by 2 epsilon to exercise the checkers");
  attack->add_option("--scenario", scenario, "simple_injection, policy_puppetry or benign_control");
  attack->add_flag("--ablate-expert", ablate_expert, "force the expert score to 0");
  generate->add_option("--system", system_text, "system prompt symbols")->required();
  generate->add_option("--user", user_text, "user input symbols")->required();

  CLI11_PARSE(app, argc, argv);
  configure_logging();

  try {
    pico::RunConfig config = config_path.empty() ? pico::RunConfig{} : pico::load_config(config_path);
    if (seed) config.seed = *seed;
    if (!out_dir.empty()) config.out_dir = out_dir;
    for (const auto& o : overrides) pico::apply_override(config, o);

    if (gen->parsed()) return pico::cmd_gen_corpus(config, std::cout);
    if (train->parsed()) return pico::cmd_train(config, std::cout);
    if (eval->parsed()) return pico::cmd_eval(config, checkpoint, std::cout);
    if (verify->parsed()) return pico::cmd_verify(config, checkpoint, inject_fault, std::cout);
    if (attack->parsed()) return pico::cmd_attack(config, checkpoint, scenario, ablate_expert, std::cout);
    if (generate->parsed()) return pico::cmd_generate(config, checkpoint, system_text, user_text, std::cout);
  } catch (const pico::ConfigError& e) {
    spdlog::error("{}", e.what());
    return pico::kExitUsage;
  } catch (const pico::FrozenBranchViolation& e) {
    spdlog::error("{}", e.what());
    return pico::kExitFrozenViolation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return pico::kExitRuntime;
  }
  return pico::kExitUsage;
}
